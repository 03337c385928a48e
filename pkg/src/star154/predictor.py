"""Feedforward network that inverts the performance model.

Three fixed prediction tasks, each mapping four known quantities to a fifth:
  n:   (r, L, PS, TVS) -> N
  ps:  (r, L, N, TVS)  -> PS
  tvs: (r, L, PS, N)   -> TVS

Architecture: 4 inputs, three sigmoid hidden layers, one linear output.
Training is plain mini-batch gradient descent on mean squared error, written
out by hand so every gradient can be checked against finite differences.
Inputs and target are min-max scaled to [0.1, 0.9]; the scaling constants
live inside the saved model file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# task name -> (feature column names, target column name)
TASKS: dict[str, tuple[tuple[str, str, str, str], str]] = {
    "n": (("r", "L", "PS", "TVS"), "N"),
    "ps": (("r", "L", "N", "TVS"), "PS"),
    "tvs": (("r", "L", "PS", "N"), "TVS"),
}

# default hidden sizes per task; the small variant keeps test runs quick
DEFAULT_HIDDEN: dict[str, tuple[int, int, int]] = {
    "n": (100, 80, 50),
    "ps": (80, 50, 30),
    "tvs": (80, 50, 30),
}
DESK_HIDDEN: tuple[int, int, int] = (32, 24, 16)

_NORM_LO, _NORM_HI = 0.1, 0.9


@dataclass(frozen=True, slots=True)
class MLPArchitecture:
    input_dim: int = 4
    hidden: tuple[int, int, int] = (100, 80, 50)
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("all layer sizes must be >= 1")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


@dataclass
class MLPModel:
    arch: MLPArchitecture
    weights: list[np.ndarray]  # weights[l]: (fan_in, fan_out)
    biases: list[np.ndarray]
    in_min: np.ndarray
    in_max: np.ndarray
    out_min: float
    out_max: float


@dataclass(frozen=True, slots=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    target_mse: float | None = None  # early stop on training MSE
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation fraction must be in [0, 1)")


@dataclass(frozen=True, slots=True)
class EvalReport:
    R: float  # Pearson correlation, computed on denormalized values
    MSE: float  # mean squared error in normalized units
    n: int


class DivergenceDetected(RuntimeError):
    """Training loss became non-finite."""


def init_model(arch: MLPArchitecture, seed: int) -> MLPModel:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(
        arch=arch, weights=weights, biases=biases,
        in_min=np.zeros(arch.input_dim), in_max=np.ones(arch.input_dim),
        out_min=0.0, out_max=1.0,
    )


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def normalize_inputs(model: MLPModel, X: np.ndarray) -> np.ndarray:
    span = model.in_max - model.in_min
    return _NORM_LO + (_NORM_HI - _NORM_LO) * (X - model.in_min) / span


def normalize_target(model: MLPModel, y: np.ndarray) -> np.ndarray:
    return _NORM_LO + (_NORM_HI - _NORM_LO) * (y - model.out_min) / (model.out_max - model.out_min)


def denormalize_target(model: MLPModel, yn: np.ndarray) -> np.ndarray:
    return model.out_min + (yn - _NORM_LO) * (model.out_max - model.out_min) / (_NORM_HI - _NORM_LO)


def _forward_normalized(model: MLPModel, Xn: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass on normalized inputs; returns output and all activations."""
    acts = [Xn]
    h = Xn
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        h = z if l == last else _sigmoid(z)
        acts.append(h)
    return h, acts


def forward(model: MLPModel, x) -> float:
    """Denormalized prediction for one 4-component input."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != model.arch.input_dim:
        raise ValueError(f"expected {model.arch.input_dim} inputs, got {x.shape[1]}")
    yn, _ = _forward_normalized(model, normalize_inputs(model, x))
    return float(denormalize_target(model, yn)[0, 0])


def _gradients(model: MLPModel, Xn: np.ndarray, yn: np.ndarray):
    """Backprop gradients of mean squared error over the batch."""
    out, acts = _forward_normalized(model, Xn)
    n = Xn.shape[0]
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    # d(MSE)/d(out) with MSE = mean((out - y)^2)
    delta = 2.0 * (out - yn) / n
    for l in range(len(model.weights) - 1, -1, -1):
        grad_w[l] = acts[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            h = acts[l]  # sigmoid activations of layer l
            delta = (delta @ model.weights[l].T) * h * (1.0 - h)
    return grad_w, grad_b, out


def _mse(model: MLPModel, Xn: np.ndarray, yn: np.ndarray) -> float:
    out, _ = _forward_normalized(model, Xn)
    # overflow to inf is fine here: it is exactly what divergence detection
    # looks for
    with np.errstate(over="ignore"):
        return float(np.mean((out - yn) ** 2))


def fit_normalization(model: MLPModel, X: np.ndarray, y: np.ndarray) -> None:
    """Store min-max ranges of the training split inside the model."""
    in_min = X.min(axis=0)
    in_max = X.max(axis=0)
    span = in_max - in_min
    if np.any(span <= 0):
        raise ValueError("a feature is constant; cannot scale it")
    if y.max() <= y.min():
        raise ValueError("target is constant; cannot scale it")
    model.in_min, model.in_max = in_min, in_max
    model.out_min, model.out_max = float(y.min()), float(y.max())


def train(
    model: MLPModel,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    on_epoch=None,
) -> tuple[MLPModel, EvalReport]:
    """Mini-batch gradient descent; returns the model and a held-out report.

    on_epoch, if given, is called as on_epoch(epoch, training_mse) after
    every epoch, with the MSE measured on the full training split.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(X) < 10:
        raise ValueError("need at least 10 samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 1))))
    order = rng.permutation(len(X))
    n_val = int(round(cfg.validation_fraction * len(X)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    Xt, yt = X[train_idx], y[train_idx]
    fit_normalization(model, Xt, yt)
    Xn = normalize_inputs(model, Xt)
    yn = normalize_target(model, yt).reshape(-1, 1)

    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(Xn))
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            grad_w, grad_b, _ = _gradients(model, Xn[idx], yn[idx])
            for l in range(len(model.weights)):
                model.weights[l] -= lr * grad_w[l]
                model.biases[l] -= lr * grad_b[l]
        train_mse = _mse(model, Xn, yn)
        if not math.isfinite(train_mse):
            raise DivergenceDetected(f"training loss became {train_mse} at epoch {epoch}")
        if on_epoch is not None:
            on_epoch(epoch, train_mse)
        if cfg.target_mse is not None and train_mse <= cfg.target_mse:
            break

    if n_val:
        rep = evaluate(model, X[val_idx], y[val_idx])
    else:
        rep = EvalReport(R=math.nan, MSE=train_mse, n=0)
    return model, rep


def evaluate(model: MLPModel, X: np.ndarray, y: np.ndarray) -> EvalReport:
    """Pearson R on raw values and MSE in normalized units."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(X) == 0:
        raise ValueError("empty evaluation set")
    out_n, _ = _forward_normalized(model, normalize_inputs(model, X))
    pred = denormalize_target(model, out_n).reshape(-1)
    if np.std(y) == 0.0 or np.std(pred) == 0.0:
        raise ValueError("correlation undefined: constant predictions or targets")
    R = float(np.corrcoef(pred, y)[0, 1])
    yn = normalize_target(model, y)
    mse = float(np.mean((out_n.reshape(-1) - yn) ** 2))
    return EvalReport(R=R, MSE=mse, n=len(y))


def gradient_check(model: MLPModel, x, y_target: float, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences."""
    if not 0.0 < epsilon <= 1e-3:
        raise ValueError("epsilon must be in (0, 1e-3]")
    Xn = np.asarray(x, dtype=float).reshape(1, -1)
    yn = np.array([[float(y_target)]])
    grad_w, grad_b, _ = _gradients(model, Xn, yn)
    worst = 0.0

    def probe(arr: np.ndarray, analytic: np.ndarray):
        nonlocal worst
        flat = arr.reshape(-1)
        ana = analytic.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + epsilon
            hi = _mse(model, Xn, yn)
            flat[j] = keep - epsilon
            lo = _mse(model, Xn, yn)
            flat[j] = keep
            numeric = (hi - lo) / (2.0 * epsilon)
            scale = max(abs(ana[j]) + abs(numeric), 1e-8)
            worst = max(worst, abs(ana[j] - numeric) / scale)

    for l in range(len(model.weights)):
        probe(model.weights[l], grad_w[l])
        probe(model.biases[l], grad_b[l])
    return worst


def save_model(model: MLPModel, path: str) -> None:
    """Plain-text persistence; every real is written with full precision."""
    sizes = model.arch.layer_sizes
    lines = ["mlp-v1 " + " ".join(str(s) for s in sizes)]
    for j in range(model.arch.input_dim):
        lines.append(f"{float(model.in_min[j])!r} {float(model.in_max[j])!r}")
    lines.append(f"{float(model.out_min)!r} {float(model.out_max)!r}")
    for W in model.weights:
        for row in W:
            lines.extend(repr(float(v)) for v in row)
    for b in model.biases:
        lines.extend(repr(float(v)) for v in b)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> MLPModel:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "mlp-v1":
        raise ValueError(f"not a model file: header {head[0]!r}")
    sizes = [int(s) for s in head[1:]]
    if len(sizes) != 5:
        raise ValueError(f"expected 5 layer sizes, got {len(sizes)}")
    arch = MLPArchitecture(input_dim=sizes[0], hidden=tuple(sizes[1:4]), output_dim=sizes[4])
    pos = 1
    in_min = np.empty(arch.input_dim)
    in_max = np.empty(arch.input_dim)
    for j in range(arch.input_dim):
        lo, hi = lines[pos].split()
        in_min[j], in_max[j] = float(lo), float(hi)
        pos += 1
    lo, hi = lines[pos].split()
    out_min, out_max = float(lo), float(hi)
    pos += 1
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = np.empty((fan_in, fan_out))
        for i in range(fan_in):
            for j in range(fan_out):
                W[i, j] = float(lines[pos])
                pos += 1
        weights.append(W)
    for _, fan_out in zip(sizes[:-1], sizes[1:]):
        b = np.empty(fan_out)
        for j in range(fan_out):
            b[j] = float(lines[pos])
            pos += 1
        biases.append(b)
    if pos != len(lines):
        raise ValueError(f"trailing data in model file: {len(lines) - pos} lines")
    return MLPModel(
        arch=arch, weights=weights, biases=biases,
        in_min=in_min, in_max=in_max, out_min=out_min, out_max=out_max,
    )
