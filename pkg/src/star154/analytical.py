"""Coupled fixed point of the node and channel models.

The node side gives the per-mini-slot CCA probability tau as a function of the
busy probability a; the channel side gives a as a function of tau. The solver
finds the joint fixed point for each traffic mode. The multi-buffer mode adds
a third coupled unknown, the mean service time, through the queue-empty
probability p0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import NetworkConfig, TrafficMode, derived_probs


class DivergenceError(RuntimeError):
    """A denominator became non-positive; the iterate left the valid regime."""


class NonConvergenceError(RuntimeError):
    """Iteration budget exhausted. Carries the last iterate for inspection."""

    def __init__(self, msg, fixed_point):
        super().__init__(msg)
        self.fixed_point = fixed_point


@dataclass(frozen=True, slots=True)
class SolverSettings:
    tolerance: float = 1e-12
    max_iterations: int = 100000
    damping: float = 0.5  # in (0, 1]; 1 = undamped substitution
    initial_tau: float = 1e-4
    initial_a: float = 0.0
    use_bisection: bool = False  # skip damped iteration entirely

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")


@dataclass(frozen=True, slots=True)
class FixedPoint:
    """Converged (tau, a) pair plus multi-buffer auxiliaries and diagnostics."""

    tau: float
    a: float
    iterations: int
    residual: float
    converged: bool
    p: float | None = None  # queue utilization, multi-buffer mode only
    p0: float | None = None  # queue-empty probability, multi-buffer mode only
    TVS: float | None = None  # mean service time, multi-buffer mode only


# Channel states as (name, duration in symbols, stationary weight / theta).
# Durations: IDLE1 19, IDLE2 1, CW1..CW12 1 each, TxSuc 2L-12, IDLE3 20,
# IW1..IW12 1 each, AckSuc 10, TxFail 2L+6, AckFail 2L+6, wack 54.
@dataclass(frozen=True, slots=True)
class ChannelStationaryDistribution:
    states: tuple[tuple[str, int, float], ...]
    total_T: float  # duration-weighted total, closed form

    def weight(self, name: str) -> float:
        """Stationary probability of one state relative to theta."""
        for n, _, w in self.states:
            if n == name:
                return w
        raise KeyError(name)

    def occupancy(self) -> dict[str, float]:
        """Fraction of channel time spent in each state; sums to 1."""
        return {n: d * w / self.total_T for n, d, w in self.states}


def _channel_terms(tau: float, N: int):
    x = (1.0 - tau) ** N
    z = (1.0 - tau) ** (N - 1)
    y = N * tau * z
    return x, y, z


def total_cycle_symbols(tau: float, N: int, L: int) -> float:
    """Duration-weighted total of the channel states, relative to theta."""
    x, y, z = _channel_terms(tau, N)
    if z == 1.0:
        geo25 = 25.0
    else:
        geo25 = (1.0 - z**25) / (1.0 - z)
    return (
        2 * L + 80
        - (2 * L + 79) * x
        + y * geo25
        + (2 * L + 7) * y * z**12
        - (2 * L + 50) * y * z**25
    )


def a_from_tau(tau: float, N: int, L: int) -> float:
    """Probability a CCA finds the channel busy, given the CCA rate tau.

    The numerator counts the channel-idle symbols an 8-symbol CCA can start
    from and still finish clean; the denominator is the full cycle length.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau out of [0,1]: {tau}")
    x, _, _ = _channel_terms(tau, N)
    T = total_cycle_symbols(tau, N, L)
    a = 1.0 - (12.0 * (1.0 - x) + 1.0) / T
    return min(max(a, 0.0), 1.0)


def channel_stationary(tau: float, N: int, L: int) -> ChannelStationaryDistribution:
    """Stationary weights of every channel state, relative to theta."""
    if tau <= 0.0:
        raise ValueError("tau must be positive; the all-idle channel has no cycle")
    if tau > 1.0:
        raise ValueError(f"tau out of (0,1]: {tau}")
    x, y, z = _channel_terms(tau, N)
    states: list[tuple[str, int, float]] = [
        ("IDLE1", 19, 1.0 - x),
        ("IDLE2", 1, 1.0),
    ]
    states += [(f"CW{i}", 1, y * z ** (i - 1)) for i in range(1, 13)]
    states += [
        ("TxSuc", 2 * L - 12, y * z**12),
        ("IDLE3", 20, y * z**12),
    ]
    states += [(f"IW{i}", 1, y * z ** (12 + i)) for i in range(1, 13)]
    states += [
        ("AckSuc", 10, y * z**25),
        ("TxFail", 2 * L + 6, 1.0 - x - y * z**12),
        ("AckFail", 2 * L + 6, (1.0 - z**13) * y * z**12),
        ("wack", 54, 1.0 - x - y * z**25),
    ]
    return ChannelStationaryDistribution(
        states=tuple(states), total_T=total_cycle_symbols(tau, N, L)
    )


def throughput(tau: float, N: int, L: int) -> float:
    """Normalized throughput: fraction of channel time carrying acknowledged payload."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau out of [0,1]: {tau}")
    if tau == 0.0:
        return 0.0
    _, y, z = _channel_terms(tau, N)
    th = 2 * L * y * z**25 / total_cycle_symbols(tau, N, L)
    return min(max(th, 0.0), 1.0)


def tau_update(
    tau_prev: float, a: float, cfg: NetworkConfig, p0: float | None = None
) -> float:
    """One substitution step for the CCA probability at a given busy probability.

    k and the per-service collision probability D are evaluated at tau_prev.
    The traffic mode selects the arrival term: the single-buffer form adds
    2L/r idle symbols per frame, the multi-buffer form weights that by the
    queue-empty probability p0, and the saturated form has no idle term.
    """
    if not 0.0 <= tau_prev <= 1.0:
        raise ValueError(f"tau out of [0,1]: {tau_prev}")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a out of [0,1]: {a}")
    probs = derived_probs(tau_prev, a, cfg.N, cfg.L, cfg.r)
    k26 = probs.k**26
    a5 = a**5
    L = cfg.L
    bracket = (
        2 * L + 144
        + 158 * a
        + 318 * a**2
        + 318 * a**3
        + 318 * a**4
        - 12 * k26
        - (2 * L + 66 - 12 * k26) * a5
    )
    D = probs.D
    retry_geo = 1.0 + D + D**2 + D**3
    numerator = retry_geo * (1.0 + a + a**2 + a**3 + a**4)
    denominator = bracket * retry_geo
    if cfg.mode is TrafficMode.UNSAT1:
        if cfg.r == 0.0:
            return 0.0
        denominator += 2 * L / cfg.r
    elif cfg.mode is TrafficMode.UNSATM:
        if p0 is None:
            raise ValueError("multi-buffer mode needs the queue-empty probability p0")
        if cfg.r == 0.0:
            return 0.0
        denominator += p0 * 2 * L / cfg.r
    if denominator <= 0.0:
        raise DivergenceError(f"non-positive denominator {denominator} at tau={tau_prev}, a={a}")
    return min(max(numerator / denominator, 0.0), 1.0)


def _residual(tau: float, a: float, cfg: NetworkConfig, p0) -> float:
    return max(
        abs(tau_update(tau, a, cfg, p0) - tau),
        abs(a_from_tau(tau, cfg.N, cfg.L) - a),
    )


def _bisect(cfg: NetworkConfig, p0, settings: SolverSettings) -> tuple[float, float, int]:
    """Root of F(tau) = tau_update(tau, a_from_tau(tau)) - tau on [0, 1].

    F(0) >= 0 and F(1) <= 0 for every valid configuration, so the root is
    bracketed from the start.
    """

    def F(t: float) -> float:
        return tau_update(t, a_from_tau(t, cfg.N, cfg.L), cfg, p0) - t

    lo, hi = 0.0, 1.0
    f_lo = F(lo)
    if f_lo == 0.0:
        return 0.0, 0.0, 1
    it = 0
    # 200 halvings take the interval below 1e-60; stop earlier once the
    # residual itself meets tolerance.
    for it in range(1, 201):
        mid = 0.5 * (lo + hi)
        f_mid = F(mid)
        if f_mid == 0.0 or abs(f_mid) < settings.tolerance * 1e-2:
            lo = hi = mid
            break
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    return tau, a_from_tau(tau, cfg.N, cfg.L), it


def _polish(cfg: NetworkConfig, p0, tau: float) -> float:
    """Newton-polish the root of F(t) = tau_update(t, a(t), .) - t.

    A residual-based stop leaves the landed position off by roughly
    residual / |1 - slope of the update map|, which crosses 1e-9 when the
    map contracts slowly. Two guarded Newton steps with a wide
    finite-difference stencil push the position error down to evaluation
    noise, so the damped route and the bisection route agree on where the
    root is. Never moves to a point with a larger |F|.
    """

    def F(t: float) -> float:
        return tau_update(t, a_from_tau(t, cfg.N, cfg.L), cfg, p0) - t

    h = 1e-7  # far above F's rounding noise, far below its curvature scale
    best_t, best_f = tau, abs(F(tau))
    t = tau
    for _ in range(2):
        f_t = F(t)
        if f_t == 0.0:
            return t
        lo, hi = max(t - h, 0.0), min(t + h, 1.0)
        slope = (F(hi) - F(lo)) / (hi - lo)
        if not math.isfinite(slope) or slope == 0.0:
            break
        t_new = t - f_t / slope
        if not 0.0 <= t_new <= 1.0:
            break
        t = t_new
        f_new = abs(F(t))
        if f_new < best_f:
            best_t, best_f = t, f_new
    return best_t


def _solve_pair(
    cfg: NetworkConfig, p0, settings: SolverSettings, tau0: float, a0: float
) -> tuple[float, float, int, float, bool]:
    """Inner damped iteration on (tau, a) at fixed p0."""
    if settings.use_bisection:
        tau, a, it = _bisect(cfg, p0, settings)
        tau = _polish(cfg, p0, tau)
        a = a_from_tau(tau, cfg.N, cfg.L)
        res = _residual(tau, a, cfg, p0)
        return tau, a, it, res, res <= settings.tolerance
    d = settings.damping
    tau, a = tau0, a0
    flips = 0
    prev_step = 0.0
    res = math.inf
    for it in range(1, settings.max_iterations + 1):
        rhs = tau_update(tau, a, cfg, p0)
        res = max(abs(rhs - tau), abs(a_from_tau(tau, cfg.N, cfg.L) - a))
        if res <= settings.tolerance:
            tau = _polish(cfg, p0, tau)
            a = a_from_tau(tau, cfg.N, cfg.L)
            return tau, a, it, _residual(tau, a, cfg, p0), True
        step = rhs - tau
        # oscillation watchdog: 50 consecutive sign flips of the tau step
        if step * prev_step < 0.0:
            flips += 1
            if flips >= 50:
                tau, a, bit = _bisect(cfg, p0, settings)
                tau = _polish(cfg, p0, tau)
                a = a_from_tau(tau, cfg.N, cfg.L)
                res = _residual(tau, a, cfg, p0)
                return tau, a, it + bit, res, res <= settings.tolerance
        else:
            flips = 0
        prev_step = step
        tau = min(max(tau + d * step, 0.0), 1.0)
        a = a_from_tau(tau, cfg.N, cfg.L)
    return tau, a, settings.max_iterations, res, False


def solve(cfg: NetworkConfig, settings: SolverSettings = SolverSettings()) -> FixedPoint:
    """Find the fixed point of the coupled node/channel model for cfg.

    Raises NonConvergenceError (carrying the last iterate) if the iteration
    budget runs out, and DivergenceError if an iterate leaves the model's
    domain.
    """
    if cfg.N < 2:
        raise ValueError("the analytical model needs at least 2 nodes")
    if cfg.mode is not TrafficMode.UNSATM:
        tau, a, it, res, ok = _solve_pair(
            cfg, None, settings, settings.initial_tau, settings.initial_a
        )
        fp = FixedPoint(tau=tau, a=a, iterations=it, residual=res, converged=ok)
        if not ok:
            raise NonConvergenceError(f"no convergence after {it} iterations", fp)
        return fp
    return _solve_multibuffer(cfg, settings)


def _solve_multibuffer(cfg: NetworkConfig, settings: SolverSettings) -> FixedPoint:
    """Outer loop on (TVS, p, p0) with warm-started inner (tau, a) solves."""
    # local import; metrics depends on this module for throughput
    from .metrics import attempt_probs, delays, retry_probs, service_times
    from .queueing import empty_prob, utilization

    TVS = float(132 + 2 * cfg.L)  # service time of one clean attempt
    p = utilization(cfg.r, cfg.L, TVS)
    p0 = empty_prob(p, cfg.M)
    tau, a = settings.initial_tau, settings.initial_a
    total_it = 0
    last_res = math.inf
    for _ in range(settings.max_iterations):
        tau, a, it, res, ok = _solve_pair(cfg, p0, settings, tau, a)
        total_it += it
        if not ok:
            fp = FixedPoint(
                tau=tau, a=a, iterations=total_it, residual=res, converged=False,
                p=p, p0=p0, TVS=TVS,
            )
            raise NonConvergenceError("inner (tau, a) iteration stalled", fp)
        probs = derived_probs(tau, a, cfg.N, cfg.L, cfg.r)
        st = service_times(a, probs.k, cfg.L)
        rp = retry_probs(attempt_probs(a, probs.k))
        _, TVS = delays(rp, st)
        p = utilization(cfg.r, cfg.L, TVS)
        p0_new = empty_prob(p, cfg.M)
        last_res = abs(p0_new - p0)
        p0 = p0_new
        if last_res <= settings.tolerance:
            res = max(res, _residual(tau, a, cfg, p0))
            fp = FixedPoint(
                tau=tau, a=a, iterations=total_it, residual=res,
                converged=res <= settings.tolerance, p=p, p0=p0, TVS=TVS,
            )
            if not fp.converged:
                # p0 moved less than tolerance but (tau, a) drifted: one more
                # inner pass would fix it; treat as non-converged only if the
                # budget is truly gone
                continue
            return fp
    fp = FixedPoint(
        tau=tau, a=a, iterations=total_it, residual=last_res, converged=False,
        p=p, p0=p0, TVS=TVS,
    )
    raise NonConvergenceError("outer queue loop did not settle", fp)


def solve_or_partial(cfg: NetworkConfig, settings: SolverSettings = SolverSettings()) -> FixedPoint:
    """Like solve, but returns the non-converged iterate instead of raising."""
    try:
        return solve(cfg, settings)
    except NonConvergenceError as e:
        return e.fixed_point


def with_damping(settings: SolverSettings, damping: float) -> SolverSettings:
    return replace(settings, damping=damping)
