"""Parameter grids, batch runs, CSV persistence, and analytical-vs-simulated diffs.

The CSV layout is fixed: one row per (configuration, source), reals written
as shortest round-trip decimals, missing values as empty fields. Delay columns
carry the _sym suffix (symbols); an optional export adds millisecond columns.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import NetworkConfig, TrafficMode
from .analytical import NonConvergenceError, SolverSettings, solve
from .metrics import report as metrics_report
from . import simulator

HEADER = [
    "mode", "N", "L", "r", "M", "source", "tau", "a", "TH", "PS",
    "TS_sym", "TVS_sym", "TSW_sym", "TVSW_sym", "converged", "ci_TH", "ci_PS",
]
MS_COLUMNS = ["TS_ms", "TVS_ms", "TSW_ms", "TVSW_ms"]
SYMBOL_MS = 0.016  # one symbol in milliseconds

DIFF_METRICS = ["tau", "a", "TH", "PS", "TS_sym", "TVS_sym"]


class Engine(str, Enum):
    ANALYTICAL = "analytical"
    SIMULATED = "sim"
    BOTH = "both"


@dataclass(frozen=True, slots=True)
class SweepSpec:
    mode: TrafficMode
    N_values: tuple[int, ...]
    L_values: tuple[int, ...]
    r_values: tuple[float, ...]
    M_values: tuple[int, ...]
    engine: Engine = Engine.ANALYTICAL
    solver: SolverSettings = SolverSettings()
    horizon: int = 1_000_000
    warmup: int | None = None
    replications: int = 50
    base_seed: int = 0

    def __post_init__(self):
        if not self.N_values or not self.L_values:
            raise ValueError("empty grid")
        if self.mode is not TrafficMode.SATURATED and not self.r_values:
            raise ValueError("empty grid")
        if self.mode is TrafficMode.UNSATM and not self.M_values:
            raise ValueError("empty grid")


@dataclass(frozen=True, slots=True)
class ResultRow:
    mode: str
    N: int
    L: int
    r: float
    M: int
    source: str
    tau: float | None = None
    a: float | None = None
    TH: float | None = None
    PS: float | None = None
    TS_sym: float | None = None
    TVS_sym: float | None = None
    TSW_sym: float | None = None
    TVSW_sym: float | None = None
    converged: bool = True
    ci_TH: float | None = None
    ci_PS: float | None = None

    @property
    def key(self) -> tuple:
        return (self.mode, self.N, self.L, self.r, self.M)


def parse_range(text: str, kind=float) -> tuple:
    """Parse '2', '2,5,10', or 'start:stop:step' (stop inclusive) into values."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range needs start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError(f"step must be positive in {text!r}")
        values = []
        v = start
        # tolerate float drift at the inclusive upper end
        while v <= stop + 1e-9 * max(1.0, abs(stop)):
            values.append(v)
            v = start + len(values) * step
        return tuple(kind(round(v, 12)) for v in values)
    return tuple(kind(p) for p in text.split(","))


def generate_grid(spec: SweepSpec) -> list[NetworkConfig]:
    """Cartesian product in lexicographic (N, L, r, M) order.

    Irrelevant axes collapse: saturated mode ignores r and M, the
    single-buffer mode ignores M.
    """
    if spec.mode is TrafficMode.SATURATED:
        r_values: tuple = (0.0,)
        m_values: tuple = (1,)
    elif spec.mode is TrafficMode.UNSAT1:
        r_values = spec.r_values
        m_values = (1,)
    else:
        r_values = spec.r_values
        m_values = spec.M_values
    grid = [
        NetworkConfig(N=n, L=l, mode=spec.mode, r=r, M=m)
        for n in spec.N_values
        for l in spec.L_values
        for r in r_values
        for m in m_values
    ]
    if not grid:
        raise ValueError("empty grid")
    return grid


def _none_if_nan(v):
    if v is None:
        return None
    return None if isinstance(v, float) and math.isnan(v) else v


def analytical_row(cfg: NetworkConfig, settings: SolverSettings) -> ResultRow:
    base = dict(mode=cfg.mode.value, N=cfg.N, L=cfg.L, r=cfg.r, M=cfg.M,
                source="analytical")
    try:
        fp = solve(cfg, settings)
    except NonConvergenceError as e:
        fp = e.fixed_point
        return ResultRow(**base, tau=fp.tau, a=fp.a, converged=False)
    except (ValueError, ArithmeticError):
        return ResultRow(**base, converged=False)
    rep = metrics_report(cfg, fp)
    return ResultRow(
        **base, tau=rep.tau, a=rep.a, TH=rep.TH, PS=rep.PS,
        TS_sym=rep.TS, TVS_sym=rep.TVS, TSW_sym=rep.TSW, TVSW_sym=rep.TVSW,
        converged=True,
    )


def simulated_row(cfg: NetworkConfig, spec: SweepSpec, jobs: int = 1) -> ResultRow:
    sim_cfg = simulator.SimConfig(
        net=cfg, horizon_mini_slots=spec.horizon, warmup_mini_slots=spec.warmup,
        replications=spec.replications, base_seed=spec.base_seed,
    )
    rep = simulator.run(sim_cfg, jobs=jobs)
    return ResultRow(
        mode=cfg.mode.value, N=cfg.N, L=cfg.L, r=cfg.r, M=cfg.M,
        source="simulated",
        tau=_none_if_nan(rep.tau), a=_none_if_nan(rep.a),
        TH=_none_if_nan(rep.TH), PS=_none_if_nan(rep.PS),
        TS_sym=rep.TS, TVS_sym=_none_if_nan(rep.TVS),
        TSW_sym=rep.TSW, TVSW_sym=rep.TVSW,
        converged=True,
        ci_TH=rep.ci95.get("TH"), ci_PS=_none_if_nan(rep.ci95.get("PS", math.nan)),
    )


def _sweep_item(args) -> ResultRow:
    cfg, engine, spec = args
    if engine == "analytical":
        return analytical_row(cfg, spec.solver)
    return simulated_row(cfg, spec)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[ResultRow]:
    """Solve and/or simulate every grid point; order is by config key."""
    work = []
    for cfg in generate_grid(spec):
        if spec.engine in (Engine.ANALYTICAL, Engine.BOTH):
            work.append((cfg, "analytical", spec))
        if spec.engine in (Engine.SIMULATED, Engine.BOTH):
            work.append((cfg, "simulated", spec))
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_item, work))
    else:
        rows = [_sweep_item(w) for w in work]
    rows.sort(key=lambda row: (row.N, row.L, row.r, row.M, row.source))
    return rows


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: list[ResultRow], path: str, ms: bool = False) -> None:
    header = HEADER + MS_COLUMNS if ms else HEADER
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            record = [
                row.mode, row.N, row.L, float(row.r), row.M, row.source,
                row.tau, row.a, row.TH, row.PS, row.TS_sym, row.TVS_sym,
                row.TSW_sym, row.TVSW_sym, row.converged, row.ci_TH, row.ci_PS,
            ]
            if ms:
                record += [
                    None if v is None else v * SYMBOL_MS
                    for v in (row.TS_sym, row.TVS_sym, row.TSW_sym, row.TVSW_sym)
                ]
            writer.writerow(_format(v) for v in record)


def _parse_opt_float(s: str, path: str, line: int) -> float | None:
    if s == "":
        return None
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"{path}:{line}: bad number {s!r}") from None


def read_csv(path: str) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[: len(HEADER)] != HEADER:
            raise ValueError(f"{path}:1: unexpected header")
        for line, rec in enumerate(reader, start=2):
            if len(rec) < len(HEADER):
                raise ValueError(f"{path}:{line}: expected {len(HEADER)} fields, got {len(rec)}")
            try:
                n, l, m = int(rec[1]), int(rec[2]), int(rec[4])
                r = float(rec[3])
            except ValueError:
                raise ValueError(f"{path}:{line}: bad configuration fields") from None
            if rec[14] not in ("true", "false"):
                raise ValueError(f"{path}:{line}: converged must be true or false")
            opt = lambda idx: _parse_opt_float(rec[idx], path, line)
            rows.append(
                ResultRow(
                    mode=rec[0], N=n, L=l, r=r, M=m, source=rec[5],
                    tau=opt(6), a=opt(7), TH=opt(8), PS=opt(9),
                    TS_sym=opt(10), TVS_sym=opt(11), TSW_sym=opt(12),
                    TVSW_sym=opt(13), converged=rec[14] == "true",
                    ci_TH=opt(15), ci_PS=opt(16),
                )
            )
    return rows


class KeyMismatchError(ValueError):
    """Comparison inputs do not cover the same configurations."""

    def __init__(self, only_analytical, only_simulated):
        self.only_analytical = sorted(only_analytical)
        self.only_simulated = sorted(only_simulated)
        super().__init__(
            f"unmatched configurations: {self.only_analytical} only analytical, "
            f"{self.only_simulated} only simulated"
        )


@dataclass(frozen=True, slots=True)
class DiffRow:
    key: tuple
    abs_diff: dict[str, float | None]
    rel_diff: dict[str, float | None]


def compare(
    analytical_rows: list[ResultRow], simulated_rows: list[ResultRow]
) -> tuple[list[DiffRow], dict[str, dict[str, float]]]:
    """Per-configuration metric differences plus summary quantiles.

    abs diffs are analytical minus simulated; rel diffs are scaled by the
    analytical magnitude. The summary maps metric -> quantiles of |abs| and
    |rel| over configurations where both sides have the metric.
    """
    ana = {row.key: row for row in analytical_rows}
    sim = {row.key: row for row in simulated_rows}
    if set(ana) != set(sim):
        raise KeyMismatchError(set(ana) - set(sim), set(sim) - set(ana))
    diffs = []
    for key in sorted(ana):
        a_row, s_row = ana[key], sim[key]
        abs_d: dict[str, float | None] = {}
        rel_d: dict[str, float | None] = {}
        for metric in DIFF_METRICS:
            av = getattr(a_row, metric)
            sv = getattr(s_row, metric)
            if av is None or sv is None:
                abs_d[metric] = rel_d[metric] = None
                continue
            abs_d[metric] = av - sv
            rel_d[metric] = (av - sv) / abs(av) if av != 0 else None
        diffs.append(DiffRow(key=key, abs_diff=abs_d, rel_diff=rel_d))
    summary: dict[str, dict[str, float]] = {}
    for metric in DIFF_METRICS:
        abs_vals = [abs(d.abs_diff[metric]) for d in diffs if d.abs_diff[metric] is not None]
        rel_vals = [abs(d.rel_diff[metric]) for d in diffs if d.rel_diff[metric] is not None]
        if not abs_vals:
            continue
        entry = {
            "median_abs": float(np.median(abs_vals)),
            "p90_abs": float(np.percentile(abs_vals, 90)),
            "max_abs": float(np.max(abs_vals)),
        }
        if rel_vals:
            entry.update(
                median_rel=float(np.median(rel_vals)),
                p90_rel=float(np.percentile(rel_vals, 90)),
                max_rel=float(np.max(rel_vals)),
            )
        summary[metric] = entry
    return diffs, summary


def write_diff_csv(diffs: list[DiffRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["mode", "N", "L", "r", "M"]
        for metric in DIFF_METRICS:
            header += [f"abs_{metric}", f"rel_{metric}"]
        writer.writerow(header)
        for d in diffs:
            mode, n, l, r, m = d.key
            rec = [mode, n, l, float(r), m]
            for metric in DIFF_METRICS:
                rec += [d.abs_diff[metric], d.rel_diff[metric]]
            writer.writerow(_format(v) for v in rec)
