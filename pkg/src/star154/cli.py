"""Command-line entry point: solve, simulate, sweep, compare, train, predict.

Units are symbols (1 symbol = 16 us) for delays and frames per frame duration
for the arrival rate. Exit codes: 0 success, 1 computational failure
(non-convergence), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .core import NetworkConfig, PerformanceReport, TrafficMode
from .analytical import NonConvergenceError, SolverSettings, solve
from .metrics import report as metrics_report
from . import dataset, predictor, simulator

_MODES = {m.value: m for m in TrafficMode}


def _net_config(args, parser) -> NetworkConfig:
    mode = _MODES[args.mode]
    if mode is not TrafficMode.SATURATED and args.rate is None:
        parser.error(f"--rate is required for mode {args.mode}")
    buffer = args.buffer if args.buffer is not None else 1
    if mode is TrafficMode.UNSATM and buffer <= 1:
        parser.error("--buffer must be > 1 for mode unsatm")
    if mode is TrafficMode.UNSAT1 and args.buffer not in (None, 1):
        parser.error("--buffer must be 1 for mode unsat1")
    try:
        return NetworkConfig(
            N=args.nodes, L=args.frame_bytes, mode=mode,
            r=args.rate if args.rate is not None else 0.0,
            M=buffer if mode is TrafficMode.UNSATM else 1,
        )
    except ValueError as e:
        parser.error(str(e))


def _print_report(cfg: NetworkConfig, rep: PerformanceReport) -> None:
    """Human summary plus a one-row CSV block on stdout."""
    print(f"# mode={cfg.mode.value} N={cfg.N} L={cfg.L} bytes r={cfg.r} M={cfg.M}")
    print(f"# tau={rep.tau!r} a={rep.a!r}")
    print(f"# TH={rep.TH!r} PS={rep.PS!r}")
    ts = "undefined" if rep.TS is None else repr(rep.TS)
    print(f"# TS={ts} TVS={rep.TVS!r} symbols")
    if rep.TSW is not None:
        print(f"# TSW={rep.TSW!r} TVSW={rep.TVSW!r} symbols")
    for name in ("TH", "PS"):
        if name in rep.ci95:
            print(f"# ci95 {name}: +/-{rep.ci95[name]!r}")
    row = dataset.ResultRow(
        mode=cfg.mode.value, N=cfg.N, L=cfg.L, r=cfg.r, M=cfg.M,
        source=rep.source.value, tau=rep.tau, a=rep.a,
        TH=dataset._none_if_nan(rep.TH), PS=dataset._none_if_nan(rep.PS),
        TS_sym=rep.TS, TVS_sym=dataset._none_if_nan(rep.TVS),
        TSW_sym=rep.TSW, TVSW_sym=rep.TVSW, converged=True,
        ci_TH=rep.ci95.get("TH"), ci_PS=rep.ci95.get("PS"),
    )
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(dataset.HEADER)
    writer.writerow(
        dataset._format(v)
        for v in (
            row.mode, row.N, row.L, float(row.r), row.M, row.source, row.tau,
            row.a, row.TH, row.PS, row.TS_sym, row.TVS_sym, row.TSW_sym,
            row.TVSW_sym, row.converged, row.ci_TH, row.ci_PS,
        )
    )
    sys.stdout.write(buf.getvalue())


def _add_net_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", required=True, choices=sorted(_MODES),
                   help="traffic mode: unsat1 (single buffer), unsatm (M buffers), sat (saturated)")
    p.add_argument("--nodes", type=int, required=True, help="number of sensor nodes N")
    p.add_argument("--frame-bytes", type=int, required=True,
                   help="frame payload L in bytes (2L symbols on air)")
    p.add_argument("--rate", type=float, default=None,
                   help="arrival rate in frames per frame duration (unsaturated modes)")
    p.add_argument("--buffer", type=int, default=None,
                   help="MAC buffer capacity in frames, counting the one in service")


def _cmd_solve(args, parser) -> int:
    cfg = _net_config(args, parser)
    settings = SolverSettings(
        tolerance=args.tol, max_iterations=args.max_iter,
        damping=args.damping, use_bisection=args.bisection,
    )
    try:
        fp = solve(cfg, settings)
    except NonConvergenceError as e:
        print(f"did not converge: {e} (last tau={e.fixed_point.tau!r})", file=sys.stderr)
        return 1
    _print_report(cfg, metrics_report(cfg, fp))
    print(f"# converged in {fp.iterations} iterations, residual {fp.residual!r}")
    return 0


def _cmd_simulate(args, parser) -> int:
    cfg = _net_config(args, parser)
    sim_cfg = simulator.SimConfig(
        net=cfg, horizon_mini_slots=args.horizon, warmup_mini_slots=args.warmup,
        replications=args.reps, base_seed=args.seed,
    )
    if args.trace:
        lines = simulator.trace(sim_cfg, max_events=args.trace_events)
        with open(args.trace, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    rep = simulator.run(sim_cfg, jobs=args.jobs)
    _print_report(cfg, rep)
    return 0


def _cmd_sweep(args, parser) -> int:
    mode = _MODES[args.mode]
    if mode is not TrafficMode.SATURATED and args.rate is None:
        parser.error(f"--rate is required for mode {args.mode}")
    try:
        spec = dataset.SweepSpec(
            mode=mode,
            N_values=dataset.parse_range(args.nodes, int),
            L_values=dataset.parse_range(args.frame_bytes, int),
            r_values=dataset.parse_range(args.rate, float) if args.rate else (),
            M_values=dataset.parse_range(args.buffer, int) if args.buffer else (1,),
            engine=dataset.Engine(args.engine),
            solver=SolverSettings(tolerance=args.tol, max_iterations=args.max_iter),
            horizon=args.horizon, warmup=args.warmup,
            replications=args.reps, base_seed=args.seed,
        )
    except ValueError as e:
        parser.error(str(e))
    rows = dataset.run_sweep(spec, jobs=args.jobs)
    dataset.write_csv(rows, args.out, ms=args.ms)
    bad = sum(not row.converged for row in rows)
    print(f"wrote {len(rows)} rows to {args.out}" + (f" ({bad} not converged)" if bad else ""))
    return 1 if bad else 0


def _cmd_compare(args, parser) -> int:
    ana = dataset.read_csv(args.analytical)
    sim = dataset.read_csv(args.simulated)
    try:
        diffs, summary = dataset.compare(ana, sim)
    except dataset.KeyMismatchError as e:
        print(str(e), file=sys.stderr)
        return 1
    dataset.write_diff_csv(diffs, args.out)
    print(f"wrote {len(diffs)} comparisons to {args.out}")
    for metric, stats in summary.items():
        parts = " ".join(f"{k}={v!r}" for k, v in stats.items())
        print(f"# {metric}: {parts}")
    return 0


def _training_matrix(rows, target: str):
    features, target_col = predictor.TASKS[target]
    col_of = {"r": "r", "L": "L", "N": "N", "PS": "PS", "TVS": "TVS_sym"}
    X, y = [], []
    for row in rows:
        vals = []
        ok = True
        for name in (*features, target_col):
            v = {"r": row.r, "L": row.L, "N": row.N}.get(name)
            if v is None:
                v = getattr(row, col_of[name])
            if v is None:
                ok = False
                break
            vals.append(float(v))
        if ok and row.converged:
            X.append(vals[:4])
            y.append(vals[4])
    return np.array(X), np.array(y)


def _cmd_train(args, parser) -> int:
    rows = dataset.read_csv(args.data)
    X, y = _training_matrix(rows, args.target)
    if len(X) < 10:
        print(f"only {len(X)} usable rows in {args.data}", file=sys.stderr)
        return 1
    if args.hidden:
        hidden = tuple(int(h) for h in args.hidden.split(","))
        if len(hidden) != 3:
            parser.error("--hidden needs three comma-separated sizes")
    elif args.desk_scale:
        hidden = predictor.DESK_HIDDEN
    else:
        hidden = predictor.DEFAULT_HIDDEN[args.target]
    model = predictor.init_model(
        predictor.MLPArchitecture(input_dim=4, hidden=hidden, output_dim=1), args.seed
    )
    cfg = predictor.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
        seed=args.seed, validation_fraction=args.val_frac,
    )
    try:
        model, rep = predictor.train(model, X, y, cfg)
    except predictor.DivergenceDetected as e:
        print(str(e), file=sys.stderr)
        return 1
    predictor.save_model(model, args.out)
    print(f"# target={args.target} hidden={list(hidden)} samples={len(X)}")
    print(f"# held-out R={rep.R!r} MSE={rep.MSE!r} (normalized units) n={rep.n}")
    print(f"wrote model to {args.out}")
    return 0


def _cmd_predict(args, parser) -> int:
    values = args.input.split(",")
    if len(values) != 4:
        parser.error(f"--input needs 4 comma-separated reals, got {len(values)}")
    try:
        x = [float(v) for v in values]
    except ValueError:
        parser.error(f"bad --input value in {args.input!r}")
    model = predictor.load_model(args.model)
    print(repr(predictor.forward(model, x)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="star154",
        description="Performance toolkit for non-beacon IEEE 802.15.4 star networks. "
        "Delays are in symbols (16 us); rates in frames per frame duration (2L symbols).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="closed-form fixed point and metrics")
    _add_net_flags(p)
    p.add_argument("--tol", type=float, default=1e-12, help="fixed-point residual tolerance")
    p.add_argument("--max-iter", type=int, default=100000)
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--bisection", action="store_true", help="use bisection instead of damped iteration")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo simulation with confidence intervals")
    _add_net_flags(p)
    p.add_argument("--horizon", type=int, required=True, help="measured mini-slots per replication")
    p.add_argument("--warmup", type=int, default=None, help="warmup mini-slots (default: 10%% of horizon)")
    p.add_argument("--reps", type=int, default=50, help="replications (default 50)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="write an event trace of replication 0 to this file")
    p.add_argument("--trace-events", type=int, default=1000, help="max trace lines")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for replications")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a parameter grid and write CSV")
    p.add_argument("--mode", required=True, choices=sorted(_MODES))
    p.add_argument("--nodes", required=True, help="N values: '10', '2,5,10', or start:stop:step")
    p.add_argument("--frame-bytes", required=True, help="L values, same syntax")
    p.add_argument("--rate", default=None, help="r values, same syntax")
    p.add_argument("--buffer", default=None, help="M values, same syntax (unsatm)")
    p.add_argument("--engine", choices=[e.value for e in dataset.Engine], default="analytical")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=100000)
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ms", action="store_true", help="append millisecond delay columns")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for grid points")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("compare", help="diff analytical vs simulated CSVs")
    p.add_argument("--analytical", required=True)
    p.add_argument("--simulated", required=True)
    p.add_argument("--out", required=True, help="output diff CSV path")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("train", help="train an inverse predictor on sweep CSV data")
    p.add_argument("--data", required=True, help="training CSV from the sweep subcommand")
    p.add_argument("--target", required=True, choices=sorted(predictor.TASKS),
                   help="n: (r,L,PS,TVS)->N; ps: (r,L,N,TVS)->PS; tvs: (r,L,PS,N)->TVS")
    p.add_argument("--hidden", default=None, help="three hidden sizes, e.g. 100,80,50")
    p.add_argument("--desk-scale", action="store_true",
                   help="use the small 32,24,16 architecture for quick runs")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("predict", help="one forward pass of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="4 comma-separated reals, e.g. 0.05,100,0.9,400")
    p.set_defaults(fn=_cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args, parser)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
