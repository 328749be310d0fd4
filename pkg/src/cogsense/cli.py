"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration error (nothing is
written in that case).
"""
from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .assignment import SOLVERS, InfeasibleError, load_instance, parse_instance
from .config import ConfigError, ScenarioConfig, _coerce, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def _base_config(args) -> ScenarioConfig:
    overrides = {"runs": args.runs, "seed": args.seed, "horizon": args.horizon,
                 "jobs": getattr(args, "jobs", None)}
    if args.config:
        return load_config(args.config, **overrides)
    cfg = ScenarioConfig()
    return cfg.replace(**{k: v for k, v in overrides.items() if v is not None})


def _prepare_out(out) -> Path | None:
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _summary_lines(label: str, m) -> list[str]:
    lines = [f"[{label}] runs={m.runs} horizon={m.horizon}"]
    for key, st in m.final.items():
        lines.append(f"  final {key}: {st['mean']:.4f} (stderr {st['stderr']:.4f})")
    if m.solver_seconds:
        s = m.solver_seconds
        lines.append(f"  solver calls: {s['calls']}  bb: {s['bb_seconds']:.3f}s  "
                     f"ih: {s['ih_seconds']:.3f}s  bb/ih: {s['bb_over_ih']:.2f}")
    return lines


def _emit_experiment(curves: dict, cfg: ScenarioConfig, out: Path | None, plots: bool,
                     extra_echo: str = "") -> None:
    from .simulate import metrics_rows

    rows = metrics_rows(curves, cfg.sample_points)
    summary = []
    for label, m in curves.items():
        summary += _summary_lines(label, m)
    if out is None:
        sys.stdout.write("\n".join(rows) + "\n")
        sys.stderr.write("\n".join(summary) + "\n")
        return
    (out / "metrics.csv").write_text("\n".join(rows) + "\n")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    (out / "config.echo").write_text(cfg.to_text() + extra_echo)
    if plots:
        from .plotting import plot_metrics
        plot_metrics(curves, out)
    print("\n".join(summary))


def cmd_run(args) -> int:
    from .simulate import run_experiment

    cfg = _base_config(args)
    if args.time_solvers:
        cfg = cfg.replace(time_solvers=True)
    out = _prepare_out(args.out)
    m = run_experiment(cfg)
    _emit_experiment({cfg.policy: m}, cfg, out, not args.no_plots)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .simulate import run_experiment

    cfg = _base_config(args)
    if args.param not in ScenarioConfig.__dataclass_fields__:
        raise ConfigError(args.param, "unknown parameter")
    values = [v.strip() for v in args.values.split(args.sep) if v.strip()]
    if not values:
        raise ConfigError("values", "no values given")
    variants = [(f"{args.param}={v}", cfg.replace(**{args.param: _coerce(args.param, v)}))
                for v in values]
    out = _prepare_out(args.out)
    curves = {label: run_experiment(c) for label, c in variants}
    echo = f"# sweep {args.param} over {', '.join(values)}\n"
    _emit_experiment(curves, cfg, out, not args.no_plots, echo)
    return EXIT_OK


_BOUND_KEYS = {"alpha": float, "epsilon": float, "l": int, "n_b": int, "horizon": int,
               "runs": int, "seed": int, "points": int}


def _load_bounds_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    vals = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        try:
            if key == "mu":
                vals[key] = [float(a) for a in val.split(",")]
            elif key in _BOUND_KEYS:
                vals[key] = _BOUND_KEYS[key](val)
            else:
                raise ConfigError(key, f"unknown key (line {lineno})")
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    return vals


def cmd_bounds(args) -> int:
    from .analysis import (ConvergenceSpec, bound_trajectory, sample_ks,
                           simulate_expected_q)

    vals = _load_bounds_config(args.config) if args.config else {}
    runs = args.runs or vals.pop("runs", 2000)
    vals.pop("runs", None)
    seed = args.seed if args.seed is not None else vals.pop("seed", 12345)
    vals.pop("seed", None)
    points = vals.pop("points", 500)
    if args.horizon:
        vals["horizon"] = args.horizon
    if "mu" in vals and "n_b" not in vals:
        vals["n_b"] = len(vals["mu"])
    try:
        spec = ConvergenceSpec(**vals)
    except ValueError as exc:
        raise ConfigError("bounds", str(exc)) from None
    out = _prepare_out(args.out)
    traj = simulate_expected_q(spec, runs, np.random.default_rng(seed))
    ks = sample_ks(spec.horizon, points)
    lo = bound_trajectory(spec, ks, "lower")
    up = bound_trajectory(spec, ks, "upper")
    rows = ["k,band,mean_q,stderr,lower,upper"]
    for i, k in enumerate(ks):
        for b in range(spec.n_b):
            rows.append(f"{k},{b},{traj.mean[k, b]:.10g},{traj.stderr[k, b]:.10g},"
                        f"{lo[i, b]:.10g},{up[i, b]:.10g}")
    if out is None:
        sys.stdout.write("\n".join(rows) + "\n")
        return EXIT_OK
    (out / "bounds.csv").write_text("\n".join(rows) + "\n")
    if not args.no_plots:
        from .plotting import plot_bounds
        plot_bounds(ks, traj.mean, lo, up, out / "bounds.png")
    inside = np.all((traj.mean[ks] >= lo - 3 * traj.stderr[ks] - 1e-12)
                    & (traj.mean[ks] <= up + 3 * traj.stderr[ks] + 1e-12))
    print(f"runs={runs} horizon={spec.horizon} inside bounds (3 stderr): {bool(inside)}")
    return EXIT_OK


def cmd_suq(args) -> int:
    from .simulate import su_q_calibration

    cfg = _base_config(args)
    out = _prepare_out(args.out)
    cal = su_q_calibration(cfg)
    rows = ["su,band,mean_snr_db,mean_su_q,limit,abs_gap"]
    for s in range(cal.mean_su_q.shape[0]):
        for b in range(cal.mean_su_q.shape[1]):
            rows.append(f"{s},{b},{cal.mean_snr_db[s, b]:.10g},{cal.mean_su_q[s, b]:.10g},"
                        f"{cal.limit[s, b]:.10g},{cal.gap[s, b]:.10g}")
    per_su = ", ".join(f"{g:.4f}" for g in cal.gap_per_su())
    if out is None:
        sys.stdout.write("\n".join(rows) + "\n")
        sys.stderr.write(f"mean |gap| per SU: {per_su}\n")
        return EXIT_OK
    (out / "su_q.csv").write_text("\n".join(rows) + "\n")
    (out / "config.echo").write_text(cfg.to_text())
    if not args.no_plots:
        from .plotting import plot_su_calibration
        plot_su_calibration(cal, out / "su_q.png")
    print(f"mean |gap| per SU: {per_su}")
    return EXIT_OK


def cmd_solve_sap(args) -> int:
    if args.instance:
        if not Path(args.instance).is_file():
            raise FileNotFoundError(f"instance file not found: {args.instance}")
        try:
            inst = load_instance(args.instance)
        except ValueError as exc:
            raise ConfigError("instance", str(exc)) from None
    else:
        text = resources.files("cogsense").joinpath("data/sap_fixture.txt").read_text()
        inst = parse_instance(text)
    names = ("bb", "ih", "brute")
    if inst.n_su * inst.n_bands > 20:
        names = ("bb", "ih")
    for name in names:
        t0 = time.perf_counter()
        try:
            sol = SOLVERS[name](inst)
        except InfeasibleError:
            dt = time.perf_counter() - t0
            print(f"{name}: infeasible  time={dt * 1e6:.1f}us")
            continue
        dt = time.perf_counter() - t0
        sensors = "; ".join(
            f"band {b}: SU " + ",".join(str(s + 1) for s in np.flatnonzero(sol.x[:, b]))
            for b in range(inst.n_bands))
        print(f"{name}: cost={sol.cost(inst):g} feasible={sol.is_feasible(inst)} "
              f"{sensors}  time={dt * 1e6:.1f}us")
    return EXIT_OK


def cmd_nonstat(args) -> int:
    from .nonstat import NonstatConfig, nonstat_rows, run_nonstationary

    kw = {k: v for k, v in {"runs": args.runs, "seed": args.seed, "horizon": args.horizon,
                            "permutations": args.permutations, "epsilon": args.epsilon,
                            "alpha": args.alpha, "ducb_gamma": args.gamma}.items()
          if v is not None}
    try:
        cfg = NonstatConfig(scenario=args.scenario, **kw)
    except ValueError as exc:
        raise ConfigError("nonstat", str(exc)) from None
    out = _prepare_out(args.out)
    res = run_nonstationary(cfg)
    rows = nonstat_rows(res)
    summary = [f"[{cfg.scenario}] runs={cfg.runs} horizon={cfg.horizon} "
               f"permutation slots={res.schedule}"]
    for name, (tot, se) in res.totals().items():
        summary.append(f"  total throughput {name}: {tot:.1f} (stderr {se:.1f})")
    if out is None:
        sys.stdout.write("\n".join(rows) + "\n")
        sys.stderr.write("\n".join(summary) + "\n")
        return EXIT_OK
    (out / "metrics.csv").write_text("\n".join(rows) + "\n")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    if not args.no_plots:
        from .plotting import plot_nonstat
        plot_nonstat(res, out / "throughput.png")
    print("\n".join(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cogsense",
                                description="Collaborative multi-band spectrum sensing simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="flat key = value scenario file")
        sp.add_argument("--runs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--out", help="output directory (CSV to stdout if omitted)")
        sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    sp = sub.add_parser("run", help="run one stationary experiment")
    common(sp)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--time-solvers", action="store_true",
                    help="time BB and IH on every assignment problem")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="one curve per value of a config parameter")
    common(sp)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", required=True)
    sp.add_argument("--sep", default=",", help="value separator (default ',')")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bounds", help="Q-value trajectories against their bounds")
    common(sp)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("suq", help="SU Q-values against their analytic limit")
    common(sp)
    sp.add_argument("--jobs", type=int)
    sp.set_defaults(func=cmd_suq)

    sp = sub.add_parser("solve-sap", help="compare the assignment solvers on one instance")
    sp.add_argument("--instance", help="instance record (bundled fixture if omitted)")
    sp.set_defaults(func=cmd_solve_sap)

    sp = sub.add_parser("nonstat", help="band selection under permuted statistics")
    sp.add_argument("--scenario", choices=("markov", "bernoulli"), default="markov")
    common(sp, config=False)
    sp.add_argument("--permutations", type=int)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--gamma", type=float, help="DUCB discount")
    sp.set_defaults(func=cmd_nonstat)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
