"""Command-line front end.

Defaults of the numeric flags can be overridden through environment
variables named ``METDE_`` plus the flag name in upper case with dashes
replaced by underscores (``METDE_MAX_ITERS``, ``METDE_GRID_POINTS``, ...).
Flags given on the command line win over the environment.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .density import Grid, write_csv
from .ensemble import METHODS, cost_model, load_ensemble, rate
from .full_de import DeConfig, run_full_de
from .gauss_approx import APPROX_METHODS, run_approx
from .hybrid import HybridConfig, run_hybrid
from .threshold import find_threshold, threshold_error

ENV_PREFIX = "METDE_"
HYBRID_FLAGS = ("kl_target", "max_full_iters", "kl_interval")

DEFAULTS = {
    "max_iters": 1000,
    "target_ber": 1e-10,
    "grid_points": 9801,
    "llr_max": 50.0,
    "kl_target": 0.04,
    "max_full_iters": 100,
    "kl_interval": 5,
    "tol": 1e-4,
    "jobs": 1,
    "seed": 0,
}


class UsageError(Exception):
    pass


def _env_default(name: str):
    base = DEFAULTS[name]
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return base
    try:
        return type(base)(float(raw)) if isinstance(base, int) else type(base)(raw)
    except ValueError:
        raise UsageError(f"bad value {raw!r} for {ENV_PREFIX + name.upper()}") from None


def _add_de_flags(p: argparse.ArgumentParser, hybrid_flags: bool = True) -> None:
    g = p.add_argument_group("evolution settings")
    g.add_argument("--max-iters", type=int, default=None, help="iteration limit (1000)")
    g.add_argument("--target-ber", type=float, default=None, help="convergence target (1e-10)")
    g.add_argument("--grid-points", type=int, default=None, help="odd number of grid points (9801)")
    g.add_argument("--llr-max", type=float, default=None, help="largest grid LLR (50)")
    if hybrid_flags:
        h = p.add_argument_group("hybrid settings (method hybrid only)")
        h.add_argument("--kl-target", type=float, default=None, help="soft switching limit (0.04)")
        h.add_argument("--max-full-iters", type=int, default=None, help="hard switching limit (100)")
        h.add_argument("--kl-interval", type=int, default=None, help="KL check period (5)")


def _add_out_flags(p: argparse.ArgumentParser, formats=("json", "csv")) -> None:
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--json", action="store_true", help="also echo the result as one JSON object")
    p.add_argument("--timing", action="store_true", help="include wall-clock timings in the output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metde", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{threshold,evolve,compare,sweep,optimize,cost}")

    p = sub.add_parser("threshold", help="bisect for the decoding threshold")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--method", choices=METHODS, default="full")
    p.add_argument("--sigma-lo", type=float)
    p.add_argument("--sigma-hi", type=float)
    p.add_argument("--tol", type=float, default=None)
    _add_de_flags(p)
    _add_out_flags(p, ("json",))

    p = sub.add_parser("evolve", help="run one evolution and write its trace")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--method", choices=METHODS, default="full")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--dump-densities", default=None, metavar="DIR",
                   help="write per-iteration message densities (full method)")
    _add_de_flags(p)
    _add_out_flags(p, ("csv", "json"))

    p = sub.add_parser("compare", help="thresholds of several methods side by side")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--sigma-lo", type=float)
    p.add_argument("--sigma-hi", type=float)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    _add_de_flags(p)
    _add_out_flags(p, ("csv", "json"))

    p = sub.add_parser("sweep", help="threshold over a one-parameter grid of a template")
    p.add_argument("--template", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--grid", required=True, help="comma list or start:stop:step")
    p.add_argument("--method", choices=METHODS, default="full")
    p.add_argument("--sigma-lo", type=float)
    p.add_argument("--sigma-hi", type=float)
    p.add_argument("--tol", type=float, default=None)
    _add_de_flags(p)
    _add_out_flags(p, ("csv", "json"))

    p = sub.add_parser("optimize", help="randomized search over a template's free coefficients")
    p.add_argument("--template", required=True)
    p.add_argument("--method", choices=METHODS, default="hybrid")
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma-lo", type=float)
    p.add_argument("--sigma-hi", type=float)
    p.add_argument("--tol", type=float, default=None)
    _add_de_flags(p)
    _add_out_flags(p, ("json",))

    p = sub.add_parser("cost", help="per-edge operation counts of one iteration")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--alpha", type=float, default=None)
    _add_out_flags(p, ("json", "csv"))

    p = sub.add_parser("mc-check")  # hidden: no help entry
    p.add_argument("--ensemble", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=None)
    _add_de_flags(p, hybrid_flags=False)
    _add_out_flags(p, ("csv", "json"))
    return parser


def _val(args, name):
    v = getattr(args, name, None)
    return _env_default(name) if v is None else v


def _config(args, method: str) -> DeConfig:
    explicit = [f for f in HYBRID_FLAGS if getattr(args, f, None) is not None]
    if explicit and method != "hybrid":
        flags = ", ".join("--" + f.replace("_", "-") for f in explicit)
        raise UsageError(f"{flags} apply only to method hybrid")
    try:
        grid = Grid(_val(args, "grid_points"), _val(args, "llr_max"))
        common = dict(max_iterations=_val(args, "max_iters"), target_ber=_val(args, "target_ber"),
                      grid=grid)
        if method == "hybrid":
            return HybridConfig(**common, kl_target=_val(args, "kl_target"),
                                max_full_de_iterations=_val(args, "max_full_iters"),
                                kl_check_interval=_val(args, "kl_interval"))
        return DeConfig(**common)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_grid(spec: str) -> list[float]:
    try:
        if ":" in spec:
            a, b, s = (float(x) for x in spec.split(":"))
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            return [round(a + k * s, 12) for k in range(n)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad grid {spec!r}") from None


def _emit(args, obj, rows: list[dict] | None = None) -> None:
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.json and (args.out or args.format != "json"):
        sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# -- subcommands -----------------------------------------------------------


def cmd_threshold(args) -> int:
    e = load_ensemble(args.ensemble)
    cfg = _config(args, args.method)
    r = find_threshold(e, args.method, cfg, args.sigma_lo, args.sigma_hi, _val(args, "tol"))
    out = r.to_dict()
    out["ensemble"] = e.name
    if not args.timing:
        out.pop("wall_time")
    _emit(args, out)
    return 0


def _run(e, sigma, method, cfg, keep=False):
    if method == "full":
        return run_full_de(e, sigma, cfg, keep_densities=keep)[1]
    if method == "hybrid":
        return run_hybrid(e, sigma, cfg)[1]
    return run_approx(e, sigma, method, cfg)[1]


def cmd_evolve(args) -> int:
    e = load_ensemble(args.ensemble)
    cfg = _config(args, args.method)
    if args.dump_densities and args.method != "full":
        raise UsageError("--dump-densities needs method full")
    trace = _run(e, args.sigma, args.method, cfg, keep=bool(args.dump_densities))
    if args.dump_densities:
        d = Path(args.dump_densities)
        d.mkdir(parents=True, exist_ok=True)
        for k, st in enumerate(trace.densities, start=1):
            for i in range(e.m_e):
                for tag, p in (("v", st.f_v[i]), ("u", st.f_u[i])):
                    with open(d / f"iter{k:04d}_{tag}{i + 1}.csv", "w", newline="") as fh:
                        write_csv(p, fh)
    rows = []
    for k in range(len(trace.iteration)):
        row = {"iteration": trace.iteration[k], "phase": trace.phase[k],
               "posterior_ber": repr(trace.posterior_ber[k]),
               "kl_monitored": repr(trace.kl_monitored[k])}
        if args.timing:
            row["elapsed_s"] = f"{trace.elapsed[k]:.6f}"
        for name, series in (("v_mean", trace.v_mean), ("v_var", trace.v_var),
                             ("v_ber", trace.v_ber), ("u_mean", trace.u_mean)):
            for i, x in enumerate(series[k]):
                row[f"{name}_{i + 1}"] = repr(x)
        rows.append(row)
    obj = {"ensemble": e.name, "method": args.method, "sigma_n": args.sigma,
           "converged": trace.converged, "iterations": trace.iterations,
           "switch_iteration": trace.switch_iteration,
           "posterior_ber": trace.posterior_ber, "kl_monitored":
           [None if math.isnan(x) else x for x in trace.kl_monitored]}
    _emit(args, obj, rows)
    return 0


def _threshold_task(a):
    e, method, cfg, lo, hi, tol = a
    return find_threshold(e, method, cfg, lo, hi, tol)


def cmd_compare(args) -> int:
    e = load_ensemble(args.ensemble)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    if "hybrid" not in methods:
        _config(args, "full")  # rejects stray hybrid flags
    tasks = [(e, m, _config(args, m), args.sigma_lo, args.sigma_hi, _val(args, "tol")) for m in methods]
    jobs = _val(args, "jobs")
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_threshold_task, tasks))
    else:
        results = [_threshold_task(t) for t in tasks]
    ref = next((r.sigma_star for r in results if r.method == "full"), None)
    rows = []
    for r in results:
        row = {"method": r.method, "sigma_star": r.sigma_star,
               "threshold_error": threshold_error(r.sigma_star, ref) if ref else None}
        if args.timing:
            row["wall_time"] = r.wall_time
        rows.append(row)
    _emit(args, {"ensemble": e.name, "rate": rate(e), "results": rows}, rows)
    return 0


def cmd_sweep(args) -> int:
    from .optimizer import load_template, sweep_parameter
    t = load_template(args.template)
    pts = sweep_parameter(t, args.param, _parse_grid(args.grid), args.method,
                          _config(args, args.method), _val(args, "tol"), args.sigma_lo, args.sigma_hi)
    rows = [{"value": p.value, "sigma_star": p.sigma_star, "reason": p.reason} for p in pts]
    _emit(args, {"template": t.name, "param": args.param, "method": args.method, "points": rows}, rows)
    return 0


def cmd_optimize(args) -> int:
    from .optimizer import optimize_ensemble, load_template
    t = load_template(args.template)
    r = optimize_ensemble(t, args.method, args.budget, _val(args, "seed"), _config(args, args.method),
                          _val(args, "tol"), sigma_lo=args.sigma_lo, sigma_hi=args.sigma_hi)
    _emit(args, {"template": t.name, "method": args.method, "sigma_star": r.sigma_star,
                 "params": r.params, "ensemble": r.best.to_dict(),
                 "history": [{"params": p, "sigma_star": s} for p, s in r.history]})
    return 0


def cmd_cost(args) -> int:
    e = load_ensemble(args.ensemble)
    try:
        table = cost_model(e, args.method, args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [{"operation": k, "vn": v["vn"], "cn": v["cn"]} for k, v in table.items()]
    _emit(args, {"ensemble": e.name, "method": args.method, "alpha": args.alpha, "table": table}, rows)
    return 0


def cmd_mc_check(args) -> int:
    from .mc_oracle import mc_de_run
    e = load_ensemble(args.ensemble)
    cfg = _config(args, "full")
    cfg.max_iterations = args.iterations
    cfg.target_ber = 1e-300
    trace = run_full_de(e, args.sigma, cfg)[1]
    mc = mc_de_run(e, args.sigma, args.iterations, args.samples, _val(args, "seed"))
    rows = []
    for k, (b, se) in enumerate(mc):
        p = trace.posterior_ber[k] if k < len(trace.posterior_ber) else float("nan")
        se_de = math.sqrt(p * (1 - p) / args.samples)
        rows.append({"iteration": k + 1, "mc_ber": b, "mc_std_err": se, "de_ber": p,
                     "z": (b - p) / se_de if se_de > 0 else 0.0})
    worst = max(abs(r["z"]) for r in rows)
    _emit(args, {"ensemble": e.name, "sigma_n": args.sigma, "samples": args.samples,
                 "max_abs_z": worst, "rows": rows}, rows)
    return 0


COMMANDS = {"threshold": cmd_threshold, "evolve": cmd_evolve, "compare": cmd_compare,
            "sweep": cmd_sweep, "optimize": cmd_optimize, "cost": cmd_cost, "mc-check": cmd_mc_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"metde: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"metde: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
