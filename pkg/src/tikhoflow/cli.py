"""Command-line experiment runner.

Exit codes: 0 all enabled checks pass, 1 a check failed (or not certified),
2 configuration / input error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from ._io import atomic_write_text, csv_text, fmt, read_csv
from .config import ExperimentConfig, load_config, resolve_problem
from .dynamics import (TRAJECTORY_HEADER, CoefficientSignWarning, integrate, log_schedule,
                       validate_params)
from .errors import (AllZero, ChecksFailed, ConfigError, DimensionMismatch, EmptyData,
                     EmptyWindow, Infeasible, InfeasibleConstants, MissingColumn,
                     NotCertified, NotMonotone, ParamError, ProblemFileError, TikhoflowError)
from .operators import monotonicity_probe
from .plotting import plot, render_svg
from .primal_dual import (PD_HEADER, ConstrainedProblem, distance_decreasing, gap_bound_check,
                          kkt_oracle, pd_metrics, saddle_operator)
from .problems import REGISTRY, problem_names
from .tikhonov import PATH_HEADER, minimal_norm_solution, path_checks, tikhonov_path

__all__ = ["main", "run_experiment", "certify_config", "RunReport", "EXIT_OK", "EXIT_CHECKS",
           "EXIT_CONFIG", "EXIT_RUNTIME"]

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
USER_ERRORS = (ConfigError, ParamError, EmptyWindow, MissingColumn, EmptyData, ProblemFileError,
               DimensionMismatch, NotMonotone, Infeasible, FileNotFoundError)


@dataclass
class RunReport:
    config: dict
    checks: dict = field(default_factory=dict)
    rates: list = field(default_factory=list)
    files: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> str:
        body = {"config": self.config, "checks": self.checks, "rates": self.rates,
                "files": self.files, "final": self.final, "stats": self.stats,
                "passed": self.passed}
        return _json(body) + "\n"


def _json(obj, indent=0) -> str:
    """JSON with every float at 17 significant digits (non-finite as strings)."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else f'"{fmt(obj)}"'
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_json(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _output_dir(cfg: ExperimentConfig, override=None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("TIKHOFLOW_OUT") or cfg.output_dir)


def _initial_state(cfg: ExperimentConfig, dim: int):
    rng = np.random.default_rng(cfg.seed)
    if cfg.u0 is not None:
        u0 = np.asarray(cfg.u0, dtype=float)
    elif cfg.random_init_scale > 0:
        u0 = rng.normal(scale=cfg.random_init_scale, size=dim)
    else:
        u0 = np.zeros(dim)
    v0 = np.zeros(dim) if cfg.v0 is None else np.asarray(cfg.v0, dtype=float)
    if u0.shape != (dim,) or v0.shape != (dim,):
        raise ConfigError(f"initial conditions must have dimension {dim}")
    return u0, v0


def _constants(cfg: ExperimentConfig, params, grid):
    consts = dg.select_proof_constants(params, grid)
    return replace(consts, **cfg.constants) if cfg.constants else consts


def run_experiment(cfg: ExperimentConfig, out_dir=None, verbose: bool = True):
    """Run one configured experiment; returns ``(report, output directory)``.

    All artifacts are computed before anything is written, so a failing run
    leaves no partial files behind.
    """
    params = validate_params(cfg.params, baseline=cfg.baseline)
    if params.c == 0 and (cfg.checks.certify or cfg.checks.energy or cfg.checks.path_checks):
        raise ConfigError("c = 0 baseline runs need certify, energy and path_checks disabled")
    obj = resolve_problem(cfg.problem)
    pd_problem = obj if isinstance(obj, ConstrainedProblem) else None
    op = saddle_operator(obj) if pd_problem else obj
    u0, v0 = _initial_state(cfg, op.dim)
    schedule = log_schedule(params.t0, cfg.schedule.t_end, cfg.schedule.points_per_decade)

    report = RunReport(config=cfg.to_dict())
    probe = monotonicity_probe(op, pairs=1000, seed=cfg.seed)
    report.checks["monotonicity"] = {"passed": probe.passed,
                                     "min_inner_product": probe.min_inner_product}

    traj = integrate(op, params, u0, v0, schedule, rtol=cfg.rtol, atol=cfg.atol)
    report.stats = dict(traj.stats)
    saddle = kkt_oracle(pd_problem) if pd_problem and pd_problem.is_quadratic else None
    x_star = saddle.w if saddle is not None else minimal_norm_solution(op).x_star
    x_path = None
    if params.c > 0:
        x_path = np.array([p.x for p in tikhonov_path(op, params, traj.t)])
    dist_xt = (np.linalg.norm(traj.x - x_path, axis=1) if x_path is not None
               else np.full(len(traj), np.nan))
    dist_star = np.linalg.norm(traj.x - x_star, axis=1)
    report.final = {"t": float(traj.t[-1]), "x": traj.x[-1].tolist(),
                    "x_star": x_star.tolist(), "dist_to_xstar": float(dist_star[-1]),
                    "norm_Ax": float(traj.norm_Ax[-1]), "norm_xdot": float(traj.norm_xdot[-1])}

    texts = {}
    texts["trajectory.csv"] = csv_text(TRAJECTORY_HEADER, zip(
        traj.t, traj.norm_x, traj.norm_xdot, traj.norm_Ax, dist_star, dist_xt))

    # Tikhonov path
    path_grid = np.logspace(math.log10(params.t0), math.log10(cfg.schedule.t_end),
                            cfg.checks.path_points)
    points = []
    if cfg.checks.path_checks:
        pr = path_checks(op, params, path_grid, x_star=x_star)
        points = pr.points
        report.checks["path_checks"] = {
            "passed": pr.passed, "norm_bound": pr.norm_bound_ok,
            "derivative_bound": pr.derivative_ok, "monotone_norm": pr.monotone_ok,
            "max_derivative_ratio": float(np.max(pr.deriv_ratio)),
            "derivative_failures": pr.derivative_failures,
        }
    elif params.c > 0:
        points = tikhonov_path(op, params, path_grid)
    texts["path.csv"] = csv_text(PATH_HEADER, ((p.t, p.eps, np.linalg.norm(p.x), p.residual,
                                                p.iterations) for p in points))

    # rates
    lo, hi = cfg.checks.rate_window
    claims = dg.claimed_exponents(params)
    series = {"dist_to_xt": dist_xt, "norm_Ax": traj.norm_Ax, "norm_xdot": traj.norm_xdot}
    rate_rows = []
    if cfg.checks.rates:
        ok_all = True
        for name, pair in claims.items():
            vals = series[name]
            if not np.all(np.isfinite(vals)):
                continue
            try:
                fit = dg.fit_rate(traj.t, vals, (lo, hi), max(pair), quantity=name)
                _, _, growth = dg.ratio_growth(traj.t, vals, pair, lo, hi)
            except AllZero:
                report.rates.append({"quantity": name, "vacuous": True})
                continue
            ok = growth < 0.1
            ok_all &= ok
            rate_rows.append(fit)
            report.rates.append({"quantity": name, "slope": fit.slope, "r2": fit.r2,
                                 "claimed_exponents": list(pair), "sup_ratio": fit.sup_ratio,
                                 "ratio_growth": growth, "passed": ok})
        report.checks["rates"] = {"passed": bool(ok_all), "window": [lo, hi]}
    texts["rates.csv"] = csv_text(dg.RATES_HEADER, (
        (f.quantity, f.window[0], f.window[1], f.slope, f.r2, f.claimed_exponent, f.sup_ratio)
        for f in rate_rows))

    # proof constants, certificate, energy
    cert_text = "# tikhoflow certificate\ncertify: disabled\n"
    if cfg.checks.certify or cfg.checks.energy:
        grid = dg.default_grid(params, cfg.checks.certify_t_max)
        try:
            consts = _constants(cfg, params, grid)
        except InfeasibleConstants as exc:
            consts = None
            for key in ("certify", "energy"):
                if getattr(cfg.checks, key):
                    report.checks[key] = {"passed": False, "error": str(exc)}
            cert_text = f"# tikhoflow certificate\ncertified: no\nerror: {exc}\n"
        if consts is not None and cfg.checks.certify:
            cert = dg.certify(params, consts, grid, raise_on_fail=False)
            cert_text = cert.to_text()
            report.checks["certify"] = {"passed": cert.certified, "T_star": cert.T_star,
                                        "violating": cert.violating,
                                        "constants": consts.to_dict()}
        if consts is not None and cfg.checks.energy:
            E, U = dg.energy_series(traj, x_path, params, consts)
            q, s = params.q, params.s
            sup, sup_head, growth = dg.ratio_growth(traj.t, E, [2 * q + 2 * s - 2, -s], lo,
                                                    cfg.schedule.t_end)
            u_min = float(U.min())
            report.checks["energy"] = {"passed": bool(growth < 0.1 and u_min >= -1e-10),
                                       "ratio_sup": sup, "ratio_growth": growth,
                                       "u_min": u_min}
    texts["certificate.txt"] = cert_text

    # primal-dual metrics
    if pd_problem is not None:
        m = pd_metrics(pd_problem, traj, saddle)
        texts["pd.csv"] = csv_text(PD_HEADER, zip(m.t, m.feasibility, m.dual_residual,
                                                  np.abs(m.gap), m.dist_saddle))
        if saddle is not None:
            gr = gap_bound_check(m, saddle, (lo, hi))
            report.checks["pd_gap_bound"] = {"passed": gr.passed, "M1": gr.M1, "M2": gr.M2}
            dec = distance_decreasing(m.t, m.dist_saddle, cfg.schedule.t_end / 10)
            report.checks["pd_distance_decreasing"] = {"passed": dec}

    refs = [max(claims["norm_xdot"]), max(claims["norm_Ax"])]
    plot_series = {k: v for k, v in series.items() if np.all(np.isfinite(v)) and np.any(v > 0)}
    texts["trajectory.svg"] = render_svg(traj.t, plot_series, ref_slopes=refs, title=cfg.name)

    out = _output_dir(cfg, out_dir)
    for name, text in texts.items():
        atomic_write_text(out / name, text)
    report.files = sorted(texts)
    atomic_write_text(out / "report.json", report.to_json())
    if verbose:
        _print_report(report, out)
    return report, out


def _print_report(report: RunReport, out: Path):
    for name, c in report.checks.items():
        print(f"check {name}: {'pass' if c['passed'] else 'FAIL'}")
    for r in report.rates:
        if r.get("vacuous"):
            print(f"rate {r['quantity']}: identically zero (vacuous)")
        else:
            print(f"rate {r['quantity']}: slope={fmt(r['slope'])} sup_ratio={fmt(r['sup_ratio'])} "
                  f"growth={fmt(r['ratio_growth'])}")
    print(f"dist_to_xstar(T)={fmt(report.final['dist_to_xstar'])}")
    print(f"artifacts: {out}")


def certify_config(cfg: ExperimentConfig, verbose: bool = True):
    """Select constants (with overrides) and certify; raises ``NotCertified``."""
    params = validate_params(cfg.params, baseline=cfg.baseline)
    grid = dg.default_grid(params, cfg.checks.certify_t_max)
    consts = _constants(cfg, params, grid)
    rep = dg.certify(params, consts, grid, raise_on_fail=False)
    if verbose:
        print(rep.to_text(), end="")
    if not rep.certified:
        raise NotCertified("not certified; violating: " + ", ".join(rep.violating), report=rep)
    return rep


def _window(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be lo:hi, got {text!r}") from None
    return lo, hi


def _rates_cmd(args):
    header, cols = read_csv(args.csv)
    if args.x not in header:
        raise MissingColumn(f"column {args.x!r} not in {args.csv}")
    names = args.column or [h for h in header if h != args.x]
    lo, hi = args.window
    t = np.asarray(cols[args.x], dtype=float)
    ok = True
    print(",".join(dg.RATES_HEADER + ["ratio_growth"]))
    for name in names:
        if name not in header:
            raise MissingColumn(f"column {name!r} not in {args.csv}")
        vals = np.asarray(cols[name], dtype=float)
        if not np.all(np.isfinite(vals)):
            continue
        try:
            fit = dg.fit_rate(t, vals, (lo, hi), args.exponent, quantity=name)
        except AllZero:
            print(f"{name},{fmt(lo)},{fmt(hi)},nan,nan,{fmt(args.exponent)},0  # identically zero")
            continue
        _, _, growth = dg.ratio_growth(t, vals, [args.exponent], lo, hi)
        ok &= growth < args.max_growth
        print(",".join([name] + [fmt(v) for v in (lo, hi, fit.slope, fit.r2, args.exponent,
                                                  fit.sup_ratio, growth)]))
    return EXIT_OK if ok else EXIT_CHECKS


def _plot_cmd(args):
    out = plot(args.csv, args.y, x=args.x, loglog=not args.linear,
               ref_slopes=args.ref_slope or (), out=args.out, title=args.title or "")
    print(out)
    return EXIT_OK


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ChecksFailed, NotCertified)):
        return EXIT_CHECKS
    if isinstance(exc, USER_ERRORS):
        return EXIT_CONFIG
    return EXIT_RUNTIME


def _error_line(exc: BaseException) -> str:
    prefix = "RuntimeFailure: " if _exit_code(exc) == EXIT_RUNTIME else ""
    return f"{prefix}{type(exc).__name__}: {exc}"


def _run_one(config_path, out_dir=None, verbose: bool = True) -> int:
    report, _ = run_experiment(load_config(config_path), out_dir=out_dir, verbose=verbose)
    if not report.passed:
        raise ChecksFailed("failed: " + ", ".join(
            k for k, v in report.checks.items() if not v["passed"]))
    return EXIT_OK


def _run_worker(config_path, out_dir):
    """Process-pool entry: never raises, returns ``(code, message)``."""
    warnings.simplefilter("ignore", CoefficientSignWarning)
    try:
        return _run_one(config_path, out_dir, verbose=False), "ok"
    except (TikhoflowError, FloatingPointError, FileNotFoundError) as exc:
        return _exit_code(exc), _error_line(exc)


def _run_cmd(args):
    if len(args.config) == 1:
        return _run_one(args.config[0], args.out)
    # batch: one directory per config under the shared root, run in parallel
    cfgs = [load_config(c) for c in args.config]
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ConfigError(f"batch configs need distinct names, got {names}")
    root = args.out or os.environ.get("TIKHOFLOW_OUT")
    outs = [str(Path(root) / c.name) if root else None for c in cfgs]
    with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(_run_worker, args.config, outs))
    for path, (code, msg) in zip(args.config, results):
        print(f"{path}: exit {code} {msg}")
    return max(code for code, _ in results)


def _list_cmd(args):
    for name in problem_names():
        p = REGISTRY[name]
        obj = p.make()
        dim = obj.dim if hasattr(obj, "dim") else obj.n + obj.m
        print(f"{name:16s} {p.kind:9s} dim={dim:<3d} {p.description}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="tikhoflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", nargs="+", help="one or more configs; several run in parallel")
    r.add_argument("--out", help="output directory (overrides config and TIKHOFLOW_OUT)")
    r.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for a batch of configs")
    c = sub.add_parser("certify", help="select proof constants and certify the coefficients")
    c.add_argument("config")
    c.add_argument("--K", type=float, help="override the constant K")
    c.add_argument("--s5", type=float, help="override the constant s5")
    ra = sub.add_parser("rates", help="fit log-log slopes and ratio bounds on a CSV")
    ra.add_argument("csv")
    ra.add_argument("--exponent", type=float, required=True)
    ra.add_argument("--window", type=_window, required=True)
    ra.add_argument("--x", default="t")
    ra.add_argument("--column", action="append")
    ra.add_argument("--max-growth", type=float, default=0.1)
    p = sub.add_parser("plot", help="plot CSV columns to SVG")
    p.add_argument("csv")
    p.add_argument("--y", action="append", required=True)
    p.add_argument("--x", default="t")
    p.add_argument("--ref-slope", type=float, action="append")
    p.add_argument("--linear", action="store_true")
    p.add_argument("--out")
    p.add_argument("--title")
    sub.add_parser("list-problems", help="list built-in problems")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("ignore", CoefficientSignWarning)
    try:
        if args.cmd == "run":
            return _run_cmd(args)
        if args.cmd == "certify":
            cfg = load_config(args.config)
            over = {k: v for k, v in (("K", args.K), ("s5", args.s5)) if v is not None}
            if over:
                cfg = replace(cfg, constants={**cfg.constants, **over})
            certify_config(cfg)
            return EXIT_OK
        if args.cmd == "rates":
            return _rates_cmd(args)
        if args.cmd == "plot":
            return _plot_cmd(args)
        return _list_cmd(args)
    except (TikhoflowError, FloatingPointError, FileNotFoundError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
