"""Command-line entry point: ``botlab <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import load_scenario
from .dependence import ar1_gamma2, clt_experiment, first_coordinate, long_run_variance
from .estimate import lse, mle, result_to_csv
from .exceptions import BotlabError, ConfigurationError
from .harness import reference_matrices, run_montecarlo
from .inference import (
    check_mean_preservation,
    confidence_intervals,
    conservative_A2,
    conservative_intervals,
    final_position_map,
    info_IPsi,
    info_IR,
    info_matrices,
    lse_asymptotic_cov,
    matrix_to_csv,
    parametric_fisher,
)
from .noise import AR1, second_moment
from .sim import Dataset, simulate

logger = logging.getLogger("botlab")


def _names(scenario):
    m = scenario.model
    return m.names or tuple(f"theta{i + 1}" for i in range(m.m))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(args, scenario, run):
    if getattr(args, "data", None):
        return Dataset.from_csv(args.data)
    return simulate(scenario, _seed(args, run), args.replication)


def _seed(args, run) -> int:
    return run.seed if args.seed is None else args.seed


def _estimate(args, scenario, run, data):
    est = args.estimator or run.estimator
    r = lse(data, scenario.model, scenario.path)
    if est in ("lse", "both"):
        return "lse", r
    if scenario.obs_noise is None:
        raise ConfigurationError("the likelihood needs observation noise")
    return "mle", mle(data, scenario.model, scenario.path, scenario.traj_noise, scenario.obs_noise,
                      theta_init=r.theta)


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    print(path)
    return path


def _stat_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stat", "value"])
    for k, v in rows:
        w.writerow([k, v if isinstance(v, (int, str)) else f"{float(v):.17g}"])
    return buf.getvalue()


def cmd_simulate(args, scenario, run):
    data = simulate(scenario, _seed(args, run), args.replication, keep_latent=args.latent)
    _write(_out(args) / "dataset.csv", data.to_csv())


def cmd_estimate(args, scenario, run):
    data = _dataset(args, scenario, run)
    est, r = _estimate(args, scenario, run, data)
    _write(_out(args) / f"estimate_{est}.csv", result_to_csv(r, list(_names(scenario))))
    if not r.converged:
        raise BotlabError(f"{est} did not converge ({r.message})")


def cmd_fisher(args, scenario, run):
    if scenario.obs_noise is None:
        raise ConfigurationError("information matrices need observation noise")
    grid = args.grid or run.grid
    im = info_matrices(scenario.model, scenario.theta_star, scenario.path, scenario.traj_noise,
                       scenario.obs_noise, grid=grid, fisher=not args.no_fisher)
    out = _out(args)
    for name, mat in im.matrices().items():
        _write(out / f"{name}.csv", matrix_to_csv(mat))
    _write(out / "info.csv", _stat_csv([("grid", grid), ("cond_I_R", im.cond_I_R), ("cond_I", im.cond_I)]))


def cmd_intervals(args, scenario, run):
    if scenario.obs_noise is None:
        raise ConfigurationError("intervals need observation noise")
    data = _dataset(args, scenario, run)
    est, r = _estimate(args, scenario, run, data)
    model, path, f, g = scenario.model, scenario.path, scenario.traj_noise, scenario.obs_noise
    level = args.level if args.level is not None else run.level
    n = data.n
    amap, rnames = final_position_map(model)
    kw = dict(names=_names(scenario), report_map=amap, report_names=rnames)
    out = _out(args)
    reports = {}
    if est == "lse":
        i_r = info_IR(model, r.theta, path, n)
        cov = lse_asymptotic_cov(i_r, info_IPsi(model, r.theta, path, f, grid=n), g.sigma)
        reports["ic1"] = confidence_intervals(r.theta, cov, n, level, kind="IC1", **kw)
        a2 = conservative_A2(scenario.r_min, second_moment(f))
        reports["ic2"] = conservative_intervals(r.theta, i_r, a2, g.sigma, n, level, **kw)
    else:
        _, i_inv = parametric_fisher(model, r.theta, path, f, g, grid=run.fisher_grid, rule="midpoint")
        reports["ic3"] = confidence_intervals(r.theta, i_inv, n, level, kind="IC3", **kw)
    for name, rep in reports.items():
        _write(out / f"{name}.csv", rep.to_csv())
        _write(out / f"{name}_final.csv", rep.reported.to_csv())


def cmd_montecarlo(args, scenario, run):
    est = args.estimator or run.estimator
    reps = args.reps or run.reps
    ref = reference_matrices(scenario, est, run.grid) if scenario.obs_noise is not None else None
    s = run_montecarlo(scenario, est, reps, _seed(args, run), ref, workers=args.workers or run.workers,
                       level=args.level if args.level is not None else run.level, fisher_grid=run.fisher_grid)
    for p in s.write(_out(args)).values():
        print(p)
    if s.invalid:
        raise BotlabError("more than 5% of the replications did not converge")


def cmd_cltcheck(args, scenario, run):
    noise = scenario.traj_noise
    if not isinstance(noise, AR1):
        raise ConfigurationError("cltcheck needs AR(1) trajectory noise")
    F = first_coordinate()
    lrv = long_run_variance(F, noise)
    res = clt_experiment(F, noise, args.n, args.reps or 2000, _seed(args, run), lrv.gamma2)
    _write(_out(args) / "clt_summary.csv", res.to_csv())


def cmd_report(args, scenario, run):
    v = scenario.validate()
    f = scenario.traj_noise
    rows = [("fingerprint", scenario.fingerprint), ("min_range_km", v.min_range), ("bearing_span_rad", v.bearing_span),
            ("range_ok", int(v.range_ok)), ("span_ok", int(v.span_ok)), ("cond_I_R", v.information_condition),
            ("observability_risk", int(v.observability_risk)), ("second_moment_km2", second_moment(f)),
            ("A2", conservative_A2(scenario.r_min, second_moment(f))),
            ("mean_preservation_rad", check_mean_preservation(scenario.model, scenario.theta_star, scenario.path, f))]
    if isinstance(f, AR1):
        rows.append(("gamma2_first_coordinate", ar1_gamma2(f.phi, f.sigma_eta)))
    _write(_out(args) / "report.csv", _stat_csv(rows))


COMMANDS = {
    "simulate": (cmd_simulate, "draw one dataset"),
    "estimate": (cmd_estimate, "fit one dataset"),
    "fisher": (cmd_fisher, "information matrices at the true parameter"),
    "intervals": (cmd_intervals, "confidence intervals for one dataset"),
    "montecarlo": (cmd_montecarlo, "replicated simulate-estimate campaign"),
    "cltcheck": (cmd_cltcheck, "limit theorem check for AR(1) trajectory noise"),
    "report": (cmd_report, "scenario validity and bound summary"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="isotropic",
                        help="scenario TOML file or preset name (isotropic, anisotropic, ar1, noiseless, straight)")
    common.add_argument("--seed", type=int, default=None, help="base seed (unsigned 64-bit)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--reps", type=int, default=None)
    common.add_argument("--estimator", choices=("lse", "mle", "both"), default=None)
    common.add_argument("--level", type=float, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="botlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name in ("simulate", "estimate", "intervals"):
            p.add_argument("--replication", type=int, default=0)
        if name == "simulate":
            p.add_argument("--latent", action="store_true", help="also write the latent positions")
        if name in ("estimate", "intervals"):
            p.add_argument("--data", help="dataset CSV instead of a fresh simulation")
        if name == "fisher":
            p.add_argument("--grid", type=int, default=None)
            p.add_argument("--no-fisher", action="store_true", help="skip the likelihood information")
        if name == "montecarlo":
            p.add_argument("--workers", type=int, default=None)
        if name == "cltcheck":
            p.add_argument("--n", type=int, default=10_000)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if args.level is not None and not 0 < args.level < 1:
            raise ConfigurationError("level must lie in (0, 1)")
        if args.reps is not None and args.reps < 1:
            raise ConfigurationError("reps must be positive")
        scenario, run = load_scenario(args.scenario)
        if args.estimator == "both" and args.command != "montecarlo":
            raise ConfigurationError("--estimator both is only meaningful for montecarlo")
        COMMANDS[args.command][0](args, scenario, run)
    except (BotlabError, OSError, np.linalg.LinAlgError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        print("error " + json.dumps({"code": code, "message": str(exc)}), file=sys.stderr)
        return 2 if isinstance(exc, ConfigurationError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
