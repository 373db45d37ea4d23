"""Seeded Monte Carlo campaigns, coverage studies and their summaries."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .estimate import BearingProblem, lse, mle
from .exceptions import ConfigurationError, ObservabilityError
from .inference import (
    InfoMatrices,
    conservative_A2,
    confidence_intervals,
    final_position_map,
    info_IPsi,
    info_IR,
    info_matrices,
    lse_asymptotic_cov,
    parametric_fisher,
)
from .noise import ObservationNoiseSpec, second_moment
from .optimize import OptimizerConfig
from .sim import Scenario, simulate

logger = logging.getLogger(__name__)

NONCONVERGENCE_LIMIT = 0.05
INTERVALS = {"lse": ("IC1", "IC2"), "mle": ("IC3",)}


@dataclass
class ReplicationRecord:
    replication: int
    theta: dict        # estimator -> theta hat
    converged: dict    # estimator -> bool
    nfev: dict
    covered: dict      # "IC1" etc. -> per-coordinate bools, raw parameters
    covered_report: dict  # same, final-time reporting parameters
    ellipsoid: dict    # "IC1" etc. -> bool
    widths: dict
    seconds: float = 0.0


def _coverage(rep, kind, center, cov, scenario, level, amap, names, rnames, record):
    ci = confidence_intervals(center, cov, scenario.n, level, names, kind, amap, rnames)
    record.covered[kind] = ci.covers(scenario.theta_star)
    record.covered_report[kind] = ci.reported.covers(amap @ scenario.theta_star)
    record.ellipsoid[kind] = ci.ellipsoid_contains(scenario.theta_star)
    record.widths[kind] = ci.widths


def replicate(scenario: Scenario, base_seed: int, replication: int, estimator: str = "lse",
              level: Optional[float] = 0.95, lse_cfg: OptimizerConfig = OptimizerConfig(),
              mle_cfg: OptimizerConfig = OptimizerConfig(), fisher_grid: int = 100) -> ReplicationRecord:
    """One simulate-estimate run with optional interval coverage.

    Everything depends only on ``(scenario, base_seed, replication)``.
    """
    start = time.perf_counter()
    model, path = scenario.model, scenario.path
    data = simulate(scenario, base_seed, replication)
    problem = BearingProblem.from_dataset(data, model, path)
    rec = ReplicationRecord(replication, {}, {}, {}, {}, {}, {}, {})
    amap, rnames = final_position_map(model)
    names = model.names or tuple(f"theta{i + 1}" for i in range(model.m))
    g = scenario.obs_noise
    f = scenario.traj_noise

    r_lse = lse(problem, model, path, lse_cfg)
    rec.theta["lse"], rec.converged["lse"], rec.nfev["lse"] = r_lse.theta, r_lse.converged, r_lse.nfev
    if estimator in ("mle", "both"):
        if g is None:
            raise ConfigurationError("the likelihood needs observation noise")
        r_mle = mle(problem, model, path, f, g, mle_cfg, theta_init=r_lse.theta)
        rec.theta["mle"], rec.converged["mle"], rec.nfev["mle"] = r_mle.theta, r_mle.converged, r_mle.nfev
    if estimator == "mle":
        for d in (rec.theta, rec.converged, rec.nfev):
            d.pop("lse")

    if level is not None and g is not None:
        sigma = g.sigma
        try:
            if "lse" in rec.theta:
                th = rec.theta["lse"]
                i_r = info_IR(model, th, path, scenario.n)
                i_psi = info_IPsi(model, th, path, f, grid=scenario.n)
                _coverage(rec, "IC1", th, lse_asymptotic_cov(i_r, i_psi, sigma), scenario, level,
                          amap, names, rnames, rec)
                a2 = conservative_A2(scenario.r_min, second_moment(f))
                cov2 = (a2 + sigma**2) * np.linalg.inv(i_r)
                _coverage(rec, "IC2", th, 0.5 * (cov2 + cov2.T), scenario, level, amap, names, rnames, rec)
            if "mle" in rec.theta:
                th = rec.theta["mle"]
                _, i_inv = parametric_fisher(model, th, path, f, g, grid=fisher_grid, rule="midpoint")
                _coverage(rec, "IC3", th, i_inv, scenario, level, amap, names, rnames, rec)
        except ObservabilityError as exc:
            logger.warning("replication %d: no intervals (%s)", replication, exc)
    rec.seconds = time.perf_counter() - start
    return rec


def summarize(samples, reference_cov=None, names: Optional[Sequence[str]] = None, bins: int = 30) -> dict:
    """Histograms, ECDFs and KS distances of each column against ``N(0, reference_cov_ii)``.

    Without a reference the Gaussian uses the empirical variance and zero mean.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ConfigurationError("no samples to summarise")
    m = x.shape[1]
    names = tuple(names) if names is not None else tuple(f"theta{i + 1}" for i in range(m))
    emp_cov = np.atleast_2d(np.cov(x, rowvar=False, bias=False)) if x.shape[0] > 1 else np.zeros((m, m))
    ref = emp_cov if reference_cov is None else np.atleast_2d(np.asarray(reference_cov, dtype=float))
    out = {"names": names, "count": x.shape[0], "mean": x.mean(axis=0), "cov": emp_cov,
           "hist": [], "ecdf": [], "ks": np.empty(m), "ks_empirical": np.empty(m)}
    for i in range(m):
        col = x[:, i]
        counts, edges = np.histogram(col, bins=bins)
        out["hist"].append((edges, counts))
        srt = np.sort(col)
        out["ecdf"].append((srt, np.arange(1, len(srt) + 1) / len(srt)))
        out["ks"][i] = _ks(col, ref[i, i])
        out["ks_empirical"][i] = _ks(col, emp_cov[i, i])
    return out


def _ks(col, var) -> float:
    if var > 0:
        return float(stats.kstest(col, stats.norm(0.0, math.sqrt(var)).cdf).statistic)
    # point mass at zero as the reference
    return float(max(np.mean(col < 0), np.mean(col > 0)))


@dataclass
class EstimatorSummary:
    estimator: str
    reps: int
    converged: int
    samples: np.ndarray          # sqrt(n) (theta hat - theta*), converged reps only
    mean: np.ndarray
    cov: np.ndarray
    reference: Optional[np.ndarray]
    frobenius_rel_error: float
    ks: np.ndarray
    ks_empirical: np.ndarray
    hist: list
    ecdf: list

    @property
    def nonconverged(self) -> int:
        return self.reps - self.converged

    @property
    def invalid(self) -> bool:
        return self.nonconverged > NONCONVERGENCE_LIMIT * self.reps


@dataclass
class MonteCarloSummary:
    scenario_name: str
    fingerprint: str
    base_seed: int
    reps: int
    n: int
    level: Optional[float]
    names: tuple
    report_names: tuple
    estimators: dict                  # name -> EstimatorSummary
    coverage: dict                    # kind -> per-coordinate rates (raw parameters)
    coverage_report: dict             # kind -> per-coordinate rates (reporting parameters)
    coverage_ellipsoid: dict
    mean_width: dict
    records: list = field(repr=False, default_factory=list)
    seconds: np.ndarray = field(repr=False, default=None)

    @property
    def invalid(self) -> bool:
        return any(s.invalid for s in self.estimators.values())

    def summary_rows(self) -> list:
        rows = [("campaign", "scenario", "", self.scenario_name),
                ("campaign", "fingerprint", "", self.fingerprint),
                ("campaign", "base_seed", "", self.base_seed),
                ("campaign", "reps", "", self.reps),
                ("campaign", "n", "", self.n),
                ("campaign", "invalid", "", int(self.invalid))]
        for name, s in self.estimators.items():
            rows += [(name, "converged", "", s.converged), (name, "nonconverged", "", s.nonconverged),
                     (name, "frobenius_rel_error", "", s.frobenius_rel_error)]
            for i, c in enumerate(self.names):
                rows += [(name, "mean", c, s.mean[i]), (name, "var", c, s.cov[i, i]),
                         (name, "ks", c, s.ks[i]), (name, "ks_empirical", c, s.ks_empirical[i])]
                if s.reference is not None:
                    rows.append((name, "reference_var", c, s.reference[i, i]))
            for i, a in enumerate(self.names):
                for j, b in enumerate(self.names):
                    if j > i:
                        rows.append((name, "cov", f"{a}:{b}", s.cov[i, j]))
        for kind in sorted(self.coverage):
            for i, c in enumerate(self.names):
                rows.append((kind, "coverage", c, self.coverage[kind][i]))
                rows.append((kind, "mean_width", c, self.mean_width[kind][i]))
            for i, c in enumerate(self.report_names):
                rows.append((kind, "coverage", c, self.coverage_report[kind][i]))
            rows.append((kind, "coverage_ellipsoid", "", self.coverage_ellipsoid[kind]))
        return rows

    def write(self, out_dir) -> dict:
        """Write ``summary.csv``, ``samples.csv``, ``hist.csv`` and ``ecdf.csv``.

        Their bytes depend only on the campaign inputs. Wall-clock times go
        to ``timing.csv``, which is the one file that is not reproducible.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "summary.csv": _csv(["estimator", "statistic", "coord", "value"], self.summary_rows()),
            "samples.csv": self._samples_csv(),
            "hist.csv": self._hist_csv(),
            "ecdf.csv": self._ecdf_csv(),
        }
        for name, text in files.items():
            (out / name).write_text(text)
        if self.seconds is not None:
            (out / "timing.csv").write_text(
                _csv(["replication", "seconds"], [(r.replication, r.seconds) for r in self.records]))
        return {k: out / k for k in files}

    def _samples_csv(self) -> str:
        rows = []
        for r in self.records:
            for est in self.estimators:
                th = r.theta[est]
                rows.append((self.base_seed, r.replication, est, int(r.converged[est]), r.nfev[est], *th))
        return _csv(["seed", "replication", "estimator", "converged", "evals", *self.names], rows)

    def _hist_csv(self) -> str:
        rows = []
        for est, s in self.estimators.items():
            for c, (edges, counts) in zip(self.names, s.hist):
                for k in range(len(counts)):
                    rows.append((est, c, edges[k], edges[k + 1], int(counts[k])))
        return _csv(["estimator", "coord", "lo", "hi", "count"], rows)

    def _ecdf_csv(self) -> str:
        rows = []
        for est, s in self.estimators.items():
            for c, (xs, fs) in zip(self.names, s.ecdf):
                rows += [(est, c, a, b) for a, b in zip(xs, fs)]
        return _csv(["estimator", "coord", "x", "F"], rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def reference_matrices(scenario: Scenario, estimator: str = "lse", grid: int = 2000) -> InfoMatrices:
    """Theory matrices at the true parameter."""
    if scenario.obs_noise is None:
        raise ConfigurationError("reference matrices need observation noise")
    return info_matrices(scenario.model, scenario.theta_star, scenario.path, scenario.traj_noise,
                         scenario.obs_noise, grid=grid, fisher=estimator in ("mle", "both"))


def _run_records(scenario, base_seed, reps, workers, **kw) -> list:
    task = partial(_replicate_one, scenario, base_seed, kw)
    if workers <= 1:
        return [task(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves replication order whatever the completion order
        return list(pool.map(task, range(reps), chunksize=max(1, reps // (8 * workers))))


def _replicate_one(scenario, base_seed, kw, replication):
    return replicate(scenario, base_seed, replication, **kw)


def run_montecarlo(scenario: Scenario, estimator: str = "lse", reps: int = 1000, base_seed: int = 0,
                   reference: Optional[InfoMatrices] = None, workers: int = 1, level: Optional[float] = 0.95,
                   lse_cfg: OptimizerConfig = OptimizerConfig(), mle_cfg: OptimizerConfig = OptimizerConfig(),
                   fisher_grid: int = 100, bins: int = 30) -> MonteCarloSummary:
    """Independent simulate-estimate replications and their summary.

    ``estimator`` is ``lse``, ``mle`` or ``both`` (the MLE then starts from
    the same replication's LSE). Non-converged replications are counted and
    left out of the samples; more than 5% marks the campaign invalid.
    """
    if estimator not in ("lse", "mle", "both"):
        raise ConfigurationError(f"unknown estimator {estimator!r}")
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    val = scenario.validate()
    if not val.passed:
        raise ConfigurationError(f"scenario fails validity checks: min range {val.min_range:.3g} km, "
                                 f"bearing span {val.bearing_span:.3g} rad")
    records = _run_records(scenario, base_seed, reps, workers, estimator=estimator, level=level,
                           lse_cfg=lse_cfg, mle_cfg=mle_cfg, fisher_grid=fisher_grid)
    model = scenario.model
    names = model.names or tuple(f"theta{i + 1}" for i in range(model.m))
    _, rnames = final_position_map(model)
    root_n = math.sqrt(scenario.n)
    ests = ("lse", "mle") if estimator == "both" else (estimator,)
    summaries = {}
    for est in ests:
        ok = [r for r in records if r.converged[est]]
        if ok:
            x = root_n * (np.array([r.theta[est] for r in ok]) - scenario.theta_star)
        else:
            x = np.zeros((0, model.m))
        ref = None
        if reference is not None and scenario.obs_noise is not None:
            ref = reference.I_M_inv if est == "lse" else reference.I_inv
        if len(x):
            s = summarize(x, ref, names, bins)
            frob = (float(np.linalg.norm(s["cov"] - ref) / np.linalg.norm(ref))
                    if ref is not None and np.any(ref) else float("nan"))
            summaries[est] = EstimatorSummary(est, reps, len(ok), x, s["mean"], s["cov"], ref, frob, s["ks"],
                                              s["ks_empirical"], s["hist"], s["ecdf"])
        else:
            nan = np.full(model.m, np.nan)
            summaries[est] = EstimatorSummary(est, reps, 0, x, nan, np.full((model.m, model.m), np.nan), ref,
                                              float("nan"), nan, nan, [], [])
        if summaries[est].invalid:
            logger.warning("%s campaign invalid: %d of %d replications did not converge",
                           est, summaries[est].nonconverged, reps)
    kinds = sorted({k for r in records for k in r.covered})
    coverage, coverage_report, ellipsoid, widths = {}, {}, {}, {}
    for kind in kinds:
        est = "mle" if kind == "IC3" else "lse"
        rs = [r for r in records if kind in r.covered and r.converged[est]]
        coverage[kind] = np.mean([r.covered[kind] for r in rs], axis=0)
        coverage_report[kind] = np.mean([r.covered_report[kind] for r in rs], axis=0)
        ellipsoid[kind] = float(np.mean([r.ellipsoid[kind] for r in rs]))
        widths[kind] = np.mean([r.widths[kind] for r in rs], axis=0)
    return MonteCarloSummary(scenario.name, scenario.fingerprint, base_seed, reps, scenario.n, level, names,
                             rnames, summaries, coverage, coverage_report, ellipsoid, widths, records,
                             np.array([r.seconds for r in records]))


def coverage_study(scenario: Scenario, reps: int, level: float = 0.95, interval_kind: str = "IC1",
                   base_seed: int = 0, workers: int = 1, reporting: bool = False, **kw) -> np.ndarray:
    """Per-coordinate rate at which ``interval_kind`` covers the truth.

    ``reporting=True`` scores the final-time reporting parameters instead.
    """
    if interval_kind not in ("IC1", "IC2", "IC3"):
        raise ConfigurationError(f"unknown interval kind {interval_kind!r}")
    est = "mle" if interval_kind == "IC3" else "lse"
    s = run_montecarlo(scenario, est, reps, base_seed, workers=workers, level=level, **kw)
    return (s.coverage_report if reporting else s.coverage)[interval_kind]
