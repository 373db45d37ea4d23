"""Long-run variance and limit-theorem checks for dependent trajectory noise."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .exceptions import ConfigurationError
from .noise import AR1, NoTrajectoryNoise, TrajectoryNoiseSpec, stream


class LinearFunctional:
    """``F(eps, t) = c(t) . eps``; long-run variances have a closed form."""

    def __init__(self, coef):
        self.coef = coef

    def coefficients(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c = self.coef(t) if callable(self.coef) else np.broadcast_to(np.asarray(self.coef, float), (len(t), 2))
        return np.asarray(c, dtype=float).reshape(len(t), 2)

    def __call__(self, eps, t):
        eps = np.asarray(eps, dtype=float)
        c = self.coefficients(t)
        return np.einsum("...i,...i->...", eps, c if eps.ndim > 1 else c[0])

    def __reduce__(self):
        return (LinearFunctional, (self.coef,))


def first_coordinate() -> LinearFunctional:
    return LinearFunctional((1.0, 0.0))


@dataclass
class LongRunVariance:
    gamma2: float
    lags: int
    lag_terms: np.ndarray   # integral of Cov(F(eps_0, t), F(eps_k, t)) for k = 0..K
    converged: bool
    method: str


def _ar1_params(noise) -> tuple[float, float]:
    if isinstance(noise, AR1):
        return noise.phi, noise.stationary_var
    if noise is None or isinstance(noise, NoTrajectoryNoise):
        return 0.0, 0.0
    raise ConfigurationError("long-run variance is implemented for AR(1) trajectory noise")


def long_run_variance(F: Callable, noise: AR1, K: int = 200, t_grid: Optional[np.ndarray] = None,
                      mc_per_lag: int = 1_000_000, seed: int = 0, rel_tol: float = 1e-3) -> LongRunVariance:
    """``int Var F dt + 2 sum_{k<=K} int Cov(F(eps_0, t), F(eps_k, t)) dt``.

    Linear ``F`` uses the AR(1) autocovariance directly. Anything else is
    estimated by paired Monte Carlo: the same draws of ``eps_0`` and of the
    innovation are reused at every lag and time so lag terms are comparable.
    Converged means the last retained term is below ``rel_tol`` of the total.
    """
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    phi, s2 = _ar1_params(noise)
    t = np.linspace(0.0, 1.0, 101)[1:] if t_grid is None else np.atleast_1d(np.asarray(t_grid, dtype=float))
    k = np.arange(K + 1)
    if isinstance(F, LinearFunctional):
        c = F.coefficients(t)
        terms = phi**k * s2 * np.mean(np.sum(c * c, axis=1))
        method = "closed-form"
    else:
        rng = stream(seed, 0, "aux")
        sd = math.sqrt(s2)
        e0 = sd * rng.standard_normal((mc_per_lag, 2))
        xi = rng.standard_normal((mc_per_lag, 2))
        terms = np.zeros(K + 1)
        for j, tj in enumerate(t):
            f0 = F(e0, np.full(mc_per_lag, tj))
            f0c = f0 - f0.mean()
            for lag in k:
                rho = phi**lag
                ek = rho * e0 + math.sqrt(max(s2 * (1.0 - rho * rho), 0.0)) * xi
                fk = F(ek, np.full(mc_per_lag, tj))
                terms[lag] += np.mean(f0c * (fk - fk.mean()))
        terms /= len(t)
        method = "paired-mc"
    gamma2 = float(terms[0] + 2.0 * np.sum(terms[1:]))
    scale = abs(gamma2) if gamma2 else 1.0
    converged = bool(gamma2 == 0.0 or 2.0 * abs(terms[-1]) < rel_tol * scale)
    return LongRunVariance(gamma2, K, np.asarray(terms), converged, method)


def ar1_gamma2(phi: float, sigma_eta: float) -> float:
    """Closed form for ``F`` = one noise coordinate."""
    return sigma_eta**2 / (1 - phi**2) * (1 + phi) / (1 - phi)


@dataclass
class CLTResult:
    n: int
    reps: int
    gamma2: float
    emp_var: float
    ks: float
    lln_mean_abs: float
    sums: np.ndarray

    def summary_rows(self) -> list:
        return [("gamma2", self.gamma2), ("emp_var", self.emp_var), ("ks", self.ks),
                ("reps", self.reps), ("n", self.n), ("lln_mean_abs", self.lln_mean_abs)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stat", "value"])
        for k, v in self.summary_rows():
            w.writerow([k, v if isinstance(v, int) else f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def clt_experiment(F: Callable, noise: TrajectoryNoiseSpec, n: int, reps: int, seed: int,
                   gamma2: Optional[float] = None) -> CLTResult:
    """Replicate ``n^-1/2 sum_k F(eps_k, t_k)`` and compare it with ``N(0, gamma2)``.

    ``gamma2`` defaults to :func:`long_run_variance`. Also reports the mean
    of ``|n^-1 sum_k F|`` as the law-of-large-numbers check.
    """
    if n < 1 or reps < 1:
        raise ConfigurationError("n and reps must be positive")
    if gamma2 is None:
        gamma2 = 0.0 if noise is None or isinstance(noise, NoTrajectoryNoise) else long_run_variance(F, noise).gamma2
    t = np.arange(1, n + 1) / n
    sums = np.empty(reps)
    for r in range(reps):
        eps = np.zeros((n, 2)) if noise is None else noise.sample(n, stream(seed, r, "trajectory"))
        sums[r] = np.sum(F(eps, t)) / math.sqrt(n)
    if gamma2 > 0:
        ks = float(stats.kstest(sums, stats.norm(0.0, math.sqrt(gamma2)).cdf).statistic)
    else:
        ks = 0.0 if np.all(sums == 0) else 1.0
    return CLTResult(n, reps, float(gamma2), float(np.var(sums)), ks,
                     float(np.mean(np.abs(sums))) / math.sqrt(n), sums)
