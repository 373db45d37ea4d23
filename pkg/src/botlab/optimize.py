"""Derivative-free simplex minimisation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class OptimizerConfig:
    max_fun_evals: int = 2000
    max_iter: int = 2000
    xatol: float = 1e-10
    fatol: float = 1e-12
    initial_step: Optional[tuple[float, ...]] = None
    multistart: int = 1

    def __post_init__(self):
        if self.max_fun_evals < 1 or self.max_iter < 1 or self.multistart < 1:
            raise ConfigurationError("optimizer counts must be positive")
        if not (self.xatol > 0 and self.fatol > 0):
            raise ConfigurationError("optimizer tolerances must be positive")


@dataclass
class EstimateResult:
    theta: np.ndarray
    value: float
    nfev: int
    nit: int
    converged: bool
    message: str = ""
    starts: list = field(default_factory=list)
    history: list = field(default_factory=list)


def _clean(v) -> float:
    v = float(v)
    return v if v == v else np.inf


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    cfg: OptimizerConfig = OptimizerConfig(),
    step=None,
) -> EstimateResult:
    """Minimise ``objective`` from ``x0``.

    Reflection, expansion, contraction and shrink coefficients are
    1, 2, 1/2 and 1/2. Converged means the simplex lies within ``xatol`` of
    its best vertex in every coordinate and its values within ``fatol``.
    ``history`` records the best value after every iteration.
    """
    x0 = np.asarray(x0, dtype=float)
    m = x0.size
    if step is None:
        step = cfg.initial_step
    if step is None:
        step = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    step = np.broadcast_to(np.asarray(step, dtype=float), (m,))
    if np.any(step == 0):
        raise ConfigurationError("initial simplex step must be non-zero")

    f0 = _clean(objective(x0))
    if not np.isfinite(f0):
        raise ConfigurationError("objective is not finite at the starting point")

    sim = np.vstack([x0, x0 + np.diag(step)])
    fs = np.empty(m + 1)
    fs[0] = f0
    for i in range(1, m + 1):
        fs[i] = _clean(objective(sim[i]))
    nfev = m + 1
    nit = 0
    history = []
    converged = False
    message = "budget exhausted"

    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        history.append(fs[0])
        if np.max(np.abs(sim[1:] - sim[0])) <= cfg.xatol and np.max(np.abs(fs[1:] - fs[0])) <= cfg.fatol:
            converged = True
            message = "converged"
            break
        if nfev >= cfg.max_fun_evals or nit >= cfg.max_iter:
            break
        nit += 1

        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = _clean(objective(xr))
        nfev += 1
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = _clean(objective(xe))
            nfev += 1
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = _clean(objective(xc))
            nfev += 1
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = _clean(objective(xc))
            nfev += 1
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        for i in range(1, m + 1):
            fs[i] = _clean(objective(sim[i]))
        nfev += m

    return EstimateResult(
        theta=sim[0].copy(),
        value=float(fs[0]),
        nfev=nfev,
        nit=nit,
        converged=converged,
        message=message,
        history=history,
    )
