"""Least-squares and marginal maximum-likelihood estimation of theta."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .exceptions import ConfigurationError, SingularGeometryError
from .geometry import ObserverPath, TrajectoryModel, bearing_residual, eval_trajectory
from .noise import ObservationNoiseSpec, TrajectoryNoiseSpec
from .optimize import EstimateResult, OptimizerConfig, nelder_mead
from .quadrature import QuadratureRule, gauss_hermite

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
LOG_FLOOR = -700.0


def _wrap_fast(r):
    return r - TWO_PI * np.rint(r / TWO_PI)


def default_step(model: TrajectoryModel, length: float = 0.05) -> np.ndarray:
    """Initial simplex step moving the position by about ``length`` km per coordinate."""
    scale = np.max(np.abs(model.basis_matrix(np.linspace(0, 1, 201))), axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return np.concatenate([length / scale, length / scale])


class BearingProblem:
    """Observation times, bearings and the geometry they refer to.

    Observer positions and basis values are cached so criterion
    evaluations cost a few vector operations.
    """

    def __init__(self, t, y, model: TrajectoryModel, path: ObserverPath):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.t.shape != self.y.shape or self.t.ndim != 1:
            raise ConfigurationError("t and y must be 1-D arrays of equal length")
        self.model = model
        self.path = path
        self.e = model.basis_matrix(self.t)
        self.obs = np.atleast_2d(path.position(self.t))

    @classmethod
    def from_dataset(cls, dataset, model, path):
        return cls(dataset.t, dataset.y, model, path)

    @property
    def n(self) -> int:
        return len(self.t)

    def relative(self, theta):
        theta = self.model.check_theta(theta)
        p = self.model.p
        dx = self.e @ theta[:p] - self.obs[:, 0]
        dy = self.e @ theta[p:] - self.obs[:, 1]
        return dx, dy

    def predict(self, theta) -> np.ndarray:
        dx, dy = self.relative(theta)
        if np.any((dx == 0) & (dy == 0)):
            raise SingularGeometryError("trajectory passes through the observer")
        return np.arctan2(dy, dx)

    def residuals(self, theta) -> np.ndarray:
        return _wrap_fast(self.y - self.predict(theta))


def criterion_Mn(theta, dataset, model: TrajectoryModel, path: ObserverPath) -> float:
    """Mean squared wrapped bearing residual (rad^2)."""
    problem = dataset if isinstance(dataset, BearingProblem) else BearingProblem.from_dataset(dataset, model, path)
    return _mn(problem, theta)


def _mn(problem: BearingProblem, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        return math.inf
    try:
        r = problem.residuals(theta)
    except SingularGeometryError:
        logger.debug("singular geometry at theta=%s", theta)
        return math.inf
    return float(np.mean(r * r))


def pseudo_linear_init(problem: BearingProblem) -> np.ndarray:
    """Linear least-squares solution of ``sin(Y)(S1 - O1) = cos(Y)(S2 - O2)``.

    Exact on noise-free data from an observable geometry; biased but close
    otherwise, which is all a starting point needs.
    """
    s, c = np.sin(problem.y), np.cos(problem.y)
    a = np.hstack([s[:, None] * problem.e, -c[:, None] * problem.e])
    b = s * problem.obs[:, 0] - c * problem.obs[:, 1]
    theta, *_ = np.linalg.lstsq(a, b, rcond=None)
    # the linear equation cannot tell the target from its mirror behind the observer
    if np.mean(np.cos(problem.residuals(theta))) < 0:
        theta = _mirror(problem, theta)
    return theta


def _mirror(problem, theta):
    p = problem.model.p
    obs_fit, *_ = np.linalg.lstsq(problem.e, problem.obs, rcond=None)
    return np.concatenate([2 * obs_fit[:, 0] - theta[:p], 2 * obs_fit[:, 1] - theta[p:]])


def _starts(theta0, step, count):
    starts = [np.asarray(theta0, dtype=float)]
    m = len(theta0)
    k = 1
    while len(starts) < count:
        # deterministic sign patterns at growing radius
        signs = np.array([1.0 if (k >> i) & 1 else -1.0 for i in range(m)])
        radius = 4.0 * (1 + (k - 1) // (2**m))
        starts.append(theta0 + radius * step * signs)
        k += 1
    return starts


def _best_of(objective, starts, cfg, step, sign=1.0):
    runs = []
    for x0 in starts:
        try:
            res = nelder_mead(objective, x0, cfg, step=step)
        except ConfigurationError as exc:
            logger.debug("start %s rejected: %s", x0, exc)
            continue
        runs.append((x0, res))
    if not runs:
        raise ConfigurationError("objective is not finite at any starting point")
    best = min(runs, key=lambda r: r[1].value)[1]
    total = sum(r[1].nfev for r in runs)
    return EstimateResult(
        theta=best.theta,
        value=sign * best.value,
        nfev=total,
        nit=best.nit,
        converged=best.converged,
        message=best.message,
        starts=[
            {"start": x0.tolist(), "theta": r.theta.tolist(), "value": sign * r.value,
             "nfev": r.nfev, "converged": r.converged}
            for x0, r in runs
        ],
        history=[sign * h for h in best.history],
    )


def lse(dataset, model: TrajectoryModel, path: ObserverPath, cfg: OptimizerConfig = OptimizerConfig(),
        theta_init=None) -> EstimateResult:
    """Least-squares estimate: Nelder-Mead minimiser of the mean squared residual."""
    problem = dataset if isinstance(dataset, BearingProblem) else BearingProblem.from_dataset(dataset, model, path)
    if model.m > problem.n:
        raise ConfigurationError(f"{model.m} parameters cannot be fitted from {problem.n} bearings")
    if theta_init is None:
        theta_init = pseudo_linear_init(problem)
    theta_init = model.check_theta(theta_init)
    step = np.asarray(cfg.initial_step) if cfg.initial_step is not None else default_step(model)
    return _best_of(lambda th: _mn(problem, th), _starts(theta_init, step, cfg.multistart), cfg, step)


def _noise_nodes(f: TrajectoryNoiseSpec, quad: QuadratureRule):
    if f is None:
        return np.zeros((1, 2)), np.ones(1)
    if not f.is_gaussian:
        raise ConfigurationError(f"no quadrature form for trajectory noise {f.kind!r}")
    return quad.gaussian_nodes(f.marginal_cov())


def _log_marginal(problem: BearingProblem, theta, nodes, weights, sigma, z=None):
    """``log p_theta(z_k, t_k)`` for every observation."""
    dx, dy = problem.relative(theta)
    ax = dx[:, None] + nodes[None, :, 0]
    ay = dy[:, None] + nodes[None, :, 1]
    psi = np.arctan2(ay, ax)
    z = problem.y if z is None else z
    r = _wrap_fast(z[:, None] - psi) / sigma
    lw = np.log(weights)[None, :]
    return logsumexp(lw - 0.5 * r * r, axis=1) - math.log(sigma * math.sqrt(2 * math.pi))


def _log_marginal_compiled(problem: BearingProblem, theta, nodes, log_w, sigma, z=None):
    dx, dy = problem.relative(theta)
    if np.any((dx == 0) & (dy == 0)):
        raise SingularGeometryError("trajectory passes through the observer")
    z = problem.y if z is None else np.asarray(z, dtype=float)
    lp = _kernels.log_marginal(dx, dy, z, np.ascontiguousarray(nodes), log_w, sigma)
    return lp - math.log(sigma * math.sqrt(2 * math.pi))


def marginal_density(z, t, theta, model: TrajectoryModel, path: ObserverPath, f: TrajectoryNoiseSpec,
                     g: ObservationNoiseSpec, quad: Optional[QuadratureRule] = None):
    """Density of ``Psi(S_theta(t) + U, t) + V`` at bearing ``z`` (rad^-1)."""
    quad = quad or gauss_hermite(12)
    z = np.asarray(z, dtype=float)
    zb, tb = np.broadcast_arrays(np.atleast_1d(z), np.atleast_1d(np.asarray(t, dtype=float)))
    problem = BearingProblem(tb.ravel(), zb.ravel(), model, path)
    nodes, weights = _noise_nodes(f, quad)
    out = np.exp(_log_marginal(problem, theta, nodes, weights, g.sigma)).reshape(zb.shape)
    return out if z.ndim or np.ndim(t) else float(out[0])


@dataclass
class LogLikelihood:
    value: float
    floored: int


def loglik_Jn(theta, dataset, model: TrajectoryModel, path: ObserverPath, f: TrajectoryNoiseSpec,
              g: ObservationNoiseSpec, quad: Optional[QuadratureRule] = None,
              log_floor: float = LOG_FLOOR, details: bool = False):
    """Normalised marginal log-likelihood (nats per observation).

    Log-densities below ``log_floor`` are clamped; ``details=True`` also
    returns how many were.
    """
    quad = quad or gauss_hermite(12)
    problem = dataset if isinstance(dataset, BearingProblem) else BearingProblem.from_dataset(dataset, model, path)
    nodes, weights = _noise_nodes(f, quad)
    lp = _log_marginal_compiled(problem, theta, nodes, np.log(weights), g.sigma)
    floored = int(np.count_nonzero(lp < log_floor))
    if floored:
        logger.debug("%d log-densities clamped at %g", floored, log_floor)
    val = float(np.mean(np.maximum(lp, log_floor)))
    return LogLikelihood(val, floored) if details else val


def mle(dataset, model: TrajectoryModel, path: ObserverPath, f: TrajectoryNoiseSpec, g: ObservationNoiseSpec,
        cfg: OptimizerConfig = OptimizerConfig(), quad: Optional[QuadratureRule] = None,
        theta_init=None, lse_cfg: Optional[OptimizerConfig] = None) -> EstimateResult:
    """Parametric MLE with known trajectory-noise law ``f``, started at the LSE."""
    quad = quad or gauss_hermite(12)
    problem = dataset if isinstance(dataset, BearingProblem) else BearingProblem.from_dataset(dataset, model, path)
    if theta_init is None:
        theta_init = lse(problem, model, path, lse_cfg or cfg).theta
    theta_init = model.check_theta(theta_init)
    nodes, weights = _noise_nodes(f, quad)
    log_w = np.log(weights)

    def objective(theta):
        if not np.all(np.isfinite(theta)):
            return math.inf
        try:
            lp = _log_marginal_compiled(problem, theta, nodes, log_w, g.sigma)
        except SingularGeometryError:
            return math.inf
        return -float(np.mean(np.maximum(lp, LOG_FLOOR)))

    step = np.asarray(cfg.initial_step) if cfg.initial_step is not None else default_step(model)
    return _best_of(objective, _starts(theta_init, step, cfg.multistart), cfg, step, sign=-1.0)


def result_to_csv(result: EstimateResult, names=None, path=None) -> str:
    """``coord,estimate,converged,evals`` rows, one per parameter."""
    theta = np.asarray(result.theta, dtype=float)
    names = names or [f"theta{i + 1}" for i in range(theta.size)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["coord", "estimate", "converged", "evals"])
    for name, v in zip(names, theta):
        w.writerow([name, f"{v:.17g}", int(result.converged), result.nfev])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
