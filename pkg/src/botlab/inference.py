"""Information matrices, asymptotic covariances and confidence regions."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .exceptions import ConfigurationError, ObservabilityError
from .geometry import ObserverPath, TrajectoryModel, _relative, eval_trajectory, grad_theta_bearing
from .noise import AR1, NoTrajectoryNoise, TrajectoryNoiseSpec
from .quadrature import QuadratureRule, gauss_hermite

SINGULAR_CONDITION = 1e12
PI_CONSTANT = math.pi**2 * (1.0 + math.pi ** (-2.0 / 3.0)) ** 3


def _grid(n_g: int, rule: str = "right") -> np.ndarray:
    """``k / n_g`` (the observation grid) or the midpoints ``(k - 1/2) / n_g``."""
    if n_g < 1:
        raise ConfigurationError("grid size must be >= 1")
    if rule not in ("right", "midpoint"):
        raise ConfigurationError(f"unknown grid rule {rule!r}")
    return (np.arange(1, n_g + 1) - (0.5 if rule == "midpoint" else 0.0)) / n_g


def _gaussian_nodes(noise: Optional[TrajectoryNoiseSpec], quad: QuadratureRule):
    # AR(1) noise enters the integrals through its stationary marginal
    if noise is None or isinstance(noise, NoTrajectoryNoise):
        return np.zeros((1, 2)), np.ones(1)
    if not (noise.is_gaussian or isinstance(noise, AR1)):
        raise ConfigurationError(f"no quadrature form for trajectory noise {noise.kind!r}")
    return quad.gaussian_nodes(noise.marginal_cov())


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def info_IR(model: TrajectoryModel, theta, path: ObserverPath, grid: int = 2000) -> np.ndarray:
    """Riemann average of the outer product of the bearing's theta-gradient."""
    g = grad_theta_bearing(model, theta, _grid(grid), path)
    return _sym(g.T @ g / grid)


def delta_psi_moments(model: TrajectoryModel, theta, path: ObserverPath, noise, quad=None,
                      t=None, theta_star=None):
    """First and second moments of ``Psi(S_theta*(t) + eps) - Psi(S_theta(t))`` per time."""
    quad = quad or gauss_hermite(12)
    t = _grid(2000) if t is None else np.atleast_1d(np.asarray(t, dtype=float))
    theta_star = theta if theta_star is None else theta_star
    nodes, w = _gaussian_nodes(noise, quad)
    obs = path.position(t)
    base = np.arctan2(*(eval_trajectory(model, theta, t) - obs)[:, ::-1].T)
    d = eval_trajectory(model, theta_star, t) - obs
    psi = np.arctan2(d[:, None, 1] + nodes[None, :, 1], d[:, None, 0] + nodes[None, :, 0])
    delta = psi - base[:, None]
    delta -= 2 * math.pi * np.rint(delta / (2 * math.pi))
    return delta @ w, (delta * delta) @ w


def info_IPsi(model: TrajectoryModel, theta, path: ObserverPath, noise: TrajectoryNoiseSpec,
              quad: Optional[QuadratureRule] = None, grid: int = 2000, theta_star=None) -> np.ndarray:
    """Trajectory-noise information weighting the gradient outer product by E{dPsi}^2.

    The noise is centred at ``theta_star`` (default ``theta``) while the gradient and
    the reference bearing are taken at ``theta``.
    """
    t = _grid(grid)
    _, m2 = delta_psi_moments(model, theta, path, noise, quad, t, theta_star)
    g = grad_theta_bearing(model, theta, t, path)
    return _sym((g * m2[:, None]).T @ g / grid)


def _inverse(a: np.ndarray, what: str) -> np.ndarray:
    cond = float(np.linalg.cond(a))
    if not cond < SINGULAR_CONDITION:
        raise ObservabilityError(f"{what} is numerically singular (cond={cond:.3g})", cond)
    return _sym(np.linalg.inv(a))


def lse_asymptotic_cov(I_R: np.ndarray, I_Psi: np.ndarray, sigma: float) -> np.ndarray:
    """Sandwich ``I_R^-1 (I_Psi + sigma^2 I_R) I_R^-1``."""
    inv = _inverse(np.asarray(I_R, dtype=float), "I_R")
    return _sym(inv @ (np.asarray(I_Psi, dtype=float) + sigma**2 * I_R) @ inv)


def parametric_fisher(model: TrajectoryModel, theta, path: ObserverPath, f: TrajectoryNoiseSpec, g,
                      quad: Optional[QuadratureRule] = None, grid: int = 2000, theta_star=None,
                      return_inverse: bool = True, rule: str = "right"):
    """Fisher information of the marginal bearing density.

    The score is differentiated under the integral and its outer product
    averaged over ``Y = Psi(S_theta*(t) + eps) + V`` with nested quadrature
    (2-D over eps, 1-D over V). ``theta_star`` defaults to ``theta``.
    ``rule="midpoint"`` keeps coarse grids accurate to second order.
    """
    quad = quad or gauss_hermite(12)
    theta = model.check_theta(theta)
    theta_star = theta if theta_star is None else model.check_theta(theta_star)
    sigma = float(g.sigma)
    t = _grid(grid, rule)
    nodes, w = _gaussian_nodes(f, quad)
    nodes = np.ascontiguousarray(nodes)
    obs = path.position(t)
    d, _ = _relative(eval_trajectory(model, theta, t), t, path)
    ds, _ = _relative(eval_trajectory(model, theta_star, t), t, path)
    e = model.basis_matrix(t)
    vn = np.ascontiguousarray(quad.nodes, dtype=float)
    vw = np.ascontiguousarray(quad.weights, dtype=float)
    info = _kernels.fisher_grid(d[:, 0].copy(), d[:, 1].copy(), np.ascontiguousarray(e), nodes, w,
                                ds[:, 0].copy(), ds[:, 1].copy(), vn, vw, sigma)
    info = _sym(info / grid)
    if not return_inverse:
        return info
    return info, _inverse(info, "Fisher information")


def conservative_A2(r_min: float, second_moment: float) -> float:
    """Worst-case bound on E{dPsi}^2 for isotropic noise at range at least ``r_min``."""
    if not r_min > 0:
        raise ConfigurationError("R_min must be positive")
    if second_moment < 0:
        raise ConfigurationError("second moment must be non-negative")
    return PI_CONSTANT * second_moment / r_min**2


def check_mean_preservation(model: TrajectoryModel, theta, path: ObserverPath, noise, quad=None,
                            t_grid=None) -> float:
    """Largest ``|E Psi(S_theta + eps) - Psi(S_theta)|`` over the time grid (rad)."""
    if noise is None or isinstance(noise, NoTrajectoryNoise):
        return 0.0
    m1, _ = delta_psi_moments(model, theta, path, noise, quad, t_grid)
    return float(np.max(np.abs(m1)))


def final_position_map(model: TrajectoryModel) -> tuple[np.ndarray, tuple[str, ...]]:
    """Linear map replacing the leading coefficients by the position at ``t = 1``.

    For uniform linear motion this turns ``(x0, vx, y0, vy)`` into
    ``(x(T), y(T), vx, vy)``.
    """
    p = model.p
    e1 = model.basis_matrix(np.array([1.0]))[0]
    if e1[0] == 0:
        raise ConfigurationError("first basis function vanishes at t = 1")
    a = np.zeros((2 * p, 2 * p))
    a[0, :p] = e1
    a[1, p:] = e1
    # remaining rows keep the higher-order coefficients untouched
    k = 2
    for i in range(1, p):
        a[k, i] = 1.0
        k += 1
    for i in range(1, p):
        a[k, p + i] = 1.0
        k += 1
    names = ["xT", "yT"] + [f"a{i + 1}" for i in range(1, p)] + [f"b{i + 1}" for i in range(1, p)]
    if p == 2 and model.names == ("x0", "vx", "y0", "vy"):
        names = ["xT", "yT", "vx", "vy"]
    return a, tuple(names)


@dataclass
class Interval:
    coord: str
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi


@dataclass
class ConfidenceReport:
    level: float
    center: np.ndarray
    cov: np.ndarray
    n: int
    names: tuple
    intervals: list
    radius2: float
    kind: str = "IC1"
    reported: Optional["ConfidenceReport"] = field(default=None, repr=False)

    @property
    def widths(self) -> np.ndarray:
        return np.array([iv.width for iv in self.intervals])

    def covers(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.array([iv.contains(v) for iv, v in zip(self.intervals, theta)])

    def ellipsoid_contains(self, theta) -> bool:
        d = np.asarray(theta, dtype=float) - self.center
        if not np.any(self.cov):
            return bool(np.all(d == 0))
        q = self.n * d @ np.linalg.pinv(self.cov) @ d
        return bool(q <= self.radius2)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["coord", "lo", "hi", "width"])
        for iv in self.intervals:
            w.writerow([iv.coord, f"{iv.lo:.17g}", f"{iv.hi:.17g}", f"{iv.width:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _z(level: float) -> float:
    if not 0 < level < 1:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    return float(stats.norm.ppf(0.5 + level / 2))


def confidence_intervals(theta_hat, cov, n: int, level: float = 0.95, names: Optional[Sequence[str]] = None,
                         kind: str = "IC1", report_map: Optional[np.ndarray] = None,
                         report_names: Optional[Sequence[str]] = None) -> ConfidenceReport:
    """Coordinatewise ``theta_i +- z sqrt(cov_ii / n)`` plus the chi-square ellipsoid.

    ``report_map`` (a square matrix) adds the same construction for the
    linearly transformed parameter, e.g. the final-time position.
    """
    z = _z(level)
    theta_hat = np.asarray(theta_hat, dtype=float)
    cov = np.asarray(cov, dtype=float)
    m = theta_hat.size
    if cov.shape != (m, m):
        raise ConfigurationError("covariance shape does not match theta")
    if np.min(np.linalg.eigvalsh(_sym(cov))) < -1e-10 * max(np.trace(cov), 1e-300):
        raise ConfigurationError("covariance is not positive semi-definite")
    names = tuple(names) if names is not None else tuple(f"theta{i + 1}" for i in range(m))
    half = z * np.sqrt(np.maximum(np.diag(cov), 0.0) / n)
    ivs = [Interval(nm, c - h, c + h) for nm, c, h in zip(names, theta_hat, half)]
    rep = ConfidenceReport(level, theta_hat, cov, n, names, ivs, float(stats.chi2.ppf(level, m)), kind)
    if report_map is not None:
        a = np.asarray(report_map, dtype=float)
        rep.reported = confidence_intervals(a @ theta_hat, a @ cov @ a.T, n, level,
                                            report_names, kind)
    return rep


def conservative_intervals(theta_hat, I_R: np.ndarray, A2: float, sigma: float, n: int, level: float = 0.95,
                           **kwargs) -> ConfidenceReport:
    """Intervals from the conservative variance ``(A^2 + sigma^2) I_R^-1``."""
    cov = (A2 + sigma**2) * _inverse(np.asarray(I_R, dtype=float), "I_R")
    return confidence_intervals(theta_hat, cov, n, level, kind="IC2", **kwargs)


@dataclass
class InfoMatrices:
    I_R: np.ndarray
    I_Psi: np.ndarray
    I_M_inv: np.ndarray
    I: Optional[np.ndarray]
    I_inv: Optional[np.ndarray]
    grid: int
    cond_I_R: float = field(init=False)
    cond_I: float = field(init=False)

    def __post_init__(self):
        self.cond_I_R = float(np.linalg.cond(self.I_R))
        self.cond_I = float(np.linalg.cond(self.I)) if self.I is not None else float("nan")

    def matrices(self) -> dict:
        out = {"I_R": self.I_R, "I_Psi": self.I_Psi, "I_M_inv": self.I_M_inv}
        if self.I is not None:
            out.update(I=self.I, I_inv=self.I_inv)
        return out


def info_matrices(model: TrajectoryModel, theta, path: ObserverPath, f, g, quad=None, grid: int = 2000,
                  fisher: bool = True, theta_star=None) -> InfoMatrices:
    """All reference matrices at one parameter point."""
    quad = quad or gauss_hermite(12)
    i_r = info_IR(model, theta, path, grid)
    i_psi = info_IPsi(model, theta, path, f, quad, grid, theta_star)
    i_m = lse_asymptotic_cov(i_r, i_psi, g.sigma)
    i = i_inv = None
    if fisher:
        i, i_inv = parametric_fisher(model, theta, path, f, g, quad, grid, theta_star)
    return InfoMatrices(i_r, i_psi, i_m, i, i_inv, grid)


def matrix_to_csv(a: np.ndarray, path=None) -> str:
    """Row-major ``i,j,value`` listing with 1-based indices."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "value"])
    a = np.atleast_2d(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            w.writerow([i + 1, j + 1, f"{a[i, j]:.17g}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def matrix_from_csv(source) -> np.ndarray:
    text = Path(source).read_text() if "\n" not in str(source) else source
    rows = list(csv.reader(text.splitlines()))[1:]
    m = max(int(r[0]) for r in rows)
    k = max(int(r[1]) for r in rows)
    out = np.zeros((m, k))
    for i, j, v in rows:
        out[int(i) - 1, int(j) - 1] = float(v)
    return out
