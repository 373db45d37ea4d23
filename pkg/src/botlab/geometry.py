"""Target trajectory models, observer kinematics and the bearing map.

Time is carried in unit time ``t`` in ``[0, 1]``; physical time is
``duration * t`` seconds. Lengths are km, angles rad, speeds km/s.

A trajectory model is linear in its parameters::

    S(t) = (sum_i a_i e_i(t), sum_i b_i e_i(t)),   theta = (a_1..a_p, b_1..b_p)

so the bearing ``Psi(S(t), t)`` has closed-form derivatives in theta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .exceptions import ConfigurationError, SingularGeometryError

TWO_PI = 2.0 * math.pi

# Position-first ordering used for tabulated output of the uniform linear model.
ULM_NAMES = ("x0", "vx", "y0", "vy")
TABLE_ORDER = (0, 2, 1, 3)  # (x0, y0, vx, vy)


def _as_unit_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
        raise ConfigurationError("unit time must lie in [0, 1]")
    return t


@dataclass(frozen=True)
class TrajectoryModel:
    """Linear-in-basis target trajectory.

    ``basis`` holds vectorised callables ``e_i(t)`` of unit time.
    """

    basis: tuple[Callable[[np.ndarray], np.ndarray], ...]
    duration: float
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.basis) == 0:
            raise ConfigurationError("trajectory model needs at least one basis function")
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        if self.names and len(self.names) != 2 * len(self.basis):
            raise ConfigurationError("names must have one entry per parameter")
        self._check_basis()

    def _check_basis(self):
        coarse = np.linspace(0.0, 1.0, 10_001)
        fine = np.linspace(0.0, 1.0, 20_001)
        ec, ef = self.basis_matrix(coarse), self.basis_matrix(fine)
        if not (np.all(np.isfinite(ec)) and np.all(np.isfinite(ef))):
            raise ConfigurationError("basis functions must be finite on [0, 1]")
        # a jump keeps its size under refinement, a continuous function does not
        jc = np.max(np.abs(np.diff(ec, axis=0)), axis=0)
        jf = np.max(np.abs(np.diff(ef, axis=0)), axis=0)
        scale = np.maximum(np.max(np.abs(ef), axis=0), 1.0)
        bad = (jf > 0.75 * jc) & (jf > 1e-9 * scale)
        if np.any(bad):
            raise ConfigurationError("basis functions must be continuous on [0, 1]")

    @property
    def p(self) -> int:
        return len(self.basis)

    @property
    def m(self) -> int:
        return 2 * len(self.basis)

    def basis_matrix(self, t) -> np.ndarray:
        """Return ``E[k, i] = e_i(t_k)`` with shape ``(len(t), p)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.broadcast_to(np.asarray(e(t), dtype=float), t.shape) for e in self.basis]
        return np.stack(cols, axis=-1)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.m,):
            raise ConfigurationError(
                f"theta has shape {theta.shape}, model expects ({self.m},)"
            )
        return theta


@dataclass(frozen=True)
class PowerBasis:
    """``e(t) = (scale * t) ** power``; picklable, unlike a closure."""

    power: int
    scale: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.power == 0:
            return np.ones_like(t)
        return (self.scale * t) ** self.power


def polynomial_model(degree: int, duration: float) -> TrajectoryModel:
    """Polynomial motion in elapsed seconds; degree 1 is uniform linear motion."""
    if degree < 0:
        raise ConfigurationError("polynomial degree must be >= 0")
    basis = tuple(PowerBasis(k, duration) for k in range(degree + 1))
    names = ULM_NAMES if degree == 1 else ()
    return TrajectoryModel(basis=basis, duration=duration, names=names)


def uniform_linear_model(duration: float) -> TrajectoryModel:
    """Uniform linear motion, ``theta = (x0, vx, y0, vy)`` in km and km/s."""
    return polynomial_model(1, duration)


def eval_trajectory(model: TrajectoryModel, theta, t) -> np.ndarray:
    """Position ``S_theta(t)``; shape ``(len(t), 2)`` (or ``(2,)`` for scalar t)."""
    theta = model.check_theta(theta)
    scalar = np.ndim(t) == 0
    t = _as_unit_time(np.atleast_1d(t))
    e = model.basis_matrix(t)
    p = model.p
    pos = np.stack([e @ theta[:p], e @ theta[p:]], axis=-1)
    return pos[0] if scalar else pos


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, 1e-300, 1.0 - 1e-16)
    with np.errstate(over="ignore", divide="ignore"):
        a = np.exp(-1.0 / xc)
        b = np.exp(-1.0 / (1.0 - xc))
    out = a / (a + b)
    return np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, out))


@dataclass(frozen=True)
class ObserverPath:
    """Constant-speed observer with a smoothed piecewise-constant turn rate.

    ``segments`` are ``(start_s, end_s, turn_rate)`` triples that tile
    ``[0, duration]``. Around each interior breakpoint the turn rate moves
    between neighbouring values through a C-infinity step of half-width
    ``transition_half_width`` seconds.
    """

    initial_position: tuple[float, float]
    initial_heading: float
    speed: float
    segments: tuple[tuple[float, float, float], ...]
    transition_half_width: float = 0.5
    duration: float = 20.0
    steps: int = 4000

    def __post_init__(self):
        object.__setattr__(self, "initial_position", tuple(float(v) for v in self.initial_position))
        object.__setattr__(
            self, "segments", tuple(tuple(float(v) for v in s) for s in self.segments)
        )
        if not self.speed > 0:
            raise ConfigurationError("observer speed must be positive")
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        if self.transition_half_width < 0:
            raise ConfigurationError("transition half-width must be non-negative")
        if not self.segments:
            raise ConfigurationError("observer needs at least one segment")
        segs = self.segments
        tol = 1e-9 * self.duration
        if abs(segs[0][0]) > tol or abs(segs[-1][1] - self.duration) > tol:
            raise ConfigurationError("segments must start at 0 and end at the duration")
        for s in segs:
            if not s[1] > s[0]:
                raise ConfigurationError(f"empty or reversed segment {s}")
        for prev, nxt in zip(segs, segs[1:]):
            if nxt[0] < prev[1] - tol:
                raise ConfigurationError(f"segments {prev} and {nxt} overlap")
            if nxt[0] > prev[1] + tol:
                raise ConfigurationError(f"gap between segments {prev} and {nxt}")
        hw = self.transition_half_width
        for i, s in enumerate(segs):
            need = (hw if i > 0 else 0.0) + (hw if i < len(segs) - 1 else 0.0)
            if s[1] - s[0] < need - tol:
                raise ConfigurationError(f"segment {s} shorter than its transitions")

    def turn_rate(self, s) -> np.ndarray:
        """Smoothed turn rate (rad/s) at physical time ``s``."""
        s = np.asarray(s, dtype=float)
        rates = [seg[2] for seg in self.segments]
        out = np.full(s.shape, rates[0])
        hw = self.transition_half_width
        for seg, r0, r1 in zip(self.segments[1:], rates, rates[1:]):
            b = seg[0]
            if hw == 0:
                out = out + (r1 - r0) * (s >= b)
            else:
                out = out + (r1 - r0) * smooth_step((s - b + hw) / (2 * hw))
        return out

    @cached_property
    def _track(self):
        # RK4 on (heading, x, y) with a fixed step; 4th order in the step size.
        n = self.steps
        h = self.duration / n
        s = np.linspace(0.0, self.duration, n + 1)
        w_node = self.turn_rate(s)
        w_mid = self.turn_rate(s[:-1] + 0.5 * h)
        v = self.speed
        phi = np.empty(n + 1)
        x = np.empty(n + 1)
        y = np.empty(n + 1)
        phi[0] = self.initial_heading
        x[0], y[0] = self.initial_position
        for k in range(n):
            p0 = phi[k]
            k1 = (w_node[k], v * math.cos(p0), v * math.sin(p0))
            p2 = p0 + 0.5 * h * k1[0]
            k2 = (w_mid[k], v * math.cos(p2), v * math.sin(p2))
            p3 = p0 + 0.5 * h * k2[0]
            k3 = (w_mid[k], v * math.cos(p3), v * math.sin(p3))
            p4 = p0 + h * k3[0]
            k4 = (w_node[k + 1], v * math.cos(p4), v * math.sin(p4))
            phi[k + 1] = p0 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            x[k + 1] = x[k] + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            y[k + 1] = y[k] + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        vel = v * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        pos = np.stack([x, y], axis=-1)
        return CubicHermiteSpline(s, pos, vel, axis=0)

    def position(self, t) -> np.ndarray:
        t = _as_unit_time(t)
        return self._track(np.clip(t, 0.0, 1.0) * self.duration)

    def velocity(self, t) -> np.ndarray:
        """Velocity in km/s (derivative w.r.t. physical time)."""
        t = _as_unit_time(t)
        return self._track(np.clip(t, 0.0, 1.0) * self.duration, 1)


def observer_position(path: ObserverPath, t) -> np.ndarray:
    return path.position(t)


def build_observer_path(spec: dict) -> ObserverPath:
    """Build a path from a loose description.

    ``spec`` keys: ``initial_position``, ``initial_heading``, ``speed``,
    ``duration``, ``segments`` and optionally ``transition_half_width``.
    Segments may leave gaps between them (a maneuver table listing only the
    steady legs); each gap becomes a transition centred on its midpoint, and
    all gaps must then have the same length.
    """
    try:
        duration = float(spec["duration"])
        segs = sorted((tuple(map(float, s)) for s in spec["segments"]), key=lambda s: s[0])
        pos = tuple(map(float, spec["initial_position"]))
        heading = float(spec["initial_heading"])
        speed = float(spec["speed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad observer description: {exc}") from exc
    if len(pos) != 2:
        raise ConfigurationError("initial_position must have two coordinates")
    if any(len(s) != 3 for s in segs):
        raise ConfigurationError("each segment is (start, end, turn_rate)")

    tol = 1e-9 * duration
    gaps = []
    for prev, nxt in zip(segs, segs[1:]):
        if nxt[0] < prev[1] - tol:
            raise ConfigurationError(f"segments {prev} and {nxt} overlap")
        gaps.append(nxt[0] - prev[1])
    hw = spec.get("transition_half_width")
    if any(g > tol for g in gaps):
        if max(gaps) - min(gaps) > tol:
            raise ConfigurationError("gapped segment tables need equal-length gaps")
        gap_hw = 0.5 * gaps[0]
        if hw is not None and abs(float(hw) - gap_hw) > tol:
            raise ConfigurationError("transition_half_width disagrees with the gaps")
        hw = gap_hw
        tiled = []
        for i, (a, b, r) in enumerate(segs):
            lo = a - gap_hw if i > 0 else a
            hi = b + gap_hw if i < len(segs) - 1 else b
            tiled.append((lo, hi, r))
        segs = tiled
    hw = 0.5 if hw is None else float(hw)
    return ObserverPath(
        initial_position=pos,
        initial_heading=heading,
        speed=speed,
        segments=tuple(segs),
        transition_half_width=hw,
        duration=duration,
    )


def wrap_angle(a):
    """Wrap into ``(-pi, pi]``; values already inside are returned untouched."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    out = np.where((a > -math.pi) & (a <= math.pi), a, w)
    return out if out.ndim else float(out)


def bearing_residual(a, b):
    """``a - b`` wrapped into ``(-pi, pi]``."""
    return wrap_angle(np.subtract(a, b))


def _relative(x, t, path):
    x = np.asarray(x, dtype=float)
    d = x - path.position(t)
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    if np.any(r2 == 0.0):
        raise SingularGeometryError("target coincides with the observer")
    return d, r2


def bearing(x, t, path: ObserverPath):
    """Full-plane angle of ``x - O(t)`` in ``(-pi, pi]``."""
    d, _ = _relative(x, t, path)
    b = np.arctan2(d[..., 1], d[..., 0])
    b = np.where(b == -math.pi, math.pi, b)
    return b if b.ndim else float(b)


def grad_x_bearing(x, t, path: ObserverPath) -> np.ndarray:
    """Gradient of the bearing w.r.t. target position: ``(-dy, dx) / r^2``."""
    d, r2 = _relative(x, t, path)
    return np.stack([-d[..., 1] / r2, d[..., 0] / r2], axis=-1)


def hess_x_bearing(x, t, path: ObserverPath) -> np.ndarray:
    d, r2 = _relative(x, t, path)
    dx, dy = d[..., 0], d[..., 1]
    r4 = r2 * r2
    hxx = 2 * dx * dy / r4
    hxy = (dy * dy - dx * dx) / r4
    return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, -hxx], -1)], -2)


def _lift(model: TrajectoryModel, gx: np.ndarray, e: np.ndarray) -> np.ndarray:
    # d/da_i = dPsi/dx1 * e_i, d/db_i = dPsi/dx2 * e_i
    return np.concatenate([gx[..., :1] * e, gx[..., 1:] * e], axis=-1)


def grad_theta_bearing(model: TrajectoryModel, theta, t, path: ObserverPath) -> np.ndarray:
    """Gradient of ``theta -> Psi(S_theta(t), t)``; shape ``(len(t), m)``."""
    t = np.atleast_1d(_as_unit_time(t))
    x = eval_trajectory(model, theta, t)
    return _lift(model, grad_x_bearing(x, t, path), model.basis_matrix(t))


def hess_theta_bearing(model: TrajectoryModel, theta, t, path: ObserverPath) -> np.ndarray:
    """Hessian of ``theta -> Psi(S_theta(t), t)``; shape ``(len(t), m, m)``."""
    t = np.atleast_1d(_as_unit_time(t))
    x = eval_trajectory(model, theta, t)
    h = hess_x_bearing(x, t, path)
    e = model.basis_matrix(t)
    p = model.p
    out = np.empty((len(t), 2 * p, 2 * p))
    for i in range(2):
        for j in range(2):
            out[:, i * p:(i + 1) * p, j * p:(j + 1) * p] = (
                h[:, i, j, None, None] * e[:, :, None] * e[:, None, :]
            )
    return out


@dataclass(frozen=True)
class ValidityReport:
    min_range: float
    bearing_span: float
    range_ok: bool
    span_ok: bool
    information_condition: float
    observability_risk: bool
    grid_size: int = field(default=10_000)

    @property
    def passed(self) -> bool:
        return self.range_ok and self.span_ok


def validate_scenario(
    model: TrajectoryModel,
    theta,
    path: ObserverPath,
    r_min: float,
    grid: int = 10_000,
    condition_limit: float = 1e8,
) -> ValidityReport:
    """Check range and bearing-window conditions on a dense time grid.

    Failed checks are reported, not raised. ``observability_risk`` flags a
    regression information matrix with condition number above
    ``condition_limit``.
    """
    t = np.arange(grid + 1) / grid
    x = eval_trajectory(model, theta, t)
    d = x - path.position(t)
    rng = np.hypot(d[:, 0], d[:, 1])
    min_range = float(rng.min())
    if min_range == 0.0:
        return ValidityReport(0.0, float("nan"), False, False, float("inf"), True, grid)
    b = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    span = float(b.max() - b.min())
    g = grad_theta_bearing(model, theta, t[1:], path)
    info = g.T @ g / grid
    cond = float(np.linalg.cond(info))
    return ValidityReport(
        min_range=min_range,
        bearing_span=span,
        range_ok=min_range >= r_min,
        span_ok=span < math.pi,
        information_condition=cond,
        observability_risk=not cond < condition_limit,
        grid_size=grid,
    )


def to_table_order(vec: Sequence[float]) -> np.ndarray:
    """Reorder a uniform-linear-model vector ``(x0, vx, y0, vy)`` to ``(x0, y0, vx, vy)``."""
    return np.asarray(vec)[list(TABLE_ORDER)]
