"""Trajectory-noise and observation-noise specifications and samplers.

Random streams are keyed by ``(seed, replication, role)`` through
``numpy.random.SeedSequence`` so that a replication draws the same numbers
whatever order (or process) it runs in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .exceptions import ConfigurationError

ROLES = {"trajectory": 0, "observation": 1, "init": 2, "aux": 3}


def stream(seed: int, replication: int = 0, role: str = "trajectory") -> np.random.Generator:
    """Independent generator for one (replication, role) pair."""
    if role not in ROLES:
        raise ConfigurationError(f"unknown random stream role {role!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication), ROLES[role]))
    return np.random.Generator(np.random.PCG64(ss))


class TrajectoryNoiseSpec:
    """Base class of planar trajectory-noise laws (km)."""

    kind = "abstract"
    is_gaussian = True

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def marginal_cov(self) -> np.ndarray:
        """Covariance of a single draw (km^2)."""
        raise NotImplementedError

    def marginal_chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.marginal_cov()) if np.any(self.marginal_cov()) else np.zeros((2, 2))

    @property
    def is_isotropic(self) -> bool:
        c = self.marginal_cov()
        return c[0, 1] == 0.0 and c[0, 0] == c[1, 1]

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoTrajectoryNoise(TrajectoryNoiseSpec):
    kind = "none"

    def sample(self, n, rng):
        return np.zeros((n, 2))

    def marginal_cov(self):
        return np.zeros((2, 2))

    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class IsotropicGaussian(TrajectoryNoiseSpec):
    sigma: float
    kind = "isotropic"

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigurationError("isotropic noise sigma must be finite and >= 0")

    def sample(self, n, rng):
        return self.sigma * rng.standard_normal((n, 2))

    def marginal_cov(self):
        return self.sigma**2 * np.eye(2)

    def to_dict(self):
        return {"kind": "isotropic", "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class AnisotropicGaussian(TrajectoryNoiseSpec):
    cov: np.ndarray
    kind = "anisotropic"

    def __post_init__(self):
        c = np.array(self.cov, dtype=float)
        if c.shape != (2, 2) or not np.all(np.isfinite(c)):
            raise ConfigurationError("anisotropic covariance must be a finite 2x2 matrix")
        if not np.allclose(c, c.T, rtol=0, atol=1e-15 * np.abs(c).max()):
            raise ConfigurationError("anisotropic covariance must be symmetric")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ConfigurationError("anisotropic covariance must be positive definite")
        c.setflags(write=False)
        object.__setattr__(self, "cov", c)

    def __eq__(self, other):
        return isinstance(other, AnisotropicGaussian) and np.array_equal(self.cov, other.cov)

    def __hash__(self):
        return hash(self.cov.tobytes())

    def sample(self, n, rng):
        return rng.standard_normal((n, 2)) @ np.linalg.cholesky(self.cov).T

    def marginal_cov(self):
        return np.array(self.cov)

    def to_dict(self):
        return {"kind": "anisotropic", "cov": self.cov.tolist()}


@dataclass(frozen=True)
class AR1(TrajectoryNoiseSpec):
    """Coordinatewise ``eps[k+1] = phi * eps[k] + eta[k]``, ``eta ~ N(0, sigma_eta^2 I)``.

    Started from the stationary law so the sequence is stationary.
    """

    phi: float
    sigma_eta: float
    kind = "ar1"

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ConfigurationError("AR(1) coefficient must satisfy |phi| < 1")
        if not (self.sigma_eta >= 0 and math.isfinite(self.sigma_eta)):
            raise ConfigurationError("AR(1) innovation sd must be finite and >= 0")

    @property
    def stationary_var(self) -> float:
        return self.sigma_eta**2 / (1.0 - self.phi**2)

    def sample(self, n, rng):
        eps0 = math.sqrt(self.stationary_var) * rng.standard_normal(2)
        eta = self.sigma_eta * rng.standard_normal((n - 1, 2))
        out = np.empty((n, 2))
        out[0] = eps0
        if n > 1:
            out[1:], _ = lfilter([1.0], [1.0, -self.phi], eta, axis=0, zi=self.phi * eps0[None, :])
        return out

    def marginal_cov(self):
        return self.stationary_var * np.eye(2)

    def to_dict(self):
        return {"kind": "ar1", "phi": self.phi, "sigma_eta": self.sigma_eta}


@dataclass(frozen=True)
class ObservationNoiseSpec:
    """Centred Gaussian bearing noise with standard deviation ``sigma`` (rad)."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ConfigurationError("observation noise sigma must be positive")

    def sample(self, n, rng):
        return self.sigma * rng.standard_normal(n)

    def pdf(self, v):
        return np.exp(-0.5 * (v / self.sigma) ** 2) / (self.sigma * math.sqrt(2 * math.pi))

    def logpdf(self, v):
        return -0.5 * (v / self.sigma) ** 2 - math.log(self.sigma * math.sqrt(2 * math.pi))


def sample_trajectory_noise(spec: TrajectoryNoiseSpec, n: int, seed: int, replication: int = 0) -> np.ndarray:
    if n < 1:
        raise ConfigurationError("need at least one draw")
    return spec.sample(n, stream(seed, replication, "trajectory"))


def second_moment(spec: TrajectoryNoiseSpec) -> float:
    """``E ||eps_1||^2`` in km^2."""
    return float(np.trace(spec.marginal_cov()))


def ar1_autocovariance(phi: float, sigma_eta: float, k: int) -> float:
    """Per-component lag-``k`` autocovariance of the stationary AR(1)."""
    AR1(phi, sigma_eta)
    return phi ** abs(k) * sigma_eta**2 / (1.0 - phi**2)


def trajectory_noise_from_dict(d: dict) -> TrajectoryNoiseSpec:
    kind = d.get("kind", "none")
    extra = set(d) - {"kind", "sigma", "cov", "phi", "sigma_eta", "scale_diag"}
    if extra:
        raise ConfigurationError(f"unknown trajectory-noise keys: {sorted(extra)}")
    try:
        if kind == "none":
            return NoTrajectoryNoise()
        if kind == "isotropic":
            return IsotropicGaussian(float(d["sigma"]))
        if kind == "anisotropic":
            if "cov" in d:
                return AnisotropicGaussian(np.asarray(d["cov"], dtype=float))
            s = float(d["sigma"])
            return AnisotropicGaussian(s * s * np.diag(np.asarray(d["scale_diag"], dtype=float)))
        if kind == "ar1":
            return AR1(float(d["phi"]), float(d["sigma_eta"]))
    except KeyError as exc:
        raise ConfigurationError(f"trajectory noise {kind!r} is missing {exc}") from exc
    raise ConfigurationError(f"unknown trajectory-noise kind {kind!r}")
