"""Gauss-Hermite rules normalised for the standard normal law."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes/weights for ``E f(Z)``, ``Z ~ N(0, 1)`` and its 2-D tensor product."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def nodes2d(self) -> np.ndarray:
        a, b = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=-1)

    @property
    def weights2d(self) -> np.ndarray:
        return np.outer(self.weights, self.weights).ravel()

    def expect(self, f) -> float:
        return float(np.sum(self.weights * f(self.nodes)))

    def gaussian_nodes(self, cov) -> tuple[np.ndarray, np.ndarray]:
        """Nodes/weights for a centred planar Gaussian with covariance ``cov``.

        A zero covariance collapses to the single node at the origin.
        """
        cov = np.asarray(cov, dtype=float)
        if not np.any(cov):
            return np.zeros((1, 2)), np.ones(1)
        chol = np.linalg.cholesky(cov)
        return self.nodes2d @ chol.T, self.weights2d


def gauss_hermite(order: int = 12) -> QuadratureRule:
    if order < 1:
        raise ConfigurationError("quadrature order must be >= 1")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    # enforce exact symmetry of the rule
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order=order, nodes=x, weights=w)
