"""Scenarios and synthetic bearing datasets."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, SingularGeometryError
from .geometry import (
    ObserverPath,
    TrajectoryModel,
    bearing,
    eval_trajectory,
    validate_scenario,
    wrap_angle,
)
from .noise import NoTrajectoryNoise, ObservationNoiseSpec, TrajectoryNoiseSpec, stream


@dataclass(frozen=True, eq=False)
class Scenario:
    model: TrajectoryModel
    theta_star: np.ndarray
    path: ObserverPath
    traj_noise: TrajectoryNoiseSpec
    obs_noise: Optional[ObservationNoiseSpec]
    n: int
    r_min: float = 6.0
    name: str = "scenario"

    def __post_init__(self):
        theta = np.array(self.model.check_theta(self.theta_star), dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if not self.r_min > 0:
            raise ConfigurationError("r_min must be positive")

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def sigma(self) -> float:
        """Observation-noise sd; 0 when the scenario has no observation noise."""
        return 0.0 if self.obs_noise is None else float(self.obs_noise.sigma)

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def validate(self, grid: int = 10_000):
        return validate_scenario(self.model, self.theta_star, self.path, self.r_min, grid)

    def replace(self, **changes) -> "Scenario":
        fields = dict(
            model=self.model,
            theta_star=self.theta_star,
            path=self.path,
            traj_noise=self.traj_noise,
            obs_noise=self.obs_noise,
            n=self.n,
            r_min=self.r_min,
            name=self.name,
        )
        fields.update(changes)
        return Scenario(**fields)

    def describe(self) -> dict:
        p = self.path
        return {
            "name": self.name,
            "basis": [repr(e) for e in self.model.basis],
            "duration": self.model.duration,
            "theta_star": [float(v).hex() for v in self.theta_star],
            "observer": {
                "initial_position": [v.hex() for v in p.initial_position],
                "initial_heading": float(p.initial_heading).hex(),
                "speed": float(p.speed).hex(),
                "segments": [[v.hex() for v in s] for s in p.segments],
                "transition_half_width": float(p.transition_half_width).hex(),
                "duration": float(p.duration).hex(),
            },
            "traj_noise": self.traj_noise.to_dict(),
            "obs_sigma": float(self.sigma).hex(),
            "n": self.n,
            "r_min": float(self.r_min).hex(),
        }

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class Dataset:
    t: np.ndarray
    y: np.ndarray
    latent_x: Optional[np.ndarray] = None
    fingerprint: str = ""
    seed: Optional[int] = None
    replication: int = 0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.t.ndim != 1 or self.t.shape != self.y.shape:
            raise ConfigurationError("t and Y must be 1-D arrays of equal length")
        if self.latent_x is not None:
            self.latent_x = np.asarray(self.latent_x, dtype=float)
            if self.latent_x.shape != (len(self.t), 2):
                raise ConfigurationError("latent positions must have shape (n, 2)")

    @property
    def n(self) -> int:
        return len(self.t)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# fingerprint={self.fingerprint}\n")
        buf.write(f"# seed={'' if self.seed is None else self.seed}\n")
        buf.write(f"# replication={self.replication}\n")
        w = csv.writer(buf, lineterminator="\n")
        header = ["k", "t", "Y"] + (["X1", "X2"] if self.latent_x is not None else [])
        w.writerow(header)
        for k in range(self.n):
            row = [str(k + 1), f"{self.t[k]:.17g}", f"{self.y[k]:.17g}"]
            if self.latent_x is not None:
                row += [f"{self.latent_x[k, 0]:.17g}", f"{self.latent_x[k, 1]:.17g}"]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Dataset":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        meta = {}
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
            elif line.strip():
                lines.append(line)
        rows = list(csv.reader(lines))
        header = rows[0]
        if header[:3] != ["k", "t", "Y"] or header[3:] not in ([], ["X1", "X2"]):
            raise ConfigurationError(f"unexpected dataset header {header}")
        body = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(-1, len(header) - 1)
        seed = meta.get("seed") or None
        return cls(
            t=body[:, 0],
            y=body[:, 1],
            latent_x=body[:, 2:4] if len(header) == 5 else None,
            fingerprint=meta.get("fingerprint", ""),
            seed=None if seed is None else int(seed),
            replication=int(meta.get("replication", 0) or 0),
        )


def simulate(scenario: Scenario, seed: int, replication: int = 0, keep_latent: bool = False) -> Dataset:
    """Draw ``Y_k = Psi(S(t_k) + eps_k, t_k) + V_k`` at ``t_k = k / n``."""
    n = scenario.n
    t = scenario.times
    eps = scenario.traj_noise.sample(n, stream(seed, replication, "trajectory"))
    if scenario.obs_noise is None:
        v = np.zeros(n)
    else:
        v = scenario.obs_noise.sample(n, stream(seed, replication, "observation"))
    x = eval_trajectory(scenario.model, scenario.theta_star, t) + eps
    try:
        psi = bearing(x, t, scenario.path)
    except SingularGeometryError as exc:
        raise SingularGeometryError(f"replication {replication}: {exc}") from exc
    y = wrap_angle(np.asarray(psi) + v)
    return Dataset(
        t=t,
        y=np.atleast_1d(y),
        latent_x=x if keep_latent else None,
        fingerprint=scenario.fingerprint,
        seed=seed,
        replication=replication,
    )
