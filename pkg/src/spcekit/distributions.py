"""Marginal distribution ids used for inputs and latent variables.

Only independent uniform and normal marginals are supported natively; other
densities go through the Stieltjes construction in :mod:`spcekit.orthopoly`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class Marginal:
    """A univariate marginal distribution, e.g. uniform(a, b) or normal(mu, sd)."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ConfigurationError(f"unsupported marginal kind: {self.kind!r}")
        if len(self.params) != 2:
            raise ConfigurationError(f"{self.kind} marginal needs 2 parameters")
        a, b = self.params
        if self.kind == "uniform" and not b > a:
            raise ConfigurationError("uniform marginal requires b > a")
        if self.kind == "normal" and not self.params[1] > 0:
            raise ConfigurationError("normal marginal requires sd > 0")
        object.__setattr__(self, "params", (float(a), float(b)))

    # -- scipy frozen distribution -------------------------------------------
    @property
    def _dist(self):
        a, b = self.params
        if self.kind == "uniform":
            return stats.uniform(loc=a, scale=b - a)
        return stats.norm(loc=a, scale=b)

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def ppf(self, u):
        return self._dist.ppf(u)

    def rvs(self, n, rng):
        return self.ppf(rng.uniform(size=n))

    @property
    def mean(self):
        a, b = self.params
        return 0.5 * (a + b) if self.kind == "uniform" else a

    @property
    def var(self):
        a, b = self.params
        return (b - a) ** 2 / 12.0 if self.kind == "uniform" else b * b

    # -- standardization ------------------------------------------------------
    # uniform(a, b) maps affinely onto (-1, 1); normal(mu, sd) onto N(0, 1).
    def standardize(self, x):
        a, b = self.params
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return 2.0 * (x - a) / (b - a) - 1.0
        return (x - a) / b

    def unstandardize(self, u):
        a, b = self.params
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return a + 0.5 * (u + 1.0) * (b - a)
        return a + b * u

    @property
    def standard(self) -> "Marginal":
        """The canonical marginal this one standardizes to."""
        if self.kind == "uniform":
            return Marginal("uniform", (-1.0, 1.0))
        return Marginal("normal", (0.0, 1.0))

    def contains(self, x):
        """Support membership (elementwise)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            a, b = self.params
            return (x >= a) & (x <= b)
        return np.isfinite(x)

    # -- serialization ---------------------------------------------------------
    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["params"]))


STANDARD_NORMAL = Marginal("normal", (0.0, 1.0))
STANDARD_UNIFORM = Marginal("uniform", (-1.0, 1.0))

#: Latent-variable candidates considered by the adaptive builder.
LATENT_CANDIDATES = {"normal": STANDARD_NORMAL, "uniform": STANDARD_UNIFORM}


def latent_marginal(latent_id: str) -> Marginal:
    try:
        return LATENT_CANDIDATES[latent_id]
    except KeyError:
        raise ConfigurationError(f"unknown latent distribution id: {latent_id!r}")
