"""Fitted stochastic-PCE surrogate and its serialized form."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ..basis import MultiIndexSet
from ..distributions import Marginal, latent_marginal
from ..exceptions import ValidationError
from ..orthopoly import PolyFamily, QuadratureRule, family_for_marginal, gauss_rule

MODEL_SCHEMA_VERSION = 1


def default_nq(max_z_degree: int) -> int:
    """Quadrature size on the latent variable; converged for smooth integrands."""
    return max(32, 2 * (max_z_degree + 1))


@dataclass(frozen=True)
class SpceModel:
    """Surrogate Y_x ~ sum_a c_a psi_a(x, Z) + N(0, sigma^2).

    The basis spans M input dimensions plus one trailing latent dimension.
    Coefficients are aligned with the canonical order of ``basis``.
    """

    basis: MultiIndexSet
    coefficients: np.ndarray
    sigma: float
    latent: str
    input_marginals: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(c)) or c.shape != (len(self.basis),):
            raise ValidationError("coefficients must be finite and aligned with the basis")
        if not self.sigma > 0:
            raise ValidationError("sigma must be strictly positive")
        if len(self.input_marginals) != self.basis.dim - 1:
            raise ValidationError("marginal count must match basis dimension minus latent")
        if (0,) * self.basis.dim not in self.basis.indices:
            raise ValidationError("basis must contain the zero index")
        latent_marginal(self.latent)  # raises on unknown id
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "input_marginals", tuple(self.input_marginals))

    # -- derived structure -----------------------------------------------------
    @property
    def n_inputs(self) -> int:
        return self.basis.dim - 1

    @property
    def families(self) -> tuple:
        """One PolyFamily per dimension (inputs then latent), cached."""
        cached = self.metadata.get("_families")
        if cached is None:
            arr = self.basis.as_array()
            degs = arr.max(axis=0)
            fams = [
                family_for_marginal(m, max(int(d), 1))
                for m, d in zip(self.input_marginals, degs[:-1])
            ]
            z_deg = int(degs[-1])
            fams.append(
                family_for_marginal(latent_marginal(self.latent), max(default_nq(z_deg), z_deg))
            )
            cached = tuple(fams)
            self.metadata["_families"] = cached
        return cached

    @property
    def latent_family(self) -> PolyFamily:
        return self.families[-1]

    def latent_rule(self, n_points: int | None = None) -> QuadratureRule:
        if n_points is None:
            n_points = default_nq(int(self.basis.z_degrees().max()))
        family = self.latent_family
        if family.max_degree < n_points - 1:
            # the cached family only carries enough recurrence depth for the
            # default rule; rebuild deeper on demand
            family = family_for_marginal(latent_marginal(self.latent), n_points - 1)
        return gauss_rule(family, n_points)

    def mean_mask(self) -> np.ndarray:
        return self.basis.z_degrees() == 0

    def standardize(self, x) -> np.ndarray:
        """Map raw input points (N x M) to standardized coordinates."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_inputs:
            raise ValidationError(f"expected {self.n_inputs} input columns, got {x.shape[1]}")
        cols = [m.standardize(x[:, j]) for j, m in enumerate(self.input_marginals)]
        return np.column_stack(cols)

    # -- serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        meta = {k: v for k, v in self.metadata.items() if not k.startswith("_")}
        return {
            "version": MODEL_SCHEMA_VERSION,
            "input_marginals": [m.to_dict() for m in self.input_marginals],
            "transform": "standardized (uniform -> (-1,1), normal -> (0,1))",
            "latent": self.latent,
            "basis": self.basis.to_dict(),
            "coefficients": self.coefficients.tolist(),
            "sigma": self.sigma,
            "metadata": meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpceModel":
        if d.get("version") != MODEL_SCHEMA_VERSION:
            raise ValidationError(f"unsupported model schema version {d.get('version')!r}")
        return cls(
            basis=MultiIndexSet.from_dict(d["basis"]),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            sigma=float(d["sigma"]),
            latent=d["latent"],
            input_marginals=tuple(Marginal.from_dict(m) for m in d["input_marginals"]),
            metadata=dict(d.get("metadata", {})),
        )

    def save(self, path):
        write_json_atomic(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "SpceModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def write_json_atomic(path, obj):
    """Serialize to a temp file and rename, so failures leave no partial output."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
