"""Multi-index sets with hyperbolic truncation and tensor-product basis evaluation.

The last index slot is reserved for the latent variable by convention, so a
set of dimension M+1 describes a basis over (x_1, ..., x_M, z).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

#: float guard so indices exactly on the q-norm shell are kept
_QNORM_TOL = 1e-12


@dataclass(frozen=True)
class MultiIndexSet:
    """Ordered set of degree vectors, canonically graded-lexicographic."""

    indices: tuple  # tuple of tuples of ints
    p: int
    q: float
    dim: int

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValidationError("duplicate multi-indices")
        for alpha in self.indices:
            if len(alpha) != self.dim or any(a < 0 for a in alpha):
                raise ValidationError(f"bad multi-index {alpha}")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int).reshape(len(self.indices), self.dim)

    def z_degrees(self) -> np.ndarray:
        """Degree of the latent (last) slot per index."""
        return self.as_array()[:, -1]

    def restrict(self, keep) -> "MultiIndexSet":
        """Subset by boolean mask or index positions, preserving order."""
        keep = np.asarray(keep)
        arr = np.arange(len(self.indices))
        pos = arr[keep] if keep.dtype == bool else keep
        return MultiIndexSet(tuple(self.indices[i] for i in pos), self.p, self.q, self.dim)

    def to_dict(self):
        return {"indices": [list(a) for a in self.indices], "p": self.p, "q": self.q,
                "dim": self.dim}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(tuple(a) for a in d["indices"]), int(d["p"]), float(d["q"]),
                   int(d["dim"]))


def _canonical_sort(indices):
    return tuple(sorted(indices, key=lambda a: (sum(a), a)))


def hyperbolic_set(p: int, q: float, dim: int) -> MultiIndexSet:
    """All multi-indices with q-quasi-norm at most p (hyperbolic truncation)."""
    if p < 0 or dim < 1:
        raise ValidationError("need p >= 0 and dim >= 1")
    if not 0.0 < q <= 1.0:
        raise ValidationError("q must lie in (0, 1]")

    indices = []

    def recurse(prefix, remaining):
        if remaining == 0:
            alpha = tuple(prefix)
            norm = sum(a**q for a in alpha) ** (1.0 / q) if any(alpha) else 0.0
            if norm <= p + _QNORM_TOL:
                indices.append(alpha)
            return
        for a in range(p + 1):
            # cheap monotone prune: the partial quasi-norm only grows
            if sum(v**q for v in prefix + [a]) ** (1.0 / q) > p + _QNORM_TOL:
                break
            recurse(prefix + [a], remaining - 1)

    recurse([], dim)
    return MultiIndexSet(_canonical_sort(indices), p, q, dim)


def mean_subset(a: MultiIndexSet) -> MultiIndexSet:
    """Indices with zero latent degree: the basis of the mean function."""
    if len(a) == 0:
        raise ValidationError("empty multi-index set")
    keep = [alpha for alpha in a if alpha[-1] == 0]
    return MultiIndexSet(tuple(keep), a.p, a.q, a.dim)


def eval_design_matrix(a: MultiIndexSet, families, points) -> np.ndarray:
    """Tensor-product basis values: entry (i, j) = psi_{alpha_j}(points[i]).

    ``points`` are in standardized coordinates, one column per dimension of
    the index set; ``families`` holds one PolyFamily per dimension.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(families) != a.dim or points.shape[1] != a.dim:
        raise ValidationError(
            f"dimension mismatch: set dim {a.dim}, {len(families)} families, "
            f"points with {points.shape[1]} columns"
        )
    arr = a.as_array()
    out = np.ones((points.shape[0], len(a)))
    for k in range(a.dim):
        max_deg = int(arr[:, k].max())
        phi = families[k].eval_all(max_deg, points[:, k])  # (N, max_deg+1)
        out *= phi[:, arr[:, k]]
    return out
