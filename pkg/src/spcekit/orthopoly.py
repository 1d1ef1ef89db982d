"""Univariate orthonormal polynomial families and Gaussian quadrature.

Families are defined by three-term recurrence coefficients (alpha_k, beta_k)
of the monic orthogonal polynomials with respect to a probability density.
Evaluation uses the orthonormal form of the recurrence,

    sqrt(beta_{k+1}) phi_{k+1}(x) = (x - alpha_k) phi_k(x) - sqrt(beta_k) phi_{k-1}(x),

with phi_0 = 1, so that E[phi_k(X) phi_l(X)] = delta_kl. Quadrature nodes and
weights come from the eigendecomposition of the symmetric tridiagonal Jacobi
matrix (Golub-Welsch).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.linalg import eigh_tridiagonal

from .distributions import Marginal
from .exceptions import ConfigurationError, NumericalError, ValidationError

#: per-integral tolerance of the Stieltjes inner products
_STIELTJES_TOL = 1e-10


@dataclass(frozen=True)
class PolyFamily:
    """Orthonormal polynomial family w.r.t. a (standardized) marginal density.

    ``alphas[k]`` and ``betas[k]`` are the monic recurrence coefficients for
    k = 0..max_degree, with ``betas[0] = 1`` by convention (probability
    measure). Evaluation happens in standardized coordinates: uniform
    marginals on (-1, 1), normal marginals as N(0, 1).
    """

    marginal: Marginal
    alphas: np.ndarray
    betas: np.ndarray
    max_degree: int
    label: str = field(default="custom")

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        betas = np.asarray(self.betas, dtype=float)
        if alphas.shape != (self.max_degree + 1,) or betas.shape != alphas.shape:
            raise ValidationError("recurrence arrays must have length max_degree + 1")
        if np.any(betas[1:] <= 0.0):
            k = int(np.argmax(betas[1:] <= 0.0)) + 1
            raise NumericalError(f"non-positive recurrence coefficient beta_{k}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)

    def eval(self, degree: int, x):
        """Evaluate the orthonormal polynomial of the given degree at x."""
        if degree < 0 or degree > self.max_degree:
            raise ValidationError(
                f"degree {degree} out of range for family of max degree {self.max_degree}"
            )
        return self.eval_all(degree, x)[..., degree]

    def eval_all(self, degree: int, x):
        """Evaluate phi_0 .. phi_degree at x; last axis indexes the degree."""
        if degree < 0 or degree > self.max_degree:
            raise ValidationError(
                f"degree {degree} out of range for family of max degree {self.max_degree}"
            )
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (degree + 1,))
        out[..., 0] = 1.0
        if degree >= 1:
            sq = np.sqrt(self.betas)
            out[..., 1] = (x - self.alphas[0]) / sq[1]
            for k in range(1, degree):
                out[..., k + 1] = (
                    (x - self.alphas[k]) * out[..., k] - sq[k] * out[..., k - 1]
                ) / sq[k + 1]
        return out

    def to_dict(self):
        return {
            "marginal": self.marginal.to_dict(),
            "alphas": self.alphas.tolist(),
            "betas": self.betas.tolist(),
            "max_degree": self.max_degree,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            marginal=Marginal.from_dict(d["marginal"]),
            alphas=np.asarray(d["alphas"]),
            betas=np.asarray(d["betas"]),
            max_degree=int(d["max_degree"]),
            label=d.get("label", "custom"),
        )


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule integrating against the family's density; weights sum to 1."""

    nodes: np.ndarray
    weights: np.ndarray
    family: PolyFamily

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def integrate(self, fn):
        return float(np.dot(self.weights, fn(self.nodes)))


def family_for_marginal(marginal: Marginal, max_degree: int) -> PolyFamily:
    """Closed-form orthonormal family for a uniform or normal marginal.

    Uniform marginals use the (normalized) Legendre recurrence on (-1, 1),
    normal marginals the probabilists' Hermite recurrence on N(0, 1). The
    caller is expected to standardize inputs accordingly.
    """
    if max_degree < 0:
        raise ValidationError("max_degree must be >= 0")
    k = np.arange(max_degree + 1, dtype=float)
    alphas = np.zeros(max_degree + 1)
    if marginal.kind == "uniform":
        betas = np.where(k > 0, k * k / np.maximum(4.0 * k * k - 1.0, 1.0), 1.0)
        label = "legendre"
    elif marginal.kind == "normal":
        betas = np.where(k > 0, k, 1.0)
        label = "hermite"
    else:
        raise ConfigurationError(
            f"no closed-form family for marginal kind {marginal.kind!r}; "
            "use stieltjes() with a density evaluator"
        )
    return PolyFamily(marginal.standard, alphas, betas, max_degree, label=label)


def _eval_monic(x, alphas, betas, degree):
    """Monic orthogonal polynomial via recurrence (coefficients known up to degree-1)."""
    p_prev, p = np.zeros_like(x), np.ones_like(x)
    for k in range(degree):
        p_prev, p = p, (x - alphas[k]) * p - betas[k] * p_prev
    return p


def stieltjes(density, support, max_degree: int, marginal: Marginal | None = None) -> PolyFamily:
    """Recurrence coefficients for an arbitrary density by the Stieltjes procedure.

    Inner products are computed with adaptive quadrature on the support to an
    absolute tolerance of 1e-10 per integral. The density must integrate to 1.
    """
    lo, hi = support
    mass, _ = integrate.quad(density, lo, hi, epsabs=_STIELTJES_TOL, limit=200)
    if abs(mass - 1.0) > 1e-6:
        raise ValidationError(f"density integrates to {mass:.6g}, not 1, on the support")

    alphas = np.zeros(max_degree + 1)
    betas = np.ones(max_degree + 1)
    norm_prev = 1.0
    for k in range(max_degree + 1):
        def p2(x, _k=k):
            return _eval_monic(np.asarray(x, dtype=float), alphas, betas, _k) ** 2 * density(x)

        def xp2(x, _k=k):
            return x * _eval_monic(np.asarray(x, dtype=float), alphas, betas, _k) ** 2 * density(x)

        norm_k, _ = integrate.quad(p2, lo, hi, epsabs=_STIELTJES_TOL, limit=200)
        if k > 0:
            beta = norm_k / norm_prev
            if not beta > 0.0:
                raise NumericalError(
                    f"Stieltjes procedure lost positivity at degree {k} (beta = {beta:.3g})"
                )
            betas[k] = beta
        moment, _ = integrate.quad(xp2, lo, hi, epsabs=_STIELTJES_TOL, limit=200)
        alphas[k] = moment / norm_k
        norm_prev = norm_k

    if marginal is None:
        marginal = Marginal("uniform", (lo, hi)) if np.isfinite([lo, hi]).all() else Marginal(
            "normal", (0.0, 1.0)
        )
    return PolyFamily(marginal, alphas, betas, max_degree, label="stieltjes")


def eval_poly(family: PolyFamily, degree: int, x):
    """Value of the orthonormal polynomial; vectorized over x."""
    return family.eval(degree, x)


def gauss_rule(family: PolyFamily, n_points: int) -> QuadratureRule:
    """Gauss quadrature rule from the Jacobi matrix of the recurrence."""
    if n_points < 1:
        raise ValidationError("n_points must be >= 1")
    if family.max_degree < n_points - 1:
        raise ValidationError(
            f"family carries recurrence up to degree {family.max_degree}, "
            f"need {n_points - 1} for an {n_points}-point rule"
        )
    diag = family.alphas[:n_points]
    off = np.sqrt(family.betas[1:n_points])
    try:
        vals, vecs = eigh_tridiagonal(diag, off)
    except Exception as exc:  # pragma: no cover - LAPACK failure is exotic
        raise NumericalError(
            f"Jacobi eigensolve failed for {n_points}-point rule "
            f"(diag range [{diag.min():.3g}, {diag.max():.3g}]): {exc}"
        ) from exc
    weights = vecs[0, :] ** 2
    weights = weights / weights.sum()
    return QuadratureRule(vals, weights, family)


def gram_matrix(family: PolyFamily, degree: int, n_points: int | None = None) -> np.ndarray:
    """Numerical Gram matrix E[phi_k phi_l] up to the given degree (test helper)."""
    if n_points is None:
        n_points = degree + 1
    rule = gauss_rule(family, n_points)
    phi = family.eval_all(degree, rule.nodes)  # (n_points, degree+1)
    return phi.T @ (rule.weights[:, None] * phi)
