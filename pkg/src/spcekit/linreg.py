"""Ordinary least squares with leave-one-out error and hybrid LAR selection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import lars_path

from .basis import MultiIndexSet
from .exceptions import ConditioningError, ValidationError

#: reject designs whose reciprocal condition estimate falls below this
_RCOND_MIN = 1e-12


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit plus its closed-form leave-one-out error."""

    coefficients: np.ndarray
    eps_loo: float
    selected: tuple  # retained multi-indices (or column ids) aligned with coefficients

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValidationError("non-finite OLS coefficients")
        if len(self.selected) != c.size:
            raise ValidationError("selected indices do not align with coefficients")
        object.__setattr__(self, "coefficients", c)


def ols_fit(design: np.ndarray, y: np.ndarray, selected=None) -> OlsFit:
    """OLS via thin QR; eps_loo from the hat-matrix identity.

    eps_loo = mean_i ((y_i - yhat_i) / (1 - h_ii))^2 with h_ii = ||Q_i||^2.
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if n < p:
        raise ValidationError(f"need N >= P, got N={n}, P={p}")

    q_mat, r_mat = np.linalg.qr(design)
    diag = np.abs(np.diag(r_mat))
    if diag.min() < _RCOND_MIN * max(diag.max(), 1.0):
        bad = np.nonzero(diag < _RCOND_MIN * max(diag.max(), 1.0))[0]
        raise ConditioningError(
            f"design is rank deficient or ill-conditioned (columns {bad.tolist()})",
            columns=bad,
        )
    coef = np.linalg.solve(r_mat, q_mat.T @ y)
    resid = y - design @ coef
    h = np.einsum("ij,ij->i", q_mat, q_mat)
    # guard h_ii -> 1 (interpolating rows); the LOO residual is then unbounded
    denom = np.clip(1.0 - h, 1e-12, None)
    eps_loo = float(np.mean((resid / denom) ** 2))
    if selected is None:
        selected = tuple(range(p))
    return OlsFit(coef, eps_loo, tuple(selected))


def hybrid_lar(design: np.ndarray, y: np.ndarray, candidates: MultiIndexSet) -> OlsFit:
    """LAR activation path, OLS refit per prefix, keep the prefix with least eps_loo.

    The constant column (zero multi-index) is always part of the model and is
    handled as an intercept outside the LAR path.
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if n < 2:
        raise ValidationError("need at least two observations")
    if p != len(candidates):
        raise ValidationError("candidate set does not align with design columns")

    idx_arr = candidates.as_array()
    const_pos = int(np.nonzero(~idx_arr.any(axis=1))[0][0])
    rest = [j for j in range(p) if j != const_pos]

    # drop degenerate columns before running LAR
    stds = design[:, rest].std(axis=0) if rest else np.empty(0)
    usable = [j for j, s in zip(rest, stds) if s > 1e-14]
    dropped = [j for j, s in zip(rest, stds) if s <= 1e-14]
    if dropped:
        warnings.warn(f"dropping zero-variance design columns {dropped}")

    order = []
    if usable:
        yc = y - y.mean()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, active, _ = lars_path(design[:, usable], yc, method="lar", verbose=False)
        order = [usable[j] for j in active]
    max_len = min(n - 1, p) - 1  # prefix length excluding the constant
    order = order[: max(max_len, 0)]

    best = None
    # require a meaningful improvement before accepting a larger prefix, so
    # exact fits do not tie-break on floating-point noise toward big models
    margin = 1e-12 * float(np.var(y) + 1.0)
    for k in range(len(order) + 1):
        cols = [const_pos] + order[:k]
        if len(cols) >= n:
            break
        try:
            fit = ols_fit(design[:, cols], y, selected=cols)
        except ConditioningError:
            continue
        if best is None or fit.eps_loo < best.eps_loo - margin:
            best = fit

    if best is None:  # empty/degenerate path: constant-only fallback
        best = ols_fit(design[:, [const_pos]], y, selected=[const_pos])
    cols = list(best.selected)
    keep = sorted(range(len(cols)), key=lambda i: cols[i])
    positions = [cols[i] for i in keep]
    selected = tuple(candidates.indices[j] for j in positions)
    return OlsFit(best.coefficients[keep], best.eps_loo, selected)
