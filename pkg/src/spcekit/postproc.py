"""Post-processing of fitted surrogates: sampling, moments, Sobol' indices,
conditional densities, and the Wasserstein-2 validation metric."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .basis import eval_design_matrix
from .distributions import latent_marginal
from .exceptions import ValidationError
from .spce.likelihood import conditional_density
from .spce.model import SpceModel, default_nq

#: u-grid clipped away from 0 and 1 to keep heavy-tailed quantiles integrable
U_CLIP = 1e-4
#: default number of surrogate draws behind empirical quantiles
N_QUANTILE_SAMPLES = 10_000


@dataclass(frozen=True)
class QuantileGrid:
    """Quantile function sampled on a strictly increasing grid in (0, 1)."""

    u: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if u.ndim != 1 or v.shape != u.shape:
            raise ValidationError("u and values must be 1-d arrays of equal length")
        if np.any(np.diff(u) <= 0) or u[0] <= 0 or u[-1] >= 1:
            raise ValidationError("u must be strictly increasing inside (0, 1)")
        if np.any(np.diff(v) < 0):
            raise ValidationError("quantile values must be nondecreasing")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "values", v)

    def resample(self, u) -> "QuantileGrid":
        return QuantileGrid(u, np.interp(u, self.u, self.values))


def default_u_grid(n: int = 1001) -> np.ndarray:
    return np.linspace(U_CLIP, 1.0 - U_CLIP, n)


def quantiles_from_samples(samples, u_grid) -> QuantileGrid:
    """Empirical quantiles: order statistics at (k - 1/2)/n, interpolated."""
    samples = np.sort(np.asarray(samples, dtype=float))
    n = samples.size
    positions = (np.arange(n) + 0.5) / n
    return QuantileGrid(np.asarray(u_grid, dtype=float),
                        np.interp(u_grid, positions, samples))


# ---------------------------------------------------------------------------
# sampling and moments
# ---------------------------------------------------------------------------

def _check_support(model: SpceModel, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    for j, m in enumerate(model.input_marginals):
        if not np.all(m.contains(x[:, j])):
            raise ValidationError(f"input outside support of marginal {j}")
    return x


def sample_conditional(model: SpceModel, x, n: int, seed=None, rng=None) -> np.ndarray:
    """Draws of the surrogate response at a fixed input point."""
    if n < 1:
        raise ValidationError("need n >= 1 samples")
    x = _check_support(model, x)
    if rng is None:
        rng = np.random.default_rng(seed)
    x_std = model.standardize(x)[0]
    z = latent_marginal(model.latent).rvs(n, rng)
    pts = np.column_stack([np.tile(x_std, (n, 1)), z])
    psi = eval_design_matrix(model.basis, model.families, pts)
    return psi @ model.coefficients + model.sigma * rng.standard_normal(n)


def sample_unconditional(model: SpceModel, n: int, seed=None, rng=None) -> np.ndarray:
    """Draws of the surrogate response with inputs sampled from their marginals."""
    if n < 1:
        raise ValidationError("need n >= 1 samples")
    if rng is None:
        rng = np.random.default_rng(seed)
    cols = [m.standard.rvs(n, rng) for m in model.input_marginals]
    z = latent_marginal(model.latent).rvs(n, rng)
    pts = np.column_stack(cols + [z])
    psi = eval_design_matrix(model.basis, model.families, pts)
    return psi @ model.coefficients + model.sigma * rng.standard_normal(n)


def mean_function(model: SpceModel, x) -> np.ndarray:
    """Conditional mean: the zero-latent-degree part of the expansion."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_std = model.standardize(x)
    mask = model.mean_mask()
    sub = model.basis.restrict(mask)
    pts = np.column_stack([x_std, np.zeros(len(x_std))])
    psi = eval_design_matrix(sub, model.families, pts)
    return psi @ model.coefficients[mask]


def variance_function(model: SpceModel, x) -> np.ndarray:
    """Conditional variance: squared non-mean terms plus the noise floor."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_std = model.standardize(x)
    mask = ~model.mean_mask()
    if not mask.any():
        return np.full(len(x_std), model.sigma**2)
    arr = model.basis.as_array()[mask]
    psi_x = np.ones((len(x_std), int(mask.sum())))
    for k in range(model.basis.dim - 1):
        max_deg = int(arr[:, k].max())
        phi = model.families[k].eval_all(max_deg, x_std[:, k])
        psi_x *= phi[:, arr[:, k]]
    # terms sharing a latent degree are fully correlated through phi_k(Z):
    # group them before squaring so the variance is exact, not just in
    # expectation over the inputs
    weighted = psi_x * model.coefficients[mask]
    out = np.zeros(len(x_std))
    for k in np.unique(arr[:, -1]):
        out += weighted[:, arr[:, -1] == k].sum(axis=1) ** 2
    return out + model.sigma**2


# ---------------------------------------------------------------------------
# Sobol' indices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SobolReport:
    first_order: np.ndarray
    total: np.ndarray
    higher_order: dict
    mean_first_order: np.ndarray
    mean_total: np.ndarray
    mean_higher_order: dict
    denominator_zero: bool
    mean_denominator_zero: bool

    def to_dict(self):
        return {
            "first_order": self.first_order.tolist(),
            "total": self.total.tolist(),
            "higher_order": {",".join(map(str, k)): v for k, v in self.higher_order.items()},
            "mean_first_order": self.mean_first_order.tolist(),
            "mean_total": self.mean_total.tolist(),
            "mean_higher_order": {
                ",".join(map(str, k)): v for k, v in self.mean_higher_order.items()
            },
            "denominator_zero": self.denominator_zero,
            "mean_denominator_zero": self.mean_denominator_zero,
        }


def sobol_indices(model: SpceModel, subsets=()) -> SobolReport:
    """Classical and mean-function Sobol' indices from the coefficients.

    Classical indices normalize by the total surrogate variance (all non-zero
    coefficients squared plus sigma^2); mean-function indices normalize by
    the variance of the mean function only.
    """
    arr = model.basis.as_array()
    c2 = model.coefficients**2
    m = model.n_inputs
    nonzero = arr.any(axis=1)
    mean_mask = (arr[:, -1] == 0) & nonzero

    denom = float(c2[nonzero].sum() + model.sigma**2)
    denom_m = float(c2[mean_mask].sum())
    dz, dzm = denom <= 0.0, denom_m <= 0.0

    def ratio(num, d, zero):
        return 0.0 if zero else float(num) / d

    def closed_mask(u):
        # exactly the inputs in u active, latent inactive
        in_u = np.zeros(m + 1, dtype=bool)
        in_u[list(u)] = True
        active = arr != 0
        return (active[:, list(u)].all(axis=1)
                & ~active[:, ~in_u].any(axis=1)) if u else np.zeros(len(arr), bool)

    first = np.array([ratio(c2[closed_mask((i,))].sum(), denom, dz) for i in range(m)])
    total = np.array([ratio(c2[arr[:, i] != 0].sum(), denom, dz) for i in range(m)])
    first_m = np.array([ratio(c2[closed_mask((i,))].sum(), denom_m, dzm) for i in range(m)])
    total_m = np.array([ratio(c2[(arr[:, i] != 0) & mean_mask].sum(), denom_m, dzm)
                        for i in range(m)])

    higher, higher_m = {}, {}
    for u in subsets:
        u = tuple(sorted(u))
        if any(i < 0 or i >= m for i in u):
            raise ValidationError(f"subset {u} outside input dimensions 0..{m - 1}")
        msk = closed_mask(u)
        higher[u] = ratio(c2[msk].sum(), denom, dz)
        higher_m[u] = ratio(c2[msk].sum(), denom_m, dzm)

    return SobolReport(first, total, higher, first_m, total_m, higher_m, dz, dzm)


def variance_shares(model: SpceModel) -> dict:
    """Complete variance decomposition of the surrogate, summing to 1.

    Keys are tuples of active dimensions (index M means the latent variable)
    plus the special key "noise" for the sigma^2 share.
    """
    arr = model.basis.as_array()
    c2 = model.coefficients**2
    nonzero = arr.any(axis=1)
    denom = float(c2[nonzero].sum() + model.sigma**2)
    shares = {}
    for alpha, csq in zip(arr, c2):
        if not alpha.any():
            continue
        key = tuple(int(i) for i in np.nonzero(alpha)[0])
        shares[key] = shares.get(key, 0.0) + float(csq) / denom
    shares["noise"] = model.sigma**2 / denom
    return shares


# ---------------------------------------------------------------------------
# densities and validation metric
# ---------------------------------------------------------------------------

def conditional_pdf(model: SpceModel, x, y_grid, n_points: int | None = None) -> np.ndarray:
    """Quadrature evaluation of the conditional response density on a grid.

    The default node count grows as sigma shrinks: the discrete latent rule
    must resolve the Gaussian smoothing kernel, so the node spacing has to
    stay below sigma or the mixture renders as separated bumps.
    """
    x = _check_support(model, x)
    y_grid = np.asarray(y_grid, dtype=float)
    if n_points is None:
        n_points = max(default_nq(int(model.basis.z_degrees().max())),
                       min(512, int(np.ceil(8.0 / model.sigma**2))))
    dens = conditional_density(
        model.coefficients, model.sigma, model.standardize(x)[0], y_grid,
        model.latent_rule(n_points), model.basis, model.families,
    )
    mass = float(np.trapezoid(dens, y_grid))
    if mass < 0.99:
        warnings.warn(f"y grid captures only {mass:.3f} of the probability mass")
    return dens


def wasserstein2(a: QuantileGrid, b: QuantileGrid) -> float:
    """Squared Wasserstein-2 distance via trapezoid integration of (Q1 - Q2)^2."""
    if not np.array_equal(a.u, b.u):
        u = a.u if a.u.size >= b.u.size else b.u
        a, b = a.resample(u), b.resample(u)
    diff = a.values - b.values
    return float(np.trapezoid(diff * diff, a.u))


def surrogate_quantiles(model: SpceModel, x, u_grid, n: int = N_QUANTILE_SAMPLES,
                        seed=None, rng=None) -> QuantileGrid:
    draws = sample_conditional(model, x, n, seed=seed, rng=rng)
    return quantiles_from_samples(draws, u_grid)


def error_metric(model: SpceModel, reference, test_x, var_y: float, u_grid=None,
                 n_samples: int = N_QUANTILE_SAMPLES, seed=None) -> float:
    """Mean Wasserstein-2 distance to the reference, normalized by Var[Y].

    ``reference`` maps (x, u_grid) to a QuantileGrid of the true conditional
    distribution at x.
    """
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    if len(test_x) == 0:
        raise ValidationError("need at least one test point")
    if not var_y > 0:
        raise ValidationError("var_y must be positive")
    if u_grid is None:
        u_grid = default_u_grid()
    rng = np.random.default_rng(seed)
    total = 0.0
    for x in test_x:
        qs = surrogate_quantiles(model, x, u_grid, n=n_samples, rng=rng)
        total += wasserstein2(qs, reference(x, u_grid))
    return total / len(test_x) / var_y


def oracle_normal_error(mean_fn, var_fn, reference, test_x, var_y: float,
                        u_grid=None) -> float:
    """Error of the normal approximation with the true conditional moments."""
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    if u_grid is None:
        u_grid = default_u_grid()
    zq = stats.norm.ppf(u_grid)
    total = 0.0
    for x in test_x:
        mu = float(np.asarray(mean_fn(x)).reshape(-1)[0])
        sd = float(np.sqrt(np.asarray(var_fn(x)).reshape(-1)[0]))
        normal_q = QuantileGrid(u_grid, mu + sd * zq)
        total += wasserstein2(normal_q, reference(x, u_grid))
    return total / len(test_x) / var_y
