"""Fitting the stochastic PCE: MLE, warm start, CV-based sigma selection,
and the adaptive search over latent distributions and truncation schemes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..basis import MultiIndexSet, eval_design_matrix, hyperbolic_set, mean_subset
from ..distributions import latent_marginal
from ..exceptions import FitError, ValidationError
from ..linreg import OlsFit, hybrid_lar, ols_fit
from ..orthopoly import family_for_marginal, gauss_rule
from .likelihood import LOG_FLOOR, LikelihoodCache
from .model import SpceModel, default_nq

#: number of sigma levels in the warm-start schedule
N_WARM_LEVELS = 5
#: sigma search bracket, as multiples of sqrt(eps_loo)
SIGMA_BRACKET = (0.05, 1.0)
#: coarse grid size and golden-section budget of the sigma search
SIGMA_COARSE = 4
SIGMA_BUDGET = 12

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptResult:
    coefficients: np.ndarray
    nll: float
    converged: bool
    n_iter: int


@dataclass
class SigmaSelection:
    sigma: float
    score: float
    trace: list  # (sigma, cv_score) in evaluation order
    coefficients: np.ndarray
    eps_loo: float


@dataclass
class FitReport:
    cv_score: float
    sigma_trace: list
    chosen: tuple  # (latent_id, p, q)
    n_folds: int
    seeds: dict
    candidates: list = field(default_factory=list)

    def to_dict(self):
        return {
            "cv_score": self.cv_score,
            "sigma_trace": [[s, v] for s, v in self.sigma_trace],
            "chosen": {"latent": self.chosen[0], "p": self.chosen[1], "q": self.chosen[2]},
            "n_folds": self.n_folds,
            "seeds": self.seeds,
            "candidates": self.candidates,
        }


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def build_families(marginals, latent_id, max_x_degree, max_z_degree, nq=None):
    if nq is None:
        nq = default_nq(max_z_degree)
    fams = [family_for_marginal(m, max(int(max_x_degree), 1)) for m in marginals]
    fams.append(family_for_marginal(latent_marginal(latent_id), max(nq, int(max_z_degree))))
    return tuple(fams)


def standardize_inputs(inputs, marginals):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    return np.column_stack([m.standardize(inputs[:, j]) for j, m in enumerate(marginals)])


def make_cache(basis, marginals, latent_id, inputs, outputs, nq=None) -> LikelihoodCache:
    arr = basis.as_array()
    max_x = int(arr[:, :-1].max()) if basis.dim > 1 else 0
    max_z = int(arr[:, -1].max())
    if nq is None:
        nq = default_nq(max_z)
    families = build_families(marginals, latent_id, max_x, max_z, nq)
    rule = gauss_rule(families[-1], nq)
    x_std = standardize_inputs(inputs, marginals)
    return LikelihoodCache(basis, families, rule, x_std, np.asarray(outputs, dtype=float))


def n_folds_for(n: int) -> int:
    """CV fold count by dataset size: 10 below 200, 5 below 1000, else 3."""
    if n < 200:
        return 10
    if n < 1000:
        return 5
    return 3


def make_folds(n: int, k: int, rng) -> list:
    """Seeded random partition into k contiguous blocks of near-equal size."""
    perm = rng.permutation(n)
    return [np.sort(block) for block in np.array_split(perm, k)]


def init_coefficients(n_basis, mean_positions, mean_coef, y_scale, rng) -> np.ndarray:
    """Mean-fit coefficients on their slots, small seeded noise elsewhere."""
    c0 = rng.uniform(-0.1 * y_scale, 0.1 * y_scale, size=n_basis)
    c0[np.asarray(mean_positions, dtype=int)] = mean_coef
    return c0


# ---------------------------------------------------------------------------
# MLE and warm start
# ---------------------------------------------------------------------------

def _mle(cache: LikelihoodCache, sigma: float, init_c, gtol=1e-6, maxiter=500) -> OptResult:
    init_c = np.asarray(init_c, dtype=float)
    res = optimize.minimize(
        cache.nll_grad, init_c, args=(sigma,), method="BFGS", jac=True,
        options={"gtol": gtol, "maxiter": maxiter},
    )
    c = np.asarray(res.x, dtype=float)
    if not np.all(np.isfinite(c)):
        raise FitError("optimizer returned non-finite coefficients")
    return OptResult(c, float(res.fun), bool(res.success) or res.nit < maxiter, int(res.nit))


def mle_fit(dataset, sigma: float, basis: MultiIndexSet, init_c, latent_id="normal",
            nq=None) -> np.ndarray:
    """Local maximizer of the summed quadrature log-likelihood from init_c."""
    if not sigma > 0:
        raise ValidationError("sigma must be strictly positive")
    cache = make_cache(basis, dataset.marginals, latent_id, dataset.inputs,
                       dataset.outputs, nq=nq)
    return _mle(cache, sigma, init_c).coefficients


def sigma_schedule(eps_loo: float, sigma_target: float, n_levels=N_WARM_LEVELS) -> np.ndarray:
    top = math.sqrt(eps_loo)
    if sigma_target >= top or math.isclose(sigma_target, top, rel_tol=1e-12):
        return np.array([sigma_target])
    sched = np.exp(np.linspace(math.log(top), math.log(sigma_target), n_levels))
    sched[0], sched[-1] = top, sigma_target
    return sched


def _warm_start(cache: LikelihoodCache, sigma_target: float, eps_loo: float,
                c0) -> np.ndarray:
    c = np.asarray(c0, dtype=float)
    for level, sigma in enumerate(sigma_schedule(eps_loo, sigma_target)):
        try:
            c = _mle(cache, sigma, c).coefficients
        except FitError as exc:
            raise FitError(f"warm start failed at schedule level {level} "
                           f"(sigma={sigma:.4g}): {exc}") from exc
    return c


def warm_start_fit(dataset, sigma_target: float, basis: MultiIndexSet, mean_fit: OlsFit,
                   seed, latent_id="normal", nq=None) -> np.ndarray:
    """Chain MLE solves along a decreasing log-spaced sigma schedule."""
    cache = make_cache(basis, dataset.marginals, latent_id, dataset.inputs,
                       dataset.outputs, nq=nq)
    positions = [basis.indices.index(alpha) for alpha in mean_fit.selected]
    rng = np.random.default_rng(seed)
    c0 = init_coefficients(len(basis), positions, mean_fit.coefficients,
                           float(np.std(dataset.outputs)), rng)
    return _warm_start(cache, sigma_target, mean_fit.eps_loo, c0)


# ---------------------------------------------------------------------------
# cross-validation over sigma
# ---------------------------------------------------------------------------

def _fold_seed(base_seed, fold) -> np.random.SeedSequence:
    """Init seed tied to the fold's membership, not its position in the list,
    so permuting the fold order cannot change any per-fold computation."""
    return np.random.SeedSequence([int(base_seed)] + [int(i) for i in fold])


def _cv_score(cache: LikelihoodCache, sigma: float, folds, mean_positions,
              base_seed) -> float:
    y_scale = float(np.std(cache.y))
    total = 0.0
    n = cache.n_points
    for fold in folds:
        train = np.setdiff1d(np.arange(n), fold)
        sub = cache.subset(train)
        try:
            mfit = ols_fit(sub.psi_x[:, mean_positions], sub.y)
            eps = max(mfit.eps_loo, 1e-12 * (1.0 + y_scale * y_scale))
            rng = np.random.default_rng(_fold_seed(base_seed, fold))
            c0 = init_coefficients(len(cache.basis), mean_positions,
                                   mfit.coefficients, y_scale, rng)
            c = _warm_start(sub, sigma, eps, c0)
        except Exception:
            return float("-inf")  # conservative: a failed fold sinks the candidate
        held = cache.subset(fold)
        ll = np.maximum(held.log_point_likelihoods(c, sigma), LOG_FLOOR)
        total += float(ll.sum())
    return total


def cv_sigma_score(dataset, sigma: float, basis: MultiIndexSet, folds,
                   mean_fit: OlsFit, seed=0, latent_id="normal", nq=None) -> float:
    """Summed out-of-sample log-likelihood of sigma across the given folds."""
    cache = make_cache(basis, dataset.marginals, latent_id, dataset.inputs,
                       dataset.outputs, nq=nq)
    positions = [basis.indices.index(alpha) for alpha in mean_fit.selected]
    return _cv_score(cache, sigma, folds, positions, seed)


def _golden_max(fn, lo, hi, budget):
    """Golden-section search maximizing a memoized scalar function."""
    a, b = lo, hi
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(max(budget - 2, 0)):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = fn(x2)


def _select_sigma(cache: LikelihoodCache, eps_loo: float, folds, mean_positions,
                  seed) -> SigmaSelection:
    if not eps_loo > 0:
        raise ValidationError("eps_loo must be strictly positive")
    final_seed = np.random.SeedSequence([int(seed), 977]).generate_state(1)[0]

    lo = math.log(SIGMA_BRACKET[0] * math.sqrt(eps_loo))
    hi = math.log(SIGMA_BRACKET[1] * math.sqrt(eps_loo))
    memo, trace = {}, []

    def score_at(log_sigma):
        key = round(log_sigma, 10)
        if key not in memo:
            sigma = math.exp(log_sigma)
            val = _cv_score(cache, sigma, folds, mean_positions, seed)
            memo[key] = val
            trace.append((sigma, val))
        return memo[key]

    grid = np.linspace(lo, hi, SIGMA_COARSE)
    scores = [score_at(g) for g in grid]
    best_i = int(np.argmax(scores))
    sub_lo = grid[max(best_i - 1, 0)]
    sub_hi = grid[min(best_i + 1, SIGMA_COARSE - 1)]
    _golden_max(score_at, sub_lo, sub_hi, SIGMA_BUDGET)

    if all(not math.isfinite(v) for _, v in trace):
        raise FitError("sigma selection failed: every CV evaluation diverged")
    sigma_hat, best = max(trace, key=lambda sv: sv[1])

    # final refit on all data at the selected sigma
    mfit = ols_fit(cache.psi_x[:, mean_positions], cache.y)
    rng = np.random.default_rng(final_seed)
    c0 = init_coefficients(len(cache.basis), mean_positions, mfit.coefficients,
                           float(np.std(cache.y)), rng)
    c_final = _warm_start(cache, sigma_hat, max(mfit.eps_loo, 1e-300), c0)
    return SigmaSelection(sigma_hat, best, trace, c_final, eps_loo)


def select_sigma(dataset, basis: MultiIndexSet, eps_loo: float, mean_fit: OlsFit,
                 seed=0, latent_id="normal", folds=None, nq=None) -> SigmaSelection:
    """Maximize the CV score over sigma in [0.05, 1] * sqrt(eps_loo)."""
    cache = make_cache(basis, dataset.marginals, latent_id, dataset.inputs,
                       dataset.outputs, nq=nq)
    if folds is None:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
        folds = make_folds(cache.n_points, n_folds_for(cache.n_points), rng)
    positions = [basis.indices.index(alpha) for alpha in mean_fit.selected]
    return _select_sigma(cache, eps_loo, folds, positions, seed)


# ---------------------------------------------------------------------------
# adaptive construction (latent distribution, degree, q-norm)
# ---------------------------------------------------------------------------

def _candidate_seed(seed, latent_idx, p, q) -> int:
    # order-independent derivation so early stopping cannot shift seeds
    ss = np.random.SeedSequence([int(seed), latent_idx, int(p), int(round(q * 1000))])
    return int(ss.generate_state(1)[0])


def _reduced_basis(full: MultiIndexSet, selected_mean) -> MultiIndexSet:
    selected = set(selected_mean)
    keep = [alpha for alpha in full if alpha[-1] != 0 or alpha in selected]
    return MultiIndexSet(tuple(keep), full.p, full.q, full.dim)


def adaptive_build(dataset, latent_candidates=("normal", "uniform"),
                   degrees=(1, 2, 3, 4, 5), qnorms=(0.5, 0.75, 1.0), seed=0,
                   nq=None):
    """Explore (latent, p, q) with early stopping; return the best CV-scored model.

    The q loop stops after two consecutive non-improvements over the running
    best of the current degree; the degree loop stops when a degree's best
    score falls below the running best of smaller degrees. Every latent
    candidate is always explored.
    """
    degrees = sorted(degrees)
    qnorms = sorted(qnorms)
    inputs = np.atleast_2d(np.asarray(dataset.inputs, dtype=float))
    y = np.asarray(dataset.outputs, dtype=float)
    n, m = inputs.shape
    x_std = standardize_inputs(inputs, dataset.marginals)
    y_scale = float(np.std(y))

    k_folds = n_folds_for(n)
    folds = make_folds(n, k_folds, np.random.default_rng(np.random.SeedSequence([int(seed), 101])))

    # mean-function selection depends only on (p, q), cache it across latents
    mean_cache = {}

    def mean_selection(p, q):
        if (p, q) not in mean_cache:
            full = hyperbolic_set(p, q, m + 1)
            am = mean_subset(full)
            fams = build_families(dataset.marginals, "normal", p, 0, nq=2)
            design = eval_design_matrix(am, fams, np.column_stack([x_std, np.zeros(n)]))
            mfit = hybrid_lar(design, y, am)
            eps = max(mfit.eps_loo, 1e-12 * (1.0 + y_scale * y_scale))
            mean_cache[(p, q)] = (full, mfit, eps)
        return mean_cache[(p, q)]

    candidates, errors = [], []
    best = None

    for zi, latent_id in enumerate(latent_candidates):
        best_latent = float("-inf")
        for p in degrees:
            best_p = float("-inf")
            stall = 0
            for q in qnorms:
                full, mfit, eps_loo = mean_selection(p, q)
                basis_red = _reduced_basis(full, mfit.selected)
                cand_seed = _candidate_seed(seed, zi, p, q)
                try:
                    cache = make_cache(basis_red, dataset.marginals, latent_id,
                                       inputs, y, nq=nq)
                    positions = [basis_red.indices.index(a) for a in mfit.selected]
                    sel = _select_sigma(cache, eps_loo, folds, positions, cand_seed)
                except Exception as exc:
                    errors.append({"latent": latent_id, "p": p, "q": q, "error": str(exc)})
                    continue
                rec = {
                    "latent": latent_id, "p": p, "q": float(q),
                    "sigma": sel.sigma, "cv_score": sel.score,
                    "n_basis": len(basis_red), "eps_loo": eps_loo,
                }
                candidates.append(rec)
                if best is None or sel.score > best[0]:
                    best = (sel.score, latent_id, p, float(q), basis_red, sel)
                if sel.score > best_p:
                    best_p = sel.score
                    stall = 0
                else:
                    stall += 1
                    if stall >= 2:
                        break
            if best_p <= best_latent:
                break
            best_latent = best_p

    if best is None:
        raise FitError(f"adaptive build failed for every candidate: {errors}")

    score, latent_id, p, q, basis_red, sel = best
    model = SpceModel(
        basis=basis_red,
        coefficients=sel.coefficients,
        sigma=sel.sigma,
        latent=latent_id,
        input_marginals=tuple(dataset.marginals),
        metadata={"cv_score": score, "eps_loo": sel.eps_loo,
                  "chosen": {"latent": latent_id, "p": p, "q": q}, "seed": int(seed)},
    )
    report = FitReport(
        cv_score=score,
        sigma_trace=sel.trace,
        chosen=(latent_id, p, q),
        n_folds=k_folds,
        seeds={"master": int(seed)},
        candidates=candidates + ([{"failures": errors}] if errors else []),
    )
    return model, report
