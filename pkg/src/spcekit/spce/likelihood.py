"""Quadrature likelihood of the stochastic PCE and its analytic gradient.

For one observation (x, y) the likelihood of the coefficients given sigma is

    l(c; x, y, sigma) = sum_j w_j * N(y | m_j(x; c), sigma^2),

where m_j is the PCE evaluated at the j-th latent quadrature node. Because
the basis is a tensor product, the node values factor into an input part
Psi_x (N x K) and a latent part Pz (N_Q x K), and the whole likelihood and
gradient assemble from two matrix products.
"""
from __future__ import annotations

import numpy as np

from ..basis import MultiIndexSet, eval_design_matrix
from ..exceptions import ValidationError
from ..orthopoly import QuadratureRule

_LOG_2PI = float(np.log(2.0 * np.pi))

#: severe but finite penalty replacing log-likelihoods that underflow
LOG_FLOOR = -700.0


def _split_design(basis: MultiIndexSet, families, x_std: np.ndarray, nodes: np.ndarray):
    """Input-part and latent-part factors of the tensor basis."""
    arr = basis.as_array()
    n = x_std.shape[0]
    psi_x = np.ones((n, len(basis)))
    for k in range(basis.dim - 1):
        max_deg = int(arr[:, k].max())
        phi = families[k].eval_all(max_deg, x_std[:, k])
        psi_x *= phi[:, arr[:, k]]
    z_deg = arr[:, -1]
    phi_z = families[-1].eval_all(int(z_deg.max()), nodes)
    pz = phi_z[:, z_deg]
    return psi_x, pz


class LikelihoodCache:
    """Precomputed basis factors for one dataset and one truncation set."""

    def __init__(self, basis: MultiIndexSet, families, rule: QuadratureRule,
                 x_std: np.ndarray, y: np.ndarray):
        x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
        if x_std.shape[1] != basis.dim - 1:
            raise ValidationError("input columns must match basis dimension minus latent")
        self.basis = basis
        self.families = tuple(families)
        self.rule = rule
        self.y = np.asarray(y, dtype=float)
        self.psi_x, self.pz = _split_design(basis, families, x_std, rule.nodes)
        # extreme Gauss nodes can underflow to weight 0; floor before the log
        self.log_w = np.log(np.maximum(rule.weights, 1e-300))
        self.n_floored = 0

    @property
    def n_points(self) -> int:
        return self.y.size

    def subset(self, rows) -> "LikelihoodCache":
        sub = object.__new__(LikelihoodCache)
        sub.basis = self.basis
        sub.families = self.families
        sub.rule = self.rule
        sub.y = self.y[rows]
        sub.psi_x = self.psi_x[rows]
        sub.pz = self.pz
        sub.log_w = self.log_w
        sub.n_floored = 0
        return sub

    def node_values(self, c) -> np.ndarray:
        """PCE value at every (data point, quadrature node) pair."""
        return self.psi_x @ (self.pz * c).T

    def log_point_likelihoods(self, c, sigma) -> np.ndarray:
        if sigma <= 0:
            raise ValidationError("sigma must be strictly positive")
        r = self.y[:, None] - self.node_values(np.asarray(c, dtype=float))
        t = self.log_w[None, :] - r * r / (2.0 * sigma * sigma)
        tmax = t.max(axis=1)
        logl = tmax + np.log(np.exp(t - tmax[:, None]).sum(axis=1))
        logl -= np.log(sigma) + 0.5 * _LOG_2PI
        return logl

    def nll_grad(self, c, sigma):
        """Negative total log-likelihood and its gradient w.r.t. c.

        Underflowing points are floored at LOG_FLOOR (counted in
        ``self.n_floored``); their gradient contribution is kept, which
        points the optimizer back toward positive density.
        """
        c = np.asarray(c, dtype=float)
        sig2 = sigma * sigma
        r = self.y[:, None] - self.node_values(c)
        t = self.log_w[None, :] - r * r / (2.0 * sig2)
        tmax = t.max(axis=1)
        expt = np.exp(t - tmax[:, None])
        sums = expt.sum(axis=1)
        logl = tmax + np.log(sums) - np.log(sigma) - 0.5 * _LOG_2PI
        floored = logl < LOG_FLOOR
        if floored.any():
            self.n_floored += int(floored.sum())
            logl = np.maximum(logl, LOG_FLOOR)
        value = -float(logl.sum())
        p = expt / sums[:, None]
        w = p * r
        grad = -((self.psi_x.T @ w) * self.pz.T).sum(axis=1) / sig2
        return value, grad


def point_likelihood(c, sigma: float, x_std, y: float, rule: QuadratureRule,
                     basis: MultiIndexSet, families) -> float:
    """Likelihood of one observation; bounded above by 1 / (sigma * sqrt(2 pi))."""
    cache = LikelihoodCache(basis, families, rule, np.atleast_2d(x_std), [y])
    return float(np.exp(cache.log_point_likelihoods(c, sigma)[0]))


def neg_log_likelihood(c, sigma: float, x_std, y, rule: QuadratureRule,
                       basis: MultiIndexSet, families):
    """Summed negative log-likelihood over a dataset, with analytic gradient."""
    cache = LikelihoodCache(basis, families, rule, x_std, y)
    return cache.nll_grad(c, sigma)


def conditional_density(c, sigma: float, x_std, y_grid, rule: QuadratureRule,
                        basis: MultiIndexSet, families) -> np.ndarray:
    """Conditional PDF of the surrogate at one input, on a grid of outputs."""
    y_grid = np.asarray(y_grid, dtype=float)
    cache = LikelihoodCache(basis, families, rule, np.atleast_2d(x_std), [0.0])
    m = cache.node_values(np.asarray(c, dtype=float))[0]  # (N_Q,)
    r = y_grid[:, None] - m[None, :]
    dens = np.exp(-r * r / (2.0 * sigma * sigma)) / (sigma * np.sqrt(2.0 * np.pi))
    return dens @ rule.weights


def design_matrix(basis: MultiIndexSet, families, x_std, z) -> np.ndarray:
    """Full (x, z) design matrix; thin wrapper for callers holding raw columns."""
    pts = np.column_stack([np.atleast_2d(x_std), np.asarray(z, dtype=float)])
    return eval_design_matrix(basis, families, pts)
