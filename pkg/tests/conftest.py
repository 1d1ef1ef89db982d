"""Shared fixtures and factories for the test suite."""
import numpy as np
import pytest

from spcekit import Marginal, MultiIndexSet, hyperbolic_set
from spcekit.spce import SpceModel


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)


def toy_model(coefficients=None, sigma=0.1, latent="normal", p=2, q=1.0,
              marginals=(Marginal("uniform", (-1.0, 1.0)),)):
    """Small single-input surrogate with explicit coefficients."""
    basis = hyperbolic_set(p, q, len(marginals) + 1)
    if coefficients is None:
        coefficients = np.zeros(len(basis))
        coefficients[0] = 1.0
    return SpceModel(
        basis=basis,
        coefficients=np.asarray(coefficients, dtype=float),
        sigma=sigma,
        latent=latent,
        input_marginals=tuple(marginals),
    )


def constant_model(c0=3.0, sigma=1e-8, latent="normal"):
    basis = MultiIndexSet(((0, 0),), 0, 1.0, 2)
    return SpceModel(
        basis=basis,
        coefficients=np.array([c0]),
        sigma=sigma,
        latent=latent,
        input_marginals=(Marginal("uniform", (-1.0, 1.0)),),
    )
