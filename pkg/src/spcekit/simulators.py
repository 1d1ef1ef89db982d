"""Reference stochastic simulators and experimental-design generation.

Three benchmark simulators are bundled:

* ``gbm`` -- terminal value of a geometric Brownian motion, sampled directly
  from its lognormal terminal distribution.
* ``sir`` -- stochastic Susceptible-Infected-Recovered epidemic, simulated
  event by event (two exponential clocks per step, earlier event wins).
* ``bimodal`` -- analytical two-component Gaussian mixture whose component
  locations move with the input.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .distributions import Marginal
from .exceptions import ConfigurationError, ValidationError

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(fn):
            return fn
        return deco if not (len(a) == 1 and callable(a[0])) else a[0]


GBM_MARGINALS = (Marginal("uniform", (0.0, 0.1)), Marginal("uniform", (0.1, 0.4)))
SIR_MARGINALS = (
    Marginal("uniform", (1200.0, 1800.0)),
    Marginal("uniform", (20.0, 200.0)),
    Marginal("uniform", (0.5, 0.75)),
    Marginal("uniform", (0.5, 0.75)),
)
BIMODAL_MARGINALS = (Marginal("uniform", (0.0, 1.0)),)
SIR_POPULATION = 2000

SIMULATOR_MARGINALS = {
    "gbm": GBM_MARGINALS,
    "sir": SIR_MARGINALS,
    "bimodal": BIMODAL_MARGINALS,
}


@dataclass
class Dataset:
    """Experimental design plus one scalar output per design point."""

    inputs: np.ndarray
    outputs: np.ndarray
    marginals: tuple
    seed: int | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.inputs.shape[0] != self.outputs.size:
            raise ValidationError("one output per input row required")
        if self.inputs.shape[1] != len(self.marginals):
            raise ValidationError("marginal count must match input columns")
        for j, m in enumerate(self.marginals):
            if not np.all(m.contains(self.inputs[:, j])):
                raise ValidationError(f"inputs outside support of marginal {j}")

    def __len__(self):
        return self.outputs.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j + 1}" for j in range(self.inputs.shape[1])] + ["y"])
            for row, out in zip(self.inputs, self.outputs):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(out))])

    @classmethod
    def from_csv(cls, path, marginals, seed=None):
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        return cls(data[:, :-1], data[:, -1], tuple(marginals), seed=seed)

    def to_json(self, path):
        payload = {
            "marginals": [m.to_dict() for m in self.marginals],
            "seed": self.seed,
            "inputs": self.inputs.tolist(),
            "outputs": self.outputs.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(np.asarray(d["inputs"]), np.asarray(d["outputs"]),
                   tuple(Marginal.from_dict(m) for m in d["marginals"]), seed=d.get("seed"))


@dataclass(frozen=True)
class SirState:
    """Population counts during an SIR run; S + I + R == P always."""

    S: int
    I: int
    R: int
    t: float
    P: int = SIR_POPULATION

    def __post_init__(self):
        if min(self.S, self.I, self.R) < 0 or self.t < 0:
            raise ValidationError("negative count or time in SIR state")
        if self.S + self.I + self.R != self.P:
            raise ValidationError("SIR counts must sum to the population size")


# ---------------------------------------------------------------------------
# experimental designs
# ---------------------------------------------------------------------------

def lhs_design(n: int, marginals, seed=None, rng=None) -> np.ndarray:
    """Latin hypercube design mapped through the inverse marginal CDFs."""
    if n < 1:
        raise ValidationError("need n >= 1 design points")
    if rng is None:
        rng = np.random.default_rng(seed)
    cols = []
    for m in marginals:
        strata = (rng.permutation(n) + rng.uniform(size=n)) / n
        cols.append(m.ppf(strata))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# geometric Brownian motion
# ---------------------------------------------------------------------------

def gbm_draw(x1: float, x2: float, seed=None, rng=None) -> float:
    """One draw of the year-1 stock value: lognormal(x1 - x2^2/2, x2)."""
    if x2 <= 0:
        raise ValidationError("volatility must be positive")
    if rng is None:
        rng = np.random.default_rng(seed)
    return float(np.exp(x1 - 0.5 * x2 * x2 + x2 * rng.standard_normal()))


def gbm_batch(inputs, rng) -> np.ndarray:
    inputs = np.atleast_2d(inputs)
    x1, x2 = inputs[:, 0], inputs[:, 1]
    return np.exp(x1 - 0.5 * x2 * x2 + x2 * rng.standard_normal(len(inputs)))


def gbm_conditional_moments(x1, x2):
    """True mean and variance of the lognormal response."""
    mean = np.exp(x1)
    var = np.exp(2.0 * np.asarray(x1)) * (np.exp(np.asarray(x2) ** 2) - 1.0)
    return mean, var


def gbm_quantiles(x1, x2, u):
    return np.exp(x1 - 0.5 * x2 * x2 + x2 * stats.norm.ppf(u))


# ---------------------------------------------------------------------------
# stochastic SIR
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sir_batch_core(s0, i0, beta, gamma, pop, seeds):  # pragma: no cover - jitted
    out = np.empty(s0.shape[0], np.int64)
    for k in range(s0.shape[0]):
        np.random.seed(seeds[k])
        s, i = s0[k], i0[k]
        while i > 0:
            lam_i = beta[k] * s * i / pop
            lam_r = gamma[k] * i
            t_i = np.random.exponential(1.0 / lam_i) if lam_i > 0.0 else np.inf
            t_r = np.random.exponential(1.0 / lam_r) if lam_r > 0.0 else np.inf
            if not (np.isfinite(t_i) or np.isfinite(t_r)):
                break  # both channels disabled (gamma == 0 and no infections possible)
            if t_i < t_r:
                s -= 1
                i += 1
            else:
                i -= 1
        out[k] = s0[k] - s
    return out


def sir_run(s0: int, i0: int, beta: float, gamma: float, pop: int = SIR_POPULATION,
            seed=None, rng=None, record=False):
    """Exact event-driven SIR simulation; returns total new infections S0 - S_T.

    With ``record=True`` also returns the list of visited SirState objects.
    """
    s0, i0 = int(round(s0)), int(round(i0))
    if s0 < 0 or i0 < 0 or s0 + i0 > pop:
        raise ValidationError("need 0 <= S0, I0 and S0 + I0 <= P")
    if beta < 0 or gamma < 0:
        raise ValidationError("rates must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(seed)
    s, i, t = s0, i0, 0.0
    states = [SirState(s, i, pop - s - i, t, pop)] if record else None
    while i > 0:
        lam_i = beta * s * i / pop
        lam_r = gamma * i
        t_i = rng.exponential(1.0 / lam_i) if lam_i > 0 else np.inf
        t_r = rng.exponential(1.0 / lam_r) if lam_r > 0 else np.inf
        if not (np.isfinite(t_i) or np.isfinite(t_r)):
            break
        if t_i < t_r:
            s, i, t = s - 1, i + 1, t + t_i
        else:
            i, t = i - 1, t + t_r
        if record:
            states.append(SirState(s, i, pop - s - i, t, pop))
    y = s0 - s
    return (y, states) if record else y


def sir_batch(inputs, pop: int = SIR_POPULATION, seed=None) -> np.ndarray:
    """Vector of SIR outputs, one run per input row (S0, I0, beta, gamma)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    seeds = np.random.SeedSequence(seed).generate_state(len(inputs)).astype(np.uint32)
    s0 = np.rint(inputs[:, 0]).astype(np.int64)
    i0 = np.rint(inputs[:, 1]).astype(np.int64)
    if _HAVE_NUMBA:
        return _sir_batch_core(s0, i0, inputs[:, 2].copy(), inputs[:, 3].copy(),
                               float(pop), seeds)
    return np.array([
        sir_run(s0[k], i0[k], inputs[k, 2], inputs[k, 3], pop, seed=int(seeds[k]))
        for k in range(len(inputs))
    ])


# ---------------------------------------------------------------------------
# bimodal analytical example
# ---------------------------------------------------------------------------

# mixture weights implied by the density definition (0.5/1.25 and 0.75/1.25)
_BIMODAL_WEIGHTS = (0.4, 0.6)
_BIMODAL_SCALE = 1.25


def bimodal_means(x):
    """Component location parameters, before the 1/1.25 output scaling."""
    x = np.asarray(x, dtype=float)
    base = 5.0 * np.sin(np.pi * x) ** 2
    return base + 5.0 * x - 2.5, base - 5.0 * x + 2.5


def bimodal_draw(x: float, seed=None, rng=None) -> float:
    """One exact draw from the two-component mixture response at input x."""
    if not 0.0 <= x <= 1.0:
        raise ValidationError("x must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng(seed)
    m1, m2 = bimodal_means(x)
    m = m1 if rng.uniform() < _BIMODAL_WEIGHTS[0] else m2
    return float((m + rng.standard_normal()) / _BIMODAL_SCALE)


def bimodal_batch(x, rng) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    m1, m2 = bimodal_means(x)
    pick = rng.uniform(size=x.size) < _BIMODAL_WEIGHTS[0]
    m = np.where(pick, m1, m2)
    return (m + rng.standard_normal(x.size)) / _BIMODAL_SCALE


def bimodal_pdf(x, y):
    m1, m2 = bimodal_means(x)
    y = np.asarray(y, dtype=float)
    s = _BIMODAL_SCALE
    return 0.5 * stats.norm.pdf(s * y - m1) + 0.75 * stats.norm.pdf(s * y - m2)


def bimodal_cdf(x, y):
    m1, m2 = bimodal_means(x)
    y = np.asarray(y, dtype=float)
    s = _BIMODAL_SCALE
    w1, w2 = _BIMODAL_WEIGHTS
    return w1 * stats.norm.cdf(s * y - m1) + w2 * stats.norm.cdf(s * y - m2)


def bimodal_quantiles(x, u) -> np.ndarray:
    """Numeric inversion of the mixture CDF by vectorized bisection."""
    u = np.asarray(u, dtype=float)
    m1, m2 = bimodal_means(x)
    lo = np.full(u.shape, (min(m1, m2) - 10.0) / _BIMODAL_SCALE)
    hi = np.full(u.shape, (max(m1, m2) + 10.0) / _BIMODAL_SCALE)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = bimodal_cdf(x, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def bimodal_conditional_moments(x):
    m1, m2 = bimodal_means(np.asarray(x, dtype=float))
    w1, w2 = _BIMODAL_WEIGHTS
    s = _BIMODAL_SCALE
    mean = (w1 * m1 + w2 * m2) / s
    second = (w1 * (m1**2 + 1.0) + w2 * (m2**2 + 1.0)) / s**2
    return mean, second - mean**2


# ---------------------------------------------------------------------------
# generic front end
# ---------------------------------------------------------------------------

def simulator_marginals(simulator_id: str) -> tuple:
    try:
        return SIMULATOR_MARGINALS[simulator_id]
    except KeyError:
        raise ConfigurationError(f"unknown simulator id: {simulator_id!r}")


def run_simulator(simulator_id: str, inputs, seed=None) -> np.ndarray:
    """One output draw per input row, reproducible under the given seed."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    rng = np.random.default_rng(seed)
    if simulator_id == "gbm":
        return gbm_batch(inputs, rng)
    if simulator_id == "sir":
        return sir_batch(inputs, seed=seed).astype(float)
    if simulator_id == "bimodal":
        return bimodal_batch(inputs[:, 0], rng)
    raise ConfigurationError(f"unknown simulator id: {simulator_id!r}")


def make_dataset(simulator_id: str, n: int, seed=None) -> Dataset:
    """LHS design of size n plus one simulator evaluation per point."""
    marginals = simulator_marginals(simulator_id)
    ss = np.random.SeedSequence(seed)
    design_seed, run_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    inputs = lhs_design(n, marginals, seed=design_seed)
    outputs = run_simulator(simulator_id, inputs, seed=run_seed)
    return Dataset(inputs, outputs, marginals, seed=seed)


def reference_quantiles(simulator_id: str, x, u_grid, seed=None, n_rep: int = 10_000):
    """Conditional quantiles of the true response at one input point.

    Analytic for gbm and bimodal; empirical from seeded replications for sir.
    """
    from .postproc import QuantileGrid, quantiles_from_samples

    u_grid = np.asarray(u_grid, dtype=float)
    x = np.asarray(x, dtype=float).reshape(-1)
    if simulator_id == "gbm":
        return QuantileGrid(u_grid, gbm_quantiles(x[0], x[1], u_grid))
    if simulator_id == "bimodal":
        return QuantileGrid(u_grid, bimodal_quantiles(x[0], u_grid))
    if simulator_id == "sir":
        reps = sir_batch(np.tile(x, (n_rep, 1)), seed=seed).astype(float)
        return quantiles_from_samples(reps, u_grid)
    raise ConfigurationError(f"unknown simulator id: {simulator_id!r}")
