"""Partition priors, data likelihoods and prior densities, all in log space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .graph import Dag, check_topological
from .state import AllocationState, BlockCounts, OrderingState, _counts

INFINITE = "infinite"
FINITE = "finite"


@dataclass(frozen=True)
class PyParams:
    """Pitman-Yor discount/concentration in either regime.

    Infinite regime: ``0 <= alpha < 1`` and ``theta > -alpha``.
    Finite regime: ``gamma > 0`` and integer ``k >= 1``, standing for
    ``alpha = -gamma``, ``theta = k * gamma``.
    """

    regime: str
    alpha: float = 0.0
    theta: float = 1.0
    gamma: float = 1.0
    k: int = 1

    def __post_init__(self):
        if self.regime == INFINITE:
            if not (0.0 <= self.alpha < 1.0) or not self.theta > -self.alpha:
                raise ValueError(f"invalid infinite-regime parameters alpha={self.alpha}, theta={self.theta}")
        elif self.regime == FINITE:
            if not self.gamma > 0 or int(self.k) != self.k or self.k < 1:
                raise ValueError(f"invalid finite-regime parameters gamma={self.gamma}, k={self.k}")
        else:
            raise ValueError(f"unknown regime {self.regime!r}")

    @classmethod
    def infinite(cls, alpha: float, theta: float) -> "PyParams":
        return cls(INFINITE, alpha=float(alpha), theta=float(theta))

    @classmethod
    def finite(cls, gamma: float, k: int) -> "PyParams":
        return cls(FINITE, gamma=float(gamma), k=int(k))

    @property
    def discount(self) -> float:
        return self.alpha if self.regime == INFINITE else -self.gamma

    @property
    def concentration(self) -> float:
        return self.theta if self.regime == INFINITE else self.k * self.gamma

    def new_group_mass(self, n_groups: int) -> float:
        """theta + alpha K; exactly ``gamma (k - K)`` in the finite regime."""
        if self.regime == FINITE:
            return self.gamma * (self.k - n_groups)
        return self.theta + self.alpha * n_groups


@dataclass(frozen=True)
class GammaHyper:
    """Shape ``a`` and rate ``b`` of the Gamma prior on each block rate."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Gamma hyperparameters must be positive")


@dataclass
class PriorConfig:
    """Hyperpriors. Defaults are the weakly informative settings used on citation data."""

    a_shape: float = 1.0
    a_rate: float = 0.01
    b_shape: float = 1.0
    b_rate: float = 0.01
    xi_shape: float = 1.0
    xi_rate: float = 1.0
    theta_shape: float = 1.0  # prior on theta + alpha
    theta_rate: float = 0.01
    gamma_shape: float = 1.0
    gamma_rate: float = 0.01
    k_a: float = 1.0
    k_b: float = 0.01
    p_r1: float = 0.5

    def __post_init__(self):
        for name in ("a_shape", "a_rate", "b_shape", "b_rate", "xi_shape", "xi_rate",
                     "theta_shape", "theta_rate", "gamma_shape", "gamma_rate", "k_a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.k_b < 1:
            raise ValueError("k_b must lie in (0, 1)")
        if not 0 <= self.p_r1 <= 1:
            raise ValueError("p_r1 must lie in [0, 1]")


# ---------------------------------------------------------------------------
# partition law


def log_rising_factorial(x: float, n: int) -> float:
    """log of x (x+1) ... (x+n-1); zero for n == 0."""
    if not x > 0:
        raise ValueError("rising factorial requires x > 0")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0.0
    return math.lgamma(x + n) - math.lgamma(x)


def log_eppf(sizes, py: PyParams) -> float:
    """Log probability of a partition with the given block sizes."""
    sizes = np.asarray(sizes, dtype=np.int64)
    if sizes.size == 0 or (sizes < 1).any():
        raise ValueError("block sizes must be positive")
    K = len(sizes)
    n = int(sizes.sum())
    alpha, theta = py.discount, py.concentration
    if py.regime == FINITE:
        if K > py.k:
            return -math.inf
        head = sum(math.log(py.gamma * (py.k - j)) for j in range(1, K))
    else:
        head = sum(math.log(theta + j * alpha) for j in range(1, K))
    out = head - log_rising_factorial(theta + 1.0, n - 1)
    out += float(np.sum(gammaln(sizes - alpha) - math.lgamma(1.0 - alpha)))
    return out


def crp_weights(sizes, py: PyParams) -> np.ndarray:
    """Predictive probabilities of joining each group, then of a new group."""
    sizes = np.asarray(sizes, dtype=np.float64)
    K = len(sizes)
    if K == 0:
        return np.ones(1)
    n = sizes.sum()
    alpha, theta = py.discount, py.concentration
    if py.regime == FINITE and K > py.k:
        raise ValueError("more groups than the finite-regime bound k")
    w = np.empty(K + 1)
    w[:K] = (sizes - alpha) / (theta + n)
    w[K] = max(py.new_group_mass(K), 0.0) / (theta + n)
    return w


# ---------------------------------------------------------------------------
# data likelihoods


def _labels(z) -> np.ndarray:
    if isinstance(z, AllocationState):
        return z.z
    return np.asarray(z, dtype=np.int64)


def _degree_term(g: Dag, xi) -> float:
    if g.n_edges == 0:
        return 0.0
    lx = np.log(np.asarray(xi, dtype=np.float64))
    c = g.counts
    return float(np.sum(c * (lx[g.edges[:, 0]] + lx[g.edges[:, 1]])) - np.sum(gammaln(c + 1.0)))


def block_term(E, M, a: float, b: float) -> float:
    """(b^a/Gamma(a))^{K^2} prod Gamma(E+a)/(M+b)^(E+a), in logs."""
    K = E.shape[0]
    return float(
        K * K * (a * math.log(b) - math.lgamma(a))
        + np.sum(gammaln(E + a) - (E + a) * np.log(M + b))
    )


def log_lik_collapsed(g: Dag, ordering: OrderingState, z, xi, hyper: GammaHyper,
                      counts: BlockCounts | None = None) -> float:
    """Data likelihood with the block rates integrated out.

    Returns ``-inf`` when ``ordering`` is not topological. ``counts`` may be
    supplied to skip recomputing E and M.
    """
    if not check_topological(g, ordering):
        return -math.inf
    z = _labels(z)
    if counts is None:
        counts = _counts(g, ordering, z, int(z.max()) + 1, xi)
    return _degree_term(g, xi) + block_term(counts.e, counts.m, hyper.a, hyper.b)


def log_lik_full(g: Dag, ordering: OrderingState, z, xi, C) -> float | np.ndarray:
    """Poisson likelihood given block rates ``C``.

    ``C`` may carry leading batch dimensions (``(..., K, K)``); the result
    then has those dimensions.
    """
    C = np.asarray(C, dtype=np.float64)
    z = _labels(z)
    K = int(z.max()) + 1
    if C.shape[-2:] != (K, K):
        raise ValueError(f"C must be {K}x{K}, got {C.shape[-2:]}")
    if not check_topological(g, ordering):
        return -math.inf if C.ndim == 2 else np.full(C.shape[:-2], -math.inf)
    counts = _counts(g, ordering, z, K, xi)
    E, M = counts.e, counts.m
    with np.errstate(divide="ignore"):
        logC = np.log(C)
    edge_part = np.where(E > 0, E * logC, 0.0).sum(axis=(-2, -1))
    out = _degree_term(g, xi) + edge_part - (C * M).sum(axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# priors


def log_prior_k(k: int, a_k: float, b_k: float) -> float:
    """Negative binomial mass truncated to ``k >= 1``."""
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    return (
        -math.log1p(-(b_k ** a_k))
        + math.lgamma(k + a_k) - math.lgamma(a_k) - math.lgamma(k + 1)
        + a_k * math.log(b_k) + k * math.log1p(-b_k)
    )


def log_gamma_density(x: float, shape: float, rate: float) -> float:
    if not (shape > 0 and rate > 0):
        raise ValueError("shape and rate must be positive")
    if not x > 0:
        return -math.inf
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def log_uniform_discount(alpha: float) -> float:
    """Uniform prior on the infinite-regime discount, support [0, 1)."""
    return 0.0 if 0.0 <= alpha < 1.0 else -math.inf


def log_prior_py(py: PyParams, priors: PriorConfig) -> float:
    """Prior density of the regime's two parameters given the regime."""
    if py.regime == INFINITE:
        return log_uniform_discount(py.alpha) + log_gamma_density(
            py.theta + py.alpha, priors.theta_shape, priors.theta_rate)
    return log_gamma_density(py.gamma, priors.gamma_shape, priors.gamma_rate) + log_prior_k(
        py.k, priors.k_a, priors.k_b)


def log_prior_hyper(a: float, b: float, priors: PriorConfig) -> float:
    return log_gamma_density(a, priors.a_shape, priors.a_rate) + log_gamma_density(
        b, priors.b_shape, priors.b_rate)
