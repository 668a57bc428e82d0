"""Forward simulation from the degree-corrected block model on a DAG."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph import Dag, write_edge_list


@dataclass
class Truth:
    """Generating parameters of a simulated graph."""

    sigma: np.ndarray
    z: np.ndarray
    C: np.ndarray
    xi: np.ndarray

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in vars(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Truth":
        return cls(
            sigma=np.asarray(d["sigma"], dtype=np.int64),
            z=np.asarray(d["z"], dtype=np.int64),
            C=np.asarray(d["C"], dtype=np.float64),
            xi=np.asarray(d["xi"], dtype=np.float64),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "Truth":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def dyad_rates(sigma, z, C, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Poisson rates of every forward dyad: ``(src, dst, rate)`` node arrays."""
    sigma = np.asarray(sigma, dtype=np.int64)
    n = len(sigma)
    p, q = np.triu_indices(n, k=1)
    src, dst = sigma[p], sigma[q]
    rate = xi[src] * xi[dst] * C[z[src], z[dst]]
    return src, dst, rate


def generate_dag(n: int, sigma, z, C, xi=None, rng: np.random.Generator | int | None = None,
                 binarize: bool = True) -> tuple[Dag, Truth]:
    """Draw a graph whose edges all point forward in ``sigma``.

    Each forward dyad gets a Poisson count with mean ``xi_p xi_q C[z_p, z_q]``;
    with ``binarize`` the counts are clipped to 0/1.
    """
    sigma = np.asarray(sigma, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    C = np.asarray(C, dtype=np.float64)
    xi = np.ones(n) if xi is None else np.asarray(xi, dtype=np.float64)
    if sigma.shape != (n,) or z.shape != (n,) or xi.shape != (n,):
        raise ValueError("sigma, z and xi must all have length n")
    if sorted(sigma.tolist()) != list(range(n)):
        raise ValueError("sigma must be a permutation of 0..n-1")
    if n and (z.min() < 0 or C.ndim != 2 or C.shape[0] != C.shape[1] or z.max() >= C.shape[0]):
        raise ValueError("C must be square with a row for every label in z")
    if (C < 0).any() or (xi <= 0).any():
        raise ValueError("C must be nonnegative and xi positive")
    rng = np.random.default_rng(rng)
    src, dst, rate = dyad_rates(sigma, z, C, xi)
    y = rng.poisson(rate)
    if binarize:
        y = np.minimum(y, 1)
    keep = y > 0
    edges = np.column_stack([src[keep], dst[keep]])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    g = Dag(n, edges[order], counts=y[keep][order])
    return g, Truth(sigma.copy(), z.copy(), C.copy(), xi.copy())


def planted_labels(n: int, k: int) -> np.ndarray:
    """Contiguous groups whose sizes differ by at most one."""
    return (np.arange(n) * k) // n


def generate_planted(n: int, k: int, within: float, between: float,
                     seed: int | np.random.Generator | None = None,
                     binarize: bool = True) -> tuple[Dag, Truth]:
    """Planted-partition DAG: rate ``within`` inside groups, ``between`` across."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if not within > between >= 0:
        raise ValueError("need within > between >= 0")
    C = np.full((k, k), float(between))
    np.fill_diagonal(C, within)
    return generate_dag(n, np.arange(n), planted_labels(n, k), C, np.ones(n), seed, binarize)


def write_fixture(g: Dag, truth: Truth, edges_path, truth_path) -> None:
    write_edge_list(g, edges_path)
    truth.save(truth_path)


@dataclass
class PriorDraw:
    """Every latent quantity of the model drawn from its prior."""

    sigma: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    a: float
    b: float
    C: np.ndarray
    regime: int
    alpha: float = float("nan")
    theta: float = float("nan")
    gamma: float = float("nan")
    k: int = 0


def draw_truncated_negbin(a_k: float, b_k: float, rng: np.random.Generator) -> int:
    """Negative binomial (successes ``a_k``, probability ``b_k``) conditioned on >= 1."""
    while True:
        k = int(rng.negative_binomial(a_k, b_k))
        if k >= 1:
            return k


def draw_prior(n: int, priors, regime: int, rng: np.random.Generator) -> PriorDraw:
    """Joint prior draw of ordering, partition, degree corrections and rates.

    ``regime`` 0 is the infinite Pitman-Yor regime and 1 the finite one.
    """
    from .likelihood import PyParams
    from .sampler import sequential_crp

    sigma = rng.permutation(n).astype(np.int64)
    if regime == 0:
        alpha = float(rng.random())
        theta = float(rng.gamma(priors.theta_shape, 1.0 / priors.theta_rate)) - alpha
        py = PyParams.infinite(alpha, theta)
        extra = {"alpha": alpha, "theta": theta}
    else:
        gamma = float(rng.gamma(priors.gamma_shape, 1.0 / priors.gamma_rate))
        k = draw_truncated_negbin(priors.k_a, priors.k_b, rng)
        py = PyParams.finite(gamma, k)
        extra = {"gamma": gamma, "k": k}
    z = sequential_crp(n, py, rng)
    xi = rng.gamma(priors.xi_shape, 1.0 / priors.xi_rate, size=n)
    a = float(rng.gamma(priors.a_shape, 1.0 / priors.a_rate))
    b = float(rng.gamma(priors.b_shape, 1.0 / priors.b_rate))
    K = int(z.max()) + 1
    C = rng.gamma(a, 1.0 / b, size=(K, K))
    return PriorDraw(sigma, z, xi, a, b, C, regime, **extra)
