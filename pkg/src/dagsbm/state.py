"""Orderings, allocations and the block-count matrices E and M.

``E[i, j]`` counts edges from group ``i`` to group ``j``. ``M[i, j]`` sums
``xi_p * xi_q`` over all dyads whose earlier node (in the ordering) is in
group ``i`` and later node is in group ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K_
from .graph import Dag, GraphError, check_topological


@dataclass
class OrderingState:
    """``sigma[r]`` is the node at position ``r``; ``phi`` is its inverse."""

    sigma: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_sigma(cls, sigma) -> "OrderingState":
        sigma = np.asarray(sigma, dtype=np.int64).copy()
        n = len(sigma)
        if sorted(sigma.tolist()) != list(range(n)):
            raise ValueError("sigma must be a permutation of 0..n-1")
        phi = np.empty(n, dtype=np.int64)
        phi[sigma] = np.arange(n)
        return cls(sigma, phi)

    @classmethod
    def from_phi(cls, phi) -> "OrderingState":
        phi = np.asarray(phi, dtype=np.int64)
        sigma = np.empty(len(phi), dtype=np.int64)
        sigma[phi] = np.arange(len(phi))
        return cls.from_sigma(sigma)

    @property
    def n(self) -> int:
        return len(self.sigma)

    def is_consistent(self) -> bool:
        r = np.arange(self.n)
        return bool(np.all(self.sigma[self.phi] == r) and np.all(self.phi[self.sigma] == r))

    def copy(self) -> "OrderingState":
        return OrderingState(self.sigma.copy(), self.phi.copy())


@dataclass
class AllocationState:
    """Compact labels ``z`` in ``0..K-1`` with group sizes."""

    z: np.ndarray
    sizes: np.ndarray

    @classmethod
    def from_labels(cls, z) -> "AllocationState":
        z = compact_labels(z)
        return cls(z, np.bincount(z).astype(np.int64))

    @property
    def k_count(self) -> int:
        return len(self.sizes)

    def is_compact(self) -> bool:
        assigned = self.z[self.z >= 0]
        return bool(
            np.all(self.sizes > 0)
            and np.array_equal(np.bincount(assigned, minlength=self.k_count), self.sizes)
        )

    def copy(self) -> "AllocationState":
        return AllocationState(self.z.copy(), self.sizes.copy())


def compact_labels(z) -> np.ndarray:
    """Relabel to ``0..K-1`` in order of first appearance."""
    z = np.asarray(z)
    _, first, inv = np.unique(z, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inv].astype(np.int64)


@dataclass
class BlockCounts:
    e: np.ndarray
    m: np.ndarray

    def copy(self) -> "BlockCounts":
        return BlockCounts(self.e.copy(), self.m.copy())


def block_counts(g: Dag, ordering: OrderingState, allocation: AllocationState, xi) -> BlockCounts:
    """E and M computed directly from their definitions."""
    if not check_topological(g, ordering):
        raise GraphError("ordering is not topological for this graph")
    return _counts(g, ordering, allocation.z, allocation.k_count, xi)


def _counts(g: Dag, ordering, z, K, xi, cap=None) -> BlockCounts:
    cap = K if cap is None else cap
    E = np.zeros((cap, cap), dtype=np.int64)
    M = np.zeros((cap, cap), dtype=np.float64)
    K_.counts_from_scratch(
        ordering.sigma, np.asarray(z, dtype=np.int64), np.asarray(xi, dtype=np.float64), K,
        g.edges[:, 0].copy(), g.edges[:, 1].copy(), g.counts, E, M,
    )
    return BlockCounts(E, M)


def _vectors(cap):
    oE = np.zeros(cap, dtype=np.int64)
    iE = np.zeros(cap, dtype=np.int64)
    oM = np.zeros(cap)
    iM = np.zeros(cap)
    return oE, iE, oM, iM


def detach_node(counts: BlockCounts, w: int, g: Dag, ordering: OrderingState,
                allocation: AllocationState, xi):
    """Remove the node at position ``w`` from the counts.

    Returns ``(counts, allocation, relabel)`` on copies. The node's label
    becomes -1. If its group emptied, ``relabel`` is ``(old, new)``: the
    former last label ``old`` now lives at ``new`` (``old == new`` when the
    emptied group was itself last). Otherwise ``relabel`` is None.
    """
    K = allocation.k_count
    v = int(ordering.sigma[w])
    z = allocation.z.copy()
    sizes = allocation.sizes.copy()
    E, M = counts.e.copy(), counts.m.copy()
    xi = np.asarray(xi, dtype=np.float64)
    bufs = _vectors(K)
    K_.node_vectors(v, ordering.sigma, ordering.phi, z, xi, K, g.out_ptr, g.out_idx, g.out_cnt,
                    g.in_ptr, g.in_idx, g.in_cnt, *bufs)
    newK, vacated = K_.detach(v, z, sizes, K, E, M, *bufs)
    relabel = None
    if newK < K:
        relabel = (K - 1, int(vacated))
    out = BlockCounts(E[:newK, :newK].copy(), M[:newK, :newK].copy())
    return out, AllocationState(z, sizes[:newK].copy()), relabel


def attach_node(counts: BlockCounts, w: int, label: int, g: Dag, ordering: OrderingState,
                allocation: AllocationState, xi):
    """Add the detached node at position ``w`` to group ``label``.

    ``label == K`` opens a new group. Returns ``(counts, allocation)``.
    """
    K = allocation.k_count
    if not 0 <= label <= K:
        raise ValueError(f"label {label} out of range 0..{K}")
    v = int(ordering.sigma[w])
    if allocation.z[v] != -1:
        raise ValueError(f"node {v} is not detached")
    cap = K + 1
    z = allocation.z.copy()
    sizes = np.zeros(cap, dtype=np.int64)
    sizes[:K] = allocation.sizes
    E = np.zeros((cap, cap), dtype=np.int64)
    M = np.zeros((cap, cap))
    E[:K, :K] = counts.e
    M[:K, :K] = counts.m
    xi = np.asarray(xi, dtype=np.float64)
    bufs = _vectors(cap)
    K_.node_vectors(v, ordering.sigma, ordering.phi, z, xi, K, g.out_ptr, g.out_idx, g.out_cnt,
                    g.in_ptr, g.in_idx, g.in_cnt, *bufs)
    newK = K_.attach(v, label, z, sizes, K, E, M, *bufs)
    return (
        BlockCounts(E[:newK, :newK].copy(), M[:newK, :newK].copy()),
        AllocationState(z, sizes[:newK].copy()),
    )


class ChainState:
    """Mutable MCMC state for one chain.

    Count matrices live in capacity buffers that grow on demand; ``E``,
    ``M`` and ``sizes`` expose the live ``K x K`` views.
    """

    def __init__(self, dag: Dag, ordering: OrderingState, z, xi, *,
                 a: float, b: float, regime: int = 0, alpha: float = 0.5,
                 theta: float = 1.0, gamma: float = 1.0, k: int = 2):
        self.dag = dag
        self.sigma = ordering.sigma.copy()
        self.phi = ordering.phi.copy()
        self.z = compact_labels(z)
        self.xi = np.array(xi, dtype=np.float64)
        self.K = int(self.z.max()) + 1
        self.a, self.b = float(a), float(b)
        self.regime = int(regime)
        self.alpha, self.theta = float(alpha), float(theta)
        self.gamma, self.k = float(gamma), int(k)
        self.deg = dag.degree().astype(np.float64)
        self._alloc(max(8, 2 * self.K))
        self.refresh()

    def _alloc(self, cap: int) -> None:
        self.cap = cap
        self.sizes_buf = np.zeros(cap, dtype=np.int64)
        self.E_buf = np.zeros((cap, cap), dtype=np.int64)
        self.M_buf = np.zeros((cap, cap))
        self.oE = np.zeros(cap, dtype=np.int64)
        self.iE = np.zeros(cap, dtype=np.int64)
        self.oM = np.zeros(cap)
        self.iM = np.zeros(cap)
        self.logw = np.zeros(cap + 1)

    def grow(self) -> None:
        """Double the label capacity, preserving the live counts."""
        K = self.K
        sizes, E, M = self.sizes, self.E.copy(), self.M.copy()
        self._alloc(2 * self.cap)
        self.sizes_buf[:K] = sizes
        self.E_buf[:K, :K] = E
        self.M_buf[:K, :K] = M

    def refresh(self) -> None:
        """Recompute sizes, E and M from scratch."""
        if self.K + 1 > self.cap:
            self._alloc(2 * (self.K + 1))
        g = self.dag
        self.sizes_buf[:] = 0
        self.sizes_buf[: self.K] = np.bincount(self.z, minlength=self.K)
        K_.counts_from_scratch(self.sigma, self.z, self.xi, self.K, g.edges[:, 0].copy(),
                               g.edges[:, 1].copy(), g.counts, self.E_buf, self.M_buf)

    def set_allocation(self, z) -> None:
        self.z = compact_labels(z)
        self.K = int(self.z.max()) + 1
        self.refresh()

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def sizes(self) -> np.ndarray:
        return self.sizes_buf[: self.K]

    @property
    def E(self) -> np.ndarray:
        return self.E_buf[: self.K, : self.K]

    @property
    def M(self) -> np.ndarray:
        return self.M_buf[: self.K, : self.K]

    @property
    def ordering(self) -> OrderingState:
        return OrderingState(self.sigma, self.phi)

    @property
    def allocation(self) -> AllocationState:
        return AllocationState(self.z, self.sizes)

    @property
    def counts(self) -> BlockCounts:
        return BlockCounts(self.E, self.M)

    def py_params(self):
        from .likelihood import PyParams

        if self.regime == 1:
            return PyParams.finite(self.gamma, self.k)
        return PyParams.infinite(self.alpha, self.theta)

    def copy(self) -> "ChainState":
        new = object.__new__(ChainState)
        new.__dict__.update(self.__dict__)
        for name in ("sigma", "phi", "z", "xi", "sizes_buf", "E_buf", "M_buf",
                     "oE", "iE", "oM", "iM", "logw"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def check_counts(self, atol: float = 1e-9) -> bool:
        fresh = _counts(self.dag, self.ordering, self.z, self.K, self.xi)
        return bool(np.array_equal(fresh.e, self.E) and np.allclose(fresh.m, self.M, rtol=0, atol=atol))
