"""Posterior summaries: co-clustering, VI point estimates and position densities."""
from __future__ import annotations

import math

import numpy as np

from .state import compact_labels


def _as_samples(samples) -> np.ndarray:
    Z = np.asarray(samples)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValueError("need a nonempty 2-d array of allocations")
    return Z.astype(np.int64)


def similarity_matrix(samples) -> np.ndarray:
    """Fraction of samples in which each pair of nodes shares a group."""
    Z = _as_samples(samples)
    S, n = Z.shape
    out = np.zeros((n, n))
    for z in Z:
        out += z[:, None] == z[None, :]
    return out / S


def _xlogx(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def _contingency(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    _, a = np.unique(z1, return_inverse=True)
    _, b = np.unique(z2, return_inverse=True)
    return np.bincount(a * (b.max() + 1) + b)


def vi_distance(z1, z2) -> float:
    """Variation of information between two allocations, in nats."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ValueError("allocations must be 1-d and of equal length")
    n = len(z1)
    if n == 0:
        return 0.0
    a = np.unique(z1, return_counts=True)[1]
    b = np.unique(z2, return_counts=True)[1]
    nij = _contingency(z1, z2)
    val = (_xlogx(a).sum() + _xlogx(b).sum() - 2 * _xlogx(nij).sum()) / n
    return max(float(val), 0.0)


def expected_vi(z, samples) -> float:
    """Average VI between ``z`` and each sampled allocation."""
    Z = _as_samples(samples)
    z = np.unique(z, return_inverse=True)[1].ravel()
    S, n = Z.shape
    if len(z) != n:
        raise ValueError("allocation length does not match the samples")
    if Z.min() < 0:
        raise ValueError("sample labels must be nonnegative")
    K, L = int(z.max()) + 1, int(Z.max()) + 1
    rows = np.arange(S)[:, None]
    b = np.bincount((rows * L + Z).ravel(), minlength=S * L)
    nij = np.bincount((rows * K * L + z[None, :] * L + Z).ravel(), minlength=S * K * L)
    total = S * _xlogx(np.bincount(z)).sum() + _xlogx(b).sum() - 2 * _xlogx(nij).sum()
    return max(float(total) / (S * n), 0.0)


class _Allocator:
    """Incremental expected-VI bookkeeping for one candidate partition.

    ``N[s, j, l]`` counts items currently in candidate group ``j`` whose
    label in sample ``s`` is ``l``; ``b[j]`` is the size of group ``j``.
    Up to the constant of the samples themselves, ``n`` times the expected
    loss is ``sum_j f(b_j) - 2 mean_s sum_{j,l} f(N[s,j,l])`` with
    ``f(x) = x log x``.
    """

    def __init__(self, Z: np.ndarray, max_k: int):
        self.Z = Z
        self.S, self.n = Z.shape
        self.rows = np.arange(self.S)
        self.N = np.zeros((self.S, max_k, int(Z.max()) + 1), dtype=np.int64)
        self.b = np.zeros(max_k, dtype=np.int64)
        self.z = np.full(self.n, -1, dtype=np.int64)

    def candidates(self) -> np.ndarray:
        """Occupied groups plus the first empty slot, in increasing label order."""
        occupied = self.b > 0
        empty = np.flatnonzero(~occupied)
        if len(empty):
            occupied = occupied.copy()
            occupied[empty[0]] = True
        return np.flatnonzero(occupied)

    def deltas(self, i: int, cand: np.ndarray) -> np.ndarray:
        cnt = self.N[self.rows[:, None], cand[None, :], self.Z[:, i][:, None]]  # (S, len(cand))
        gain = (_xlogx(cnt + 1) - _xlogx(cnt)).mean(axis=0)
        b = self.b[cand]
        return _xlogx(b + 1) - _xlogx(b) - 2 * gain

    def add(self, i: int, j: int) -> None:
        self.N[self.rows, j, self.Z[:, i]] += 1
        self.b[j] += 1
        self.z[i] = j

    def remove(self, i: int) -> None:
        j = self.z[i]
        self.N[self.rows, j, self.Z[:, i]] -= 1
        self.b[j] -= 1
        self.z[i] = -1

    def best(self, i: int) -> int:
        cand = self.candidates()
        d = self.deltas(i, cand)
        # argmin returns the first minimum, so ties go to the smaller label;
        # every empty slot scores 0, so only the first of them can matter
        return int(cand[np.argmin(np.round(d, 12))])


def _reallocate(al: _Allocator, rng: np.random.Generator, max_sweeps: int) -> None:
    """Single-item moves in random order until a full sweep changes nothing."""
    for _ in range(max_sweeps):
        moved = False
        for i in rng.permutation(al.n):
            old = al.z[i]
            al.remove(i)
            new = al.best(i)
            al.add(i, new)
            moved |= new != old
        if not moved:
            break


def salso_estimate(samples, max_k: int | None = None, runs: int = 16,
                   rng: np.random.Generator | int | None = None, max_sweeps: int = 100,
                   max_candidates: int = 200) -> np.ndarray:
    """Partition minimizing the sample-averaged VI loss by greedy search.

    Each run allocates items one at a time in random order to the group
    that increases the partial loss least, then sweeps single-item moves
    until none improves. Up to ``max_candidates`` sampled partitions, spread
    evenly over the trace, are scored too, and the best of them is refined
    by the same sweeps; the result is never worse than any of them. The
    best candidate wins, earliest on ties, greedy runs first. Labels in the
    result are numbered by first appearance. ``max_k`` caps the number of
    groups; by default there is no cap, since the minimizer can need more
    groups than any single sample has.
    """
    Z = np.stack([compact_labels(z) for z in _as_samples(samples)])
    if runs < 1:
        raise ValueError("runs must be positive")
    if max_k is None:
        max_k = Z.shape[1]
    max_k = max(1, min(int(max_k), Z.shape[1]))
    rng = np.random.default_rng(rng)
    best_z, best_loss = None, math.inf

    def consider(z):
        nonlocal best_z, best_loss
        z = compact_labels(z)
        loss = expected_vi(z, Z)
        if loss < best_loss - 1e-12:
            best_z, best_loss = z, loss

    for _ in range(runs):
        al = _Allocator(Z, max_k)
        for i in rng.permutation(al.n):
            al.add(i, al.best(i))
        _reallocate(al, rng, max_sweeps)
        consider(al.z)

    picks = np.unique(np.linspace(0, len(Z) - 1, min(len(Z), max_candidates)).astype(int))
    cands = [z for z in np.unique(Z[picks], axis=0) if z.max() < max_k]
    if cands:
        start = min(cands, key=lambda z: expected_vi(z, Z))
        consider(start)
        al = _Allocator(Z, max_k)
        for i, j in enumerate(start):
            al.add(i, int(j))
        _reallocate(al, rng, max_sweeps)
        consider(al.z)
    return best_z


def ordering_density(sigmas) -> tuple[np.ndarray, np.ndarray]:
    """Posterior distribution of each node's position.

    Returns ``(density, mean_position)`` where ``density[p, r]`` is the
    fraction of samples that put node ``p`` at position ``r``.
    """
    S = _as_samples(sigmas)
    m, n = S.shape
    phi = np.empty_like(S)
    phi[np.arange(m)[:, None], S] = np.arange(n)[None, :]
    density = np.zeros((n, n))
    for p in range(n):
        density[p] = np.bincount(phi[:, p], minlength=n)
    density /= m
    return density, phi.mean(axis=0)


def summarize_scalars(columns: dict[str, np.ndarray], quantiles=(0.025, 0.5, 0.975)) -> dict[str, dict]:
    """Mean, standard deviation and quantiles per column, ignoring NaN."""
    out = {}
    for name, x in columns.items():
        x = np.asarray(x, dtype=np.float64)
        x = x[np.isfinite(x)]
        if x.size == 0:
            continue
        row = {"mean": float(x.mean()), "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0}
        for q, v in zip(quantiles, np.quantile(x, quantiles)):
            row[f"q{q:g}"] = float(v)
        out[name] = row
    return out
