"""MCMC over allocations, ordering, degree corrections and hyperparameters.

One sweep runs, in order: single-site Gibbs on the allocation, split-merge
moves, leap-and-shift updates of the ordering, degree-correction updates,
random-walk updates of ``a`` and ``b``, the Pitman-Yor parameters of the
current regime and, in ``select`` mode, the regime indicator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels as K_
from .graph import Dag, kahn_sort
from .likelihood import (
    FINITE,
    PriorConfig,
    PyParams,
    _degree_term,
    block_term,
    crp_weights,
    log_eppf,
    log_gamma_density,
    log_prior_py,
)
from .state import BlockCounts, ChainState, OrderingState, _counts

MODES = ("infinite", "finite", "select")


@dataclass
class TuningConfig:
    """Proposal scales, run length and switches for individual update steps."""

    L: int = 5
    s_xi: float | np.ndarray = 0.2
    s_a: float = 0.5
    s_b: float = 0.5
    s_alpha: float = 0.05
    s_theta: float = 0.5
    s_gamma: float = 0.3
    p_k: float = 0.5
    iterations: int = 1000
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    split_merge_per_sweep: int = 1
    restricted_gibbs_scans: int = 3
    update_allocations: bool = True
    update_ordering: bool = True
    update_xi: bool = True
    update_hyper: bool = True
    update_py: bool = True
    prior_only: bool = False
    refresh_every: int = 1000
    debug: bool = False

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be a positive integer")
        for name in ("s_a", "s_b", "s_alpha", "s_theta", "s_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not np.all(np.asarray(self.s_xi) > 0):
            raise ValueError("s_xi must be positive")
        if not 0 < self.p_k <= 1:
            raise ValueError("p_k must lie in (0, 1]")
        for name in ("iterations", "burn_in", "split_merge_per_sweep", "restricted_gibbs_scans"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")


@dataclass
class TraceRecord:
    iteration: int
    K: int
    a: float
    b: float
    regime: int
    alpha: float
    theta: float
    gamma: float
    k: float
    loglik: float
    z: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)


def _lik_w(state) -> float:
    return 0.0 if state.tuning.prior_only else 1.0


def _adj(g: Dag):
    return g.out_ptr, g.out_idx, g.out_cnt, g.in_ptr, g.in_idx, g.in_cnt


def state_loglik(state: ChainState) -> float:
    """Collapsed log-likelihood from the state's cached counts."""
    return _degree_term(state.dag, state.xi) + block_term(state.E, state.M, state.a, state.b)


# ---------------------------------------------------------------------------
# allocations


def gibbs_sweep_allocations(state: ChainState, rng: np.random.Generator) -> None:
    """Single-site collapsed Gibbs update of every node, in position order."""
    n = state.n
    py = state.py_params()
    u = rng.random(n)
    pos = 0
    while pos < n:
        pos, state.K = K_.gibbs_sweep(
            pos, state.sigma, state.phi, state.z, state.sizes_buf, state.K,
            state.E_buf, state.M_buf, state.xi, *_adj(state.dag),
            state.a, state.b, py.discount, py.concentration, py.regime == FINITE,
            py.k, py.gamma, _lik_w(state), u,
            state.oE, state.iE, state.oM, state.iM, state.logw,
        )
        if pos < n:
            state.grow()


def allocation_conditional(state: ChainState, w: int):
    """Full-conditional probabilities for the node at position ``w``.

    Works on a copy. Returns ``(probs, z_minus)`` where ``z_minus`` is the
    allocation with the node removed (label -1, labels compacted) and
    ``probs[c]`` is the probability of label ``c``; the last entry is a new
    group.
    """
    st = state.copy()
    if st.K >= st.cap:
        st.grow()
    py = st.py_params()
    v = st.sigma[w]
    K_.node_vectors(v, st.sigma, st.phi, st.z, st.xi, st.K, *_adj(st.dag),
                    st.oE, st.iE, st.oM, st.iM)
    K, _ = K_.detach(v, st.z, st.sizes_buf, st.K, st.E_buf, st.M_buf, st.oE, st.iE, st.oM, st.iM)
    coef = py.new_group_mass(K)
    logw = np.zeros(K + 1)
    K_.allocation_logweights(K, st.sizes_buf, st.E_buf, st.M_buf, st.oE, st.iE, st.oM, st.iM,
                             st.a, st.b, py.discount, coef, _lik_w(st), logw)
    p = np.exp(logw - logw.max())
    return p / p.sum(), st.z.copy()


def _target(state: ChainState, z: np.ndarray, K: int, py: PyParams, counts=None) -> float:
    """log P(Y | Z) + log P(Z | eta) up to terms that do not depend on Z."""
    sizes = np.bincount(z, minlength=K)
    lp = log_eppf(sizes, py)
    if lp == -math.inf or state.tuning.prior_only:
        return lp
    if counts is None:
        counts = _counts(state.dag, state.ordering, z, K, state.xi)
    return lp + block_term(counts.e, counts.m, state.a, state.b)


class _Scratch:
    """Counts for a candidate allocation, sized for restricted scans."""

    def __init__(self, state: ChainState, z: np.ndarray, K: int):
        self.z = z
        self.K = K
        c = _counts(state.dag, state.ordering, z, K, state.xi)
        self.E, self.M = c.e, c.m
        self.sizes = np.bincount(z, minlength=K).astype(np.int64)
        self.bufs = (np.zeros(K, np.int64), np.zeros(K, np.int64), np.zeros(K), np.zeros(K))

    def scan(self, state, nodes, la, lb, py, rng=None, forced=None) -> float:
        if forced is None:
            u = rng.random(len(nodes))
            forced = np.empty(0, dtype=np.int64)
        else:
            u = np.empty(0)
        return K_.restricted_scan(
            nodes, la, lb, state.sigma, state.phi, self.z, self.sizes, self.K, self.E, self.M,
            state.xi, *_adj(state.dag), state.a, state.b, py.discount, _lik_w(state),
            u, forced, *self.bufs,
        )


def split_merge_move(state: ChainState, rng: np.random.Generator) -> bool:
    """One split-merge Metropolis-Hastings move with restricted Gibbs launch states.

    Returns whether the proposal was accepted.
    """
    n = state.n
    if n < 2:
        return False
    py = state.py_params()
    i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
    z = state.z
    ci, cj = int(z[i]), int(z[j])
    others = np.flatnonzero((z == ci) | (z == cj))
    S = others[(others != i) & (others != j)].astype(np.int64)
    scans = state.tuning.restricted_gibbs_scans
    K = state.K
    current = _target(state, z, K, py, counts=state.counts)

    if ci == cj:
        if py.regime == FINITE and K + 1 > py.k:
            return False
        zl = z.copy()
        zl[i] = K
        zl[S[rng.random(len(S)) < 0.5]] = K
        sc = _Scratch(state, zl, K + 1)
        for _ in range(scans):
            sc.scan(state, S, K, ci, py, rng)
        logq = sc.scan(state, S, K, ci, py, rng)
        proposed = _target(state, sc.z, K + 1, py, counts=_counts_view(sc))
        log_ratio = proposed - current - logq
        if math.log(rng.random()) < log_ratio:
            _adopt(state, sc.z, K + 1)
            return True
        return False

    zl = z.copy()
    flip = rng.random(len(S)) < 0.5
    zl[S] = np.where(flip, ci, cj)
    sc = _Scratch(state, zl, K)
    for _ in range(scans):
        sc.scan(state, S, ci, cj, py, rng)
    logq_rev = sc.scan(state, S, ci, cj, py, forced=z[S].astype(np.int64))
    zm = z.copy()
    zm[zm == ci] = cj
    zm = _drop_label(zm, ci, K)
    proposed = _target(state, zm, K - 1, py)
    log_ratio = proposed - current + logq_rev
    if math.log(rng.random()) < log_ratio:
        _adopt(state, zm, K - 1)
        return True
    return False


def _counts_view(sc: _Scratch) -> BlockCounts:
    return BlockCounts(sc.E, sc.M)


def _drop_label(z: np.ndarray, gone: int, K: int) -> np.ndarray:
    """Swap-remove an unused label: the last label takes its slot."""
    z = z.copy()
    if gone != K - 1:
        z[z == K - 1] = gone
    return z


def _adopt(state: ChainState, z: np.ndarray, K: int) -> None:
    state.z[:] = z
    state.K = K
    state.refresh()


# ---------------------------------------------------------------------------
# ordering


def leap_shift_propose(ordering: OrderingState, p: int, m: int, L: int | None = None) -> OrderingState:
    """Leap-and-shift modulo n: move node ``p`` by ``m`` positions.

    Steps that run off either end wrap around by ``n``; the nodes passed
    over shift one place towards the vacated position.
    """
    n = ordering.n
    if m == 0 or (L is not None and abs(m) > L):
        raise ValueError(f"step must be nonzero with |m| <= L, got {m}")
    f = int(ordering.phi[p])
    if m > 0 and f + m > n - 1:
        m -= n
    elif m < 0 and f + m < 0:
        m += n
    sigma = list(ordering.sigma)
    sigma.pop(f)
    sigma.insert(f + m, p)
    return OrderingState.from_sigma(sigma)


def draw_leaps(L: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from {-L, ..., -1, 1, ..., L}."""
    r = rng.integers(0, 2 * L, size=size)
    return np.where(r < L, r - L, r - L + 1).astype(np.int64)


def update_ordering(state: ChainState, rng: np.random.Generator) -> int:
    """Leap-and-shift Metropolis update for every node; returns acceptances."""
    n = state.n
    if n < 2:
        return 0
    L = min(state.tuning.L, n - 1)
    moves = draw_leaps(L, n, rng)
    u = rng.random(n)
    buf1, buf2 = np.zeros(state.K), np.zeros(state.K)
    return K_.ordering_sweep(
        state.sigma, state.phi, state.z, state.K, state.E_buf, state.M_buf, state.xi,
        *_adj(state.dag), state.a, state.b, _lik_w(state), moves, u, buf1, buf2,
    )


# ---------------------------------------------------------------------------
# continuous parameters


def update_degree_correction(state: ChainState, rng: np.random.Generator) -> int:
    n = state.n
    steps = np.broadcast_to(np.asarray(state.tuning.s_xi, dtype=np.float64), (n,)) * rng.standard_normal(n)
    u = rng.random(n)
    pr = state.priors
    return K_.xi_sweep(
        state.sigma, state.phi, state.z, state.K, state.E_buf, state.M_buf, state.xi, state.deg,
        state.a, state.b, pr.xi_shape, pr.xi_rate, _lik_w(state),
        np.ascontiguousarray(steps), u, np.zeros(state.K), np.zeros(state.K),
    )


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    return math.log(rng.random()) < log_ratio


def update_gamma_hyper(state: ChainState, which: str, rng: np.random.Generator) -> bool:
    """Random-walk Metropolis step for the block-rate shape ``a`` or rate ``b``."""
    pr, tu = state.priors, state.tuning
    if which == "a":
        new = state.a + tu.s_a * rng.standard_normal()
        u = rng.random()
        if new <= 0:
            return False
        lik = block_term(state.E, state.M, new, state.b) - block_term(state.E, state.M, state.a, state.b)
        prior = log_gamma_density(new, pr.a_shape, pr.a_rate) - log_gamma_density(state.a, pr.a_shape, pr.a_rate)
    elif which == "b":
        new = state.b + tu.s_b * rng.standard_normal()
        u = rng.random()
        if new <= 0:
            return False
        lik = block_term(state.E, state.M, state.a, new) - block_term(state.E, state.M, state.a, state.b)
        prior = log_gamma_density(new, pr.b_shape, pr.b_rate) - log_gamma_density(state.b, pr.b_shape, pr.b_rate)
    else:
        raise ValueError("which must be 'a' or 'b'")
    if math.log(u) < _lik_w(state) * lik + prior:
        setattr(state, which, new)
        return True
    return False


def _py_log_target(sizes, py: PyParams, priors: PriorConfig) -> float:
    lp = log_eppf(sizes, py)
    if lp == -math.inf:
        return lp
    return lp + log_prior_py(py, priors)


def update_py_params(state: ChainState, rng: np.random.Generator) -> None:
    """Metropolis updates of (alpha, theta) or (gamma, k) for the current regime."""
    pr, tu = state.priors, state.tuning
    sizes = state.sizes.copy()
    if state.regime == 0:
        cur = _py_log_target(sizes, PyParams.infinite(state.alpha, state.theta), pr)
        alpha = state.alpha + tu.s_alpha * rng.standard_normal()
        u = rng.random()
        if 0.0 <= alpha < 1.0 and state.theta > -alpha:
            new = _py_log_target(sizes, PyParams.infinite(alpha, state.theta), pr)
            if math.log(u) < new - cur:
                state.alpha, cur = alpha, new
        theta = state.theta + tu.s_theta * rng.standard_normal()
        u = rng.random()
        if theta > -state.alpha:
            new = _py_log_target(sizes, PyParams.infinite(state.alpha, theta), pr)
            if math.log(u) < new - cur:
                state.theta = theta
        return

    cur = _py_log_target(sizes, PyParams.finite(state.gamma, state.k), pr)
    gamma = state.gamma * math.exp(tu.s_gamma * rng.standard_normal())
    u = rng.random()
    new = _py_log_target(sizes, PyParams.finite(gamma, state.k), pr)
    # log-normal proposal: Jacobian gamma'/gamma
    if math.log(u) < new - cur + math.log(gamma) - math.log(state.gamma):
        state.gamma, cur = gamma, new
    step = int(rng.geometric(tu.p_k))
    k = state.k + step if rng.random() < 0.5 else state.k - step
    u = rng.random()
    if k >= 1:
        new = _py_log_target(sizes, PyParams.finite(state.gamma, k), pr)
        if math.log(u) < new - cur:
            state.k = k


# ---------------------------------------------------------------------------
# driver


def sequential_crp(n: int, py: PyParams, rng: np.random.Generator) -> np.ndarray:
    """Allocation drawn customer by customer from the predictive rule."""
    z = np.zeros(n, dtype=np.int64)
    sizes: list[int] = []
    for p in range(n):
        w = crp_weights(sizes, py)
        c = int(rng.choice(len(w), p=w / w.sum()))
        if c == len(sizes):
            sizes.append(0)
        sizes[c] += 1
        z[p] = c
    return z


def init_state(dag: Dag, priors: PriorConfig, tuning: TuningConfig, mode: str,
               rng: np.random.Generator, pseudo=None) -> ChainState:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "select":
        if not 0 < priors.p_r1 < 1:
            raise ValueError("select mode needs a regime prior P(r=1) strictly between 0 and 1")
        if pseudo is None:
            raise ValueError("select mode needs pseudopriors fitted from finite and infinite pilot runs")
    ordering = kahn_sort(dag)
    z = sequential_crp(dag.n, PyParams.infinite(0.5, 1.0), rng)
    K = int(z.max()) + 1
    if mode == "finite":
        regime = 1
    elif mode == "infinite":
        regime = 0
    else:
        regime = int(priors.p_r1 >= 0.5)
    state = ChainState(
        dag, ordering, z, np.ones(dag.n),
        a=priors.a_shape / priors.a_rate, b=priors.b_shape / priors.b_rate,
        regime=regime, alpha=0.5, theta=1.0, gamma=1.0, k=max(2, K),
    )
    state.priors, state.tuning, state.mode, state.pseudo = priors, tuning, mode, pseudo
    return state


def sweep(state: ChainState, rng: np.random.Generator) -> None:
    tu = state.tuning
    if tu.update_allocations:
        gibbs_sweep_allocations(state, rng)
        for _ in range(tu.split_merge_per_sweep):
            split_merge_move(state, rng)
    if tu.update_ordering:
        update_ordering(state, rng)
    if tu.update_xi:
        update_degree_correction(state, rng)
    if tu.update_hyper:
        update_gamma_hyper(state, "a", rng)
        update_gamma_hyper(state, "b", rng)
    if tu.update_py:
        update_py_params(state, rng)
    if state.mode == "select":
        from .selection import regime_gibbs_step

        regime_gibbs_step(state, state.pseudo, state.priors.p_r1, rng)


def record(state: ChainState, iteration: int) -> TraceRecord:
    inf = state.regime == 0
    return TraceRecord(
        iteration=iteration, K=state.K, a=state.a, b=state.b, regime=state.regime,
        alpha=state.alpha if inf else math.nan, theta=state.theta if inf else math.nan,
        gamma=math.nan if inf else state.gamma, k=math.nan if inf else state.k,
        loglik=state_loglik(state),
        z=state.z.copy(), sigma=state.sigma.copy(), xi=state.xi.copy(),
    )


def iter_chain(dag: Dag, priors: PriorConfig, tuning: TuningConfig, mode: str = "infinite",
               pseudo=None, state: ChainState | None = None) -> Iterator[TraceRecord]:
    """Run a chain, yielding thinned post-burn-in records as they are produced."""
    rng = np.random.default_rng(tuning.seed)
    if state is None:
        state = init_state(dag, priors, tuning, mode, rng, pseudo)
    total = tuning.burn_in + tuning.iterations
    for it in range(total):
        sweep(state, rng)
        if (it + 1) % tuning.refresh_every == 0:
            if tuning.debug and not state.check_counts():
                raise AssertionError("incremental block counts drifted from their definition")
            state.refresh()
        done = it + 1 - tuning.burn_in
        if done > 0 and done % tuning.thinning == 0:
            yield record(state, it + 1)


def run_chain(dag: Dag, priors: PriorConfig, tuning: TuningConfig, mode: str = "infinite",
              pseudo=None) -> list[TraceRecord]:
    return list(iter_chain(dag, priors, tuning, mode, pseudo))
