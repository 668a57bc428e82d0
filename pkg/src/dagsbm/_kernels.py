"""Compiled inner loops for the block-count bookkeeping and per-node updates.

All arrays are 0-based. Count matrices are capacity buffers: only the
leading ``K x K`` block is meaningful and rows/columns beyond it are kept
at zero. Random numbers are drawn by the caller and passed in, so results
depend only on the caller's generator.
"""
import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def cell_score(e, m, a, b):
    """log Gamma(e + a) - (e + a) log(m + b) for one block cell."""
    return math.lgamma(e + a) - (e + a) * math.log(m + b)


@njit(cache=True)
def collapsed_block_term(E, M, K, a, b):
    """Block part of the collapsed log-likelihood, including the K^2 prior constants."""
    s = K * K * (a * math.log(b) - math.lgamma(a))
    for i in range(K):
        for j in range(K):
            s += cell_score(E[i, j], M[i, j], a, b)
    return s


@njit(cache=True)
def counts_from_scratch(sigma, z, xi, K, src, dst, cnt, E, M):
    E[:, :] = 0
    M[:, :] = 0.0
    suffix = np.zeros(K)
    for pos in range(len(sigma) - 1, -1, -1):
        v = sigma[pos]
        g = z[v]
        for j in range(K):
            M[g, j] += xi[v] * suffix[j]
        suffix[g] += xi[v]
    for e in range(len(src)):
        E[z[src[e]], z[dst[e]]] += cnt[e]


@njit(cache=True)
def node_vectors(v, sigma, phi, z, xi, K, out_ptr, out_idx, out_cnt,
                 in_ptr, in_idx, in_cnt, oE, iE, oM, iM):
    """Dyad sums of node ``v`` against every group, split by direction.

    ``oE/oM`` cover dyads from ``v`` to later positions, ``iE/iM`` dyads from
    earlier positions into ``v``. Entries of ``z`` equal to -1 are skipped.
    """
    oE[:] = 0
    iE[:] = 0
    oM[:] = 0.0
    iM[:] = 0.0
    f = phi[v]
    for pos in range(len(sigma)):
        q = sigma[pos]
        g = z[q]
        if q == v or g < 0:
            continue
        if pos < f:
            iM[g] += xi[q]
        else:
            oM[g] += xi[q]
    for j in range(K):
        oM[j] *= xi[v]
        iM[j] *= xi[v]
    for t in range(out_ptr[v], out_ptr[v + 1]):
        g = z[out_idx[t]]
        if g >= 0:
            oE[g] += out_cnt[t]
    for t in range(in_ptr[v], in_ptr[v + 1]):
        g = z[in_idx[t]]
        if g >= 0:
            iE[g] += in_cnt[t]


@njit(cache=True)
def _shift(E, M, c, K, oE, iE, oM, iM, sign):
    for j in range(K):
        E[c, j] += sign * oE[j]
        M[c, j] += sign * oM[j]
    for i in range(K):
        E[i, c] += sign * iE[i]
        M[i, c] += sign * iM[i]


@njit(cache=True)
def detach(v, z, sizes, K, E, M, oE, iE, oM, iM):
    """Remove node ``v``'s dyads from its group; returns ``(K, vacated)``.

    When the group empties, the last label is swapped into the vacated slot
    (``z``, ``sizes``, counts and the node vectors are all relabelled) and
    ``vacated`` is that slot; otherwise ``vacated`` is -1. ``z[v]`` is set to -1.
    """
    k = z[v]
    _shift(E, M, k, K, oE, iE, oM, iM, -1)
    sizes[k] -= 1
    z[v] = -1
    if sizes[k] > 0:
        return K, -1
    last = K - 1
    for j in range(K):
        E[k, j] = 0
        E[j, k] = 0
        M[k, j] = 0.0
        M[j, k] = 0.0
    if k != last:
        for j in range(K):
            E[k, j] = E[last, j]
            M[k, j] = M[last, j]
            E[last, j] = 0
            M[last, j] = 0.0
        for i in range(K):
            E[i, k] = E[i, last]
            M[i, k] = M[i, last]
            E[i, last] = 0
            M[i, last] = 0.0
        sizes[k] = sizes[last]
        for q in range(len(z)):
            if z[q] == last:
                z[q] = k
        oE[k] = oE[last]
        iE[k] = iE[last]
        oM[k] = oM[last]
        iM[k] = iM[last]
    sizes[last] = 0
    oE[last] = 0
    iE[last] = 0
    oM[last] = 0.0
    iM[last] = 0.0
    return K - 1, k


@njit(cache=True)
def attach(v, c, z, sizes, K, E, M, oE, iE, oM, iM):
    """Add node ``v`` to group ``c`` (``c == K`` opens a new group); returns K."""
    if c == K:
        for j in range(K + 1):
            E[c, j] = 0
            E[j, c] = 0
            M[c, j] = 0.0
            M[j, c] = 0.0
        sizes[c] = 0
        K += 1
    _shift(E, M, c, K, oE, iE, oM, iM, 1)
    sizes[c] += 1
    z[v] = c
    return K


@njit(cache=True)
def existing_lik_delta(c, K, E, M, oE, iE, oM, iM, a, b):
    """Log-likelihood change from attaching a node to existing group ``c``.

    Every touched cell counts once; the diagonal receives both directions.
    """
    d = 0.0
    for j in range(K):
        if j == c:
            e0 = E[c, c]
            m0 = M[c, c]
            d += cell_score(e0 + oE[c] + iE[c], m0 + oM[c] + iM[c], a, b) - cell_score(e0, m0, a, b)
            continue
        if oE[j] != 0 or oM[j] != 0.0:
            d += cell_score(E[c, j] + oE[j], M[c, j] + oM[j], a, b) - cell_score(E[c, j], M[c, j], a, b)
        if iE[j] != 0 or iM[j] != 0.0:
            d += cell_score(E[j, c] + iE[j], M[j, c] + iM[j], a, b) - cell_score(E[j, c], M[j, c], a, b)
    return d


@njit(cache=True)
def new_lik_delta(K, oE, iE, oM, iM, a, b):
    """Log-likelihood change from opening a new group for a node.

    Includes the b^a / Gamma(a) constants of the 2K + 1 new cells; the new
    diagonal cell is empty and contributes nothing.
    """
    s0 = cell_score(0, 0.0, a, b)
    d = 0.0
    for j in range(K):
        d += cell_score(oE[j], oM[j], a, b) - s0
        d += cell_score(iE[j], iM[j], a, b) - s0
    return d


@njit(cache=True)
def allocation_logweights(K, sizes, E, M, oE, iE, oM, iM, a, b, alpha, new_coef, lik_w, logw):
    """Unnormalised log full-conditional weights for labels ``0..K``.

    ``new_coef`` is the CRP mass for a new group (theta + alpha K, or
    gamma (k - K) in the finite regime); non-positive means closed.
    """
    for c in range(K):
        logw[c] = math.log(sizes[c] - alpha) + lik_w * existing_lik_delta(c, K, E, M, oE, iE, oM, iM, a, b)
    if new_coef > 0.0:
        logw[K] = math.log(new_coef) + lik_w * new_lik_delta(K, oE, iE, oM, iM, a, b)
    else:
        logw[K] = NEG_INF


@njit(cache=True)
def _draw(logw, n, u):
    mx = NEG_INF
    for c in range(n):
        if logw[c] > mx:
            mx = logw[c]
    tot = 0.0
    for c in range(n):
        tot += math.exp(logw[c] - mx)
    target = u * tot
    acc = 0.0
    last = 0
    for c in range(n):
        w = math.exp(logw[c] - mx)
        if w > 0.0:
            last = c
            acc += w
            if target < acc:
                return c
    return last


@njit(cache=True)
def gibbs_sweep(start, sigma, phi, z, sizes, K, E, M, xi,
                out_ptr, out_idx, out_cnt, in_ptr, in_idx, in_cnt,
                a, b, alpha, theta, finite, kmax, gamma, lik_w, uniforms,
                oE, iE, oM, iM, logw):
    """Single-site Gibbs scan over positions ``start..n-1``.

    Stops early (returning the position reached) when the buffers cannot
    hold another group; the caller grows them and resumes.
    """
    cap = E.shape[0]
    n = len(sigma)
    for pos in range(start, n):
        if K >= cap:
            return pos, K
        v = sigma[pos]
        node_vectors(v, sigma, phi, z, xi, K, out_ptr, out_idx, out_cnt,
                     in_ptr, in_idx, in_cnt, oE, iE, oM, iM)
        K, _ = detach(v, z, sizes, K, E, M, oE, iE, oM, iM)
        if finite:
            new_coef = gamma * (kmax - K)
        else:
            new_coef = theta + alpha * K
        allocation_logweights(K, sizes, E, M, oE, iE, oM, iM, a, b, alpha, new_coef, lik_w, logw)
        c = _draw(logw, K + 1, uniforms[pos])
        K = attach(v, c, z, sizes, K, E, M, oE, iE, oM, iM)
    return n, K


@njit(cache=True)
def restricted_scan(nodes, la, lb, sigma, phi, z, sizes, K, E, M, xi,
                    out_ptr, out_idx, out_cnt, in_ptr, in_idx, in_cnt,
                    a, b, alpha, lik_w, uniforms, forced,
                    oE, iE, oM, iM):
    """Gibbs scan of ``nodes`` restricted to labels ``la`` and ``lb``.

    If ``forced`` is empty, labels are sampled with ``uniforms``; otherwise
    each node is moved to ``forced[i]``. Returns the log probability of the
    realised labels under the scan.
    """
    logq = 0.0
    sample = len(forced) == 0
    for t in range(len(nodes)):
        v = nodes[t]
        node_vectors(v, sigma, phi, z, xi, K, out_ptr, out_idx, out_cnt,
                     in_ptr, in_idx, in_cnt, oE, iE, oM, iM)
        K, _ = detach(v, z, sizes, K, E, M, oE, iE, oM, iM)
        wa = math.log(sizes[la] - alpha) + lik_w * existing_lik_delta(la, K, E, M, oE, iE, oM, iM, a, b)
        wb = math.log(sizes[lb] - alpha) + lik_w * existing_lik_delta(lb, K, E, M, oE, iE, oM, iM, a, b)
        # log P(la) and log P(lb), computed stably
        mx = max(wa, wb)
        lse = mx + math.log(math.exp(wa - mx) + math.exp(wb - mx))
        if sample:
            c = la if uniforms[t] < math.exp(wa - lse) else lb
        else:
            c = forced[t]
        logq += (wa if c == la else wb) - lse
        K = attach(v, c, z, sizes, K, E, M, oE, iE, oM, iM)
    return logq


@njit(cache=True)
def ordering_sweep(sigma, phi, z, K, E, M, xi,
                   out_ptr, out_idx, out_cnt, in_ptr, in_idx, in_cnt,
                   a, b, lik_w, moves, uniforms, dRow, dCol):
    """Leap-and-shift (modulo n) Metropolis update for every node in turn."""
    n = len(sigma)
    accepted = 0
    for v in range(n):
        m = moves[v]
        f = phi[v]
        if m > 0 and f + m > n - 1:
            m -= n
        elif m < 0 and f + m < 0:
            m += n
        t = f + m
        ok = True
        if m > 0:
            for s in range(out_ptr[v], out_ptr[v + 1]):
                if phi[out_idx[s]] <= t:
                    ok = False
                    break
        else:
            for s in range(in_ptr[v], in_ptr[v + 1]):
                if phi[in_idx[s]] >= t:
                    ok = False
                    break
        if not ok:
            continue
        zv = z[v]
        for j in range(K):
            dRow[j] = 0.0
            dCol[j] = 0.0
        if m > 0:
            lo, hi, sgn = f + 1, t + 1, -1.0
        else:
            lo, hi, sgn = t, f, 1.0
        # nodes in [lo, hi) swap sides with v
        for pos in range(lo, hi):
            q = sigma[pos]
            w = xi[v] * xi[q]
            dRow[z[q]] += sgn * w
            dCol[z[q]] -= sgn * w
        delta = 0.0
        for j in range(K):
            if j == zv:
                dd = dRow[j] + dCol[j]
                if dd != 0.0:
                    delta += cell_score(E[j, j], M[j, j] + dd, a, b) - cell_score(E[j, j], M[j, j], a, b)
                continue
            if dRow[j] != 0.0:
                delta += cell_score(E[zv, j], M[zv, j] + dRow[j], a, b) - cell_score(E[zv, j], M[zv, j], a, b)
            if dCol[j] != 0.0:
                delta += cell_score(E[j, zv], M[j, zv] + dCol[j], a, b) - cell_score(E[j, zv], M[j, zv], a, b)
        if math.log(uniforms[v]) < lik_w * delta:
            for j in range(K):
                if j == zv:
                    M[j, j] += dRow[j] + dCol[j]
                else:
                    M[zv, j] += dRow[j]
                    M[j, zv] += dCol[j]
            if m > 0:
                for pos in range(f, t):
                    sigma[pos] = sigma[pos + 1]
                    phi[sigma[pos]] = pos
            else:
                for pos in range(f, t, -1):
                    sigma[pos] = sigma[pos - 1]
                    phi[sigma[pos]] = pos
            sigma[t] = v
            phi[v] = t
            accepted += 1
    return accepted


@njit(cache=True)
def xi_sweep(sigma, phi, z, K, E, M, xi, deg, a, b, shape, rate, lik_w,
             steps, uniforms, before, after):
    """Gaussian random-walk Metropolis update of each degree correction."""
    n = len(sigma)
    accepted = 0
    for v in range(n):
        old = xi[v]
        new = old + steps[v]
        if new <= 0.0:
            continue
        for j in range(K):
            before[j] = 0.0
            after[j] = 0.0
        f = phi[v]
        for pos in range(n):
            q = sigma[pos]
            if q == v:
                continue
            if pos < f:
                before[z[q]] += xi[q]
            else:
                after[z[q]] += xi[q]
        dx = new - old
        zv = z[v]
        delta = 0.0
        for j in range(K):
            if j == zv:
                dd = dx * (after[j] + before[j])
                delta += cell_score(E[j, j], M[j, j] + dd, a, b) - cell_score(E[j, j], M[j, j], a, b)
                continue
            if after[j] != 0.0:
                delta += cell_score(E[zv, j], M[zv, j] + dx * after[j], a, b) - cell_score(E[zv, j], M[zv, j], a, b)
            if before[j] != 0.0:
                delta += cell_score(E[j, zv], M[j, zv] + dx * before[j], a, b) - cell_score(E[j, zv], M[j, zv], a, b)
        dlog = math.log(new) - math.log(old)
        delta += deg[v] * dlog
        prior = (shape - 1.0) * dlog - rate * dx
        if math.log(uniforms[v]) < lik_w * delta + prior:
            for j in range(K):
                if j == zv:
                    M[j, j] += dx * (after[j] + before[j])
                else:
                    M[zv, j] += dx * after[j]
                    M[j, zv] += dx * before[j]
            xi[v] = new
            accepted += 1
    return accepted
