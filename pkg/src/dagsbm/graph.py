"""Directed graph ingestion, cleaning and topological sorting.

Nodes are dense integers ``0..n-1``. Original identifiers from an edge-list
file are kept in ``labels`` so results can be written back out.
"""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    """Malformed graph input."""


class CyclicError(GraphError):
    """Raised when no topological ordering exists.

    ``nodes`` holds the nodes still unsorted when Kahn's algorithm stalled.
    """

    def __init__(self, nodes: Iterable[int]):
        self.nodes = frozenset(int(v) for v in nodes)
        shown = sorted(self.nodes)[:10]
        more = "..." if len(self.nodes) > 10 else ""
        super().__init__(
            f"graph contains a directed cycle among {len(self.nodes)} nodes "
            f"(e.g. {shown}{more})"
        )


def _as_edge_array(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphError("edges must be a sequence of (src, dst) pairs")
    return arr


def _check_edges(n: int, edges: np.ndarray) -> np.ndarray:
    if n < 1:
        raise GraphError("graph must have at least one node")
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise GraphError(f"edge endpoint out of range 0..{n - 1}")
    loops = edges[:, 0] == edges[:, 1]
    if loops.any():
        p = int(edges[loops][0, 0])
        raise GraphError(f"self-loop on node {p}")
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    if len(edges) > 1:
        dup = np.all(edges[1:] == edges[:-1], axis=1)
        if dup.any():
            p, q = edges[1:][dup][0]
            raise GraphError(f"duplicate edge ({p}, {q})")
    return edges


@dataclass(frozen=True)
class RawDigraph:
    """Directed graph that may contain cycles and several components."""

    n: int
    edges: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        edges = _check_edges(self.n, _as_edge_array(self.edges))
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.n)))
        elif len(self.labels) != self.n:
            raise GraphError("labels must have one entry per node")

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class Dag:
    """Immutable DAG with CSR out/in adjacency.

    ``counts`` holds the multiplicity of each edge; input data are binary,
    but simulated Poisson data may carry counts above one.
    """

    n: int
    edges: np.ndarray
    labels: tuple = ()
    counts: np.ndarray | None = None
    out_ptr: np.ndarray = field(init=False, repr=False)
    out_idx: np.ndarray = field(init=False, repr=False)
    out_cnt: np.ndarray = field(init=False, repr=False)
    in_ptr: np.ndarray = field(init=False, repr=False)
    in_idx: np.ndarray = field(init=False, repr=False)
    in_cnt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        raw = _as_edge_array(self.edges)
        counts = (
            np.ones(len(raw), dtype=np.int64)
            if self.counts is None
            else np.asarray(self.counts, dtype=np.int64).reshape(-1)
        )
        if len(counts) != len(raw):
            raise GraphError("counts must have one entry per edge")
        if (counts < 1).any():
            raise GraphError("edge counts must be positive")
        order = np.lexsort((raw[:, 1], raw[:, 0])) if len(raw) else np.empty(0, int)
        edges = _check_edges(self.n, raw)
        counts = counts[order]
        if len(edges):
            rev = edges[:, 1] * self.n + edges[:, 0]
            fwd = edges[:, 0] * self.n + edges[:, 1]
            if np.isin(rev, fwd).any():
                raise CyclicError(np.unique(edges[np.isin(rev, fwd)]))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.n)))
        elif len(self.labels) != self.n:
            raise GraphError("labels must have one entry per node")

        out_ptr, out_idx, out_cnt = _csr(self.n, edges[:, 0], edges[:, 1], counts)
        in_ptr, in_idx, in_cnt = _csr(self.n, edges[:, 1], edges[:, 0], counts)
        for name, arr in [
            ("edges", edges), ("counts", counts),
            ("out_ptr", out_ptr), ("out_idx", out_idx), ("out_cnt", out_cnt),
            ("in_ptr", in_ptr), ("in_idx", in_idx), ("in_cnt", in_cnt),
        ]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        # raises CyclicError if no ordering exists
        kahn_sort(self)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())

    def out_neighbors(self, p: int) -> np.ndarray:
        return self.out_idx[self.out_ptr[p]:self.out_ptr[p + 1]]

    def in_neighbors(self, p: int) -> np.ndarray:
        return self.in_idx[self.in_ptr[p]:self.in_ptr[p + 1]]

    def degree(self) -> np.ndarray:
        """Total (in + out) edge count per node."""
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], self.counts)
        np.add.at(deg, self.edges[:, 1], self.counts)
        return deg

    def adjacency(self) -> np.ndarray:
        y = np.zeros((self.n, self.n), dtype=np.int64)
        y[self.edges[:, 0], self.edges[:, 1]] = self.counts
        return y


def _csr(n, src, dst, cnt):
    order = np.lexsort((dst, src))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), dst[order].astype(np.int64), cnt[order].astype(np.int64)


# ---------------------------------------------------------------------------
# parsing / serialization


def parse_edge_list(text: str | io.TextIOBase, format: str = "two-column") -> RawDigraph:
    """Parse an edge list into a :class:`RawDigraph`.

    Identifiers are mapped to ``0..n-1`` in order of first appearance and
    kept in ``labels``. Duplicate edges are collapsed; ``#`` starts a comment.
    ``format`` is ``"two-column"`` (whitespace or comma separated) or ``"csv"``.
    """
    if not isinstance(text, str):
        text = text.read()
    if format not in ("two-column", "csv"):
        raise GraphError(f"unknown edge-list format {format!r}")

    index: dict[str, int] = {}
    pairs: list[tuple[int, int]] = []
    lines = text.splitlines()
    rows: Iterable[Sequence[str]]
    if format == "csv":
        body = [ln.split("#", 1)[0] for ln in lines]
        rows = csv.reader(body)
    else:
        rows = (ln.split("#", 1)[0].replace(",", " ").split() for ln in lines)

    for lineno, tokens in enumerate(rows, start=1):
        tokens = [t.strip() for t in tokens if t.strip()]
        if not tokens:
            continue
        if len(tokens) != 2:
            raise GraphError(f"line {lineno}: expected two node identifiers, got {len(tokens)}")
        src, dst = tokens
        if src == dst:
            raise GraphError(f"line {lineno}: self-loop on {src!r}")
        ids = []
        for tok in (src, dst):
            if tok not in index:
                index[tok] = len(index)
            ids.append(index[tok])
        pairs.append((ids[0], ids[1]))

    if not pairs:
        raise GraphError("edge list is empty")
    edges = np.unique(np.array(pairs, dtype=np.int64), axis=0)
    return RawDigraph(len(index), edges, labels=tuple(index))


def read_edge_list(path, format: str = "two-column") -> RawDigraph:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh.read(), format=format)


def serialize_edge_list(g: RawDigraph | Dag) -> str:
    """Two-column text using the graph's original labels."""
    lab = g.labels
    return "".join(f"{lab[p]} {lab[q]}\n" for p, q in g.edges)


def write_edge_list(g: RawDigraph | Dag, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_edge_list(g))


def to_dag(g: RawDigraph) -> Dag:
    """Promote a raw digraph to a :class:`Dag`; raises :class:`CyclicError`."""
    return Dag(g.n, g.edges, labels=g.labels)


# ---------------------------------------------------------------------------
# orderings


def kahn_sort(g: RawDigraph | Dag):
    """Topological sort, smallest available node first.

    Returns an :class:`~dagsbm.state.OrderingState`; raises
    :class:`CyclicError` with the unsorted nodes if the graph has a cycle.
    """
    from .state import OrderingState

    n = g.n
    indeg = np.zeros(n, dtype=np.int64)
    succ: list[list[int]] = [[] for _ in range(n)]
    for p, q in g.edges:
        succ[p].append(int(q))
        indeg[q] += 1
    heap = [p for p in range(n) if indeg[p] == 0]
    heapq.heapify(heap)
    sigma = []
    while heap:
        p = heapq.heappop(heap)
        sigma.append(p)
        for q in succ[p]:
            indeg[q] -= 1
            if indeg[q] == 0:
                heapq.heappush(heap, q)
    if len(sigma) < n:
        placed = set(sigma)
        raise CyclicError(v for v in range(n) if v not in placed)
    return OrderingState.from_sigma(np.array(sigma, dtype=np.int64))


def check_topological(g: RawDigraph | Dag, ordering) -> bool:
    """True iff every edge points from an earlier to a later position."""
    phi = np.asarray(ordering.phi)
    if len(phi) != g.n:
        raise GraphError(f"ordering has length {len(phi)}, graph has {g.n} nodes")
    if g.n_edges == 0:
        return True
    return bool(np.all(phi[g.edges[:, 0]] < phi[g.edges[:, 1]]))


# ---------------------------------------------------------------------------
# cleaning


@dataclass
class Removal:
    src: int
    dst: int
    reason: str


def _find_cycle_edge(n: int, succ: list[list[int]]) -> tuple[int, int] | None:
    """Iterative DFS in ascending node order; returns the first back edge."""
    color = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    for root in range(n):
        if color[root]:
            continue
        stack = [(root, 0)]
        color[root] = 1
        while stack:
            v, i = stack[-1]
            if i < len(succ[v]):
                stack[-1] = (v, i + 1)
                w = succ[v][i]
                if color[w] == 1:
                    return v, w
                if color[w] == 0:
                    color[w] = 1
                    stack.append((w, 0))
            else:
                color[v] = 2
                stack.pop()
    return None


def break_cycles(g: RawDigraph) -> tuple[Dag, list[Removal]]:
    """Remove edges until the graph is acyclic.

    Each mutual pair ``(p, q), (q, p)`` loses the edge whose source has the
    larger index. Any longer cycles left are cut by deleting the back edge
    found by a depth-first search, repeatedly, until Kahn's algorithm succeeds.
    """
    edge_set = {(int(p), int(q)) for p, q in g.edges}
    log: list[Removal] = []
    for p, q in sorted(edge_set):
        if p > q and (q, p) in edge_set:
            log.append(Removal(p, q, "mutual_pair"))
    for r in log:
        edge_set.discard((r.src, r.dst))

    while True:
        succ: list[list[int]] = [[] for _ in range(g.n)]
        for p, q in sorted(edge_set):
            succ[p].append(q)
        back = _find_cycle_edge(g.n, succ)
        if back is None:
            break
        edge_set.discard(back)
        log.append(Removal(back[0], back[1], "cycle"))

    edges = np.array(sorted(edge_set), dtype=np.int64).reshape(-1, 2)
    return Dag(g.n, edges, labels=g.labels), log


def write_removal_log(log: Sequence[Removal], path, labels: Sequence | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "reason"])
        for r in log:
            src = labels[r.src] if labels is not None else r.src
            dst = labels[r.dst] if labels is not None else r.dst
            w.writerow([src, dst, r.reason])


def largest_weak_component(g: Dag | RawDigraph):
    """Induced subgraph on the largest weakly connected node set.

    Ties go to the component containing the smallest node index. Nodes are
    relabelled ``0..n'-1`` in their original relative order. Returns the
    subgraph and ``mapping`` with ``mapping[new] = old``.
    """
    if g.n < 1:
        raise GraphError("graph is empty")
    e = g.edges
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(g.n, g.n))
    _, comp = connected_components(adj, directed=True, connection="weak")
    sizes = np.bincount(comp)
    first = np.full(len(sizes), g.n)
    np.minimum.at(first, comp, np.arange(g.n))
    best = min(range(len(sizes)), key=lambda c: (-sizes[c], first[c]))
    mapping = np.flatnonzero(comp == best)
    new_id = np.full(g.n, -1, dtype=np.int64)
    new_id[mapping] = np.arange(len(mapping))
    keep = (new_id[e[:, 0]] >= 0) & (new_id[e[:, 1]] >= 0) if len(e) else np.zeros(0, bool)
    sub_edges = new_id[e[keep]] if len(e) else e
    labels = tuple(g.labels[i] for i in mapping)
    if isinstance(g, Dag):
        sub = Dag(len(mapping), sub_edges, labels=labels, counts=g.counts[keep])
    else:
        sub = RawDigraph(len(mapping), sub_edges, labels=labels)
    return sub, mapping
