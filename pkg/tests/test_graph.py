import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import DisjointSet

from dagsbm.graph import (
    CyclicError,
    Dag,
    GraphError,
    RawDigraph,
    break_cycles,
    check_topological,
    kahn_sort,
    largest_weak_component,
    parse_edge_list,
    serialize_edge_list,
    write_removal_log,
)
from dagsbm.state import OrderingState

from conftest import random_dag


def edge_set(g):
    return {tuple(map(int, e)) for e in g.edges}


class TestParse:
    def test_basic(self):
        g = parse_edge_list("A B\nA C\nB C")
        assert g.n == 3
        assert edge_set(g) == {(0, 1), (0, 2), (1, 2)}
        assert g.labels == ("A", "B", "C")

    def test_self_loop(self):
        with pytest.raises(GraphError, match="self-loop"):
            parse_edge_list("A A")

    def test_duplicates_collapse(self):
        g = parse_edge_list("A B\nA B")
        assert g.n == 2 and edge_set(g) == {(0, 1)}

    def test_comments_commas_and_csv(self):
        g = parse_edge_list("# header\nx,y  # trailing\n\ny z\n")
        assert edge_set(g) == {(0, 1), (1, 2)}
        h = parse_edge_list('"a b",c\nc,d\n', format="csv")
        assert h.labels == ("a b", "c", "d")

    @pytest.mark.parametrize("text", ["A B C", "A", "", "# only a comment\n"])
    def test_malformed(self, text):
        with pytest.raises(GraphError):
            parse_edge_list(text)

    def test_round_trip(self, rng):
        for _ in range(20):
            g, _ = random_dag(12, rng)
            if g.n_edges == 0:
                continue
            raw = RawDigraph(g.n, g.edges, labels=tuple(f"n{i}" for i in range(g.n)))
            back = parse_edge_list(serialize_edge_list(raw))
            relabel = {lab: i for i, lab in enumerate(raw.labels)}
            got = {(relabel[back.labels[p]], relabel[back.labels[q]]) for p, q in back.edges}
            assert got == edge_set(raw)


class TestDag:
    def test_rejects_mutual_pair_and_cycles(self):
        with pytest.raises(CyclicError):
            Dag(2, [(0, 1), (1, 0)])
        with pytest.raises(CyclicError):
            Dag(3, [(0, 1), (1, 2), (2, 0)])

    def test_rejects_self_loop_and_duplicates(self):
        with pytest.raises(GraphError):
            Dag(2, [(0, 0)])
        with pytest.raises(GraphError):
            Dag(2, [(0, 1), (0, 1)])
        with pytest.raises(GraphError):
            Dag(2, [(0, 5)])

    def test_adjacency(self):
        g = Dag(4, [(0, 2), (0, 1), (1, 3)], counts=[2, 1, 1])
        assert list(g.out_neighbors(0)) == [1, 2]
        assert list(g.in_neighbors(3)) == [1]
        assert g.degree().tolist() == [3, 2, 2, 1]
        assert g.total_count == 4


class TestKahn:
    def test_unique_order(self):
        g = Dag(3, [(0, 1), (0, 2), (1, 2)])
        assert kahn_sort(g).sigma.tolist() == [0, 1, 2]

    def test_cycle(self):
        with pytest.raises(CyclicError) as err:
            kahn_sort(RawDigraph(2, [(0, 1), (1, 0)]))
        assert err.value.nodes == frozenset({0, 1})

    def test_tie_break(self):
        assert kahn_sort(RawDigraph(3, np.zeros((0, 2), int))).sigma.tolist() == [0, 1, 2]
        assert kahn_sort(Dag(3, [(2, 0)])).sigma.tolist() == [1, 2, 0]

    def test_random_dags_sorted(self, rng):
        for _ in range(100):
            g, _ = random_dag(int(rng.integers(1, 25)), rng, p=rng.random())
            assert check_topological(g, kahn_sort(g))


class TestCheckTopological:
    def test_examples(self):
        g = Dag(2, [(0, 1)])
        assert check_topological(g, OrderingState.from_sigma([0, 1]))
        assert not check_topological(g, OrderingState.from_sigma([1, 0]))
        h = Dag(3, [(0, 1), (0, 2), (1, 2)])
        assert not check_topological(h, OrderingState.from_sigma([0, 2, 1]))

    def test_length_mismatch(self):
        with pytest.raises(GraphError):
            check_topological(Dag(3, [(0, 1)]), OrderingState.from_sigma([0, 1]))


class TestBreakCycles:
    def test_mutual_pair_keeps_smaller_source(self):
        dag, log = break_cycles(RawDigraph(2, [(0, 1), (1, 0)]))
        assert edge_set(dag) == {(0, 1)}
        assert [(r.src, r.dst, r.reason) for r in log] == [(1, 0, "mutual_pair")]

    def test_acyclic_identity(self, rng):
        g, _ = random_dag(15, rng)
        dag, log = break_cycles(RawDigraph(g.n, g.edges))
        assert edge_set(dag) == edge_set(g) and log == []

    def test_three_cycle(self):
        dag, log = break_cycles(RawDigraph(3, [(0, 1), (1, 2), (2, 0)]))
        assert dag.n_edges == 2 and len(log) == 1 and log[0].reason == "cycle"
        kahn_sort(dag)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 9).flatmap(
        lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                                                .filter(lambda e: e[0] != e[1]), max_size=30))))
    def test_always_acyclic(self, case):
        n, edges = case
        raw = RawDigraph(n, sorted(edges) or np.zeros((0, 2), int))
        dag, log = break_cycles(raw)
        kahn_sort(dag)
        assert dag.n_edges + len(log) == raw.n_edges
        assert edge_set(dag) <= edge_set(raw)

    def test_removal_log_csv(self, tmp_path):
        _, log = break_cycles(RawDigraph(2, [(0, 1), (1, 0)], labels=("a", "b")))
        write_removal_log(log, tmp_path / "r.csv", labels=("a", "b"))
        assert (tmp_path / "r.csv").read_text().splitlines() == ["src,dst,reason", "b,a,mutual_pair"]


class TestLargestComponent:
    def test_examples(self):
        sub, mapping = largest_weak_component(Dag(3, [(0, 1)]))
        assert sub.n == 2 and edge_set(sub) == {(0, 1)} and mapping.tolist() == [0, 1]
        g = Dag(3, [(0, 1), (1, 2)])
        sub, _ = largest_weak_component(g)
        assert edge_set(sub) == edge_set(g)
        sub, mapping = largest_weak_component(Dag(5, [(3, 4), (0, 2), (2, 1)]))
        assert mapping.tolist() == [0, 1, 2] and edge_set(sub) == {(0, 2), (2, 1)}

    def test_tie_goes_to_smallest_index(self):
        _, mapping = largest_weak_component(Dag(4, [(2, 3), (1, 0)]))
        assert mapping.tolist() == [0, 1]

    def test_matches_union_find(self, rng):
        for _ in range(30):
            g, _ = random_dag(20, rng, p=0.06)
            ds = DisjointSet(range(g.n))
            for p, q in g.edges:
                ds.merge(int(p), int(q))
            sub, mapping = largest_weak_component(g)
            assert sub.n == max(len(s) for s in ds.subsets())
            assert len({ds[int(v)] for v in mapping}) == 1
