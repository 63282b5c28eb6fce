import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caperc.ca_components import (
    ORACLE_MAX_N,
    Partition,
    ca_partition,
    ca_partition_oracle,
    ca_relation_oracle,
    components_avoiding,
    components_of,
    meet,
    size_census,
)
from caperc.colored_graph import GREEN, ColoredMultigraph, figure1_gadget, view
from caperc.errors import DomainError

from conftest import random_graph, small_graphs


def blocks(p: Partition):
    return sorted(sorted(b) for b in p.blocks().values())


# --- Partition ---------------------------------------------------------------


def test_partition_canonical():
    p = Partition.from_labels([7, 7, 3, 7, 3])
    assert p.label.tolist() == [0, 0, 2, 0, 2]
    assert p.representatives().tolist() == [0, 2]
    assert p.sizes()[[0, 2]].tolist() == [3, 2]
    assert p.block_of(4).tolist() == [2, 4]


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_partition_idempotent(raw):
    p = Partition.from_labels(raw)
    lab = p.label
    assert np.array_equal(lab[lab], lab)
    assert np.all(lab <= np.arange(len(lab)))
    assert Partition.from_labels(lab) == p
    assert sorted(v for b in p.blocks().values() for v in b) == list(range(len(raw)))


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_partition_dump_roundtrip(raw):
    p = Partition.from_labels(raw)
    assert Partition.parse(p.dump()) == p


def test_partition_dump_format():
    p = Partition.from_blocks(5, [[1, 3], [0, 4]])
    assert p.dump() == "block 0: 0 4\nblock 1: 1 3\nblock 2: 2\n"


@pytest.mark.parametrize("text", ["block 0: 0 2\n", "blok 0: 0\n", "block 0: 0 0\n"])
def test_partition_parse_errors(text):
    with pytest.raises(DomainError):
        Partition.parse(text)


# --- meet ------------------------------------------------------------------------


@given(st.lists(st.integers(0, 4), min_size=1, max_size=25), st.integers(0, 2**32 - 1))
def test_meet_lattice_laws(raw, seed):
    p = Partition.from_labels(raw)
    n = p.n
    q = Partition.from_labels(np.random.default_rng(seed).integers(0, 4, n))
    assert meet(p, Partition.singletons(n)) == Partition.singletons(n)
    assert meet(p, p) == p
    assert meet(p, Partition.one_block(n)) == p
    assert meet(p, q) == meet(q, p)
    m = meet(p, q)
    assert m.refines(p) and m.refines(q)
    # meet by brute force over pairs
    for u, v in itertools.combinations(range(n), 2):
        same = p.label[u] == p.label[v] and q.label[u] == q.label[v]
        assert (m.label[u] == m.label[v]) == same


def test_meet_size_mismatch():
    with pytest.raises(DomainError):
        meet(Partition.singletons(3), Partition.singletons(4))


# --- components_avoiding ---------------------------------------------------------


def test_avoid_single_colored_edge():
    g = ColoredMultigraph(2, ([(0, 1)], []))
    assert blocks(components_avoiding(g, 0)) == [[0], [1]]


def test_avoid_multicolored_edge():
    g = ColoredMultigraph(2, ([(0, 1)], [(0, 1)]))
    assert blocks(components_avoiding(g, 0)) == [[0, 1]]


def test_gadget_avoid_green():
    g = figure1_gadget(1)
    assert blocks(components_avoiding(g, GREEN)) == [[0, 1, 2, 3], [4, 5, 6, 7]]


# --- ca_partition ------------------------------------------------------------------


def test_rainbow_triangle():
    g = ColoredMultigraph(3, ([(0, 1)], [(1, 2)], [(0, 2)]))
    rep = ca_partition(g)
    assert blocks(rep.partition) == [[0, 1, 2]]
    assert rep.histogram == {3: 1}
    assert rep.max_size == 3
    assert blocks(ca_partition_oracle(g)) == [[0, 1, 2]]


def test_gadget_closed_ell2():
    rep = ca_partition(figure1_gadget(2, closing_edge=True))
    assert rep.histogram == {1: rep.n - 10, 2: 5}


def test_monochromatic_path():
    g = ColoredMultigraph(3, ([(0, 1), (1, 2)], []))
    assert ca_partition(g).histogram == {1: 3}


def test_two_repeated_edges():
    g = ColoredMultigraph(4, ([(0, 1), (2, 3)], [(0, 1), (2, 3)]))
    assert blocks(ca_partition_oracle(g)) == [[0, 1], [2, 3]]
    assert blocks(ca_partition(g).partition) == [[0, 1], [2, 3]]


def test_size_census_examples():
    assert size_census(Partition.singletons(5)) == {1: 5}
    assert size_census(Partition.from_blocks(5, [[0, 2, 4]])) == {1: 2, 3: 1}
    assert ca_partition(figure1_gadget(1, closing_edge=True)).histogram == {1: 2, 2: 3}


def test_oracle_guard():
    with pytest.raises(DomainError):
        ca_partition_oracle(ColoredMultigraph(ORACLE_MAX_N + 1, ([], [])))


# --- properties ----------------------------------------------------------------------


@given(small_graphs())
def test_matches_oracle(g):
    assert ca_partition(g).partition == ca_partition_oracle(g)


@given(small_graphs(max_n=10))
def test_oracle_relation_is_equivalence(g):
    r = ca_relation_oracle(g)
    assert r.diagonal().all()
    assert np.array_equal(r, r.T)
    # transitive: r @ r stays inside r
    assert not ((r.astype(int) @ r.astype(int) > 0) & ~r).any()


@given(small_graphs(max_n=12))
def test_report_invariants(g):
    rep = ca_partition(g)
    assert sum(l * c for l, c in rep.histogram.items()) == g.n
    assert rep.max_size == max(l for l, c in rep.histogram.items() if c)
    for avoided in rep.avoided_partitions:
        assert rep.partition.refines(avoided)
    assert rep.partition.refines(components_of(g.n, view(g).edges))


@given(small_graphs(max_n=10), st.data())
def test_adding_edge_coarsens(g, data):
    if g.n < 2:
        return
    u = data.draw(st.integers(0, g.n - 1))
    v = data.draw(st.integers(0, g.n - 1).filter(lambda x: x != u))
    i = data.draw(st.integers(0, g.k - 1))
    before = ca_partition(g).partition
    after = ca_partition(g.with_edge(i, u, v)).partition
    assert before.refines(after)


@given(small_graphs(max_n=10), st.randoms())
def test_color_permutation_invariance(g, rnd):
    order = list(range(g.k))
    rnd.shuffle(order)
    assert ca_partition(g.permuted(order)).partition == ca_partition(g).partition


def test_oracle_sweep_1000():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        g = random_graph(rng, int(rng.integers(2, 9)), int(rng.choice([2, 3, 4])))
        assert ca_partition(g).partition == ca_partition_oracle(g)
