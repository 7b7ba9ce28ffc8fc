import math
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from critnoise.analytics import (SizeVector, components, cycle_lengths, diameter, distance_stats,
                                 has_cycle_in_range, l2_distance, largest_component_stats, level_sizes,
                                 size_vector, subcritical_center, subcritical_diameter_bound, susceptibility,
                                 two_core)
from critnoise.graphs import Graph, sample_gnp


def to_nx(g: Graph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(map(tuple, g.edges.tolist()))
    return h


graphs = st.integers(1, 40).flatmap(
    lambda n: st.builds(
        lambda pairs: Graph.from_edges(n, [(a, b) for a, b in pairs if a != b]),
        st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n),
    )
)


def test_components_examples():
    assert components(Graph.empty(3)).sizes.tolist() == [1, 1, 1]
    d = components(Graph.from_edges(4, [(0, 1), (1, 2)]))
    assert d.sizes.tolist() == [3, 1]
    assert d.members(1).tolist() == [0, 1, 2] and d.members(2).tolist() == [3]
    with pytest.raises(IndexError):
        d.members(3)


def test_components_tie_break_smallest_vertex():
    d = components(Graph.from_edges(6, [(4, 5), (1, 3)]))
    assert d.sizes.tolist() == [2, 2, 1, 1]
    assert [c.tolist() for c in d.components] == [[1, 3], [4, 5], [0], [2]]


def test_components_match_bfs_reference():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        g = sample_gnp(30, 1 / 30, rng)
        d = components(g)
        ref = list(nx.connected_components(to_nx(g)))
        assert d.count == len(ref)
    # partition and ordering on a larger sample
    for _ in range(200):
        g = sample_gnp(200, 1 / 200, rng)
        d = components(g)
        ref = sorted((sorted(c) for c in nx.connected_components(to_nx(g))), key=lambda c: (-len(c), c[0]))
        assert [c.tolist() for c in d.components] == ref


@given(graphs)
def test_decomposition_invariants(g):
    d = components(g)
    assert d.sizes.sum() == g.n
    assert np.all(np.diff(d.sizes) <= 0)
    assert sorted(np.concatenate(d.components).tolist()) == list(range(g.n))
    for r, c in enumerate(d.components):
        assert np.all(d.labels[c] == r)
    s2 = susceptibility(d, 2)
    assert s2 >= g.n and (s2 == g.n) == (g.m == 0)


def test_size_vector_examples():
    sv = size_vector(components(Graph.from_edges(8, [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)])))
    assert np.allclose(sv.entries, [1.0, 1.0])
    assert size_vector(components(Graph.empty(1))).entries.tolist() == [1.0]
    with pytest.raises(ValueError):
        SizeVector(np.array([1.0, 2.0]), 1.0)
    with pytest.raises(ValueError):
        SizeVector(np.array([-1.0]), 1.0)


@given(graphs)
def test_size_vector_partition_identity(g):
    sv = size_vector(components(g))
    assert math.isclose(sv.entries.sum() * sv.scale, g.n, rel_tol=1e-12)


def test_l2_distance_examples():
    z = SizeVector(np.zeros(0), 1.0)
    assert l2_distance(SizeVector(np.array([3.0]), 1.0), z) == 3.0
    assert l2_distance(SizeVector(np.array([4.0, 3.0]), 1.0), SizeVector(np.array([0.0, 0.0]), 1.0)) == 5.0
    a = SizeVector(np.array([2.0, 1.0]), 1.0)
    assert l2_distance(a, a) == 0.0


@given(*(st.lists(st.floats(0, 100), max_size=6) for _ in range(3)))
def test_l2_distance_metric_axioms(x, y, z):
    a, b, c = (SizeVector(np.sort(np.array(v, dtype=float))[::-1], 1.0) for v in (x, y, z))
    assert l2_distance(a, b) == pytest.approx(l2_distance(b, a))
    assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-9


def test_susceptibility_examples():
    d = components(Graph.from_edges(4, [(0, 1), (1, 2)]))
    assert susceptibility(d, 2) == 10 and susceptibility(d, 3) == 28
    assert isinstance(susceptibility(d, 3), int)
    with pytest.raises(ValueError):
        susceptibility(d, 0)


def test_distance_stats_examples():
    path = Graph.from_edges(3, [(0, 1), (1, 2)])
    ds = distance_stats(path, components(path))
    assert ds.z_total == 8 and ds.diameters.tolist() == [2]
    edge = Graph.from_edges(2, [(0, 1)])
    ds = distance_stats(edge, components(edge))
    assert ds.z_total == 2 and ds.d_max == 1 and ds.u_per_component[0] == 0.5
    assert diameter(path, components(path), 1) == 2


def _reference_z(g: Graph, d):
    """Per-component pair table from scipy's shortest paths."""
    m = coo_matrix((np.ones(g.m), (g.edges[:, 0], g.edges[:, 1])), shape=(g.n, g.n)).tocsr()
    sp = shortest_path(m, directed=False, unweighted=True)
    z, diam = [], []
    for c in d.components:
        block = sp[np.ix_(c, c)]
        z.append(int(block.sum()))
        diam.append(int(block.max()))
    return z, diam


@given(graphs)
def test_distance_stats_match_pair_table(g):
    d = components(g)
    ds = distance_stats(g, d)
    z, diam = _reference_z(g, d)
    assert ds.z_per_component.tolist() == z
    assert ds.diameters.tolist() == diam
    assert ds.z_total == sum(z)
    assert np.all(ds.u_per_component <= ds.diameters + 1e-12) and np.all(ds.u_per_component >= 0)


def test_distance_stats_random_components():
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = sample_gnp(400, 1.2 / 400, rng)
        d = components(g)
        small = [j for j in range(1, d.count + 1) if d.sizes[j - 1] <= 50]
        ds = distance_stats(g, d, ranks=small)
        z, _ = _reference_z(g, d)
        assert ds.z_per_component.tolist() == [z[j - 1] for j in small]


def test_weight_distance_identity():
    # x_i^2 u_i = n^{-4/3} Z_i for x_i = n^{-2/3} |C_i|
    rng = np.random.default_rng(2)
    g = sample_gnp(3000, 1 / 3000, rng)
    d = components(g)
    ds = distance_stats(g, d)
    n = g.n
    x = d.sizes / n ** (2 / 3)
    assert np.allclose(x**2 * ds.u_per_component, n ** (-4 / 3) * ds.z_per_component, rtol=1e-9)
    for s, zi in zip(d.sizes[:20], ds.z_per_component[:20]):
        assert Fraction(int(s), 1) ** 2 * Fraction(int(zi), int(s) ** 2) == zi


def test_level_sizes_examples():
    assert level_sizes(Graph.empty(3), 1, 4).tolist() == [1, 0, 0, 0, 0]
    star = Graph.from_edges(5, [(0, k) for k in range(1, 5)])
    assert level_sizes(star, 0, 3).tolist() == [1, 4, 0, 0]
    assert level_sizes(star, 2, 3).tolist() == [1, 1, 3, 0]
    with pytest.raises(ValueError):
        level_sizes(star, 5, 2)


@given(graphs, st.data())
def test_level_sizes_match_networkx(g, data):
    u = data.draw(st.integers(0, g.n - 1))
    ref = nx.single_source_shortest_path_length(to_nx(g), u)
    expect = np.bincount(list(ref.values()), minlength=12)[:12]
    assert level_sizes(g, u, 11).tolist() == expect.tolist()


def test_two_core():
    g = Graph.from_edges(7, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (5, 6)])
    assert sorted(two_core(g).nodes) == [0, 1, 2]


def test_cycle_examples():
    tri = Graph.from_edges(27, [(0, 1), (1, 2), (0, 2)])
    assert has_cycle_in_range(tri, 0.5, 2)
    forest = Graph.from_edges(27, [(0, 1), (1, 2), (3, 4)])
    assert cycle_lengths(forest) == set()
    assert not has_cycle_in_range(forest, 0.01, 100)
    c5 = Graph.from_edges(125, [(k, (k + 1) % 5) for k in range(5)])
    assert not has_cycle_in_range(c5, 1.2, 1.4)
    assert has_cycle_in_range(c5, 0.9, 1.1)  # (4.5, 5.5)
    with pytest.raises(ValueError):
        has_cycle_in_range(c5, 2, 1)


@given(st.integers(4, 14).flatmap(
    lambda n: st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n)
    .map(lambda pairs: Graph.from_edges(n, [(a, b) for a, b in pairs if a != b]))))
def test_cycle_lengths_exact_on_small_graphs(g):
    ref = {len(c) for c in nx.simple_cycles(to_nx(g))}
    assert cycle_lengths(g) == ref


def test_cycle_lengths_sound_on_larger_cores():
    # outside the exact regime every reported length must be a real cycle length
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(200):
        g = sample_gnp(60, 2.2 / 60, rng)
        core = two_core(g)
        if core.number_of_nodes() <= 20 or core.number_of_edges() - core.number_of_nodes() > 6:
            continue
        ref = {len(c) for c in nx.simple_cycles(core)}
        found = cycle_lengths(g, exact_max_vertices=0)
        assert found <= ref
        assert min(ref) in found  # girth always found
        checked += 1
    assert checked > 10


def test_subcritical_center_value():
    # frozen from a 30-digit evaluation
    assert subcritical_center(0.1, 10**6) == pytest.approx(-514.030471410942, rel=1e-12)
    assert subcritical_diameter_bound(0.1, 10**6) == pytest.approx(160.475251790648, rel=1e-12)
    with pytest.raises(ValueError):
        subcritical_center(0.0, 10**6)
    with pytest.raises(ValueError):
        subcritical_center(0.1, 2000)  # xi = 2 < e


def test_subcritical_center_turns_at_log_xi_five():
    # numerator log xi - 5 log log xi decreases until log xi = 5, then increases
    turn = math.exp(5) / 0.1**3
    lo = [subcritical_center(0.1, n) for n in np.linspace(3e4, 0.95 * turn, 20)]
    hi = [subcritical_center(0.1, n) for n in np.linspace(1.05 * turn, 1e9, 20)]
    assert np.all(np.diff(lo) < 0) and np.all(np.diff(hi) > 0)


def test_largest_component_stats():
    g = Graph.from_edges(10**6, [(0, 1), (1, 2)])
    size, center = largest_component_stats(components(g), 0.1)
    assert size == 3 and center == subcritical_center(0.1, 10**6)
