import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphharm.errors import GraphError
from graphharm.graph import (
    GraphPoint,
    TreeSpec,
    build_explicit,
    build_tree,
    epsilon_core,
    format_graph,
    geodesic_distance,
    metrics,
    parse_graph,
    restrict_depth,
)


def interval(length=1.0):
    return build_explicit([("a", "b", length)], {"a", "b"})


def star(lengths=(1.0, 1.0, 1.0)):
    edges = [("c", f"x{i}", l) for i, l in enumerate(lengths)]
    return build_explicit(edges, {f"x{i}" for i in range(len(lengths))})


def test_tree_shapes():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 1))
    assert (g.n_vertices, g.n_edges, len(g.boundary)) == (3, 2, 2)
    assert all(e.length == 1.0 for e in g.edges)

    g = build_tree(TreeSpec(2, 0.5, 1.0, 3))
    assert g.n_edges == 14
    assert {e.length for e in g.edges if len(g.vertices[e.head]) == 3} == {0.25}

    g = build_tree(TreeSpec(3, 0.25, 1.0, 2))
    assert g.n_edges == 12
    assert {e.length for e in g.edges if len(g.vertices[e.head]) == 2} == {0.25}
    assert g.degrees[g.index[""]] == 3
    assert all(g.degrees[g.index[w]] == 4 for w in ("0", "1", "2"))


@pytest.mark.parametrize("b, r, d", [(1, 0.5, 2), (2, 0.0, 2), (2, 1.0, 2), (2, 0.5, 0)])
def test_tree_rejects_bad_spec(b, r, d):
    with pytest.raises(GraphError):
        TreeSpec(b, r, 1.0, d)


def test_explicit_graphs():
    g = interval()
    assert g.boundary == {"a", "b"}
    assert star().n_edges == 3
    with pytest.raises(GraphError, match="disconnected"):
        build_explicit([("a", "b", 1.0), ("c", "d", 1.0)], {"a", "b", "c", "d"})
    with pytest.raises(GraphError, match="nonpositive"):
        build_explicit([("a", "b", 0.0)], {"a", "b"})
    with pytest.raises(GraphError, match="degree-1"):
        build_explicit([("a", "b", 1.0)], {"a"})


def test_geodesic_examples():
    g = interval()
    assert geodesic_distance(g, GraphPoint(0, 0.2), GraphPoint(0, 0.9)) == pytest.approx(0.7, abs=1e-15)
    t = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    assert geodesic_distance(t, t.vertex_point("0110"), t.vertex_point("1001")) == pytest.approx(3.75, abs=1e-14)
    s = star()
    assert geodesic_distance(s, s.vertex_point("x0"), s.vertex_point("x2")) == 2.0


def test_metrics():
    m = metrics(interval())
    assert (m.volume, m.diameter) == (1.0, 1.0)
    assert metrics(build_tree(TreeSpec(2, 1 / 3, 1.0, 2))).infinite_volume == pytest.approx(6.0, rel=1e-12)
    g = build_tree(TreeSpec(2, 0.5, 1.0, 3))
    assert metrics(g).volume == pytest.approx(sum(e.length for e in g.edges)) == 6.0
    assert metrics(g).diameter == pytest.approx(2 * (1 + 0.5 + 0.25))
    assert math.isinf(TreeSpec(2, 0.5, 1.0, 3).infinite_volume())


def test_infinite_volume_formula():
    for b, r, l0 in [(2, 0.3, 1.0), (3, 0.2, 2.5), (4, 0.1, 0.7)]:
        direct = math.fsum(b ** (k + 1) * l0 * r**k for k in range(400))
        assert TreeSpec(b, r, l0, 1).infinite_volume() == pytest.approx(direct, rel=1e-12)


def test_epsilon_core_examples():
    assert epsilon_core(interval(), 0.4).n_edges == 1
    assert epsilon_core(interval(), 0.6).n_edges == 0


def test_epsilon_core_brute_force():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 5))
    leaves = [g.index[w] for w in g.leaves]
    dist = g.distances_from(leaves).min(axis=0)
    expect = set()
    for k, e in enumerate(g.edges):
        xs = np.linspace(0.0, e.length, 2001)
        far = np.minimum(dist[e.tail] + xs, dist[e.head] + e.length - xs).max()
        if far >= 1.0 - 1e-12:
            expect.add(k)
    core = epsilon_core(g, 1.0)
    got = {g.edge_between(core.vertices[e.tail], core.vertices[e.head]) for e in core.edges}
    assert got == expect


def test_epsilon_core_nested():
    g = build_tree(TreeSpec(3, 0.4, 1.0, 4))
    sizes = [epsilon_core(g, eps).n_edges for eps in (0.05, 0.2, 0.5, 1.0, 1.5)]
    assert sizes == sorted(sizes, reverse=True)


def test_truncation_consistency():
    spec = TreeSpec(3, 0.4, 1.3, 3)
    small = build_tree(spec)
    big = build_tree(spec.with_depth(4))
    cut = restrict_depth(big, 3)
    assert cut.vertices == small.vertices
    assert cut.edges == small.edges


def test_text_roundtrip(tmp_path):
    for g in (star((1.0, 2.0, 0.5)), build_tree(TreeSpec(2, 0.5, 1.0, 3))):
        h = parse_graph(format_graph(g))
        assert h.vertices == g.vertices and h.edges == g.edges and h.boundary == g.boundary
        assert h.tree == g.tree


@st.composite
def random_graph(draw):
    n = draw(st.integers(2, 7))
    edges = [(str(i), str(draw(st.integers(0, i - 1))), draw(st.floats(0.1, 3.0))) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.floats(0.1, 3.0)), max_size=3))
    edges += [(str(a), str(b), l) for a, b, l in extra if a != b]
    deg = {}
    for a, b, _ in edges:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
    return build_explicit(edges, {v for v, d in deg.items() if d == 1})


@settings(max_examples=40, deadline=None)
@given(random_graph(), st.data())
def test_geodesic_is_metric(g, data):
    def point():
        k = data.draw(st.integers(0, g.n_edges - 1))
        return GraphPoint(k, data.draw(st.floats(0.0, g.edges[k].length)))

    p, q, s = point(), point(), point()
    d = lambda a, b: geodesic_distance(g, a, b)
    assert d(p, p) == pytest.approx(0.0, abs=1e-12)
    assert d(p, q) >= 0.0
    assert d(p, q) == pytest.approx(d(q, p), abs=1e-12)
    assert d(p, s) <= d(p, q) + d(q, s) + 1e-12


def test_diameter_matches_all_pairs():
    g = build_tree(TreeSpec(3, 0.6, 1.0, 3))
    full = g.distances_from(range(g.n_vertices)).max()
    assert metrics(g).diameter == pytest.approx(full, abs=1e-12)
    assert max(
        geodesic_distance(g, g.vertex_point(a), g.vertex_point(b))
        for a, b in itertools.combinations(g.leaves[:9], 2)
    ) <= full + 1e-12
