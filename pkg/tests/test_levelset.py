import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphharm.boundary import StepFunction, distance_to_set, standard_partition
from graphharm.errors import LevelSetError
from graphharm.graph import GraphPoint, TreeSpec, build_explicit, build_tree
from graphharm.harmonic import solve_dirichlet, solve_with_data
from graphharm.levelset import (
    descent_path,
    is_regular_value,
    level_crossings,
    level_flux,
    sublevel_max_distance,
    subgraph_above,
    threshold_for_neighborhood,
)


def ramp(scale=1.0):
    g = build_explicit([("a", "b", 1.0)], {"a", "b"})
    return solve_with_data(g, {"a": 0.0, "b": scale})


def tree_indicator(depth=5, word="0"):
    g = build_tree(TreeSpec(2, 0.5, 1.0, depth))
    vals = tuple(1.0 if c == word else 0.0 for c in "01")
    return solve_dirichlet(g, StepFunction(standard_partition(2, 1), vals))


def test_regular_values():
    h = ramp()
    assert is_regular_value(h, 0.5)
    assert not is_regular_value(h, 1.0)
    c = solve_with_data(h.graph, {"a": 2.0, "b": 2.0})
    assert not is_regular_value(c, 2.0)


def test_interval_crossings():
    h = ramp()
    (c,) = level_crossings(h, 0.3)
    assert c.point == GraphPoint(0, pytest.approx(0.3))
    assert c.slope == 1.0 and c.outward_flux == 1.0
    assert level_crossings(h, 1.5) == []
    sub = subgraph_above(h, 0.5)
    assert sub.graph.n_edges == 1 and sub.graph.edges[0].length == pytest.approx(0.5)
    assert "~0" in sub.graph.boundary
    assert level_flux(h, 0.37) == (1.0, False)
    assert level_flux(ramp(3.0), 0.37).flux == pytest.approx(3.0)
    assert level_flux(h, 2.0).empty


def test_tree_crossings_symmetric():
    h = tree_indicator()
    # above every core value below "0" but under the data value 1: only tails reach it
    t = 0.5 * (max(h[w] for w in h.graph.leaves) + 1.0)
    with pytest.raises(LevelSetError, match="tail"):
        level_crossings(h, t)
    t = 0.7  # between f(root) and f("0")
    (c,) = level_crossings(h, t)
    assert c.point.edge == h.graph.edge_between("", "0")
    assert c.point.offset == pytest.approx((t - 0.5) / 0.375)
    h2 = tree_indicator(word="1")
    (c2,) = level_crossings(h2, 0.3)
    assert c2.point.offset == pytest.approx((0.5 - 0.3) / 0.375)


def test_tail_value_rejected():
    h = tree_indicator()
    with pytest.raises(LevelSetError, match="boundary region"):
        level_crossings(h, 1.0)


def test_subgraph_above_tree():
    h = tree_indicator()
    sub = subgraph_above(h, 0.6)
    assert sub.is_connected()
    assert all(c.outward_flux > 0 for c in sub.crossings)
    assert set(v for v in sub.graph.vertices if not v.startswith("~")) == {
        v for v in h.graph.vertices if v.startswith("0")
    }
    whole = subgraph_above(ramp(), -1.0)
    assert whole.graph.n_edges == 1 and not whole.crossings


def test_flux_conservation_in_band():
    h = tree_indicator()
    lo, hi = h[""], h["0"]
    fluxes = [level_flux(h, t).flux for t in np.linspace(lo, hi, 9)[1:-1]]
    assert max(fluxes) - min(fluxes) <= 1e-10
    # through any level set the flux equals the total current 1/R = 3/8
    assert fluxes[0] == pytest.approx(3 / 8, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_random_levels_regular(seed, u):
    rng = np.random.default_rng(seed)
    g = build_tree(TreeSpec(2, 0.6, 1.0, 3))
    h = solve_dirichlet(g, StepFunction(standard_partition(2, 3), tuple(rng.normal(size=8))))
    t = float(h.values.min() + u * (h.values.max() - h.values.min()))
    if np.min(np.abs(h.values - t)) > 1e-9:
        assert is_regular_value(h, t)


def test_threshold():
    h = tree_indicator(6, word="1")  # zero on E = "0"
    # E and its complement are 4 apart, so eps = 5 accepts t just below min f = 1
    t_loose = threshold_for_neighborhood(h, ("0",), 5.0)
    assert 1.0 - 1e-8 < t_loose < 1.0
    ts = [threshold_for_neighborhood(h, ("0",), eps) for eps in (2.0, 1.5, 1.2, 1.1, 1.05)]
    assert all(a >= b for a, b in zip(ts, ts[1:]))
    for eps, t in zip((2.0, 1.5, 1.2, 1.1, 1.05), ts):
        assert is_regular_value(h, t)
        assert sublevel_max_distance(h, h.graph.leaves[: len(h.graph.leaves) // 2], t) < eps
    # small eps still works: the sublevel set shrinks into the tails below E
    t_small = threshold_for_neighborhood(h, ("0",), 0.05)
    assert 0.0 < t_small < ts[-1]


def test_threshold_sublevel_scan():
    # independent scan: sample points on every edge with f <= t and measure distance to E
    h = tree_indicator(5, word="1")
    g = h.graph
    eps = 1.2
    t = threshold_for_neighborhood(h, ("0",), eps)
    inside = [w for w in g.leaves if w.startswith("0")]
    dE = distance_to_set(g, inside)
    worst = 0.0
    for k, e in enumerate(g.edges):
        xs = np.linspace(0.0, e.length, 401)
        fx = h.value(k, xs)
        d = np.minimum(dE[e.tail] + xs, dE[e.head] + e.length - xs)
        if np.any(fx <= t):
            worst = max(worst, d[fx <= t].max())
    assert worst < eps


def test_threshold_constant_rejected():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 3))
    h = solve_dirichlet(g, StepFunction(standard_partition(2, 0), (1.0,)))
    with pytest.raises(LevelSetError):
        threshold_for_neighborhood(h, ("0",), 1.0)


def test_descent_paths():
    h = ramp()
    path = descent_path(h, GraphPoint(0, 0.5))
    assert path.terminal == "a" and path.values == [0.5, 0.0]
    t = tree_indicator(word="1")  # data zero on "0"
    path = descent_path(t, t.graph.vertex_point(""))
    assert path.end_address == "00000"
    assert all(a > b for a, b in zip(path.values, path.values[1:]))
    edges = [p.edge for p in path.points[1:]]
    assert len(edges) == len(set(edges))


def test_descent_from_minimum():
    g = build_explicit([("c", "x", 1.0), ("c", "y", 1.0), ("c", "z", 1.0)], {"x", "y", "z"})
    h = solve_with_data(g, {"x": 0.0, "y": 1.0, "z": 1.0})
    with pytest.raises(LevelSetError, match="no descent"):
        descent_path(h, g.vertex_point("x"))
