import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphharm.boundary import (
    BoundaryMeasure,
    ClopenPartition,
    StepFunction,
    flat_cutoff,
    standard_partition,
)
from graphharm.errors import BoundaryError, SolveError
from graphharm.functions import SumFunction, edge_bump, vertex_bump
from graphharm.graph import GraphPoint, TreeSpec, build_explicit, build_tree
from graphharm.harmonic import (
    dirichlet_inner,
    energy,
    evaluate,
    extend_continuous,
    h1_inner,
    harmonic_measure,
    lipschitz_check,
    orthogonality_residual,
    solve_dirichlet,
    solve_with_data,
    sqrt_distance_sampler,
)

HALF = TreeSpec(2, 0.5, 1.0, 3)


def interval():
    return build_explicit([("a", "b", 1.0)], {"a", "b"})


def split_data(g, values=(1.0, 0.0)):
    return solve_dirichlet(g, StepFunction(standard_partition(2, 1), values))


def series_parallel_resistance(spec, levels=200):
    """Resistance between the ends of subtrees "0" and "1", by reduction from the bottom up."""
    below = 0.0  # resistance from a deep vertex to its ends, closed off at ``levels``
    for k in range(levels, 0, -1):
        below = (spec.edge_length(k) + below) / spec.b
    return 2.0 * (spec.edge_length(0) + below)


def test_interval_solve():
    g = interval()
    h = solve_dirichlet(g, StepFunction(ClopenPartition((("0", ("a",)), ("1", ("b",))), None), (0.0, 1.0)))
    assert evaluate(h, GraphPoint(0, 0.5)) == 0.5
    assert evaluate(h, GraphPoint(0, 0.25)) == 0.25
    assert evaluate(h, g.vertex_point("b")) == 1.0


def test_star_mean_value():
    g = build_explicit([("c", f"x{i}", 1.0) for i in range(3)], {"x0", "x1", "x2"})
    h = solve_with_data(g, {"x0": 0.0, "x1": 0.0, "x2": 1.0})
    assert h["c"] == pytest.approx(1 / 3, abs=1e-15)


def test_tree_indicator_values():
    g = build_tree(HALF)
    h = split_data(g)
    assert h[""] == pytest.approx(0.5, abs=1e-15)
    # root-to-"0" resistance 1 and "0"-to-ends 1/3 carry the current 3/8
    assert h["0"] == pytest.approx(0.875, abs=1e-14)
    assert h["1"] == pytest.approx(0.125, abs=1e-14)
    deep = split_data(build_tree(HALF.with_depth(6)))
    assert np.max(np.abs(deep.values[: g.n_vertices] - h.values)) <= 1e-12


def test_energy_is_inverse_resistance():
    for spec in (HALF, TreeSpec(3, 0.3, 2.0, 3)):
        g = build_tree(spec)
        p = standard_partition(spec.b, 1)
        F = StepFunction(p, tuple(1.0 if i == 0 else 0.0 for i in range(spec.b)))
        h = solve_dirichlet(g, F)
        if spec.b == 2:
            assert h.dirichlet_energy() == pytest.approx(1.0 / series_parallel_resistance(spec), rel=1e-12)
            assert h.dirichlet_energy() == pytest.approx(3 / 8, rel=1e-14)
        assert dirichlet_inner(h, h) == pytest.approx(h.dirichlet_energy(), rel=1e-13)


def test_tail_profile_matches_deeper_solve():
    g3 = build_tree(HALF)
    g6 = build_tree(HALF.with_depth(6))
    F = StepFunction(standard_partition(2, 2), (1.0, -2.0, 0.5, 3.0))
    h3, h6 = solve_dirichlet(g3, F), solve_dirichlet(g6, F)
    for leaf in ("000", "011", "101"):
        prof = h3.tail_level_values(leaf, 3)
        deeper = [h6[leaf + "0" * k] for k in range(4)]
        assert np.allclose(prof, deeper, atol=1e-13, rtol=0)
    a, c = h3.tail("011")
    assert h3.tail_value("011", HALF.tail_length(3)) == c
    assert min(a, c) <= h3.tail_value("011", 0.1) <= max(a, c)


def test_degenerate_data_constant():
    g = build_tree(HALF)
    h = solve_dirichlet(g, StepFunction(standard_partition(2, 2), (2.0,) * 4))
    assert h.is_constant() and np.all(h.values == 2.0)
    assert h.dirichlet_energy() == 0.0


def test_partition_too_deep():
    with pytest.raises(BoundaryError):
        solve_dirichlet(build_tree(HALF), StepFunction(standard_partition(2, 4), tuple(range(16))))


def test_harmonic_measure():
    g = build_tree(HALF)
    w = harmonic_measure(g, standard_partition(2, 1), g.vertex_point(""))
    assert np.allclose(w, 0.5, atol=1e-12, rtol=0)
    p = ClopenPartition((("a", ("0", "10")), ("b", ("110",)), ("c", ("111",))), 2)
    w = harmonic_measure(g, p, GraphPoint(3, 0.1))
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all((w >= 0) & (w <= 1))
    star = build_explicit([("c", "x", 1.0), ("c", "y", 2.0)], {"x", "y"})
    # one Kirchhoff equation: (x - c)/1 + (y - c)/2 = 0
    w = harmonic_measure(star, ClopenPartition((("x", ("x",)), ("y", ("y",))), None), star.vertex_point("c"))
    assert np.allclose(w, (2 / 3, 1 / 3), atol=1e-15)


def test_h1_inner_examples():
    g = interval()
    h = solve_with_data(g, {"a": 0.0, "b": 1.0})
    mu = BoundaryMeasure(None, weights={"a": 1.0, "b": 1.0})
    assert energy(h, mu).h1_inner == pytest.approx(2.0)
    t = build_tree(HALF)
    c = solve_dirichlet(t, StepFunction(standard_partition(2, 0), (3.0,)))
    rep = energy(c, BoundaryMeasure(2, total=2.5))
    assert (rep.dirichlet_energy, rep.boundary_term) == (0.0, pytest.approx(9.0 * 2.5))
    f = split_data(t)
    g2 = split_data(t, (0.0, 1.0))
    rep = h1_inner(f, g2, BoundaryMeasure(2))
    assert rep.dirichlet_energy == pytest.approx(-3 / 8)
    assert rep.boundary_term == 0.0


def test_lipschitz_examples():
    g = interval()
    h = solve_with_data(g, {"a": 0.0, "b": 1.0})
    mu = BoundaryMeasure(None, weights={"a": 1.0, "b": 1.0})
    rep = lipschitz_check(h, [(GraphPoint(0, 0.1), GraphPoint(0, 0.9))], mu)
    assert rep.max_ratio == pytest.approx(0.4)
    c = solve_with_data(g, {"a": 1.0, "b": 1.0})
    assert lipschitz_check(c, [(GraphPoint(0, 0.1), GraphPoint(0, 0.9))], mu).max_ratio == 0.0


def test_lipschitz_random_tree():
    rng = np.random.default_rng(1)
    g = build_tree(TreeSpec(3, 0.4, 1.0, 4))
    F = StepFunction(standard_partition(3, 2), tuple(rng.normal(size=9)))
    h = solve_dirichlet(g, F)

    def pt():
        k = int(rng.integers(g.n_edges))
        return GraphPoint(k, float(rng.uniform(0, g.edges[k].length)))

    assert lipschitz_check(h, [(pt(), pt()) for _ in range(1000)], BoundaryMeasure(3)).holds


def test_orthogonality():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 5))
    h = split_data(g)
    mu = BoundaryMeasure(2)
    assert orthogonality_residual(edge_bump(g, 0, 0.2, 0.7), h, mu) <= 1e-12
    zero = edge_bump(g, 0, 0.2, 0.7, amplitude=0.0)
    assert orthogonality_residual(zero, h, mu) == 0.0
    v = g.index["01"]
    slopes = {k: s for (k, _, _), s in zip(g.incidence[v], (1.0, -0.5, -0.5))}
    bump = vertex_bump(g, "01", 0.1, 0.7, slopes)
    assert orthogonality_residual(bump, h, mu) <= 1e-9
    with pytest.raises(SolveError):
        orthogonality_residual(vertex_bump(g, "00000", 0.01, 1.0), h, mu)


def test_extend_continuous_constant_and_step():
    res = extend_continuous(HALF, lambda w: 4.0, 1e-10)
    assert res.converged and res.iterations == 1
    assert res.function.is_constant()
    ind = extend_continuous(HALF, lambda w: 1.0 if w.startswith("0") else 0.0, 1e-10, depths=[1, 2, 3])
    # step data is a fixed point: the first refinement already reproduces it
    assert ind.converged and ind.iterations == 1
    direct = split_data(build_tree(HALF.with_depth(3)))
    n = ind.function.graph.n_vertices
    assert np.allclose(ind.function.values, direct.values[:n], atol=1e-14, rtol=0)


def test_sqrt_distance_sampler():
    f = sqrt_distance_sampler(HALF)
    assert f("000") == 0.0
    # ends "0..." and "1..." are 2 * (1 + 1) = 4 apart
    assert f("1") == pytest.approx(2.0)
    assert f("01") == pytest.approx(math.sqrt(2.0))


def test_energy_blowup_demo():
    res = extend_continuous(HALF, sqrt_distance_sampler(HALF), 1e-300, depths=range(3, 11), run_all=True)
    diffs = [d for _, d, _ in res.history[1:]]
    energies = [e for _, _, e in res.history]
    assert all(a > b for a, b in zip(diffs, diffs[1:]))
    assert all(a < b for a, b in zip(energies, energies[1:]))
    # frozen: depth-3 energy of the sampled data
    assert energies[0] == pytest.approx(2.5346996779128355, rel=1e-12)


@st.composite
def random_problem(draw):
    b = draw(st.integers(2, 3))
    spec = TreeSpec(b, draw(st.floats(0.15, 0.85)), draw(st.floats(0.5, 2.0)), draw(st.integers(2, 4)))
    k = draw(st.integers(1, spec.depth))
    p = standard_partition(b, k)
    vals = draw(st.lists(st.floats(-5, 5), min_size=len(p), max_size=len(p)))
    return spec, StepFunction(p, tuple(vals))


@settings(max_examples=40, deadline=None)
@given(random_problem())
def test_maximum_principle_and_kirchhoff(problem):
    spec, F = problem
    g = build_tree(spec)
    h = solve_dirichlet(g, F)
    assert max(abs(x) for x in h.kirchhoff_residuals().values()) <= 1e-10
    lo, hi = min(F.values), max(F.values)
    assert np.all(h.values >= lo - 1e-12) and np.all(h.values <= hi + 1e-12)
    if hi - lo > 1e-6:
        inner = np.array([h[v] for v in g.vertices if len(v) < spec.depth])
        assert np.all(inner > lo) and np.all(inner < hi)


@settings(max_examples=25, deadline=None)
@given(random_problem(), st.floats(0.01, 0.9))
def test_mean_value_property(problem, frac):
    spec, F = problem
    g = build_tree(spec)
    h = solve_dirichlet(g, F)
    for i, v in enumerate(g.vertices):
        if len(v) >= spec.depth:
            continue
        delta = frac * min(g.edges[k].length for k, _, _ in g.incidence[i])
        samples = [
            h.value(k, delta if at_tail else g.edges[k].length - delta) for k, _, at_tail in g.incidence[i]
        ]
        assert np.mean(samples) == pytest.approx(h[v], abs=1e-12)


def test_energy_minimality_against_cutoffs():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    F = StepFunction(standard_partition(2, 2), (1.0, 0.0, 2.0, -1.0))
    h = solve_dirichlet(g, F)
    e_h = h.dirichlet_energy()
    for eps in (0.005, 0.01, 0.02, 0.05, 0.08):
        terms = [(c, flat_cutoff(g, words, eps)) for (_, words), c in zip(F.partition.cells, F.values)]
        comp = SumFunction(terms)
        assert {w: comp.boundary_value(w) for w in g.leaves} == pytest.approx(
            {w: h.boundary_value(w) for w in g.leaves}
        )
        assert dirichlet_inner(comp, comp) - e_h > 1e-8
