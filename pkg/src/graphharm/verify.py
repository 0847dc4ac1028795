"""Built-in deterministic checks, one line per tagged property.

``run_checks`` returns the number of failures.  ``corrupt_stiffness``
perturbs one off-diagonal stiffness entry before the symmetry check, as a
negative control.
"""

from __future__ import annotations

import math

import numpy as np

from graphharm.boundary import (
    BoundaryMeasure,
    StepFunction,
    cylinder_diameter,
    flat_cutoff,
    refine,
    separates,
    separating_vertices,
    standard_partition,
)
from graphharm.functions import CallableEdgeFunction, edge_bump
from graphharm.graph import (
    GraphPoint,
    TreeSpec,
    build_explicit,
    build_tree,
    edge_max_boundary_distance,
    epsilon_core,
    geodesic_distance,
    metrics,
)
from graphharm.harmonic import (
    dirichlet_inner,
    extend_continuous,
    harmonic_measure,
    lipschitz_check,
    orthogonality_residual,
    solve_dirichlet,
    sqrt_distance_sampler,
)
from graphharm.levelset import (
    descent_path,
    level_crossings,
    level_flux,
    threshold_for_neighborhood,
)
from graphharm.operators import (
    ConstantClamp,
    Dirichlet,
    HarmonicClamp,
    Neumann,
    RobinClassical,
    assemble,
    compare_clamps,
    eigenvalues,
    ibp_residual,
    quadratic_form,
    symmetry_residual,
)


def robin_secular_root(k: float = 1.0, lo: float = 1e-9, hi: float = math.pi) -> float:
    """Smallest positive root of ``(mu^2 - k^2) sin mu - 2 k mu cos mu`` by bisection."""

    def g(mu):
        return (mu * mu - k * k) * math.sin(mu) - 2.0 * k * mu * math.cos(mu)

    a, b = lo, hi
    ga = g(a)
    while b - a > 1e-14:
        c = 0.5 * (a + b)
        gc = g(c)
        if (gc < 0) == (ga < 0):
            a, ga = c, gc
        else:
            b = c
    return 0.5 * (a + b)


def _interval():
    return build_explicit([("a", "b", 1.0)], {"a", "b"})


def _indicator(g, word="0", b=2):
    p = standard_partition(b, 1)
    return solve_dirichlet(g, StepFunction(p, tuple(1.0 if c == word else 0.0 for c, _ in p.cells)))


# -- checks ------------------------------------------------------------------------


def check_metric():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    d = geodesic_distance(g, g.vertex_point("0000"), g.vertex_point("1111"))
    return abs(d - 3.75) < 1e-12, f"leaf-to-leaf distance {d}"


def check_volume():
    v = TreeSpec(2, 1 / 3, 1.0, 1).infinite_volume()
    m = metrics(build_tree(TreeSpec(2, 0.5, 1.0, 3)))
    return abs(v - 6.0) < 1e-12 and abs(m.volume - 6.0) < 1e-12, f"infinite volume {v}, depth-3 volume {m.volume}"


def check_core():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 5))
    far = edge_max_boundary_distance(g)
    core = epsilon_core(g, 1.0)
    expect = sum(1 for x in far if x >= 1.0)
    return core.n_edges == expect, f"{core.n_edges} core edges"


def check_refinement():
    t = TreeSpec(2, 0.5, 1.0, 8)
    p = standard_partition(2, 0)
    diams = []
    for _ in range(8):
        diams.append(max(cylinder_diameter(t, w) for _, ws in p.cells for w in ws))
        p = refine(p, 8)
    ok = all(a > b for a, b in zip(diams, diams[1:]))
    return ok, f"max diameters {diams[0]:.3g} -> {diams[-1]:.3g}"


def check_separation():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    cut = separating_vertices(g, "00", "01")
    return cut == frozenset({"0"}) and separates(g, cut, "00", "01"), f"cut {sorted(cut)}"


def check_cutoff():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    phi = flat_cutoff(g, ("0",), 0.05)
    worst = 0.0
    for i, v in enumerate(g.vertices):
        vals = set()
        for k, _, at_tail in g.incidence[i]:
            x = 0.0 if at_tail else g.edges[k].length
            vals.add(round(float(phi.value(k, x)), 12))
            worst = max(worst, abs(phi.outward_derivative(k, i)))
        if len(vals) != 1:
            return False, f"discontinuous at {v!r}"
    return worst < 1e-8, f"max vertex derivative {worst:.2e}"


def check_ibp():
    g = _interval()
    f = CallableEdgeFunction(
        g,
        lambda e, x: np.sin(np.pi * x),
        lambda e, x: np.pi * np.cos(np.pi * x),
        lambda e, x: -np.pi**2 * np.sin(np.pi * x),
    )
    h = CallableEdgeFunction(g, lambda e, x: x, lambda e, x: 1.0 + 0 * x, lambda e, x: 0 * x)
    r = ibp_residual(g, f, h)
    return r.residual < 1e-8, f"residual {r.residual:.2e}"


def check_exactness():
    spec = TreeSpec(2, 0.5, 1.0, 4)
    p = StepFunction(standard_partition(2, 2), (1.0, -0.5, 2.0, 0.25))
    h4 = solve_dirichlet(build_tree(spec), p)
    h6 = solve_dirichlet(build_tree(spec.with_depth(6)), p)
    diff = float(np.max(np.abs(h6.values[: h4.graph.n_vertices] - h4.values)))
    g1 = build_tree(spec)
    w = harmonic_measure(g1, standard_partition(2, 1), g1.vertex_point(""))
    ok = diff <= 1e-12 and np.allclose(w, 0.5, atol=1e-12, rtol=0)
    return ok, f"depth 4 vs 6 max diff {diff:.1e}, measure {w}"


def check_maximum_principle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        spec = TreeSpec(int(rng.integers(2, 4)), float(rng.uniform(0.2, 0.8)), 1.0, int(rng.integers(2, 5)))
        g = build_tree(spec)
        p = standard_partition(spec.b, int(rng.integers(1, spec.depth + 1)))
        vals = rng.normal(size=len(p))
        h = solve_dirichlet(g, StepFunction(p, tuple(vals)))
        worst = max(worst, max(abs(x) for x in h.kirchhoff_residuals().values()))
        lo, hi = vals.min(), vals.max()
        inner = [h.values[i] for i in range(g.n_vertices) if g.vertices[i] not in g.leaves]
        if min(inner) <= lo or max(inner) >= hi:
            return False, "interior extremum"
    return worst <= 1e-10, f"max Kirchhoff residual {worst:.1e}"


def check_minimality():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    h = _indicator(g)
    e_h = h.dirichlet_energy()
    worst = math.inf
    for eps in (0.01, 0.02, 0.05, 0.1, 0.15):
        phi = flat_cutoff(g, ("0",), eps)
        worst = min(worst, dirichlet_inner(phi, phi) - e_h)
    return worst > 1e-8, f"smallest energy margin {worst:.3g}"


def check_orthogonality():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 5))
    h = _indicator(g)
    mu = BoundaryMeasure(2)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        k = int(rng.integers(g.n_edges))
        length = g.edges[k].length
        a, b = sorted(rng.uniform(0.05, 0.95, size=2) * length)
        if b - a < 1e-3 * length:
            b = a + 1e-3 * length
        worst = max(worst, orthogonality_residual(edge_bump(g, k, a, b, float(rng.normal())), h, mu))
    return worst <= 1e-9, f"max residual {worst:.1e}"


def check_lipschitz():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 4))
    h = _indicator(g)
    rng = np.random.default_rng(5)

    def pt():
        k = int(rng.integers(g.n_edges))
        return GraphPoint(k, float(rng.uniform(0, g.edges[k].length)))

    rep = lipschitz_check(h, [(pt(), pt()) for _ in range(300)], BoundaryMeasure(2))
    return rep.holds, f"max ratio {rep.max_ratio:.3g} <= norm^2 {rep.norm_squared:.3g}"


def check_flux():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 5))
    h = _indicator(g)
    lo, hi = h.vertex_value(""), h.vertex_value("0")
    levels = np.linspace(lo, hi, 7)[1:-1]
    fluxes = [level_flux(h, t).flux for t in levels]
    pos = all(c.outward_flux > 0 for t in levels for c in level_crossings(h, t))
    spread = max(fluxes) - min(fluxes)
    return spread <= 1e-10 and pos, f"flux {fluxes[0]:.12g}, spread {spread:.1e}"


def check_descent():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 5))
    h = _indicator(g)
    path = descent_path(h, g.vertex_point(""))
    dec = all(a > b for a, b in zip(path.values, path.values[1:]))
    return dec and path.end_address.startswith("1"), f"ends at {path.end_address!r}"


def check_threshold():
    g = build_tree(TreeSpec(2, 0.5, 1.0, 6))
    h = _indicator(g, "1")
    ts = [threshold_for_neighborhood(h, ("0",), eps) for eps in (2.0, 1.5, 1.2, 1.05)]
    return all(a >= b for a, b in zip(ts, ts[1:])), f"thresholds {[round(t, 6) for t in ts]}"


def check_spectra():
    g = _interval()
    d = eigenvalues(assemble(g, Dirichlet(), 200), 3).values
    n = eigenvalues(assemble(g, Neumann(), 200), 3).values
    exact = (np.arange(1, 4) * np.pi) ** 2
    rd = np.max(np.abs(d - exact) / exact)
    rn = np.max(np.abs(n[1:] - exact[:2]) / exact[:2])
    return rd < 1e-3 and rn < 1e-3 and abs(n[0]) < 1e-8, f"rel err D {rd:.1e}, N {rn:.1e}"


def check_robin():
    g = _interval()
    mu = robin_secular_root(1.0)
    lam = eigenvalues(assemble(g, RobinClassical(1.0), 400), 1).values[0]
    rel = abs(lam - mu * mu) / (mu * mu)
    l1 = [eigenvalues(assemble(g, RobinClassical(k), 100), 1).values[0] for k in (0.0, 1.0, 10.0)]
    return rel < 1e-3 and l1[0] < l1[1] < l1[2], f"lambda1 {lam:.6f} vs {mu * mu:.6f}"


def _tree_clamp(depth=2):
    g = build_tree(TreeSpec(2, 1 / 3, 1.0, depth))
    cl = [tuple(w for w in g.leaves if w[0] == c) for c in "01"]
    prof = [_indicator(g, "1"), _indicator(g, "0")]
    return g, cl, HarmonicClamp.from_profiles(g, cl, prof)


def check_form():
    g, _, clamp = _tree_clamp()
    op = assemble(g, clamp, 8)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(op.n_dofs)
        r = quadratic_form(op, x)
        worst = max(worst, abs(r.total - r.core_energy - r.boundary_part) / max(1.0, abs(r.total)))
    lam = eigenvalues(op, op.n_dofs).values
    return worst <= 1e-10 and lam[0] >= -1e-10, f"max form mismatch {worst:.1e}, lambda1 {lam[0]:.4g}"


def check_symmetry(corrupt=False):
    g, _, clamp = _tree_clamp()
    worst = 0.0
    for bc in (Neumann(), Dirichlet(), RobinClassical(2.0), clamp, ConstantClamp(clamp.clusters)):
        op = assemble(g, bc, 6)
        if corrupt:
            op.K = op.K.tolil()
            op.K[0, 1] = op.K[0, 1] + 1e-3
            op.K = op.K.tocsr()
        worst = max(worst, symmetry_residual(op))
    return worst == 0.0, f"max asymmetry {worst:.1e}"


def check_clamps():
    g, cl, clamp = _tree_clamp()
    res = compare_clamps(g, clamp, 8)
    const = HarmonicClamp.from_profiles(g, cl, [solve_dirichlet(g, StepFunction(standard_partition(2, 0), (1.0,)))] * 2)
    same = compare_clamps(g, const, 8)
    iv = _interval()
    edge = compare_clamps(iv, HarmonicClamp((("b",),), {"b": 1.0}, {"b": 1.0}), 50)
    ok = res.lambda_gap > 1e-6 and abs(same.lambda_gap) <= 1e-10 and edge.lambda1_harmonic > 1e-6
    return ok, f"gap {res.lambda_gap:.4g}, constant-profile gap {same.lambda_gap:.1e}"


def check_divergence():
    spec = TreeSpec(2, 0.5, 1.0, 1)
    res = extend_continuous(spec, sqrt_distance_sampler(spec), 1e-300, depths=range(3, 9), run_all=True)
    diffs = [d for _, d, _ in res.history[1:]]
    energies = [e for _, _, e in res.history]
    ok = all(a > b for a, b in zip(diffs, diffs[1:])) and all(a < b for a, b in zip(energies, energies[1:]))
    return ok, f"energies {energies[0]:.3f} -> {energies[-1]:.3f}, last sup diff {diffs[-1]:.3g}"


CHECKS = [
    ("geodesic-metric", check_metric),
    ("finite-volume", check_volume),
    ("finite-epsilon-core", check_core),
    ("clopen-refinement", check_refinement),
    ("separating-vertex", check_separation),
    ("flat-cutoff", check_cutoff),
    ("integration-by-parts", check_ibp),
    ("step-data-exactness", check_exactness),
    ("maximum-principle", check_maximum_principle),
    ("energy-minimality", check_minimality),
    ("orthogonal-decomposition", check_orthogonality),
    ("lipschitz-bound", check_lipschitz),
    ("flux-conservation", check_flux),
    ("descent-path", check_descent),
    ("level-threshold", check_threshold),
    ("classical-spectra", check_spectra),
    ("robin-secular", check_robin),
    ("clamp-form-identity", check_form),
    ("operator-symmetry", check_symmetry),
    ("clamp-comparison", check_clamps),
    ("energy-blowup", check_divergence),
]


def run_checks(quiet: bool = False, corrupt_stiffness: bool = False) -> int:
    failures = 0
    for tag, fn in CHECKS:
        try:
            if fn is check_symmetry:
                ok, detail = fn(corrupt=corrupt_stiffness)
            else:
                ok, detail = fn()
        except Exception as exc:  # a crash is a failure of that check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        if not quiet or not ok:
            print(f"{'PASS' if ok else 'FAIL'} [{tag}] {detail}")
    if not quiet:
        print(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
