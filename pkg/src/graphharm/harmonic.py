"""Finite-energy harmonic functions with step boundary data.

On an explicit finite graph the boundary vertices carry the data and the
interior vertices are solved for.  On a truncated tree the depth-``d``
leaves are *not* boundary points of the infinite tree: every leaf ``w``
carries an infinite subtree whose ends all get the same data value
``F(w)``.  By symmetry and uniqueness the harmonic extension on that
subtree depends only on depth, and the whole subtree acts as a single
resistor of resistance ``R_d = l0 r^d / (b - r)`` between ``w`` and a node
held at ``F(w)``.  Attaching those resistors makes the finite solve exact
for the infinite tree, so refining the truncation does not change core
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from graphharm.boundary import (
    BoundaryMeasure,
    ClopenPartition,
    StepFunction,
    indicator,
    leaf_masses,
    standard_partition,
)
from graphharm.errors import GraphError, SolveError
from graphharm.functions import EdgeFunction
from graphharm.graph import GraphPoint, MetricGraph, TreeSpec, build_tree, geodesic_distance

KIRCHHOFF_TOL = 1e-10


class HarmonicFunction(EdgeFunction):
    """Edge-wise linear, Kirchhoff balanced function on a graph.

    ``values`` holds one value per vertex of ``graph``.  For tree graphs
    ``tail_limits`` maps each depth-``d`` leaf to the boundary value of the
    ends below it; the function on that leaf's subtree is
    ``C + (f(w) - C) (r/b)^k`` at depth ``d + k``.
    """

    piecewise_linear = True

    def __init__(self, graph: MetricGraph, values, tail_limits: dict | None = None):
        super().__init__(graph)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (graph.n_vertices,):
            raise SolveError("one value per vertex required")
        self.tail_limits = dict(tail_limits or {})
        e = graph.edges
        self.slopes = np.array(
            [(self.values[x.head] - self.values[x.tail]) / x.length for x in e], dtype=float
        )

    # -- pointwise ----------------------------------------------------------

    def value(self, edge, x):
        e = self.graph.edges[edge]
        return self.values[e.tail] + self.slopes[edge] * np.asarray(x, dtype=float)

    def derivative(self, edge, x):
        return self.slopes[edge] + 0.0 * np.asarray(x, dtype=float)

    def second_derivative(self, edge, x):
        return 0.0 * np.asarray(x, dtype=float)

    def vertex_value(self, v) -> float:
        return float(self.values[self.graph.vertex_index(v)])

    def __getitem__(self, v) -> float:
        return self.vertex_value(v)

    def tail(self, leaf):
        a = self.vertex_value(leaf)
        return a, self.tail_limits.get(leaf, a)

    def boundary_value(self, v) -> float:
        if self.graph.tree is not None:
            return float(self.tail_limits[v])
        return self.vertex_value(v)

    def tail_level_values(self, leaf, levels: int) -> np.ndarray:
        """Values at tail depths ``d, d+1, ..., d+levels`` below ``leaf``."""
        t = self.graph.tree
        a, c = self.tail(leaf)
        q = t.r / t.b
        return c + (a - c) * q ** np.arange(levels + 1)

    def tail_value(self, leaf, s: float) -> float:
        """Value at distance ``s`` below ``leaf`` on any descending path."""
        t = self.graph.tree
        if t is None:
            raise GraphError("tails exist only on tree graphs")
        a, c = self.tail(leaf)
        if s < 0:
            raise GraphError("distance below the leaf must be nonnegative")
        if a == c or s >= t.tail_length(t.depth):
            return float(c)
        k = 0
        while True:
            length = t.edge_length(t.depth + k)
            if s <= length or length < 1e-300:
                hk, hk1 = self.tail_level_values(leaf, k + 1)[k:]
                return float(hk + (hk1 - hk) * s / length)
            s -= length
            k += 1

    def tail_flux(self, leaf) -> float:
        """Sum of outward derivatives of the tail edges at ``leaf``."""
        t = self.graph.tree
        h0, h1 = self.tail_level_values(leaf, 1)
        return t.b * (h1 - h0) / t.edge_length(t.depth)

    # -- structure ----------------------------------------------------------

    def interior_indices(self) -> list[int]:
        g = self.graph
        if g.tree is not None:
            return list(range(g.n_vertices))
        return [i for i, v in enumerate(g.vertices) if v not in g.boundary]

    def kirchhoff_residuals(self) -> dict:
        """``sum_{e~v} d_nu f_e(v)`` at every interior vertex (tail edges included)."""
        g = self.graph
        out = {}
        for i in self.interior_indices():
            total = 0.0
            for k, _, at_tail in g.incidence[i]:
                total += self.slopes[k] if at_tail else -self.slopes[k]
            v = g.vertices[i]
            if g.tree is not None and v in self.tail_limits:
                total += self.tail_flux(v)
            out[v] = total
        return out

    def core_energy(self) -> float:
        return float(math.fsum(self.slopes**2 * self.graph.lengths))

    def tail_energy(self) -> float:
        t = self.graph.tree
        if t is None:
            return 0.0
        R = t.tail_resistance(t.depth)
        return math.fsum((self.tail(w)[0] - self.tail(w)[1]) ** 2 / R for w in self.graph.leaves)

    def dirichlet_energy(self) -> float:
        return self.core_energy() + self.tail_energy()

    def is_constant(self) -> bool:
        vals = list(self.values) + list(self.tail_limits.values())
        return max(vals) == min(vals)


def evaluate(h: EdgeFunction, p: GraphPoint) -> float:
    """Value of ``h`` at a graph point (linear interpolation for harmonic ``h``)."""
    return h.evaluate(p)


# -- solving --------------------------------------------------------------------


class _Factorization:
    """Sparse LU of the reduced weighted Laplacian of ``g``."""

    def __init__(self, g: MetricGraph):
        self.g = g
        n = g.n_vertices
        if g.tree is not None:
            unknown = np.arange(n)
        else:
            unknown = np.array([i for i, v in enumerate(g.vertices) if v not in g.boundary], dtype=int)
        self.unknown = unknown
        pos = -np.ones(n, dtype=int)
        pos[unknown] = np.arange(len(unknown))
        self.pos = pos
        rows, cols, vals = [], [], []
        coupling = []  # (row, known vertex, conductance)
        for e in g.edges:
            c = 1.0 / e.length
            for a, b in ((e.tail, e.head), (e.head, e.tail)):
                if pos[a] < 0:
                    continue
                rows.append(pos[a])
                cols.append(pos[a])
                vals.append(c)
                if pos[b] >= 0:
                    rows.append(pos[a])
                    cols.append(pos[b])
                    vals.append(-c)
                else:
                    coupling.append((pos[a], b, c))
        self.tail_conductance = 0.0
        if g.tree is not None:
            self.tail_conductance = 1.0 / g.tree.tail_resistance(g.tree.depth)
            self.leaf_rows = np.array([pos[g.index[w]] for w in g.leaves], dtype=int)
            rows.extend(self.leaf_rows)
            cols.extend(self.leaf_rows)
            vals.extend([self.tail_conductance] * len(self.leaf_rows))
        self.coupling = coupling
        m = len(unknown)
        self.lu = None
        if m:
            A = coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsc()
            try:
                self.lu = splu(A)
            except RuntimeError as exc:  # singular: cannot happen for connected input
                raise SolveError(f"singular harmonic system: {exc}") from exc

    def solve(self, data: np.ndarray) -> np.ndarray:
        """Vertex values for boundary data.

        ``data`` has shape ``(n_boundary_keys, k)``: one row per tree leaf
        (trees) or per vertex of ``g`` (explicit graphs; only boundary rows
        are read).
        """
        g = self.g
        k = data.shape[1]
        out = np.zeros((g.n_vertices, k))
        if g.tree is None:
            out[:] = data
        m = len(self.unknown)
        if not m:
            return out
        rhs = np.zeros((m, k))
        for row, b, c in self.coupling:
            rhs[row] += c * data[b]
        if g.tree is not None:
            rhs[self.leaf_rows] += self.tail_conductance * data
        out[self.unknown] = self.lu.solve(rhs)
        return out


def _leaf_keys(g: MetricGraph) -> list:
    if g.tree is not None:
        return list(g.leaves)
    return [v for v in g.vertices if v in g.boundary]


def _as_function(g: MetricGraph, column: np.ndarray, data: dict) -> HarmonicFunction:
    tails = dict(data) if g.tree is not None else None
    return HarmonicFunction(g, column, tails)


def _data_matrix(g: MetricGraph, datas: Sequence[dict]) -> np.ndarray:
    if g.tree is not None:
        keys = list(g.leaves)
        return np.array([[d[w] for d in datas] for w in keys], dtype=float)
    out = np.zeros((g.n_vertices, len(datas)))
    for j, d in enumerate(datas):
        for v, val in d.items():
            out[g.index[v], j] = val
    return out


def solve_with_data(g: MetricGraph, data: dict) -> HarmonicFunction:
    """Harmonic extension of per-leaf (tree) or per-boundary-vertex data."""
    keys = _leaf_keys(g)
    missing = [v for v in keys if v not in data]
    if missing:
        raise SolveError(f"no boundary data for {missing[:5]}")
    vals = [data[v] for v in keys]
    if max(vals) == min(vals):
        return _as_function(g, np.full(g.n_vertices, vals[0]), data)
    fac = _Factorization(g)
    col = fac.solve(_data_matrix(g, [data]))[:, 0]
    return _as_function(g, col, data)


def solve_dirichlet(g: MetricGraph, F: StepFunction) -> HarmonicFunction:
    """The unique finite-energy harmonic function with boundary values ``F``."""
    return solve_with_data(g, F.leaf_values(g))


def harmonic_measure(g: MetricGraph, partition: ClopenPartition, at: GraphPoint) -> np.ndarray:
    """Values at ``at`` of the harmonic extensions of each cell indicator."""
    g.check_point(at)
    datas = [indicator(partition, i).leaf_values(g) for i in range(len(partition))]
    fac = _Factorization(g)
    cols = fac.solve(_data_matrix(g, datas))
    e = g.edges[at.edge]
    t = at.offset / e.length
    return (1.0 - t) * cols[e.tail] + t * cols[e.head]


# -- energies -------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    dirichlet_energy: float
    boundary_term: float
    h1_inner: float


def _edge_breakpoints(f: EdgeFunction, edge: int) -> list[float]:
    ramps = getattr(f, "ramps", None)
    if ramps and edge in ramps:
        return [ramps[edge][0], ramps[edge][1]]
    return []


def dirichlet_inner(f: EdgeFunction, g: EdgeFunction, force_quadrature: bool = False) -> float:
    """``int f' g'`` over the whole graph, tails included."""
    G = f.graph
    if g.graph is not G:
        raise GraphError("functions live on different graphs")
    parts = []
    for k, e in enumerate(G.edges):
        if f.piecewise_linear and g.piecewise_linear and not force_quadrature:
            parts.append(float(f.derivative(k, 0.0)) * float(g.derivative(k, 0.0)) * e.length)
            continue
        pts = sorted(set(_edge_breakpoints(f, k) + _edge_breakpoints(g, k)))
        pts = [p for p in pts if 0.0 < p < e.length]
        val, _ = integrate.quad(
            lambda x: float(f.derivative(k, x)) * float(g.derivative(k, x)),
            0.0,
            e.length,
            points=pts or None,
            epsabs=1e-13,
            epsrel=1e-12,
            limit=200,
        )
        parts.append(val)
    if G.tree is not None:
        R = G.tree.tail_resistance(G.tree.depth)
        for w in G.leaves:
            af, cf = f.tail(w)
            ag, cg = g.tail(w)
            parts.append((af - cf) * (ag - cg) / R)
    return math.fsum(parts)


def h1_inner(f: EdgeFunction, g: EdgeFunction, mu: BoundaryMeasure) -> EnergyReport:
    """Energy inner product ``int f'g' + int f g dmu`` split into its parts."""
    dirichlet = dirichlet_inner(f, g)
    masses = leaf_masses(f.graph, mu)
    tf, tg = f.trace(), g.trace()
    boundary = math.fsum(tf[v] * tg[v] * m for v, m in masses.items())
    return EnergyReport(dirichlet, boundary, dirichlet + boundary)


def energy(f: EdgeFunction, mu: BoundaryMeasure) -> EnergyReport:
    return h1_inner(f, f, mu)


# -- continuous data --------------------------------------------------------------


def sqrt_distance_sampler(tree: TreeSpec, anchor: str = "") -> Callable[[str], float]:
    """``F(x) = sqrt(d(x, x0))`` sampled at the leftmost end of each cylinder.

    ``x0`` is the end ``anchor000...``.  Two ends first differing at letter
    ``j`` are ``2 l0 r^j / (1 - r)`` apart.
    """

    def sampler(word: str) -> float:
        n = max(len(word), len(anchor))
        a = word.ljust(n, "0")
        b = anchor.ljust(n, "0")
        for j in range(n):
            if a[j] != b[j]:
                return math.sqrt(2.0 * tree.tail_length(j))
        return 0.0

    return sampler


@dataclass
class ContinuousExtension:
    function: HarmonicFunction
    history: list = field(default_factory=list)  # (depth, sup_diff, energy)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.history) - 1, 0)


def sampled_step(tree: TreeSpec, sampler: Callable[[str], float], k: int) -> StepFunction:
    p = standard_partition(tree.b, k)
    return StepFunction(p, tuple(float(sampler(words[0])) for _, words in p.cells))


def extend_continuous(
    tree: TreeSpec,
    sampler: Callable[[str], float],
    tol: float,
    depths: Iterable[int] | None = None,
    run_all: bool = False,
) -> ContinuousExtension:
    """Harmonic extension of continuous data via step approximations.

    The data is sampled on the depth-``k`` cylinders for each ``k`` in
    ``depths`` (default ``1..10``) and extended exactly.  Iteration stops
    once two successive extensions differ by less than ``tol`` in sup norm
    over the shared core vertices; by the maximum principle that bounds the
    difference on the whole graph.  ``run_all`` records every depth.
    """
    if not tol > 0.0:
        raise SolveError("tol must be positive")
    depths = list(depths) if depths is not None else list(range(1, 11))
    out = ContinuousExtension(function=None)
    prev = None
    for k in depths:
        g = build_tree(tree.with_depth(max(k, 1)))
        F = sampled_step(tree, sampler, k)
        h = solve_dirichlet(g, F)
        if prev is None:
            diff = math.nan
        else:
            n_prev = prev.graph.n_vertices  # breadth-first order: prev core is a prefix
            diff = float(np.max(np.abs(h.values[:n_prev] - prev.values)))
        out.history.append((k, diff, h.dirichlet_energy()))
        out.function = h
        prev = h
        if not math.isnan(diff) and diff < tol:
            out.converged = True
            if not run_all:
                break
    return out


# -- checks ---------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    norm_squared: float

    @property
    def holds(self) -> bool:
        return self.max_ratio <= self.norm_squared * (1.0 + 1e-12)


def lipschitz_check(
    h: EdgeFunction, pairs: Iterable[tuple[GraphPoint, GraphPoint]], mu: BoundaryMeasure
) -> LipschitzReport:
    """Largest ``|f(y) - f(x)|^2 / (2 d(x, y))`` over the sampled pairs."""
    norm_sq = energy(h, mu).h1_inner
    best = 0.0
    for p, q in pairs:
        d = geodesic_distance(h.graph, p, q)
        if d <= 0.0:
            continue
        best = max(best, (h.evaluate(q) - h.evaluate(p)) ** 2 / (2.0 * d))
    return LipschitzReport(best, norm_sq)


def orthogonality_residual(f: EdgeFunction, h: HarmonicFunction, mu: BoundaryMeasure) -> float:
    """``|<f, h>_1|`` for ``f`` compactly supported in the interior.

    The derivative pairing is computed by adaptive quadrature.
    """
    g = f.graph
    keys = _leaf_keys(g)
    for v in keys:
        i = g.vertex_index(v)
        for k, _, _ in g.incidence[i]:
            if abs(f.vertex_value(v)) > 1e-14 or abs(f.outward_derivative(k, i)) > 1e-12:
                raise SolveError(f"test function does not vanish near boundary vertex {v!r}")
    masses = leaf_masses(g, mu)
    dirichlet = dirichlet_inner(f, h, force_quadrature=True)
    boundary = math.fsum(f.vertex_value(v) * h.boundary_value(v) * masses[v] for v in keys)
    return abs(dirichlet + boundary)


def write_values_csv(path, h: HarmonicFunction) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["vertex", "value"])
        for v, x in zip(h.graph.vertices, h.values):
            wr.writerow([v, f"{x:.17g}"])
