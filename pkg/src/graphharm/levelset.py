"""Level sets, super-level subgraphs, fluxes and descent paths.

All queries act on a :class:`HarmonicFunction`.  Crossings are searched on
the resolved core only; a level that is attained inside a leaf's tail is
rejected, because there the crossing set lies below the truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from graphharm.boundary import _cell_leaves, complement_cell, distance_to_set
from graphharm.errors import LevelSetError
from graphharm.graph import Edge, GraphPoint, MetricGraph
from graphharm.harmonic import HarmonicFunction

REGULAR_TOL = 1e-11


@dataclass(frozen=True)
class LevelCrossing:
    point: GraphPoint
    slope: float  # derivative along the edge, tail to head
    outward_flux: float  # derivative pointing into the region f >= t


@dataclass(frozen=True)
class LevelSubgraph:
    graph: MetricGraph
    crossings: tuple
    level: float
    side: str = ">="

    def is_connected(self) -> bool:
        return self.graph.is_connected()


class FluxResult(NamedTuple):
    flux: float
    empty: bool


def _tail_critical(h: HarmonicFunction, t: float) -> bool:
    g = h.graph
    if g.tree is None:
        return False
    q = g.tree.r / g.tree.b
    for w in g.leaves:
        a, c = h.tail(w)
        d = a - c
        if d == 0.0:
            if abs(t - c) <= REGULAR_TOL:
                return True  # flat tail edges at level t
            continue
        x = (t - c) / d
        if not 0.0 < x < 1.0:
            continue
        k = math.log(x) / math.log(q)
        for kk in (math.floor(k), math.ceil(k)):
            if kk >= 1 and abs(t - (c + d * q**kk)) <= REGULAR_TOL:
                return True
    return False


def is_regular_value(h: HarmonicFunction, t: float) -> bool:
    """True when ``f^{-1}(t)`` contains no vertex and no flat edge."""
    if np.min(np.abs(h.values - t)) <= REGULAR_TOL:
        return False
    g = h.graph
    for k, e in enumerate(g.edges):
        if h.slopes[k] == 0.0 and abs(h.values[e.tail] - t) <= REGULAR_TOL:
            return False
    return not _tail_critical(h, t)


def _check_tails(h: HarmonicFunction, t: float) -> None:
    g = h.graph
    if g.tree is None:
        return
    for w in g.leaves:
        a, c = h.tail(w)
        if abs(t - c) <= REGULAR_TOL:
            raise LevelSetError(f"level set meets boundary region (ends below {w!r} have value {c})")
        if min(a, c) < t < max(a, c):
            raise LevelSetError(
                f"level {t} is attained in the unresolved tail below {w!r}; increase the truncation depth"
            )


def level_crossings(h: HarmonicFunction, t: float) -> list[LevelCrossing]:
    """The finite level set ``f^{-1}(t)`` as edge crossings."""
    if not is_regular_value(h, t):
        raise LevelSetError(f"{t} is a critical value")
    _check_tails(h, t)
    g = h.graph
    out = []
    for k, e in enumerate(g.edges):
        fu, fv = h.values[e.tail], h.values[e.head]
        if (fu - t) * (fv - t) >= 0.0:
            continue
        s = h.slopes[k]
        offset = (t - fu) / s
        direction = 1.0 if fv > t else -1.0
        flux = direction * s
        if not flux > 0.0:
            raise LevelSetError(f"nonpositive flux at crossing on edge {k}")
        out.append(LevelCrossing(GraphPoint(k, float(offset)), float(s), float(flux)))
    return out


def subgraph_above(h: HarmonicFunction, t: float) -> LevelSubgraph:
    """``G_t``: the part of the core where ``f >= t``, crossings as boundary vertices."""
    crossings = level_crossings(h, t)
    g = h.graph
    cross_at = {c.point.edge: c for c in crossings}
    keep = [i for i in range(g.n_vertices) if h.values[i] >= t]
    names = [g.vertices[i] for i in keep]
    index = {i: n for n, i in enumerate(keep)}
    edges = []
    boundary = {g.vertices[i] for i in keep if g.vertices[i] in g.boundary}
    for k, e in enumerate(g.edges):
        if k in cross_at:
            c = cross_at[k]
            vid = f"~{k}"
            names.append(vid)
            boundary.add(vid)
            xi = len(names) - 1
            if h.values[e.head] > t:
                edges.append(Edge(xi, index[e.head], e.length - c.point.offset))
            else:
                edges.append(Edge(index[e.tail], xi, c.point.offset))
        elif e.tail in index and e.head in index:
            edges.append(Edge(index[e.tail], index[e.head], e.length))
    sub = MetricGraph(tuple(names), tuple(edges), frozenset(boundary))
    for c in crossings:
        assert c.outward_flux > 0.0
    return LevelSubgraph(sub, tuple(crossings), float(t))


def level_flux(h: HarmonicFunction, t: float) -> FluxResult:
    """Total outward flux through ``f^{-1}(t)`` seen as the boundary of ``G_t``."""
    crossings = level_crossings(h, t)
    if not crossings:
        return FluxResult(0.0, True)
    return FluxResult(math.fsum(c.outward_flux for c in crossings), False)


# -- thresholds -----------------------------------------------------------------


def _tail_level_distance(h: HarmonicFunction, leaf, t: float) -> float:
    """Distance below ``leaf`` at which the monotone tail profile equals ``t``."""
    tree = h.graph.tree
    a, c = h.tail(leaf)
    q = tree.r / tree.b
    s = 0.0
    k = 0
    hk = a
    while True:
        hk1 = c + (a - c) * q ** (k + 1)
        length = tree.edge_length(tree.depth + k)
        if (hk - t) * (hk1 - t) <= 0.0:
            return s + length * (t - hk) / (hk1 - hk)
        s += length
        k += 1
        hk = hk1
        if k > 2000:
            return tree.tail_length(tree.depth)


def sublevel_max_distance(h: HarmonicFunction, inside: Sequence, t: float) -> float:
    """Sup of ``d(x, E)`` over points with ``f(x) <= t``, tails included."""
    g = h.graph
    dE = distance_to_set(g, inside)
    best = -math.inf
    for k, e in enumerate(g.edges):
        fu, fv = h.values[e.tail], h.values[e.head]
        if fu > t and fv > t:
            continue
        length = e.length
        if fu <= t and fv <= t:
            lo, hi = 0.0, length
        else:
            s = (t - fu) / h.slopes[k]
            lo, hi = (0.0, s) if fu <= t else (s, length)
        du, dv = dE[e.tail], dE[e.head]

        def dist(x):
            return min(du + x, dv + length - x)

        cands = [lo, hi]
        kink = (dv + length - du) / 2.0
        if lo < kink < hi:
            cands.append(kink)
        best = max(best, max(dist(x) for x in cands))
    if g.tree is not None:
        inside_set = set(inside)
        T = g.tree.tail_length(g.tree.depth)
        for w in g.leaves:
            a, c = h.tail(w)
            lo_val, hi_val = min(a, c), max(a, c)
            if hi_val <= t:
                # whole tail is below t; farthest point from E is the leaf or its ends
                far = T if w in inside_set else dE[g.index[w]] + T
                best = max(best, far)
                continue
            if lo_val > t:
                continue
            s = _tail_level_distance(h, w, t)
            if w in inside_set:
                best = max(best, T - s if a > t else T)
            else:
                best = max(best, dE[g.index[w]] + (s if a <= t else T))
    return best


def threshold_for_neighborhood(h: HarmonicFunction, cell: Sequence[str], eps: float) -> float:
    """A regular ``t > C`` with ``{f <= t}`` inside the ``eps``-neighbourhood of ``E``.

    Requires ``f == C`` on the cell ``E`` and ``f > C`` on its complement.
    The largest admissible ``t`` below ``min_{E^c} f`` is located by
    bisection from above and then nudged down to a regular value.
    """
    g = h.graph
    inside = _cell_leaves(g, cell)
    outside = complement_cell(g, cell)
    if not inside or not outside:
        raise LevelSetError("E and its complement must both be nonempty")
    trace = h.trace()
    cvals = [trace[v] for v in inside]
    C = cvals[0]
    if max(cvals) - min(cvals) > 1e-12:
        raise LevelSetError("f is not constant on E")
    m = min(trace[v] for v in outside)
    if not m > C:
        raise LevelSetError("f must exceed its value on E everywhere on the complement")

    def ok(t):
        return sublevel_max_distance(h, inside, t) < eps

    top = m - 1e-9 * (m - C)
    if ok(top):
        t = top
    else:
        lo, hi = C, top
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if ok(mid):
                lo = mid
            else:
                hi = mid
        if lo == C:
            raise LevelSetError(
                f"no threshold found for eps={eps} at this truncation "
                f"(sup distance near C is {sublevel_max_distance(h, inside, C + 1e-12 * (m - C)):.3g})"
            )
        t = lo
    step = 1e-9 * (m - C)
    for _ in range(1000):
        if is_regular_value(h, t):
            return float(t)
        t -= step
    raise LevelSetError("could not find a regular value near the threshold")


# -- descent ----------------------------------------------------------------------


@dataclass
class DescentPath:
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    terminal: object = None
    end_address: str | None = None


def descent_path(h: HarmonicFunction, start: GraphPoint) -> DescentPath:
    """Walk from ``start`` along strictly decreasing ``f`` to the boundary.

    At each interior vertex the steepest descending edge is taken, ties
    broken by the lower neighbour id.  On a tree the walk ends at a
    depth-``d`` leaf whose tail keeps descending; its word names the cylinder
    containing the limiting end.
    """
    g = h.graph
    g.check_point(start)
    path = DescentPath()
    e = g.edges[start.edge]
    path.points.append(start)
    path.values.append(h.evaluate(start))
    if 0.0 < start.offset < e.length:
        s = h.slopes[start.edge]
        if s == 0.0:
            raise LevelSetError("f is constant along the start edge")
        if s > 0:
            v, pt = e.tail, GraphPoint(start.edge, 0.0)
        else:
            v, pt = e.head, GraphPoint(start.edge, e.length)
        path.points.append(pt)
        path.values.append(float(h.values[v]))
        used = {start.edge}
    else:
        v = e.tail if start.offset == 0.0 else e.head
        used = set()
    while True:
        name = g.vertices[v]
        moved = len(path.points) > 1
        if g.tree is not None and name in h.tail_limits:
            a, c = h.tail(name)
            if c < a:
                path.terminal = name
                path.end_address = name
                return path
            raise LevelSetError(f"no descent direction at leaf {name!r}")
        if g.tree is None and name in g.boundary and moved:
            path.terminal = name
            return path
        options = []
        for k, other, at_tail in g.incidence[v]:
            if k in used:
                continue
            d = h.slopes[k] if at_tail else -h.slopes[k]
            if d < 0.0:
                options.append((d, str(g.vertices[other]), k, other, at_tail))
        if not options:
            raise LevelSetError(f"no descent direction at vertex {name!r}")
        options.sort()
        _, _, k, other, at_tail = options[0]
        used.add(k)
        pt = GraphPoint(k, g.edges[k].length if at_tail else 0.0)
        val = float(h.values[other])
        if not val < path.values[-1]:
            raise LevelSetError("descent is not strictly decreasing")
        path.points.append(pt)
        path.values.append(val)
        v = other
