"""Edge-wise functions on metric graphs.

Every function here is given by per-edge components ``f_e(x)`` with ``x``
measured from the edge's tail.  On tree graphs each depth-``d`` leaf also
carries a *tail*: the behaviour of the function on the infinite subtree
below it.  Only two kinds of tails occur, both symmetric under the tree's
automorphisms: constant tails and harmonic tails decaying geometrically
from the leaf value ``a`` to the boundary value ``C``.  A tail is stored as
the pair ``(a, C)``; ``a == C`` means constant.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from graphharm.errors import GraphError
from graphharm.graph import GraphPoint, MetricGraph


def smoothstep(u):
    """Quintic ``6u^5 - 15u^4 + 10u^3`` clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def smoothstep_d1(u):
    u = np.clip(u, 0.0, 1.0)
    return 30.0 * u * u * (1.0 - u) ** 2


def smoothstep_d2(u):
    u = np.clip(u, 0.0, 1.0)
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


class EdgeFunction:
    """Base class for functions given edge by edge."""

    piecewise_linear = False

    def __init__(self, graph: MetricGraph):
        self.graph = graph

    def value(self, edge: int, x):
        raise NotImplementedError

    def derivative(self, edge: int, x):
        raise NotImplementedError

    def second_derivative(self, edge: int, x):
        raise NotImplementedError

    def vertex_value(self, v) -> float:
        g = self.graph
        k, _, at_tail = g.incidence[g.vertex_index(v)][0]
        return float(self.value(k, 0.0 if at_tail else g.edges[k].length))

    def evaluate(self, p: GraphPoint) -> float:
        self.graph.check_point(p)
        return float(self.value(p.edge, p.offset))

    def outward_derivative(self, edge: int, v_index: int) -> float:
        """Derivative of ``f_e`` at its endpoint ``v``, pointing into the edge."""
        e = self.graph.edges[edge]
        if v_index == e.tail:
            return float(self.derivative(edge, 0.0))
        return -float(self.derivative(edge, e.length))

    def trace(self) -> dict:
        """Boundary values keyed by boundary vertex (tree leaf) id."""
        g = self.graph
        keys = g.leaves if g.tree is not None else [v for v in g.vertices if v in g.boundary]
        return {v: self.boundary_value(v) for v in keys}

    def boundary_value(self, v) -> float:
        a, c = self.tail(v)
        return c

    def tail(self, leaf) -> tuple[float, float]:
        """``(value at leaf, limit at the ends)``; constant by default."""
        a = self.vertex_value(leaf)
        return a, a


class CallableEdgeFunction(EdgeFunction):
    """Edge function from plain callables ``f(edge, x)``.

    ``d1`` and ``d2`` default to central finite differences, which is enough
    for the verification helpers that use this class with analytic inputs.
    """

    def __init__(
        self,
        graph: MetricGraph,
        f: Callable,
        d1: Callable | None = None,
        d2: Callable | None = None,
    ):
        super().__init__(graph)
        self._f = f
        self._d1 = d1
        self._d2 = d2

    def value(self, edge, x):
        return self._f(edge, x)

    def derivative(self, edge, x):
        if self._d1 is not None:
            return self._d1(edge, x)
        h = 1e-6 * self.graph.edges[edge].length
        return (self._f(edge, x + h) - self._f(edge, x - h)) / (2 * h)

    def second_derivative(self, edge, x):
        if self._d2 is not None:
            return self._d2(edge, x)
        h = 1e-4 * self.graph.edges[edge].length
        return (self._f(edge, x + h) - 2 * self._f(edge, x) + self._f(edge, x - h)) / (h * h)


class SumFunction(EdgeFunction):
    """Pointwise linear combination of edge functions on one graph."""

    def __init__(self, terms: list[tuple[float, EdgeFunction]]):
        if not terms:
            raise GraphError("empty combination")
        g = terms[0][1].graph
        if any(t.graph is not g for _, t in terms):
            raise GraphError("functions live on different graphs")
        super().__init__(g)
        self.terms = list(terms)
        self.piecewise_linear = all(t.piecewise_linear for _, t in terms)

    def value(self, edge, x):
        return sum(c * t.value(edge, x) for c, t in self.terms)

    def derivative(self, edge, x):
        return sum(c * t.derivative(edge, x) for c, t in self.terms)

    def second_derivative(self, edge, x):
        return sum(c * t.second_derivative(edge, x) for c, t in self.terms)

    def tail(self, leaf):
        # tails of the summands share the geometric profile, so they add
        a = sum(c * t.tail(leaf)[0] for c, t in self.terms)
        cc = sum(c * t.tail(leaf)[1] for c, t in self.terms)
        return a, cc


def edge_bump(g: MetricGraph, edge: int, start: float, stop: float, amplitude: float = 1.0):
    """``A sin^4`` bump supported on ``[start, stop]`` inside one edge.

    The bump and its first three derivatives vanish at both ends of its
    support, so it lies in the compactly supported Kirchhoff class.
    """
    length = g.edges[edge].length
    if not 0.0 < start < stop < length:
        raise GraphError("bump support must lie strictly inside the edge")
    w = math.pi / (stop - start)

    def inside(x):
        return (np.asarray(x) > start) & (np.asarray(x) < stop)

    def f(e, x):
        if e != edge:
            return 0.0 * np.asarray(x, dtype=float)
        s = np.sin(w * (np.asarray(x, dtype=float) - start))
        return np.where(inside(x), amplitude * s**4, 0.0)

    def d1(e, x):
        if e != edge:
            return 0.0 * np.asarray(x, dtype=float)
        t = w * (np.asarray(x, dtype=float) - start)
        return np.where(inside(x), amplitude * 4 * w * np.sin(t) ** 3 * np.cos(t), 0.0)

    def d2(e, x):
        if e != edge:
            return 0.0 * np.asarray(x, dtype=float)
        t = w * (np.asarray(x, dtype=float) - start)
        s, c = np.sin(t), np.cos(t)
        return np.where(inside(x), amplitude * w * w * (12 * s**2 * c**2 - 4 * s**4), 0.0)

    return CallableEdgeFunction(g, f, d1, d2)


def vertex_bump(
    g: MetricGraph,
    v,
    radius: float,
    amplitude: float = 1.0,
    slopes: dict | None = None,
):
    """Smooth function concentrated near an interior vertex.

    On each incident edge, at distance ``s`` from ``v``,
    ``f = (A + beta_e s) (1 - smoothstep(s / radius))``.  The outward
    derivatives at ``v`` are the ``beta_e``; they must sum to zero so that
    the Kirchhoff condition holds.  ``slopes`` maps edge id to ``beta_e``.
    """
    i = g.vertex_index(v)
    if v in g.boundary and g.tree is None:
        raise GraphError("vertex bumps must sit at interior vertices")
    inc = g.incidence[i]
    if radius >= min(g.edges[k].length for k, _, _ in inc):
        raise GraphError("bump radius must be below the incident edge lengths")
    slopes = dict(slopes or {})
    if abs(sum(slopes.values())) > 1e-12:
        raise GraphError("outward slopes must sum to zero (Kirchhoff)")
    local = {k: at_tail for k, _, at_tail in inc}

    def dist(e, x):
        x = np.asarray(x, dtype=float)
        return x if local[e] else g.edges[e].length - x

    def sign(e):
        return 1.0 if local[e] else -1.0

    def f(e, x):
        if e not in local:
            return 0.0 * np.asarray(x, dtype=float)
        s = dist(e, x)
        return (amplitude + slopes.get(e, 0.0) * s) * (1.0 - smoothstep(s / radius))

    def d1(e, x):
        if e not in local:
            return 0.0 * np.asarray(x, dtype=float)
        s = dist(e, x)
        beta = slopes.get(e, 0.0)
        ds = beta * (1.0 - smoothstep(s / radius)) - (amplitude + beta * s) * smoothstep_d1(s / radius) / radius
        return sign(e) * ds

    def d2(e, x):
        if e not in local:
            return 0.0 * np.asarray(x, dtype=float)
        s = dist(e, x)
        beta = slopes.get(e, 0.0)
        u = s / radius
        return (
            -2.0 * beta * smoothstep_d1(u) / radius
            - (amplitude + beta * s) * smoothstep_d2(u) / radius**2
        )

    return CallableEdgeFunction(g, f, d1, d2)
