"""Metric graphs: explicit finite graphs and truncated homogeneous trees.

Tree vertices are named by their address words over the alphabet
``0..b-1`` (the root is the empty word ``""``), so that boundary cylinder
words and vertices coincide.  The edge joining a depth-``k`` vertex to one
of its children has length ``l0 * r**k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from graphharm.errors import GraphError

ROOT_TOKEN = "-"  # spelling of the empty word in the text format


@dataclass(frozen=True)
class TreeSpec:
    """Homogeneous tree with ``b`` children per vertex and ratio ``r``."""

    b: int
    r: float
    l0: float = 1.0
    depth: int = 1

    def __post_init__(self):
        if not isinstance(self.b, (int, np.integer)) or self.b < 2:
            raise GraphError(f"branching must be an integer >= 2, got {self.b!r}")
        if not 0.0 < self.r < 1.0:
            raise GraphError(f"ratio must lie in (0, 1), got {self.r!r}")
        if not self.l0 > 0.0:
            raise GraphError(f"root edge length must be positive, got {self.l0!r}")
        if not isinstance(self.depth, (int, np.integer)) or self.depth < 1:
            raise GraphError(f"depth must be an integer >= 1, got {self.depth!r}")

    @property
    def finite_volume(self) -> bool:
        return self.b * self.r < 1.0

    def infinite_volume(self) -> float:
        """Total edge length of the infinite tree, ``b*l0/(1-b*r)`` or inf."""
        if not self.finite_volume:
            return math.inf
        return self.b * self.l0 / (1.0 - self.b * self.r)

    def edge_length(self, k: int) -> float:
        """Length of an edge leaving a depth-``k`` vertex."""
        return self.l0 * self.r**k

    def tail_length(self, k: int) -> float:
        """Distance from a depth-``k`` vertex to every end below it."""
        return self.l0 * self.r**k / (1.0 - self.r)

    def tail_resistance(self, k: int) -> float:
        """Effective resistance from a depth-``k`` vertex to the ends below it.

        Level ``j >= k`` contributes ``b**(j-k+1)`` parallel edges of length
        ``l0 r**j``; the geometric series in ``r/b`` sums to
        ``l0 r**k / (b - r)``.
        """
        return self.l0 * self.r**k / (self.b - self.r)

    def tail_volume(self, k: int) -> float:
        """Total length of the infinite subtree hanging below a depth-``k`` vertex."""
        if not self.finite_volume:
            return math.inf
        return self.b * self.l0 * self.r**k / (1.0 - self.b * self.r)

    def with_depth(self, depth: int) -> "TreeSpec":
        return TreeSpec(self.b, self.r, self.l0, depth)


class Edge(NamedTuple):
    tail: int
    head: int
    length: float


@dataclass(frozen=True)
class GraphPoint:
    """A point on edge ``edge`` at distance ``offset`` from the edge's tail."""

    edge: int
    offset: float


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Immutable metric graph.

    Use :func:`build_tree` or :func:`build_explicit` rather than the
    constructor; those validate connectivity and boundary tagging.
    """

    vertices: tuple
    edges: tuple
    boundary: frozenset
    origin: str | None = None
    tree: TreeSpec | None = None

    def __post_init__(self):
        n = len(self.vertices)
        if len(set(self.vertices)) != n:
            raise GraphError("duplicate vertex ids")
        for e in self.edges:
            if not (0 <= e.tail < n and 0 <= e.head < n):
                raise GraphError(f"edge {e} references unknown vertex")
            if not (e.length > 0.0 and math.isfinite(e.length)):
                raise GraphError(f"edge lengths must be positive and finite, got {e.length!r}")
            if e.tail == e.head:
                raise GraphError("self-loops are not supported")
        unknown = set(self.boundary) - set(self.vertices)
        if unknown:
            raise GraphError(f"boundary vertices not in graph: {sorted(unknown)}")

    # -- lookup ---------------------------------------------------------

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def incidence(self) -> tuple:
        """Per vertex: tuple of ``(edge_id, neighbour_index, at_tail)``."""
        inc = [[] for _ in self.vertices]
        for k, e in enumerate(self.edges):
            inc[e.tail].append((k, e.head, True))
            inc[e.head].append((k, e.tail, False))
        return tuple(tuple(x) for x in inc)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.incidence], dtype=int)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges], dtype=float)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return np.array([v in self.boundary for v in self.vertices], dtype=bool)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex_index(self, v) -> int:
        try:
            return self.index[v]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def edge_between(self, u, v) -> int:
        """Id of the (shortest) edge joining vertices ``u`` and ``v``."""
        iu, iv = self.vertex_index(u), self.vertex_index(v)
        best = None
        for k, other, _ in self.incidence[iu]:
            if other == iv and (best is None or self.edges[k].length < self.edges[best].length):
                best = k
        if best is None:
            raise GraphError(f"no edge between {u!r} and {v!r}")
        return best

    def vertex_point(self, v) -> GraphPoint:
        """A :class:`GraphPoint` aliasing vertex ``v``."""
        i = self.vertex_index(v)
        if not self.incidence[i]:
            raise GraphError(f"vertex {v!r} has no incident edge")
        k, _, at_tail = self.incidence[i][0]
        return GraphPoint(k, 0.0 if at_tail else self.edges[k].length)

    def check_point(self, p: GraphPoint) -> None:
        if not 0 <= p.edge < len(self.edges):
            raise GraphError(f"edge id {p.edge} out of range")
        if not 0.0 <= p.offset <= self.edges[p.edge].length:
            raise GraphError(
                f"offset {p.offset} outside [0, {self.edges[p.edge].length}] on edge {p.edge}"
            )

    # -- distances ------------------------------------------------------

    @cached_property
    def _weights(self) -> csr_matrix:
        n = self.n_vertices
        best: dict = {}
        for e in self.edges:
            key = (min(e.tail, e.head), max(e.tail, e.head))
            best[key] = min(best.get(key, math.inf), e.length)
        if not best:
            return csr_matrix((n, n))
        rows, cols = zip(*best)
        vals = list(best.values())
        return csr_matrix((vals, (rows, cols)), shape=(n, n))

    def distances_from(self, sources: Iterable[int]) -> np.ndarray:
        """Shortest-path distances from each source vertex index (rows)."""
        sources = list(sources)
        return dijkstra(self._weights, directed=False, indices=sources)

    def multi_source_distance(self, sources: Iterable[int]) -> np.ndarray:
        """Distance from every vertex to the nearest of ``sources``."""
        sources = list(sources)
        if not sources:
            return np.full(self.n_vertices, math.inf)
        return dijkstra(self._weights, directed=False, indices=sources, min_only=True)

    def is_connected(self) -> bool:
        if self.n_vertices == 0:
            return True
        ncomp, _ = connected_components(self._weights, directed=False)
        return ncomp == 1

    def components(self, removed: Iterable = ()) -> list[set]:
        """Connected components (as vertex-id sets) after deleting ``removed``."""
        gone = {self.vertex_index(v) for v in removed}
        seen = set(gone)
        comps = []
        for start in range(self.n_vertices):
            if start in seen:
                continue
            stack, comp = [start], set()
            seen.add(start)
            while stack:
                i = stack.pop()
                comp.add(self.vertices[i])
                for _, j, _ in self.incidence[i]:
                    if j not in seen:
                        seen.add(j)
                        stack.append(j)
            comps.append(comp)
        return comps

    # -- tree helpers -----------------------------------------------------

    def depth_of(self, v) -> int:
        if self.tree is None:
            raise GraphError("depth is only defined for tree graphs")
        return len(v)

    @cached_property
    def leaves(self) -> tuple:
        """Depth-``d`` leaves of a truncated tree, in canonical order."""
        if self.tree is None:
            return tuple(v for v in self.vertices if v in self.boundary)
        d = self.tree.depth
        return tuple(v for v in self.vertices if len(v) == d)


def build_tree(spec: TreeSpec) -> MetricGraph:
    """Truncate the homogeneous tree described by ``spec`` at ``spec.depth``.

    Vertices and edges are listed breadth first with children in letter
    order, so a depth-``d`` tree is a prefix of the depth-``d+1`` tree.
    """
    b, d = spec.b, spec.depth
    if b > 10:
        raise GraphError("trees with more than 10 letters are not supported")
    words = [""]
    levels = [[""]]
    for k in range(d):
        nxt = [w + str(i) for w in levels[-1] for i in range(b)]
        levels.append(nxt)
        words.extend(nxt)
    index = {w: i for i, w in enumerate(words)}
    edges = []
    for k in range(d):
        length = spec.edge_length(k)
        for w in levels[k + 1]:
            edges.append(Edge(index[w[:-1]], index[w], length))
    return MetricGraph(
        vertices=tuple(words),
        edges=tuple(edges),
        boundary=frozenset(levels[-1]),
        origin="",
        tree=spec,
    )


def build_explicit(
    edges: Sequence[tuple], boundary: Iterable, origin=None
) -> MetricGraph:
    """Validated graph from ``(tail, head, length)`` triples.

    Raises :class:`GraphError` for nonpositive lengths, disconnected input
    or a degree-one vertex missing from ``boundary``.
    """
    if not edges:
        raise GraphError("graph needs at least one edge")
    names: dict = {}
    for t, h, _ in edges:
        for v in (t, h):
            names.setdefault(v, len(names))
    elist = []
    for t, h, length in edges:
        length = float(length)
        if not length > 0.0:
            raise GraphError(f"nonpositive edge length {length} on ({t!r}, {h!r})")
        elist.append(Edge(names[t], names[h], length))
    boundary = frozenset(boundary)
    g = MetricGraph(tuple(names), tuple(elist), boundary, origin=origin)
    if not g.is_connected():
        raise GraphError("graph is disconnected")
    missing = [v for v, deg in zip(g.vertices, g.degrees) if deg == 1 and v not in boundary]
    if missing:
        raise GraphError(f"degree-1 vertices must be boundary: {missing}")
    if origin is not None:
        g.vertex_index(origin)
    return g


def restrict_depth(g: MetricGraph, depth: int) -> MetricGraph:
    """The truncation of a tree graph to vertices of depth ``<= depth``."""
    if g.tree is None:
        raise GraphError("restrict_depth needs a tree graph")
    if not 1 <= depth <= g.tree.depth:
        raise GraphError(f"depth {depth} outside 1..{g.tree.depth}")
    keep = [i for i, v in enumerate(g.vertices) if len(v) <= depth]
    remap = {old: new for new, old in enumerate(keep)}
    edges = tuple(
        Edge(remap[e.tail], remap[e.head], e.length)
        for e in g.edges
        if e.tail in remap and e.head in remap
    )
    verts = tuple(g.vertices[i] for i in keep)
    return MetricGraph(
        verts,
        edges,
        frozenset(v for v in verts if len(v) == depth),
        origin=g.origin,
        tree=g.tree.with_depth(depth),
    )


def _point_endpoints(g: MetricGraph, p: GraphPoint):
    e = g.edges[p.edge]
    return ((e.tail, p.offset), (e.head, e.length - p.offset))


def geodesic_distance(g: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    """Length of the shortest path between two points of ``g``."""
    g.check_point(p)
    g.check_point(q)
    best = math.inf
    if p.edge == q.edge:
        best = abs(p.offset - q.offset)
    ends_p = _point_endpoints(g, p)
    ends_q = _point_endpoints(g, q)
    dist = g.distances_from([v for v, _ in ends_p])
    for row, (_, dp) in enumerate(ends_p):
        for v, dq in ends_q:
            best = min(best, dp + dist[row, v] + dq)
    return float(best)


@dataclass(frozen=True)
class GraphMetrics:
    volume: float
    diameter: float
    distance_to_boundary: dict = field(repr=False)
    infinite_volume: float | None = None


def _diameter(g: MetricGraph) -> float:
    if g.n_vertices <= 1:
        return 0.0
    if g.n_edges == g.n_vertices - 1:
        # double sweep is exact on trees
        d0 = g.distances_from([0])[0]
        far = int(np.argmax(d0))
        return float(np.max(g.distances_from([far])[0]))
    return float(np.max(g.distances_from(range(g.n_vertices))))


def metrics(g: MetricGraph) -> GraphMetrics:
    """Volume, vertex diameter and per-vertex distance to the boundary.

    For tree graphs ``infinite_volume`` reports the volume of the untruncated
    tree (``inf`` when ``b*r >= 1``).
    """
    bidx = [g.index[v] for v in g.boundary]
    dist = g.multi_source_distance(bidx)
    return GraphMetrics(
        volume=float(math.fsum(e.length for e in g.edges)),
        diameter=_diameter(g),
        distance_to_boundary={v: float(d) for v, d in zip(g.vertices, dist)},
        infinite_volume=None if g.tree is None else g.tree.infinite_volume(),
    )


def edge_max_boundary_distance(g: MetricGraph) -> np.ndarray:
    """Largest distance to the boundary attained on each closed edge.

    With endpoint distances ``du, dv`` the distance along the edge is
    ``min(du + s, dv + l - s)``, maximal at ``(du + dv + l) / 2``.
    """
    bidx = [g.index[v] for v in g.boundary]
    dist = g.multi_source_distance(bidx)
    out = np.empty(g.n_edges)
    for k, e in enumerate(g.edges):
        du, dv = dist[e.tail], dist[e.head]
        # |du - dv| <= l by the triangle inequality, so the peak is interior
        out[k] = (du + dv + e.length) / 2.0
    return out


def epsilon_core(g: MetricGraph, eps: float) -> MetricGraph:
    """Closed edges carrying a point at distance ``>= eps`` from the boundary.

    Whole edges are kept; the result may be empty.
    """
    if not eps > 0.0:
        raise GraphError(f"eps must be positive, got {eps!r}")
    far = edge_max_boundary_distance(g)
    keep = [k for k in range(g.n_edges) if far[k] >= eps]
    return subgraph_from_edges(g, keep)


def subgraph_from_edges(g: MetricGraph, edge_ids: Sequence[int]) -> MetricGraph:
    """Subgraph on the given edges.

    Boundary tags are inherited and every degree-one vertex of the subgraph
    is tagged boundary as well.
    """
    used = sorted({i for k in edge_ids for i in (g.edges[k].tail, g.edges[k].head)})
    remap = {old: new for new, old in enumerate(used)}
    edges = tuple(
        Edge(remap[g.edges[k].tail], remap[g.edges[k].head], g.edges[k].length)
        for k in edge_ids
    )
    verts = tuple(g.vertices[i] for i in used)
    deg = np.zeros(len(verts), dtype=int)
    for e in edges:
        deg[e.tail] += 1
        deg[e.head] += 1
    boundary = frozenset(
        v for v, d in zip(verts, deg) if d == 1 or v in g.boundary
    )
    origin = g.origin if g.origin in set(verts) else None
    return MetricGraph(verts, edges, boundary, origin=origin)


# -- text format ----------------------------------------------------------
#
#   # comments start with '#'
#   tree: <b> <r> <l0> <depth>        (optional, tree graphs only)
#   origin: <vertex>                  (optional)
#   boundary: <v1> <v2> ...           (required, may be repeated)
#   <tail> <head> <length>            (one edge per line)
#
# The empty word (tree root) is written as '-'.


def _tok(v: str) -> str:
    return ROOT_TOKEN if v == "" else str(v)


def _untok(s: str) -> str:
    return "" if s == ROOT_TOKEN else s


def format_graph(g: MetricGraph) -> str:
    lines = []
    if g.tree is not None:
        t = g.tree
        lines.append(f"tree: {t.b} {t.r!r} {t.l0!r} {t.depth}")
    if g.origin is not None:
        lines.append(f"origin: {_tok(g.origin)}")
    bnd = [v for v in g.vertices if v in g.boundary]
    lines.append("boundary: " + " ".join(_tok(v) for v in bnd))
    for e in g.edges:
        lines.append(f"{_tok(g.vertices[e.tail])} {_tok(g.vertices[e.head])} {e.length!r}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> MetricGraph:
    tree = None
    origin = None
    boundary: list = []
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("tree:"):
            parts = line[5:].split()
            if len(parts) != 4:
                raise GraphError(f"line {lineno}: tree header needs b r l0 depth")
            tree = TreeSpec(int(parts[0]), float(parts[1]), float(parts[2]), int(parts[3]))
        elif line.startswith("origin:"):
            origin = _untok(line[7:].strip())
        elif line.startswith("boundary:"):
            boundary.extend(_untok(s) for s in line[9:].split())
        else:
            parts = line.split()
            if len(parts) != 3:
                raise GraphError(f"line {lineno}: expected 'tail head length'")
            try:
                length = float(parts[2])
            except ValueError:
                raise GraphError(f"line {lineno}: bad length {parts[2]!r}") from None
            edges.append((_untok(parts[0]), _untok(parts[1]), length))
    if tree is not None:
        g = build_tree(tree)
        ref = {(g.vertices[e.tail], g.vertices[e.head], e.length) for e in g.edges}
        if ref != set(edges) or set(boundary) != g.boundary:
            raise GraphError("edge list does not match the tree header")
        return g
    return build_explicit(edges, boundary, origin=origin)


def read_graph(path) -> MetricGraph:
    return parse_graph(Path(path).read_text())


def write_graph(g: MetricGraph, path) -> None:
    Path(path).write_text(format_graph(g))
