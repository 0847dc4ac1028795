"""Clopen algebra of a tree's end space: cylinders, partitions, measures.

A cylinder is named by a finite address word; it is the set of ends whose
address starts with that word.  On explicit finite graphs the "words" are
simply boundary vertex ids and every cell is a finite set of them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from graphharm.errors import BoundaryError
from graphharm.functions import EdgeFunction, smoothstep, smoothstep_d1, smoothstep_d2
from graphharm.graph import MetricGraph, TreeSpec


def _check_word(word: str, b: int) -> None:
    if not isinstance(word, str) or any(not ch.isdigit() or int(ch) >= b for ch in word):
        raise BoundaryError(f"word {word!r} is not over the alphabet 0..{b - 1}")


@dataclass(frozen=True)
class ClopenPartition:
    """Finite partition of the boundary into unions of cylinders.

    ``cells`` is a tuple of ``(cell_id, words)``.  With ``branching`` set
    the words are tree addresses and the constructor checks that they are
    prefix free and cover the end space exactly (Kraft sum equal to one).
    With ``branching=None`` the words are boundary vertex ids of an explicit
    graph; only disjointness is checked here.
    """

    cells: tuple
    branching: int | None = 2

    def __post_init__(self):
        cells = tuple((str(cid), tuple(words)) for cid, words in self.cells)
        object.__setattr__(self, "cells", cells)
        ids = [cid for cid, _ in cells]
        if len(set(ids)) != len(ids):
            raise BoundaryError("duplicate cell ids")
        if any(not words for _, words in cells):
            raise BoundaryError("empty cell")
        all_words = [w for _, words in cells for w in words]
        if len(set(all_words)) != len(all_words):
            raise BoundaryError("a word appears twice")
        if self.branching is None:
            return
        b = self.branching
        for w in all_words:
            _check_word(w, b)
        ordered = sorted(all_words)
        for u, v in zip(ordered, ordered[1:]):
            if v.startswith(u):
                raise BoundaryError(f"cylinders {u!r} and {v!r} overlap")
        total = sum(Fraction(1, b ** len(w)) for w in all_words)
        if total != 1:
            raise BoundaryError(f"cells cover {total} of the boundary, not all of it")

    @property
    def ids(self) -> list[str]:
        return [cid for cid, _ in self.cells]

    def __len__(self):
        return len(self.cells)

    def words(self, i: int) -> tuple:
        return self.cells[i][1]

    def max_word_length(self) -> int:
        return max(len(w) for _, words in self.cells for w in words)

    def cell_of(self, word: str) -> int:
        """Index of the cell containing the cylinder ``word``.

        For tree partitions ``word`` must be at least as deep as the cell's
        own word; for explicit graphs it must match exactly.
        """
        for i, (_, words) in enumerate(self.cells):
            for w in words:
                if (self.branching is None and word == w) or (
                    self.branching is not None and word.startswith(w)
                ):
                    return i
        if self.branching is None:
            raise BoundaryError(f"boundary vertex {word!r} is in no cell")
        raise BoundaryError(f"cylinder {word!r} is not contained in a single cell")


def standard_partition(b: int, k: int) -> ClopenPartition:
    """All ``b**k`` cylinders of length ``k``; ``k = 0`` is the whole boundary."""
    if k < 0:
        raise BoundaryError("partition depth must be >= 0")
    if k == 0:
        return ClopenPartition((("*", ("",)),), b)
    words = ["".join(p) for p in product([str(i) for i in range(b)], repeat=k)]
    return ClopenPartition(tuple((w, (w,)) for w in words), b)


def refine(p: ClopenPartition, max_depth: int | None = None) -> ClopenPartition:
    """Split every cylinder of every cell by one more letter.

    Each word ``w`` of a cell ``c`` becomes ``b`` singleton cells
    ``w0 .. w(b-1)`` with ids ``c/w0`` etc., so each new cell lies in
    exactly one old cell.  Raises if a word would exceed ``max_depth``.
    """
    if p.branching is None:
        raise BoundaryError("explicit-graph partitions cannot be refined")
    b = p.branching
    cells = []
    for cid, words in p.cells:
        for w in words:
            if max_depth is not None and len(w) + 1 > max_depth:
                raise BoundaryError(
                    f"refining {w!r} exceeds the truncation depth {max_depth}"
                )
            for i in range(b):
                cells.append((f"{cid}/{w}{i}", (f"{w}{i}",)))
    return ClopenPartition(tuple(cells), b)


def is_refinement(fine: ClopenPartition, coarse: ClopenPartition) -> bool:
    """True when every cell of ``fine`` lies inside one cell of ``coarse``."""
    for _, words in fine.cells:
        try:
            owners = {coarse.cell_of(w) for w in words}
        except BoundaryError:
            return False
        if len(owners) != 1:
            return False
    return True


def cylinder_diameter(tree: TreeSpec, word: str) -> float:
    """Diameter of the cylinder ``word`` in the completion metric.

    Two ends of the cylinder that split right at the word's vertex (depth
    ``n = len(word)``) are each ``l0 r^n / (1 - r)`` away from it, so the
    diameter is ``2 l0 r^n / (1 - r)``.
    """
    _check_word(word, tree.b)
    return 2.0 * tree.tail_length(len(word))


@dataclass(frozen=True)
class BoundaryMeasure:
    """Finite positive measure on the boundary.

    Default: uniform Bernoulli measure, ``mass(w) = total * b**-len(w)``.
    ``weights`` overrides the masses of a prefix-free family of cylinders
    (or of boundary vertices when ``branching`` is ``None``); mass inside a
    weighted cylinder is split uniformly.
    """

    branching: int | None = 2
    total: float = 1.0
    weights: dict | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.weights is not None:
            if any(not (m >= 0.0 and math.isfinite(m)) for m in self.weights.values()):
                raise BoundaryError("weights must be finite and nonnegative")
            tot = math.fsum(self.weights.values())
            if not tot > 0.0:
                raise BoundaryError("total mass must be positive")
            if self.branching is not None:
                ClopenPartition(
                    tuple((w, (w,)) for w in self.weights), self.branching
                )
            object.__setattr__(self, "total", tot)
        elif not (self.total > 0.0 and math.isfinite(self.total)):
            raise BoundaryError("total mass must be positive and finite")

    def mass(self, word: str, n_boundary: int | None = None) -> float:
        if self.branching is None:
            if self.weights is not None:
                return float(self.weights.get(word, 0.0))
            if n_boundary is None:
                raise BoundaryError("uniform vertex measure needs the boundary size")
            return self.total / n_boundary
        b = self.branching
        if self.weights is None:
            return self.total * float(b) ** (-len(word))
        m = 0.0
        for k, mk in self.weights.items():
            if k.startswith(word):
                m += mk
            elif word.startswith(k):
                m += mk * float(b) ** (-(len(word) - len(k)))
        return m


def measure_of(mu: BoundaryMeasure, cell: Iterable[str], n_boundary: int | None = None) -> float:
    """Mass of a finite union of cylinders."""
    return math.fsum(mu.mass(w, n_boundary) for w in cell)


def leaf_masses(g: MetricGraph, mu: BoundaryMeasure) -> dict:
    """Mass carried by each boundary leaf (tree) or boundary vertex."""
    if g.tree is not None:
        return {w: mu.mass(w) for w in g.leaves}
    bnd = [v for v in g.vertices if v in g.boundary]
    return {v: mu.mass(v, len(bnd)) for v in bnd}


@dataclass(frozen=True)
class StepFunction:
    """``F = sum_n c_n 1_{E(n)}`` for a clopen partition ``{E(n)}``."""

    partition: ClopenPartition
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(self.partition):
            raise BoundaryError("one value per cell required")
        if not all(math.isfinite(v) for v in vals):
            raise BoundaryError("step values must be finite")

    def value(self, word: str) -> float:
        return self.values[self.partition.cell_of(word)]

    def is_constant(self) -> bool:
        return max(self.values) == min(self.values)

    def leaf_values(self, g: MetricGraph) -> dict:
        """Value on every boundary leaf of ``g``.

        Raises if the partition is finer than the truncation or does not
        cover the graph's boundary.
        """
        if g.tree is not None:
            if self.partition.branching != g.tree.b:
                raise BoundaryError("partition alphabet does not match the tree")
            if self.partition.max_word_length() > g.tree.depth:
                raise BoundaryError(
                    f"partition words deeper than truncation depth {g.tree.depth}"
                )
            return {w: self.value(w) for w in g.leaves}
        bnd = [v for v in g.vertices if v in g.boundary]
        out = {v: self.value(v) for v in bnd}
        listed = {w for _, words in self.partition.cells for w in words}
        extra = listed - set(bnd)
        if extra:
            raise BoundaryError(f"cells name non-boundary vertices {sorted(extra)}")
        return out


def indicator(partition: ClopenPartition, i: int) -> StepFunction:
    return StepFunction(partition, tuple(1.0 if j == i else 0.0 for j in range(len(partition))))


def write_step_csv(path, g: MetricGraph, F: StepFunction, mu: BoundaryMeasure) -> None:
    """CSV of ``(word, mass, value)`` triples, one per cylinder word."""
    n_bnd = len(g.boundary)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["word", "mass", "value"])
        for (cid, words), val in zip(F.partition.cells, F.values):
            for w in words:
                wr.writerow([w, f"{mu.mass(w, n_bnd):.17g}", f"{val:.17g}"])


# -- separation ---------------------------------------------------------------


def separating_vertices(g: MetricGraph, a: str, b: str) -> frozenset:
    """Finite vertex set separating the ends with prefixes ``a`` and ``b``.

    This is the single vertex at the deepest common ancestor of the two
    addresses.
    """
    if g.tree is None:
        raise BoundaryError("separating_vertices needs a tree graph")
    _check_word(a, g.tree.b)
    _check_word(b, g.tree.b)
    n = 0
    while n < min(len(a), len(b)) and a[n] == b[n]:
        n += 1
    if n == min(len(a), len(b)) or n >= g.tree.depth:
        raise BoundaryError("cannot separate at this truncation")
    return frozenset({a[:n]})


def separates(g: MetricGraph, cut: Iterable, a: str, b: str) -> bool:
    """Whether deleting ``cut`` puts the leaves below ``a`` and ``b`` in different components."""
    comps = g.components(cut)
    where = {}
    for k, comp in enumerate(comps):
        for v in comp:
            where[v] = k
    la = {where[w] for w in g.leaves if w.startswith(a) and w in where}
    lb = {where[w] for w in g.leaves if w.startswith(b) and w in where}
    return bool(la) and bool(lb) and not (la & lb)


# -- distances to cells -------------------------------------------------------


def _cell_leaves(g: MetricGraph, cell: Sequence[str]) -> list[str]:
    if g.tree is None:
        missing = [v for v in cell if v not in g.boundary]
        if missing:
            raise BoundaryError(f"cell names non-boundary vertices {missing}")
        return list(cell)
    for w in cell:
        _check_word(w, g.tree.b)
        if len(w) > g.tree.depth:
            raise BoundaryError(f"word {w!r} deeper than truncation depth")
    return [leaf for leaf in g.leaves if any(leaf.startswith(w) for w in cell)]


def complement_cell(g: MetricGraph, cell: Sequence[str]) -> list[str]:
    """Boundary leaves (tree) or boundary vertices not covered by ``cell``."""
    inside = set(_cell_leaves(g, cell))
    keys = g.leaves if g.tree is not None else [v for v in g.vertices if v in g.boundary]
    return [v for v in keys if v not in inside]


def distance_to_set(g: MetricGraph, leaves: Sequence[str]) -> np.ndarray:
    """Per-vertex distance to the boundary set spanned by ``leaves``.

    On a tree the ends below a depth-``d`` leaf are all ``tail_length(d)``
    further away than the leaf itself.
    """
    if not leaves:
        return np.full(g.n_vertices, math.inf)
    dist = g.multi_source_distance([g.vertex_index(v) for v in leaves])
    if g.tree is not None:
        dist = dist + g.tree.tail_length(g.tree.depth)
    return dist


def cell_separation(g: MetricGraph, cell: Sequence[str]) -> float:
    """Distance between the cell ``E`` and its complement in the boundary."""
    inside = _cell_leaves(g, cell)
    outside = complement_cell(g, cell)
    if not inside or not outside:
        return math.inf
    d = distance_to_set(g, outside)
    extra = g.tree.tail_length(g.tree.depth) if g.tree is not None else 0.0
    return float(min(d[g.vertex_index(v)] for v in inside) + extra)


# -- eventually flat cutoffs ----------------------------------------------------


class FlatCutoff(EdgeFunction):
    """Smooth 0/1 cutoff separating a clopen cell from its complement.

    Vertex values: 1 on vertices whose whole subtree (or, for explicit
    graphs, the vertex itself) belongs to ``E`` or that lie within ``eps``
    of ``E``; 0 likewise for the complement; ``mixed_value`` otherwise.  On
    an edge whose endpoint values differ the function follows a quintic
    smoothstep over the part of the edge that is at distance more than
    ``eps`` from whichever side its endpoints belong to, so the derivative
    vanishes to second order at both ends of the ramp and at every vertex.
    """

    def __init__(self, g, vertex_values, ramps):
        super().__init__(g)
        self.vertex_values = vertex_values
        self.ramps = ramps  # edge -> (s1, s2, a, b)

    def value(self, edge, x):
        x = np.asarray(x, dtype=float)
        e = self.graph.edges[edge]
        if edge not in self.ramps:
            return self.vertex_values[e.tail] + 0.0 * x
        s1, s2, a, b = self.ramps[edge]
        return a + (b - a) * smoothstep((x - s1) / (s2 - s1))

    def derivative(self, edge, x):
        x = np.asarray(x, dtype=float)
        if edge not in self.ramps:
            return 0.0 * x
        s1, s2, a, b = self.ramps[edge]
        return (b - a) * smoothstep_d1((x - s1) / (s2 - s1)) / (s2 - s1)

    def second_derivative(self, edge, x):
        x = np.asarray(x, dtype=float)
        if edge not in self.ramps:
            return 0.0 * x
        s1, s2, a, b = self.ramps[edge]
        inside = (x > s1) & (x < s2)
        return np.where(inside, (b - a) * smoothstep_d2((x - s1) / (s2 - s1)) / (s2 - s1) ** 2, 0.0)

    def vertex_value(self, v):
        return float(self.vertex_values[self.graph.vertex_index(v)])

    def ramp_energy(self) -> float:
        """Exact Dirichlet energy: each ramp contributes ``(10/7) (b-a)^2 / (s2-s1)``."""
        return math.fsum(10.0 / 7.0 * (b - a) ** 2 / (s2 - s1) for s1, s2, a, b in self.ramps.values())


def _subtree_fraction(g: MetricGraph, v: str, cell: Sequence[str]) -> Fraction:
    b = g.tree.b
    frac = Fraction(0)
    for w in cell:
        if v.startswith(w):
            return Fraction(1)
        if w.startswith(v):
            frac += Fraction(1, b ** (len(w) - len(v)))
    return frac


def flat_cutoff(g: MetricGraph, cell: Sequence[str], eps: float, mixed_value: float = 0.5) -> FlatCutoff:
    """Eventually flat function equal to 1 near the cell ``E``, 0 near its complement.

    Requires ``3 eps`` below the distance between ``E`` and its complement.
    If ``E`` is the whole boundary (or empty) the constant 1 (or 0) is
    returned.
    """
    if not eps > 0.0:
        raise BoundaryError("eps must be positive")
    inside = _cell_leaves(g, cell)
    outside = complement_cell(g, cell)
    n = g.n_vertices
    if not outside or not inside:
        const = 1.0 if inside else 0.0
        return FlatCutoff(g, np.full(n, const), {})
    sep = cell_separation(g, cell)
    if not 3.0 * eps < sep:
        raise BoundaryError(f"eps={eps} too large: 3*eps must be below the separation {sep}")
    dE = distance_to_set(g, inside)
    dC = distance_to_set(g, outside)
    vals = np.full(n, float(mixed_value))
    side = np.zeros(n, dtype=int)  # +1 E side, -1 complement side, 0 mixed
    for i, v in enumerate(g.vertices):
        if g.tree is not None:
            frac = _subtree_fraction(g, v, cell)
            if frac == 1:
                side[i] = 1
            elif frac == 0:
                side[i] = -1
        else:
            if v in inside:
                side[i] = 1
            elif v in g.boundary:
                side[i] = -1
        if dE[i] <= eps:
            side[i] = 1
        elif dC[i] <= eps:
            side[i] = -1
        if side[i] == 1:
            if dC[i] <= eps:
                raise BoundaryError(f"eps={eps} too large near vertex {v!r}")
            vals[i] = 1.0
        elif side[i] == -1:
            if dE[i] <= eps:
                raise BoundaryError(f"eps={eps} too large near vertex {v!r}")
            vals[i] = 0.0
    ramps = {}
    for k, e in enumerate(g.edges):
        a, b = vals[e.tail], vals[e.head]
        if a == b:
            continue
        s1 = 0.0
        s2 = e.length
        if side[e.tail] != 0:
            dist = dE[e.tail] if side[e.tail] == 1 else dC[e.tail]
            s1 = max(0.0, eps - dist)
        if side[e.head] != 0:
            dist = dE[e.head] if side[e.head] == 1 else dC[e.head]
            s2 = e.length - max(0.0, eps - dist)
        if not s1 < s2:
            raise BoundaryError(f"eps={eps} leaves no room for a ramp on edge {k}")
        ramps[k] = (s1, s2, float(a), float(b))
    return FlatCutoff(g, vals, ramps)
