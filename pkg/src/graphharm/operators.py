"""Finite-element discretisations of ``-D^2`` with Kirchhoff vertex conditions.

Every edge is split into ``m`` linear elements; shared vertex nodes give
continuity and the Kirchhoff condition arises as the natural condition of
the energy form.  Boundary conditions act through a node-to-dof map: a node
is either eliminated (Dirichlet), its own dof, or tied to a cluster dof
``c_n`` with ``u(v) = c_n h_n(v)`` (harmonic clamp).  Clamp dofs also carry
the boundary stiffness ``B_n = sum_v h_n(v) d_nu h_n(v)`` and, on trees, the
exact mass of ``c_n h_n`` over the infinite tails beyond the cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy import integrate
from scipy.sparse import coo_matrix, csr_matrix

from graphharm.errors import OperatorError
from graphharm.functions import EdgeFunction
from graphharm.graph import MetricGraph, TreeSpec
from graphharm.harmonic import HarmonicFunction

EIG_FLOOR = -1e-10


# -- boundary conditions ----------------------------------------------------------


@dataclass(frozen=True)
class Dirichlet:
    """``f = 0`` at ``vertices`` (default: every boundary vertex)."""

    vertices: tuple | None = None


@dataclass(frozen=True)
class Neumann:
    """No constraint; the natural condition ``sum d_nu f = 0`` at the boundary."""


@dataclass(frozen=True)
class RobinClassical:
    """``sum_e d_nu f_e(v) = k_v f(v)``; adds ``k_v f(v)^2`` to the form.

    ``k`` is one coefficient for every boundary vertex or a mapping from
    boundary vertex to coefficient.
    """

    k: float | dict = 1.0

    def coefficients(self, g: MetricGraph) -> dict:
        if isinstance(self.k, dict):
            ks = {v: float(x) for v, x in self.k.items()}
            unknown = [v for v in ks if v not in g.index]
            if unknown:
                raise OperatorError(f"Robin coefficients for unknown vertices {unknown}")
        else:
            ks = {v: float(self.k) for v in g.vertices if v in g.boundary}
        if any(not (x >= 0.0 and math.isfinite(x)) for x in ks.values()):
            raise OperatorError("Robin coefficients must be finite and nonnegative")
        return ks


@dataclass(frozen=True)
class ConstantClamp:
    """Each cluster of cut vertices shares one constant value ``c_n``."""

    clusters: tuple
    zero: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(tuple(c) for c in self.clusters))
        object.__setattr__(self, "zero", tuple(self.zero))


@dataclass(frozen=True)
class HarmonicClamp:
    """Beyond the cut, ``f = c_n h_n`` on cluster ``n``.

    ``values[v]`` is ``h_n(v)`` and ``fluxes[v]`` its derivative at ``v``
    pointing into the core, both for every clustered cut vertex.
    ``tail_masses[n]`` is ``int h_n^2`` over the clamped region outside the
    core (zero for explicit graphs).
    """

    clusters: tuple
    values: dict = field(hash=False)
    fluxes: dict = field(hash=False)
    tail_masses: tuple | None = None
    zero: tuple = ()

    def __post_init__(self):
        clusters = tuple(tuple(c) for c in self.clusters)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "zero", tuple(self.zero))
        if self.tail_masses is None:
            object.__setattr__(self, "tail_masses", tuple(0.0 for _ in clusters))
        if len(self.tail_masses) != len(clusters):
            raise OperatorError("one tail mass per cluster required")
        for c in clusters:
            for v in c:
                if v not in self.values or v not in self.fluxes:
                    raise OperatorError(f"clamp profile undefined at cut vertex {v!r}")
                if not self.values[v] > 0.0:
                    raise OperatorError(f"clamp profile must be positive at cut vertex {v!r}")
                if self.fluxes[v] < 0.0:
                    raise OperatorError(f"clamp profile has negative flux at cut vertex {v!r}")
        if any(not (m >= 0.0 and math.isfinite(m)) for m in self.tail_masses):
            raise OperatorError("infinite or negative tail mass")

    def boundary_terms(self) -> np.ndarray:
        return np.array(
            [math.fsum(self.values[v] * self.fluxes[v] for v in c) for c in self.clusters]
        )

    def in_class_k(self) -> bool:
        """Positive value and strictly positive inward flux at every cut vertex."""
        return all(self.values[v] > 0.0 and self.fluxes[v] > 0.0 for c in self.clusters for v in c)

    @classmethod
    def from_profiles(
        cls,
        g: MetricGraph,
        clusters: Sequence[Sequence],
        profiles: Sequence[HarmonicFunction],
        zero: Sequence = (),
    ) -> "HarmonicClamp":
        """Clamp whose ``n``-th profile is the harmonic function ``profiles[n]``.

        On a tree the cut is the set of depth-``d`` leaves: the inward flux
        at a leaf is read off the core edges and the tail mass is the exact
        integral of ``h_n^2`` over the leaf's infinite subtree.
        """
        if len(profiles) != len(clusters):
            raise OperatorError("one profile per cluster required")
        values, fluxes, masses = {}, {}, []
        for c, h in zip(clusters, profiles):
            if h.graph is not g:
                raise OperatorError("profile defined on a different graph")
            mass = 0.0
            for v in c:
                i = g.vertex_index(v)
                values[v] = h.vertex_value(v)
                fluxes[v] = math.fsum(h.outward_derivative(k, i) for k, _, _ in g.incidence[i])
                if g.tree is not None:
                    mass += tail_mass(g.tree, *h.tail(v))
            masses.append(mass)
        return cls(tuple(tuple(c) for c in clusters), values, fluxes, tuple(masses), tuple(zero))


def tail_mass(tree: TreeSpec, a: float, c: float) -> float:
    """``int h^2`` over the subtree below a depth-``d`` leaf.

    The tail profile is ``h_k = c + (a - c) q^k`` at depth ``d + k`` with
    ``q = r/b``; level ``k`` has ``b^(k+1)`` edges of length ``l0 r^(d+k)``
    and a linear edge from ``p`` to ``s`` has ``int h^2 = l (p^2 + ps + s^2)/3``.
    Summing the three geometric series gives the closed form below.
    """
    b, r, d = tree.b, tree.r, tree.depth
    q = r / b
    D = a - c
    lead = b * tree.l0 * r**d / 3.0
    total = D * D * (1.0 + q + q * q) / (1.0 - r**3 / b)
    if c != 0.0:
        if not tree.finite_volume:
            raise OperatorError("infinite tail mass: clamp value nonzero on an infinite-volume tail")
        total += 3.0 * c * c / (1.0 - b * r) + 3.0 * c * D * (1.0 + q) / (1.0 - r * r)
    return lead * total


def tail_volume_mass(tree: TreeSpec) -> float:
    v = tree.tail_volume(tree.depth)
    if not math.isfinite(v):
        raise OperatorError("infinite tail mass: tails of an infinite-volume tree")
    return v


# -- assembly -----------------------------------------------------------------------


@dataclass
class DiscreteOperator:
    """Stiffness ``K`` and mass ``M`` in dof coordinates plus bookkeeping."""

    graph: MetricGraph
    bc: object
    m: int
    K: csr_matrix
    M: csr_matrix
    node_dof: np.ndarray  # per FE node, dof index or -1
    node_scale: np.ndarray  # u(node) = node_scale * x[node_dof]
    elements: np.ndarray  # (n_elem, 2) node indices
    element_h: np.ndarray
    cluster_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    boundary_terms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    robin: dict = field(default_factory=dict)

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    def nodal_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.zeros(len(self.node_dof))
        live = self.node_dof >= 0
        u[live] = self.node_scale[live] * x[self.node_dof[live]]
        return u


def _clusters_of(bc, g: MetricGraph):
    seen = set()
    for c in bc.clusters:
        if not c:
            raise OperatorError("empty cluster")
        for v in c:
            g.vertex_index(v)
            if v in seen:
                raise OperatorError(f"vertex {v!r} in two clusters")
            seen.add(v)
    for v in bc.zero:
        g.vertex_index(v)
        if v in seen:
            raise OperatorError(f"vertex {v!r} both clamped and zero")
        seen.add(v)
    if g.tree is not None:
        missing = [w for w in g.leaves if w not in seen]
        if missing:
            raise OperatorError(f"cut vertices not covered by clusters: {missing[:5]}")


def assemble(g: MetricGraph, bc, m: int) -> DiscreteOperator:
    """Linear finite elements, ``m`` per edge, with consistent mass."""
    if not isinstance(m, (int, np.integer)) or m < 2:
        raise OperatorError("mesh needs m >= 2 subintervals per edge")
    nv = g.n_vertices
    n_nodes = nv + g.n_edges * (m - 1)
    elements = []
    elem_h = []
    nxt = nv
    for e in g.edges:
        if not e.length > 0.0:
            raise OperatorError("nonpositive edge length")
        chain = [e.tail] + list(range(nxt, nxt + m - 1)) + [e.head]
        nxt += m - 1
        for a, b in zip(chain, chain[1:]):
            elements.append((a, b))
            elem_h.append(e.length / m)
    elements = np.array(elements, dtype=int)
    elem_h = np.array(elem_h)

    node_dof = np.arange(n_nodes)
    node_scale = np.ones(n_nodes)
    robin: dict = {}
    cluster_of: dict = {}
    B = np.zeros(0)
    tmass = np.zeros(0)
    zero: tuple = ()
    if isinstance(bc, Neumann):
        pass
    elif isinstance(bc, Dirichlet):
        zero = tuple(bc.vertices) if bc.vertices is not None else tuple(
            v for v in g.vertices if v in g.boundary
        )
    elif isinstance(bc, RobinClassical):
        robin = bc.coefficients(g)
    elif isinstance(bc, (ConstantClamp, HarmonicClamp)):
        _clusters_of(bc, g)
        zero = bc.zero
        for n, c in enumerate(bc.clusters):
            for v in c:
                cluster_of[g.index[v]] = n
        if isinstance(bc, HarmonicClamp):
            B = bc.boundary_terms()
            tmass = np.array(bc.tail_masses, dtype=float)
        else:
            B = np.zeros(len(bc.clusters))
            per_leaf = tail_volume_mass(g.tree) if g.tree is not None else 0.0
            tmass = np.array([per_leaf * len(c) for c in bc.clusters])
    else:
        raise OperatorError(f"unsupported boundary condition {bc!r}")

    zero_idx = {g.vertex_index(v) for v in zero}
    free = [i for i in range(n_nodes) if i not in zero_idx and i not in cluster_of]
    node_dof = -np.ones(n_nodes, dtype=int)
    node_dof[free] = np.arange(len(free))
    n_free = len(free)
    n_clusters = len(B)
    cluster_dofs = n_free + np.arange(n_clusters)
    for i, n in cluster_of.items():
        node_dof[i] = n_free + n
        if isinstance(bc, HarmonicClamp):
            node_scale[i] = bc.values[g.vertices[i]]
    ndof = n_free + n_clusters
    if ndof == 0:
        raise OperatorError("no degrees of freedom left")

    rows, cols, kv, mv = [], [], [], []
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]])
    me = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    for (a, b), h in zip(elements, elem_h):
        nodes = (a, b)
        for p in range(2):
            dp = node_dof[nodes[p]]
            if dp < 0:
                continue
            for q in range(2):
                dq = node_dof[nodes[q]]
                if dq < 0:
                    continue
                s = node_scale[nodes[p]] * node_scale[nodes[q]]
                rows.append(dp)
                cols.append(dq)
                kv.append(s * ke[p, q] / h)
                mv.append(s * me[p, q] * h)
    for v, k in robin.items():
        d = node_dof[g.index[v]]
        rows.append(d)
        cols.append(d)
        kv.append(k)
        mv.append(0.0)
    for n in range(n_clusters):
        d = cluster_dofs[n]
        rows.append(d)
        cols.append(d)
        kv.append(B[n])
        mv.append(tmass[n])
    K = coo_matrix((kv, (rows, cols)), shape=(ndof, ndof)).tocsr()
    M = coo_matrix((mv, (rows, cols)), shape=(ndof, ndof)).tocsr()
    K.sum_duplicates()
    M.sum_duplicates()
    return DiscreteOperator(
        graph=g,
        bc=bc,
        m=int(m),
        K=K,
        M=M,
        node_dof=node_dof,
        node_scale=node_scale,
        elements=elements,
        element_h=elem_h,
        cluster_dofs=cluster_dofs,
        boundary_terms=B,
        tail_masses=tmass,
        robin=robin,
    )


# -- forms and spectra ----------------------------------------------------------------


@dataclass(frozen=True)
class FormReport:
    total: float
    core_energy: float
    boundary_part: float


def quadratic_form(op: DiscreteOperator, x) -> FormReport:
    """``x^T K x`` together with its core and boundary parts.

    The parts are evaluated from the interpolated function itself, not from
    ``K``: core energy is ``sum (du)^2 / h`` over elements, the boundary part
    is ``sum c_n^2 B_n`` (clamps) or ``sum k_v f(v)^2`` (Robin).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (op.n_dofs,):
        raise OperatorError(f"expected a vector of length {op.n_dofs}, got shape {x.shape}")
    total = float(x @ (op.K @ x))
    u = op.nodal_values(x)
    du = u[op.elements[:, 1]] - u[op.elements[:, 0]]
    core = math.fsum(du * du / op.element_h)
    bparts = [x[d] ** 2 * b for d, b in zip(op.cluster_dofs, op.boundary_terms)]
    bparts += [k * u[op.graph.index[v]] ** 2 for v, k in op.robin.items()]
    return FormReport(total, core, math.fsum(bparts))


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray | None = None


def eigenvalues(op: DiscreteOperator, count: int, vectors: bool = False) -> Spectrum:
    """Smallest ``count`` eigenvalues of ``K x = lambda M x``, ascending."""
    n = op.n_dofs
    if not 1 <= count <= n:
        raise OperatorError(f"count must be in 1..{n}")
    K = op.K.toarray()
    M = op.M.toarray()
    if vectors:
        w, v = scipy.linalg.eigh(K, M, subset_by_index=[0, count - 1])
        return Spectrum(w, v)
    w = scipy.linalg.eigh(K, M, subset_by_index=[0, count - 1], eigvals_only=True)
    return Spectrum(w)


def symmetry_residual(op) -> float:
    """``max|K - K^T| + max|M - M^T|``; zero for any assembled operator."""
    def asym(A):
        D = A - A.T
        if hasattr(D, "toarray"):
            D = D.toarray()
        return float(np.max(np.abs(D))) if D.size else 0.0

    return asym(op.K) + asym(op.M)


def write_spectrum_csv(path, spec: Spectrum) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "eigenvalue"])
        for i, lam in enumerate(spec.values, 1):
            wr.writerow([i, f"{lam:.17g}"])


# -- integration by parts ---------------------------------------------------------------


@dataclass(frozen=True)
class IBPResult:
    residual: float
    kirchhoff_ok: bool
    second_term: float  # int f'' h
    first_term: float  # int f' h'
    boundary_term: float  # sum_{v in boundary} h(v) sum_e d_nu f_e(v)


def ibp_residual(g: MetricGraph, f: EdgeFunction, h: EdgeFunction, tol: float = 1e-8) -> IBPResult:
    """Residual of ``int f''h + int f'h' + sum_bdry h d_nu f = 0`` by quadrature.

    The identity needs the Kirchhoff condition for ``f`` at interior
    vertices; if it fails the residual is still reported and
    ``kirchhoff_ok`` is False.
    """
    second, first = [], []
    for k, e in enumerate(g.edges):
        a, _ = integrate.quad(
            lambda x: float(f.second_derivative(k, x)) * float(h.value(k, x)),
            0.0, e.length, epsabs=1e-13, epsrel=1e-12, limit=200,
        )
        b, _ = integrate.quad(
            lambda x: float(f.derivative(k, x)) * float(h.derivative(k, x)),
            0.0, e.length, epsabs=1e-13, epsrel=1e-12, limit=200,
        )
        second.append(a)
        first.append(b)
    bterm = []
    kirchhoff_ok = True
    for i, v in enumerate(g.vertices):
        flux = math.fsum(f.outward_derivative(k, i) for k, _, _ in g.incidence[i])
        if v in g.boundary:
            bterm.append(h.vertex_value(v) * flux)
        elif abs(flux) > tol:
            kirchhoff_ok = False
    s2, s1, sb = math.fsum(second), math.fsum(first), math.fsum(bterm)
    return IBPResult(abs(s2 + s1 + sb), kirchhoff_ok, s2, s1, sb)


# -- clamp comparison -------------------------------------------------------------------


@dataclass(frozen=True)
class ClampComparison:
    lambda1_constant: float
    lambda1_harmonic: float
    lambda_gap: float
    form_gap: float


def compare_clamps(g: MetricGraph, clamp: HarmonicClamp, m: int) -> ClampComparison:
    """First eigenvalues with the harmonic clamp and with constant profiles.

    ``form_gap`` is the minimum of ``sum c_n^2 B_n`` over unit ``M``-norm
    vectors supported on the clamp dofs of clusters with ``B_n > 0``.
    """
    B = clamp.boundary_terms()
    if np.any(B > 0.0) and not all(
        clamp.fluxes[v] > 0.0 for c, b in zip(clamp.clusters, B) if b > 0.0 for v in c
    ):
        raise OperatorError("harmonic profiles must have positive inward flux at every cut vertex")
    const = ConstantClamp(clamp.clusters, clamp.zero)
    op_c = assemble(g, const, m)
    op_h = assemble(g, clamp, m)
    lam_c = float(eigenvalues(op_c, 1).values[0])
    lam_h = float(eigenvalues(op_h, 1).values[0])
    pos = [d for d, b in zip(op_h.cluster_dofs, op_h.boundary_terms) if b > 0.0]
    form_gap = 0.0
    if pos:
        Kc = np.diag([op_h.boundary_terms[list(op_h.cluster_dofs).index(d)] for d in pos])
        Mc = op_h.M.toarray()[np.ix_(pos, pos)]
        form_gap = float(scipy.linalg.eigh(Kc, Mc, eigvals_only=True)[0])
        if not form_gap > 0.0:
            raise OperatorError("form gap is not positive although some B_n > 0")
    if lam_h < lam_c - 1e-10:
        raise OperatorError(f"lambda1 harmonic {lam_h} below lambda1 constant {lam_c}")
    return ClampComparison(lam_c, lam_h, lam_h - lam_c, form_gap)
