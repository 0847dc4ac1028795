"""Experiment configuration: TOML parsing and full validation.

Field names::

    command = "solve"            # solve | measure | levelset | spectrum | compare | diverge

    [graph]
    type = "tree"                # tree | explicit
    b = 2                        # tree only
    r = 0.5
    l0 = 1.0
    depth = 4
    edges = [["a", "b", 1.0]]    # explicit only (or file = "graph.txt")
    boundary = ["a", "b"]

    [partition]
    cells = [["0"], ["1"]]       # address words (tree) or boundary vertex ids
    values = [1.0, 0.0]

    [measure]
    total = 1.0
    weights = { "0" = 0.25, "1" = 0.75 }

    [bc]
    kind = "robin"               # dirichlet | neumann | robin | constant_clamp | harmonic_clamp
    k = 1.0                      # or a table vertex -> coefficient
    clusters = [["0"], ["1"]]    # words (tree) or vertex ids (explicit)
    zero = []
    values = { b = 1.0 }         # harmonic_clamp on explicit graphs
    fluxes = { b = 1.0 }

    [mesh]
    m = 100

    [spectrum]
    count = 5
    trials = 10
    seed = 0

    [point]
    vertex = ""                  # evaluation / descent start

    [levelset]
    levels = [0.6, 0.7]
    cell = ["1"]                 # optional threshold search
    eps = 0.5

    [diverge]
    depths = [3, 4, 5, 6, 7, 8]
    anchor = ""

    [sweep]
    param = "mesh.m"             # mesh.m | graph.depth | bc.k
    values = [50, 100, 200, 400]
    quantity = "lambda1"         # lambda1 | measure | energy | flux

    [out]
    dir = "out"

Validation builds every object the command needs, so schema errors surface
before any output is written.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from graphharm.boundary import BoundaryMeasure, ClopenPartition, StepFunction, _cell_leaves
from graphharm.errors import ConfigError, GraphHarmError
from graphharm.graph import MetricGraph, TreeSpec, build_explicit, build_tree, read_graph
from graphharm.operators import (
    ConstantClamp,
    Dirichlet,
    HarmonicClamp,
    Neumann,
    RobinClassical,
)

COMMANDS = ("solve", "measure", "levelset", "spectrum", "compare", "diverge")
BC_KINDS = ("dirichlet", "neumann", "robin", "constant_clamp", "harmonic_clamp")
SWEEP_PARAMS = ("mesh.m", "graph.depth", "bc.k")
SWEEP_QUANTITIES = ("lambda1", "measure", "energy", "flux")


@dataclass
class Experiment:
    raw: dict
    command: str | None
    graph: MetricGraph
    partition: ClopenPartition | None = None
    data: StepFunction | None = None
    measure: BoundaryMeasure | None = None
    bc: object = None
    m: int = 100
    count: int = 5
    trials: int = 10
    seed: int = 0
    point: object = None
    levels: tuple = ()
    cell: tuple | None = None
    eps: float | None = None
    depths: tuple = ()
    anchor: str = ""
    sweep: dict = field(default_factory=dict)
    out_dir: Path = Path("out")


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _num(sec: dict, key: str, where: str, default=None, kind=float, positive=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing {where}.{key}")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    if kind is int:
        if not float(v).is_integer():
            raise ConfigError(f"{where}.{key} must be an integer")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{where}.{key} must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key} must be positive")
    return v


def _words(x, where: str) -> tuple:
    if not isinstance(x, list) or not all(isinstance(w, str) for w in x):
        raise ConfigError(f"{where} must be a list of strings")
    return tuple(x)


def build_graph(raw: dict, base: Path) -> MetricGraph:
    sec = _section(raw, "graph")
    kind = sec.get("type")
    if kind == "tree":
        spec = TreeSpec(
            _num(sec, "b", "graph", kind=int),
            _num(sec, "r", "graph"),
            _num(sec, "l0", "graph", 1.0, positive=True),
            _num(sec, "depth", "graph", kind=int),
        )
        return build_tree(spec)
    if kind == "explicit":
        if "file" in sec:
            return read_graph(base / str(sec["file"]))
        edges = sec.get("edges")
        if not isinstance(edges, list) or not edges:
            raise ConfigError("graph.edges must be a nonempty list of [tail, head, length]")
        parsed = []
        for e in edges:
            if (
                not isinstance(e, list)
                or len(e) != 3
                or not isinstance(e[0], str)
                or not isinstance(e[1], str)
                or isinstance(e[2], bool)
                or not isinstance(e[2], (int, float))
            ):
                raise ConfigError(f"bad edge {e!r}; expected [tail, head, length]")
            parsed.append((e[0], e[1], float(e[2])))
        boundary = _words(sec.get("boundary", []), "graph.boundary")
        return build_explicit(parsed, set(boundary))
    raise ConfigError("graph.type must be 'tree' or 'explicit'")


def _cluster_vertices(g: MetricGraph, words, where: str) -> tuple:
    if g.tree is None:
        for v in words:
            if v not in g.index:
                raise ConfigError(f"{where}: unknown vertex {v!r}")
        return tuple(words)
    return tuple(_cell_leaves(g, words))


def _clamp_profile(g: MetricGraph, clusters: list, n: int):
    """Tree profile for cluster ``n``: harmonic extension of the indicator of
    everything outside that cluster (value 0 on the cluster's ends)."""
    from graphharm.harmonic import solve_with_data

    inside = set(clusters[n])
    data = {w: (0.0 if w in inside else 1.0) for w in g.leaves}
    return solve_with_data(g, data)


def build_bc(raw: dict, g: MetricGraph):
    sec = _section(raw, "bc")
    kind = sec.get("kind", "neumann")
    if kind not in BC_KINDS:
        raise ConfigError(f"bc.kind must be one of {BC_KINDS}")
    if kind == "neumann":
        return Neumann()
    if kind == "dirichlet":
        verts = sec.get("vertices")
        if verts is None:
            return Dirichlet()
        verts = _words(verts, "bc.vertices")
        for v in verts:
            if v not in g.index:
                raise ConfigError(f"bc.vertices: unknown vertex {v!r}")
        return Dirichlet(tuple(verts))
    if kind == "robin":
        k = sec.get("k", 1.0)
        if isinstance(k, dict):
            for v, x in k.items():
                if v not in g.boundary:
                    raise ConfigError(f"bc.k: {v!r} is not a boundary vertex")
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise ConfigError("bc.k values must be numbers")
            k = {v: float(x) for v, x in k.items()}
        elif isinstance(k, bool) or not isinstance(k, (int, float)):
            raise ConfigError("bc.k must be a number or a table")
        bc = RobinClassical(k if isinstance(k, dict) else float(k))
        bc.coefficients(g)
        return bc
    raw_clusters = sec.get("clusters")
    if not isinstance(raw_clusters, list) or not raw_clusters:
        raise ConfigError("bc.clusters must be a nonempty list of lists")
    clusters = [
        _cluster_vertices(g, _words(c, "bc.clusters[]"), "bc.clusters") for c in raw_clusters
    ]
    zero = _cluster_vertices(g, _words(sec.get("zero", []), "bc.zero"), "bc.zero")
    if kind == "constant_clamp":
        return ConstantClamp(tuple(clusters), zero)
    if g.tree is not None:
        profiles = [_clamp_profile(g, clusters, n) for n in range(len(clusters))]
        return HarmonicClamp.from_profiles(g, clusters, profiles, zero)
    values = sec.get("values")
    fluxes = sec.get("fluxes")
    if not isinstance(values, dict) or not isinstance(fluxes, dict):
        raise ConfigError("harmonic_clamp on explicit graphs needs bc.values and bc.fluxes tables")
    return HarmonicClamp(
        tuple(clusters),
        {v: float(x) for v, x in values.items()},
        {v: float(x) for v, x in fluxes.items()},
        None,
        zero,
    )


def build_experiment(raw: dict, base: Path = Path("."), require_command: bool = True) -> Experiment:
    """Validate ``raw`` and construct everything the command will use."""
    try:
        return _build(raw, Path(base), require_command)
    except ConfigError:
        raise
    except GraphHarmError as exc:
        raise ConfigError(str(exc)) from exc


def _build(raw: dict, base: Path, require_command: bool) -> Experiment:
    command = raw.get("command")
    if require_command and command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}")
    g = build_graph(raw, base)
    ex = Experiment(raw=raw, command=command, graph=g)

    if "partition" in raw:
        sec = _section(raw, "partition")
        cells = sec.get("cells")
        values = sec.get("values")
        if not isinstance(cells, list) or not cells:
            raise ConfigError("partition.cells must be a nonempty list of word lists")
        words = [_words(c, "partition.cells[]") for c in cells]
        branching = g.tree.b if g.tree is not None else None
        ex.partition = ClopenPartition(
            tuple((str(i), w) for i, w in enumerate(words)), branching
        )
        if values is not None:
            if not isinstance(values, list) or any(
                isinstance(x, bool) or not isinstance(x, (int, float)) for x in values
            ):
                raise ConfigError("partition.values must be a list of numbers")
            ex.data = StepFunction(ex.partition, tuple(float(x) for x in values))
            ex.data.leaf_values(g)

    msec = _section(raw, "measure")
    weights = msec.get("weights")
    if weights is not None and not isinstance(weights, dict):
        raise ConfigError("measure.weights must be a table")
    ex.measure = BoundaryMeasure(
        g.tree.b if g.tree is not None else None,
        _num(msec, "total", "measure", 1.0, positive=True),
        {str(k): float(v) for k, v in weights.items()} if weights else None,
    )

    if "bc" in raw:
        ex.bc = build_bc(raw, g)
    ex.m = _num(_section(raw, "mesh"), "m", "mesh", 100, kind=int)
    if ex.m < 2:
        raise ConfigError("mesh.m must be at least 2")
    ssec = _section(raw, "spectrum")
    ex.count = _num(ssec, "count", "spectrum", 5, kind=int, positive=True)
    ex.trials = _num(ssec, "trials", "spectrum", 10, kind=int, positive=True)
    ex.seed = _num(ssec, "seed", "spectrum", 0, kind=int) if "seed" in ssec else 0

    psec = _section(raw, "point")
    v = psec.get("vertex", g.origin if g.origin is not None else g.vertices[0])
    if v not in g.index:
        raise ConfigError(f"point.vertex: unknown vertex {v!r}")
    ex.point = g.vertex_point(v)

    lsec = _section(raw, "levelset")
    levels = lsec.get("levels", [])
    if not isinstance(levels, list) or any(
        isinstance(x, bool) or not isinstance(x, (int, float)) for x in levels
    ):
        raise ConfigError("levelset.levels must be a list of numbers")
    ex.levels = tuple(float(x) for x in levels)
    if "cell" in lsec:
        ex.cell = _words(lsec["cell"], "levelset.cell")
        ex.eps = _num(lsec, "eps", "levelset", positive=True)

    dsec = _section(raw, "diverge")
    depths = dsec.get("depths", [3, 4, 5, 6, 7, 8])
    if not isinstance(depths, list) or not depths or any(
        isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in depths
    ):
        raise ConfigError("diverge.depths must be a nonempty list of positive integers")
    ex.depths = tuple(depths)
    ex.anchor = str(dsec.get("anchor", ""))

    if "sweep" in raw:
        sw = _section(raw, "sweep")
        if sw.get("param") not in SWEEP_PARAMS:
            raise ConfigError(f"sweep.param must be one of {SWEEP_PARAMS}")
        if sw.get("quantity") not in SWEEP_QUANTITIES:
            raise ConfigError(f"sweep.quantity must be one of {SWEEP_QUANTITIES}")
        vals = sw.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep.values must be a nonempty list")
        ex.sweep = {"param": sw["param"], "values": list(vals), "quantity": sw["quantity"]}

    ex.out_dir = Path(str(_section(raw, "out").get("dir", "out")))
    _check_command(ex)
    return ex


def _check_command(ex: Experiment) -> None:
    c = ex.command
    if c in ("solve", "levelset") and ex.data is None:
        raise ConfigError(f"command {c!r} needs partition.cells and partition.values")
    if c == "measure" and ex.partition is None:
        raise ConfigError("command 'measure' needs partition.cells")
    if c == "spectrum" and ex.bc is None:
        raise ConfigError("command 'spectrum' needs a [bc] table")
    if c == "compare" and not isinstance(ex.bc, HarmonicClamp):
        raise ConfigError("command 'compare' needs bc.kind = 'harmonic_clamp'")
    if c == "diverge" and ex.graph.tree is None:
        raise ConfigError("command 'diverge' needs a tree graph")
    if c == "levelset" and ex.cell is not None and ex.graph.tree is None:
        raise ConfigError("levelset.cell needs a tree graph")


def with_override(raw: dict, param: str, value) -> dict:
    """Copy of ``raw`` with the dotted ``param`` set to ``value``."""
    out = copy.deepcopy(raw)
    sec, key = param.split(".")
    out.setdefault(sec, {})[key] = value
    return out


__all__ = [
    "COMMANDS",
    "Experiment",
    "build_experiment",
    "load_toml",
    "with_override",
]
