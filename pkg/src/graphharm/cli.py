"""Command-line front end: ``graphharm {run,sweep,verify}``.

Exit codes: 0 success, 2 config/schema error, 3 numerical failure.
Every command computes all rows first and writes CSV files only after the
whole computation succeeded.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from graphharm.config import build_experiment, load_toml, with_override
from graphharm.errors import ConfigError, GraphHarmError
from graphharm.harmonic import (
    energy,
    extend_continuous,
    harmonic_measure,
    solve_dirichlet,
    sqrt_distance_sampler,
)
from graphharm.levelset import descent_path, level_crossings, level_flux, threshold_for_neighborhood
from graphharm.operators import assemble, compare_clamps, eigenvalues, quadratic_form
from graphharm.boundary import measure_of

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


class Table:
    def __init__(self, name: str, header: list):
        self.name = name
        self.header = header
        self.rows: list = []

    def add(self, *row):
        self.rows.append([fmt(x) for x in row])

    def write(self, out_dir: Path) -> Path:
        path = out_dir / self.name
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.header)
            wr.writerows(self.rows)
        return path


# -- run commands --------------------------------------------------------------


def cmd_solve(ex) -> list:
    g = ex.graph
    h = solve_dirichlet(g, ex.data)
    values = Table("values.csv", ["vertex", "value"])
    for v, x in zip(g.vertices, h.values):
        values.add(v if v != "" else "-", float(x))
    mids = Table("midpoints.csv", ["edge", "tail", "head", "value"])
    for k, e in enumerate(g.edges):
        mids.add(k, g.vertices[e.tail] or "-", g.vertices[e.head] or "-",
                 0.5 * float(h.values[e.tail] + h.values[e.head]))
    rep = energy(h, ex.measure)
    en = Table("energy.csv", ["dirichlet_energy", "boundary_term", "h1_inner"])
    en.add(rep.dirichlet_energy, rep.boundary_term, rep.h1_inner)
    return [values, mids, en]


def cmd_measure(ex) -> list:
    g = ex.graph
    omega = harmonic_measure(g, ex.partition, ex.point)
    n_bnd = None if g.tree is not None else sum(1 for v in g.vertices if v in g.boundary)
    t = Table("measure.csv", ["cell", "words", "mass", "harmonic_measure"])
    for (cid, words), w in zip(ex.partition.cells, omega):
        t.add(cid, " ".join(x or "-" for x in words), measure_of(ex.measure, words, n_bnd), float(w))
    return [t]


def cmd_levelset(ex) -> list:
    h = solve_dirichlet(ex.graph, ex.data)
    cross = Table("crossings.csv", ["level", "edge", "offset", "flux"])
    flux = Table("flux.csv", ["level", "flux", "empty"])
    for t in ex.levels:
        for c in level_crossings(h, t):
            cross.add(t, c.point.edge, c.point.offset, c.outward_flux)
        res = level_flux(h, t)
        flux.add(t, res.flux, int(res.empty))
    tables = [cross, flux]
    if ex.cell is not None:
        thr = Table("threshold.csv", ["eps", "t"])
        thr.add(ex.eps, threshold_for_neighborhood(h, ex.cell, ex.eps))
        tables.append(thr)
    if not h.is_constant():
        path = descent_path(h, ex.point)
        d = Table("descent.csv", ["step", "edge", "offset", "value"])
        for i, (p, val) in enumerate(zip(path.points, path.values)):
            d.add(i, p.edge, p.offset, val)
        tables.append(d)
    return tables


def cmd_spectrum(ex) -> list:
    op = assemble(ex.graph, ex.bc, ex.m)
    count = min(ex.count, op.n_dofs)
    spec = eigenvalues(op, count)
    s = Table("spectrum.csv", ["index", "eigenvalue"])
    for i, lam in enumerate(spec.values, 1):
        s.add(i, float(lam))
    rng = np.random.default_rng(ex.seed)
    f = Table("form.csv", ["trial", "total", "core", "boundary"])
    for i in range(ex.trials):
        r = quadratic_form(op, rng.standard_normal(op.n_dofs))
        f.add(i, r.total, r.core_energy, r.boundary_part)
    return [s, f]


def cmd_compare(ex) -> list:
    res = compare_clamps(ex.graph, ex.bc, ex.m)
    t = Table("compare.csv", ["lambda1_constant", "lambda1_harmonic", "lambda_gap", "form_gap"])
    t.add(res.lambda1_constant, res.lambda1_harmonic, res.lambda_gap, res.form_gap)
    return [t]


def cmd_diverge(ex) -> list:
    tree = ex.graph.tree
    res = extend_continuous(tree, sqrt_distance_sampler(tree, ex.anchor), tol=1e-300,
                            depths=ex.depths, run_all=True)
    t = Table("diverge.csv", ["depth", "sup_diff", "energy"])
    for d, diff, e in res.history:
        t.add(d, diff, e)
    return [t]


COMMAND_FUNCS = {
    "solve": cmd_solve,
    "measure": cmd_measure,
    "levelset": cmd_levelset,
    "spectrum": cmd_spectrum,
    "compare": cmd_compare,
    "diverge": cmd_diverge,
}


# -- sweep ----------------------------------------------------------------------


def _sweep_point(raw: dict, base: Path, param: str, value, quantity: str) -> float:
    ex = build_experiment(with_override(raw, param, value), base, require_command=False)
    if quantity == "lambda1":
        if ex.bc is None:
            raise ConfigError("sweep quantity 'lambda1' needs a [bc] table")
        return float(eigenvalues(assemble(ex.graph, ex.bc, ex.m), 1).values[0])
    if quantity == "measure":
        if ex.partition is None:
            raise ConfigError("sweep quantity 'measure' needs partition.cells")
        return float(harmonic_measure(ex.graph, ex.partition, ex.point)[0])
    if ex.data is None:
        raise ConfigError(f"sweep quantity {quantity!r} needs partition.values")
    h = solve_dirichlet(ex.graph, ex.data)
    if quantity == "energy":
        return h.dirichlet_energy()
    if not ex.levels:
        raise ConfigError("sweep quantity 'flux' needs levelset.levels")
    return level_flux(h, ex.levels[0]).flux


def thread_cap() -> int:
    raw = os.environ.get("GH_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def sweep_tables(raw: dict, base: Path, ex) -> list:
    sw = ex.sweep
    if not sw:
        raise ConfigError("sweep needs a [sweep] table")
    values = sw["values"]
    # validate every grid point before computing anything
    for v in values:
        build_experiment(with_override(raw, sw["param"], v), base, require_command=False)
    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(values))) as pool:
        results = list(pool.map(
            lambda v: _sweep_point(raw, base, sw["param"], v, sw["quantity"]), values
        ))
    t = Table("sweep.csv", [sw["param"], sw["quantity"]])
    for v, q in zip(values, results):
        t.add(v if not isinstance(v, float) else float(v), q)
    return [t]


# -- entry point ------------------------------------------------------------------


def _write(tables: list, out_dir: Path, quiet: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in tables:
        p = t.write(out_dir)
        if not quiet:
            print(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="graphharm",
        description="Harmonic functions, level sets and Robin-type Laplacians on metric trees.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, helptext in (
        ("run", "run the command named in the config"),
        ("sweep", "evaluate one scalar over a parameter grid"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--out", help="output directory (overrides out.dir)")
        p.add_argument("--quiet", action="store_true")
    v = sub.add_parser("verify", help="run the built-in named consistency checks")
    v.add_argument("--quiet", action="store_true")
    v.add_argument("--corrupt-stiffness", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "verify":
        from graphharm.verify import run_checks

        failures = run_checks(quiet=args.quiet, corrupt_stiffness=args.corrupt_stiffness)
        return EXIT_OK if failures == 0 else EXIT_NUMERIC
    cfg_path = Path(args.config)
    base = cfg_path.parent
    try:
        raw = load_toml(cfg_path)
        ex = build_experiment(raw, base, require_command=(args.cmd == "run"))
        if args.cmd == "sweep" and not ex.sweep:
            raise ConfigError("sweep needs a [sweep] table")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out_dir = Path(args.out) if args.out else ex.out_dir
    if not out_dir.is_absolute() and not args.out:
        out_dir = base / out_dir
    try:
        if args.cmd == "run":
            tables = COMMAND_FUNCS[ex.command](ex)
        else:
            tables = sweep_tables(raw, base, ex)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (GraphHarmError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if any(not math.isfinite(float(x)) for t in tables for row in t.rows for x in row
           if _is_number(x) and x.lower() != "nan"):
        print("numerical failure: non-finite result", file=sys.stderr)
        return EXIT_NUMERIC
    _write(tables, out_dir, args.quiet)
    return EXIT_OK


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


if __name__ == "__main__":
    sys.exit(main())
