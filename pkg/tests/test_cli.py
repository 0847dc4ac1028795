import csv
import shutil
from pathlib import Path

import pytest

from graphharm.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

EXPECTED = {
    "interval_solve": ["values.csv", "midpoints.csv", "energy.csv"],
    "interval_spectrum": ["spectrum.csv", "form.csv"],
    "tree_levelset": ["crossings.csv", "flux.csv"],
    "tree_measure": ["measure.csv"],
    "tree_compare": ["compare.csv"],
    "diverge": ["diverge.csv"],
}
SWEEPS = ["sweep_mesh", "sweep_robin", "sweep_depth"]

TREE = """
[graph]
type = "tree"
b = 2
r = {r}
l0 = 1.0
depth = 2
"""


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_run_sample_configs(name, tmp_path):
    assert main(["run", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(tmp_path), "--quiet"]) == 0
    for f in EXPECTED[name]:
        rows = read(tmp_path / f)
        assert len(rows) >= 2


@pytest.mark.parametrize("name", SWEEPS)
def test_sweep_sample_configs(name, tmp_path, monkeypatch):
    monkeypatch.setenv("GH_THREADS", "2")
    assert main(["sweep", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(tmp_path), "--quiet"]) == 0
    rows = read(tmp_path / "sweep.csv")
    assert len(rows) >= 3


def test_spectrum_csv_values(tmp_path):
    main(["run", "--config", str(CONFIGS / "interval_spectrum.toml"), "--out", str(tmp_path), "--quiet"])
    rows = read(tmp_path / "spectrum.csv")
    assert rows[0] == ["index", "eigenvalue"]
    assert abs(float(rows[1][1])) < 1e-8
    assert float(rows[2][1]) == pytest.approx(9.8696, rel=1e-3)


def test_compare_csv(tmp_path):
    main(["run", "--config", str(CONFIGS / "tree_compare.toml"), "--out", str(tmp_path), "--quiet"])
    (row,) = read(tmp_path / "compare.csv")[1:]
    assert float(row[2]) > 1e-6 and float(row[3]) > 0


def test_sweep_is_deterministic(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("GH_THREADS", threads)
        out = tmp_path / threads
        main(["sweep", "--config", str(CONFIGS / "sweep_robin.toml"), "--out", str(out), "--quiet"])
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]


def test_run_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        main(["run", "--config", str(CONFIGS / "interval_spectrum.toml"), "--out", str(tmp_path / d), "--quiet"])
    for f in EXPECTED["interval_spectrum"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize(
    "text",
    [
        'command = "spectrum"\n' + TREE.format(r=0.5).replace("b = 2", "b = 1") + '[bc]\nkind = "neumann"\n',
        'command = "bogus"\n' + TREE.format(r=0.5),
        'command = "spectrum"\n' + TREE.format(r=0.5) + '[bc]\nkind = "robin"\nk = -1.0\n',
        'command = "spectrum"\n' + TREE.format(r=0.5) + '[bc]\nkind = "neumann"\n[mesh]\nm = 1\n',
        "command = [",
    ],
)
def test_schema_errors_exit_2(tmp_path, text, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_numerical_failure_exit_3(tmp_path, capsys):
    text = (
        'command = "spectrum"\n' + TREE.format(r=0.5)
        + '[bc]\nkind = "constant_clamp"\nclusters = [["0"], ["1"]]\n[mesh]\nm = 4\n'
    )
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, text), "--out", str(out)]) == 3
    assert "infinite tail mass" in capsys.readouterr().err
    assert not out.exists()


def test_sweep_validates_grid_first(tmp_path):
    text = (
        'command = "spectrum"\n' + TREE.format(r=0.5)
        + '[bc]\nkind = "neumann"\n[sweep]\nparam = "mesh.m"\nvalues = [4, 8, 1]\nquantity = "lambda1"\n'
    )
    out = tmp_path / "out"
    assert main(["sweep", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert not out.exists()


def test_default_out_dir_is_beside_config(tmp_path):
    shutil.copy(CONFIGS / "tree_measure.toml", tmp_path / "m.toml")
    assert main(["run", "--config", str(tmp_path / "m.toml"), "--quiet"]) == 0
    assert (tmp_path / "out" / "tree_measure" / "measure.csv").exists()


def test_verify_exit_codes(capsys):
    assert main(["verify", "--quiet"]) == 0
    assert main(["verify", "--quiet", "--corrupt-stiffness"]) == 3
    assert "operator-symmetry" in capsys.readouterr().out
