import json
import math
import os

import pytest

from per3bp_figures import FigureSpec, MissingArtifact, SchemaMismatch, render
from per3bp_figures.artifacts import load_grids, load_homoclinic, load_paths
from per3bp_figures.cli import main

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

INPUTS = {
    "homoclinic": os.path.join(FIXTURES, "homoclinic.csv"),
    "grids": os.path.join(FIXTURES, "grids.json"),
    "paths": os.path.join(FIXTURES, "paths.csv"),
}


def test_loaders_read_fixtures():
    data = load_homoclinic(INPUTS["homoclinic"])
    assert len(data["X"]) == len(data["theta_unwrapped"]) > 50
    doc = load_grids(INPUTS["grids"])
    assert set(doc["grids"]) == {"uu", "dd", "ud", "du"}
    paths = load_paths(INPUTS["paths"])
    assert len(paths) == 20


def test_orbit_figure(tmp_path):
    out = render(FigureSpec("orbit", INPUTS, str(tmp_path / "orbit")))
    assert os.path.getsize(out["files"][0]) > 0
    assert out["meta"]["section_points"] > 0
    assert out["meta"]["small_primary"] == pytest.approx(2.089e-4 - 1.0)


def test_homoclinic_theta_reference_lines(tmp_path):
    out = render(FigureSpec("homoclinic-theta", INPUTS,
                            str(tmp_path / "th")))
    lines = out["meta"]["reference_lines"]
    assert lines, "no strip reference lines drawn"
    for v in lines:
        residue = v % (2.0 * math.pi)
        assert (abs(residue - math.pi / 2.0) < 1e-9
                or abs(residue - 3.0 * math.pi / 2.0) < 1e-9)
    # both strip angles appear
    residues = {round(v % (2.0 * math.pi), 6) for v in lines}
    assert len(residues) == 2


def test_grid_figure_rectangle_count(tmp_path):
    doc = load_grids(INPUTS["grids"])
    for name, g in doc["grids"].items():
        out = render(FigureSpec("grid", INPUTS, str(tmp_path / name),
                                {"grid": name}))
        assert out["meta"]["rectangles"] == g["rows"] * g["cols"]
        assert out["meta"]["rectangles"] == len(g["windows"])


def test_paths_figure(tmp_path):
    out = render(FigureSpec("paths", INPUTS, str(tmp_path / "paths")))
    assert out["meta"]["paths"] == 20
    assert os.path.getsize(out["files"][0]) > 0


def test_render_is_deterministic(tmp_path):
    a = render(FigureSpec("grid", INPUTS, str(tmp_path / "a"),
                          {"formats": ("png", "svg")}))
    b = render(FigureSpec("grid", INPUTS, str(tmp_path / "b"),
                          {"formats": ("png", "svg")}))
    for fa, fb in zip(a["files"], b["files"]):
        with open(fa, "rb") as f1, open(fb, "rb") as f2:
            assert f1.read() == f2.read()


def test_render_does_not_touch_inputs(tmp_path):
    before = {k: open(v, "rb").read() for k, v in INPUTS.items()}
    render(FigureSpec("orbit", INPUTS, str(tmp_path / "o")))
    after = {k: open(v, "rb").read() for k, v in INPUTS.items()}
    assert before == after


def test_schema_mismatch(tmp_path):
    bad = tmp_path / "grids.json"
    bad.write_text(json.dumps({"version": 99, "grids": {}}))
    inputs = dict(INPUTS, grids=str(bad))
    with pytest.raises(SchemaMismatch):
        render(FigureSpec("grid", inputs, str(tmp_path / "g")))


def test_empty_paths_file(tmp_path):
    empty = tmp_path / "paths.csv"
    empty.write_text("")
    inputs = dict(INPUTS, paths=str(empty))
    with pytest.raises(MissingArtifact):
        render(FigureSpec("paths", inputs, str(tmp_path / "p")))
    header_only = tmp_path / "p2.csv"
    header_only.write_text("path,t,X\n")
    inputs = dict(INPUTS, paths=str(header_only))
    with pytest.raises(MissingArtifact):
        render(FigureSpec("paths", inputs, str(tmp_path / "p2")))


def test_missing_file_and_bad_kind(tmp_path):
    inputs = dict(INPUTS, homoclinic=str(tmp_path / "absent.csv"))
    with pytest.raises(MissingArtifact):
        render(FigureSpec("orbit", inputs, str(tmp_path / "o")))
    with pytest.raises(ValueError):
        FigureSpec("pie", INPUTS, str(tmp_path / "x"))


def test_cli_batch(tmp_path):
    code = main(["--artifacts", FIXTURES, "--out", str(tmp_path)])
    assert code == 0
    for kind in ("orbit", "homoclinic_theta", "grid", "paths"):
        assert (tmp_path / f"{kind}.png").exists()


def test_cli_reports_failures(tmp_path):
    code = main(["--artifacts", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path)])
    assert code == 1
