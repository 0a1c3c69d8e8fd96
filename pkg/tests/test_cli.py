import json
import math
import re

import numpy as np
import pytest

from gmol_shape.cli import emit_outputs, fmt, main, run, shape_csv, shape_svg
from gmol_shape.config import parse_config
from gmol_shape.residuals import cost


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


FORWARD = {"preset": "annulus-log"}
SMALL_INVERSE = {
    "preset": "synthetic-recovery",
    "M": 16,
    "optimizer": {"mode": "alternating", "max_iters": 5},
}


def test_shape_csv_four_node_circle():
    text = shape_csv(np.ones(4))
    rows = [line.split(",") for line in text.splitlines()]
    assert rows[0] == ["x", "theta", "r"]
    values = np.array(rows[1:], dtype=float)
    np.testing.assert_allclose(values[:, 0], [0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(values[:, 1], [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    np.testing.assert_array_equal(values[:, 2], 1.0)
    assert text.endswith("\n") and "\r" not in text


def test_number_format_round_trips():
    for v in (math.pi, 1 / 3, 1e-300, 123456789.123456789):
        assert float(fmt(v)) == v


def test_forward_annulus_log(tmp_path):
    art = run(parse_config(json.dumps(FORWARD)))
    assert art.summary["flux_max_rel_error"] <= 0.01
    assert art.summary["termination"] == "converged"


def test_outputs_content_and_row_counts(tmp_path):
    config = parse_config(json.dumps({**FORWARD, "N": 12, "M": 16}))
    art = run(config)
    emit_outputs(art, tmp_path)
    field_rows = (tmp_path / "field.csv").read_text().splitlines()
    shape_rows = (tmp_path / "shape.csv").read_text().splitlines()
    assert field_rows[0] == "n,j,t,x,u" and len(field_rows) - 1 == 13 * 16
    assert len(shape_rows) - 1 == 16
    summary = json.loads((tmp_path / "summary.json").read_text())
    for key in ("J", "lap_l2_sq", "neumann_l2_sq", "lap_inf", "neumann_inf", "iterations", "termination"):
        assert key in summary
    expected = cost(art.field, art.shape, config.boundary_data().w, config.K)
    assert summary["J"] == expected.J


def test_outputs_byte_stable(tmp_path):
    for name in ("a", "b"):
        emit_outputs(run(parse_config(json.dumps(SMALL_INVERSE))), tmp_path / name)
    for f in ("shape.csv", "field.csv", "summary.json", "shape.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_svg_has_closed_path_and_circle():
    r = 1 + 0.1 * np.cos(2 * np.pi * np.arange(32) / 32)
    svg = shape_svg(r, 3.0)
    paths = re.findall(r'<path [^>]*d="([^"]*)"', svg)
    assert len(paths) == 1
    d = paths[0]
    assert d.startswith("M ") and d.endswith(" Z")
    assert d.count("M ") + d.count("L ") == 32
    assert len(re.findall(r"<circle ", svg)) == 1


def test_main_forward_writes_files(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["forward", "--config", write_config(tmp_path, FORWARD), "--out", str(out), "--lines", "20"])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ["field.csv", "shape.csv", "shape.svg", "summary.json"]
    assert json.loads(capsys.readouterr().out)["J"] > 0
    assert len((out / "field.csv").read_text().splitlines()) == 1 + 21 * 64


def test_main_inverse_small(tmp_path):
    out = tmp_path / "inv"
    rc = main(["inverse", "--config", write_config(tmp_path, SMALL_INVERSE), "--out", str(out), "--max-iters", "3"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 3 and summary["J"] < summary["initial_J"]
    assert "shape_rel_error" in summary


def test_main_config_error_exit_code(tmp_path, capsys):
    rc = main(["forward", "--config", write_config(tmp_path, {"boundary": {"preset": "annulus-log"}})])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "missing field R" in err["message"]


def test_main_missing_file(tmp_path, capsys):
    rc = main(["forward", "--config", str(tmp_path / "absent.json")])
    assert rc == 2
    assert "absent.json" in json.loads(capsys.readouterr().err)["message"]


def test_main_non_convergence_exit_code(tmp_path, capsys):
    rc = main(["forward", "--config", write_config(tmp_path, FORWARD), "--max-iters", "2", "--out", str(tmp_path)])
    assert rc == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "convergence" and err["line"] == 1


def test_main_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["forward", "--config", write_config(tmp_path, FORWARD), "--out", str(blocker / "sub")])
    assert rc == 1
    assert str(blocker) in json.loads(capsys.readouterr().err)["message"]


def test_main_rejects_bad_mode():
    with pytest.raises(SystemExit):
        main(["solve", "--preset", "annulus-log"])
