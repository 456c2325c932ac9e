import json

import pytest

from ledtree.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_minimize_isosceles(tmp_path, capsys):
    out = tmp_path / "sol.json"
    code, text = run(capsys, "minimize", "--input", "isosceles.json", "--out", out)
    assert code == 0
    assert "CertifiedOptimal" in text
    doc = json.loads(out.read_text())
    assert doc["total_length"] == pytest.approx(2 + 3 ** 0.5, abs=1e-12)


def test_minimize_output_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "minimize", "--input", "square.json", "--out", a)
    run(capsys, "minimize", "--input", "square.json", "--out", b)
    assert a.read_text() == b.read_text()


def test_collinear_exits_infeasible(capsys):
    code, _ = run(capsys, "minimize", "--input", "collinear.json")
    assert code == 3


def test_stretch_only(capsys):
    code, text = run(capsys, "minimize", "--input", "isosceles.json", "--stretch-only")
    assert code == 0
    assert "inner" in json.loads(text)


def test_check_kkt_verdicts(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    run(capsys, "minimize", "--input", "isosceles.json", "--out", sol)
    code, text = run(capsys, "check-kkt", "--input", sol)
    assert code == 0 and text.rstrip().endswith("CERTIFIED")
    stretched = tmp_path / "stretched.json"
    run(capsys, "minimize", "--input", "isosceles.json", "--stretch-only", "--out", stretched)
    code, text = run(capsys, "check-kkt", "--input", stretched)
    assert code == 1
    assert not text.rstrip().endswith("\nCERTIFIED")


def test_probe_writes_outputs(tmp_path, capsys):
    code, text = run(capsys, "feasibility-probe", "--example", "cross", "--a", 1, "--c", 3,
                     "--grid", 128, "--out", tmp_path)
    assert code == 0
    for ext in ("pgm", "json", "png"):
        assert (tmp_path / f"cross.{ext}").stat().st_size > 0
    doc = json.loads((tmp_path / "cross.json").read_text())
    assert doc["components"] == 1 and doc["holes"] == 1


def test_pipeline_and_render(tmp_path, capsys):
    code, text = run(capsys, "pipeline", "--cognates", "toy.tsv", "--weighting", "quartic",
                     "--anchor-label", "Romance", "--anchor-years", 1550, "--out", tmp_path)
    assert code == 0, text
    for name in ("embedding.json", "tree.json", "solution.json", "kkt.json", "dates.json", "dates.tsv",
                 "chronogram.svg"):
        assert (tmp_path / name).exists()
    dates = json.loads((tmp_path / "dates.json").read_text())
    assert dates["anchor"]["years"] == 1550
    svg = tmp_path / "again.svg"
    code, _ = run(capsys, "render", "--input", tmp_path / "solution.json", "--project",
                  "--dates", tmp_path / "dates.json", "--out", svg)
    assert code == 0
    assert "projection-note" in svg.read_text()


def test_date_command(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    run(capsys, "minimize", "--input", "square.json", "--out", sol)
    code, text = run(capsys, "date", "--input", sol, "--anchor-label", "root", "--anchor-years", 900,
                     "--out", tmp_path)
    assert code == 0
    rows = (tmp_path / "dates.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["vertex", "label", "height", "years", "leaves"]


def test_zero_height_anchor_is_input_error(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    run(capsys, "minimize", "--input", "square.json", "--out", sol)
    code, _ = run(capsys, "date", "--input", sol, "--anchor-label", "A", "--anchor-years", 900,
                  "--out", tmp_path)
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["minimize", "--input", "missing.json"],
    ["embed-cognates", "--cognates", "missing.tsv"],
    ["minimize", "--input", "isosceles.json", "--restarts", "0"],
])
def test_bad_input_exits_2(capsys, argv):
    assert main(argv) == 2


def test_embed_to_stdout(capsys):
    code, text = run(capsys, "embed-cognates", "--cognates", "trio.tsv", "--weighting", "quartic")
    assert code == 0
    assert json.loads(text)["coords"][0] == [81, 1, 0, 0, 16, 0]
