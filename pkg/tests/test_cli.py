import json

import pytest

from helpers import f1_spec, fk_chain, table, triangle, write_spec
from joinsample.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_sample_shape(tmp_path, capsys):
    spec = f1_spec(tmp_path, n=5)
    code, out, err = run(capsys, "sample", spec)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 6
    assert lines[0].split("\t") == ["draw_id", "AB.A", "AB.B", "AB.w", "BC.B", "BC.C", "BC.w"]
    report = json.loads(err)
    assert report["passes"] == {"AB": 1, "BC": 2} and report["n"] == 5


def test_semi_join_drops_columns(tmp_path, capsys):
    spec = f1_spec(tmp_path, op="semi", n=3)
    code, out, _ = run(capsys, "sample", spec)
    assert code == 0
    assert out.splitlines()[0] == "draw_id\tAB.A\tAB.B\tAB.w"


def test_economic_reports_acceptance(tmp_path, capsys):
    fk_chain(tmp_path, rows=300, weights="linear")
    spec = write_spec(tmp_path, {
        "tables": [{"name": "O", "path": "O.csv"}, {"name": "C", "path": "C.csv"}, {"name": "N", "path": "N.csv"}],
        "joins": [{"left": "O.ckey", "right": "C.ckey"}, {"left": "C.nkey", "right": "N.nkey"}],
        "main": "O", "weights": {"O.x": "identity"}, "sample": {"n": 50, "seed": 1},
    })
    report = tmp_path / "r.json"
    code, _, _ = run(capsys, "sample", spec, "--method", "economic", "-o", str(tmp_path / "s.tsv"),
                     "--report", str(report))
    assert code == 0
    rep = json.loads(report.read_text())
    assert rep["method"] == "fk_economic" and 0 < rep["acceptance_rate"] <= 1


def test_universe_flag_uses_hashed_join(tmp_path, capsys):
    spec = f1_spec(tmp_path, n=100)
    code, _, err = run(capsys, "sample", spec, "--universe", "4")
    assert code == 0
    rep = json.loads(err)
    assert rep["method"] == "hashed_join" and rep["extra"]["universe"] == 4


def test_output_is_byte_identical(tmp_path, capsys):
    spec = f1_spec(tmp_path, n=1000, seed=9)
    outs = []
    for i in range(3):
        path = tmp_path / f"s{i}.tsv"
        assert run(capsys, "sample", spec, "-o", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_validate(tmp_path, capsys):
    spec = f1_spec(tmp_path, n=2000)
    rep = tmp_path / "v.json"
    code, out, _ = run(capsys, "validate", spec, "--validate-runs", "20", "--report", str(rep))
    assert code == 0 and "pass fraction" in out
    assert json.loads(rep.read_text())["pass_fraction"] >= 0.9
    code, _, _ = run(capsys, "validate", spec, "--validate-runs", "5", "--n", "20000", "--corrupt",
                     "--report", str(rep))
    assert json.loads(rep.read_text())["pass_fraction"] == 0.0
    code, _, _ = run(capsys, "validate", spec, "--validate-runs", "1", "--report", str(rep))
    assert len(json.loads(rep.read_text())["runs"]) == 1


def test_oracle_f1(tmp_path, capsys):
    code, out, _ = run(capsys, "oracle", f1_spec(tmp_path))
    rows = out.splitlines()
    assert code == 0 and len(rows) == 6
    weights = sorted(float(r.split("\t")[-2]) for r in rows[1:])
    assert weights == [2, 3, 14, 20, 21]


def test_oracle_triangles(tmp_path, capsys):
    triangle(tmp_path, nodes=5, p=0.6, seed=2)
    spec = write_spec(tmp_path, {
        "tables": [{"name": n, "path": f"{n}.csv"} for n in ("E1", "E2", "E3")],
        "joins": [{"left": "E1.dst", "right": "E2.src"}, {"left": "E2.dst", "right": "E3.src"},
                  {"left": "E3.dst", "right": "E1.src"}],
        "main": "E1",
    })
    code, out, _ = run(capsys, "oracle", spec)
    assert code == 0
    for line in out.splitlines()[1:]:
        c = line.split("\t")
        assert c[1] == c[2] and c[3] == c[4] and c[5] == c[0]


def test_oracle_empty_join(tmp_path, capsys, caplog):
    table(tmp_path, "A", ["k"], [("x",)])
    table(tmp_path, "B", ["k"], [("y",)])
    spec = write_spec(tmp_path, {"tables": [{"name": "A", "path": "A.csv"}, {"name": "B", "path": "B.csv"}],
                                 "joins": [{"left": "A.k", "right": "B.k"}], "main": "A"})
    code, out, err = run(capsys, "oracle", spec)
    assert code == 0 and out.splitlines() == ["A.k\tB.k\tweight\tprobability"]
    assert "empty" in caplog.text


@pytest.mark.parametrize("doc,code", [
    ({"tables": []}, 2),
    ({"tables": [{"name": "A", "path": "A.csv"}], "joins": [], "main": "Z"}, 2),
])
def test_spec_errors(tmp_path, capsys, doc, code):
    table(tmp_path, "A", ["k"], [("x",)])
    got, _, err = run(capsys, "sample", write_spec(tmp_path, doc))
    assert got == code
    assert "error" in json.loads(err)


def test_data_error_exit_code(tmp_path, capsys):
    spec = f1_spec(tmp_path)
    (tmp_path / "BC.csv").write_text("B,C,w\nb1,c1\n")
    code, _, err = run(capsys, "sample", spec)
    assert code == 3 and json.loads(err)["error"] == "SchemaMismatch"


def test_stall_exit_code(tmp_path, capsys):
    arcs = [(f"v{i}", f"v{j}") for i in range(5) for j in range(i + 1, 5)]
    for n in ("E1", "E2", "E3"):
        table(tmp_path, n, ["src", "dst"], arcs)
    spec = write_spec(tmp_path, {
        "tables": [{"name": n, "path": f"{n}.csv"} for n in ("E1", "E2", "E3")],
        "joins": [{"left": "E1.dst", "right": "E2.src"}, {"left": "E2.dst", "right": "E3.src"},
                  {"left": "E3.dst", "right": "E1.src"}],
        "main": "E1", "sample": {"n": 10},
    })
    assert run(capsys, "sample", spec)[0] == 4


def test_size_guard_exit_code(tmp_path, capsys, monkeypatch):
    import joinsample.oracle as oracle

    monkeypatch.setattr(oracle.enumerate_join, "__defaults__", (2, None))
    assert run(capsys, "oracle", f1_spec(tmp_path))[0] == 5
