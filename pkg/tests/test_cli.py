import csv
import io
import json

import pytest

from jomatch.cli import SweepConfig, main, parse_grid, parse_int_list, run_sweep
from jomatch.instance import read_instance


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def header(path):
    return dict(l[2:].split("=", 1) for l in path.read_text().splitlines() if l.startswith("# "))


def test_parse_helpers():
    assert parse_grid("0.1:0.2:0.9") == [0.1, 0.3, 0.5, 0.7, 0.9]
    assert parse_grid("0.5,1") == [0.5, 1.0]
    assert parse_int_list("2..50") == [2, 3, 5, 10, 20, 30, 40, 50]
    assert parse_int_list("2,4") == [2, 4]
    with pytest.raises(Exception):
        parse_grid("0.1:0:0.9")


def test_gen_and_solve(tmp_path):
    inst_path = tmp_path / "i.json"
    assert main(["gen", "--n", "5", "--d", "3", "--p-true", "1.0", "--seed", "4", "--out", str(inst_path)]) == 0
    inst = read_instance(inst_path)
    assert inst.config.n == 5 and inst.meta["seed"] == 4
    out = tmp_path / "solve.csv"
    assert main(["solve", str(inst_path), "--probe", "--out", str(out)]) == 0
    row = read_csv(out)[0]
    assert row["recovered"] == "1" and row["is_binary"] == "1" and row["unique"] == "True"
    assert header(out)["method"] == "basic"
    js = tmp_path / "solve.json"
    assert main(["solve", str(inst_path), "--method", "double", "--format", "json", "--out", str(js)]) == 0
    data = json.loads(js.read_text())
    assert data["rows"][0]["method"] == "double" and data["config"]["command"] == "solve"


def test_gen_to_stdout(capsys):
    assert main(["gen", "--n", "3", "--d", "2", "--p-true", "0.5"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 3


def test_sweep_reproducible_and_charted(tmp_path):
    argv = ["sweep", "--n", "6", "--d", "2", "--p-true", "0.5,1.0", "--seeds", "3", "--methods", "basic,double",
            "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out-dir", str(a)]) == 0
    assert main(argv + ["--out-dir", str(b), "--threads", "2"]) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    assert (a / "sweep_summary.csv").read_bytes() == (b / "sweep_summary.csv").read_bytes()
    h = header(a / "sweep.csv")
    assert h["base_seed"] == "7" and h["bin_tol"] == "0.0001" and h["seeds"] == "3"
    summ = read_csv(a / "sweep_summary.csv")
    top = [r for r in summ if float(r["p_true"]) == 1.0]
    assert all(float(r["recovery_rate"]) == 1.0 and float(r["tightness_rate"]) == 1.0 for r in top)
    assert (a / "sweep_pobs1.0.svg").read_text().startswith("<svg")
    assert len(read_csv(a / "sweep.csv")) == 2 * 3 * 2


def test_run_sweep_single_cell():
    rows, summary = run_sweep(SweepConfig(5, 3, (1.0,), (1.0,), 2, ("basic",)))
    assert len(rows) == 2 and summary[0]["recovery_rate"] == 1.0 and summary[0]["tightness_rate"] == 1.0
    with pytest.raises(ValueError):
        SweepConfig(5, 3, (1.0,), (), 2, ("basic",))
    with pytest.raises(ValueError):
        SweepConfig(5, 3, (1.0,), (1.0,), 2, ("sdp",))


def test_timing(tmp_path):
    assert main(["timing", "--n", "5,6", "--d", "2", "--seeds", "1", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "timing.csv")
    assert {r["method"] for r in rows} == {"basic", "double"} and all(float(r["wall_ms"]) > 0 for r in rows)
    assert (tmp_path / "timing.svg").exists()


def test_certify(tmp_path):
    out = tmp_path / "c.json"
    assert main(["certify", "--n", "12", "--d", "2", "--p-true", "1.0", "--format", "json", "--out", str(out)]) == 0
    row = json.loads(out.read_text())["rows"][0]
    assert row["all_strict"] is True and row["verified"] is True and row["case_iii"] == 66 * 2


def test_threshold(tmp_path):
    assert main(["threshold", "--d-list", "2", "--step", "0.02", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "threshold.csv")
    assert rows[0]["d"] == "2" and abs(float(rows[0]["p_star"]) - 1 / 3) < 0.005
    assert (tmp_path / "threshold.svg").exists()


def test_verify(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--n", "3", "--d", "2", "--family", "nonneg", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 12 and all(r["is_facet"] == "True" and r["tight_rank"] == "11" for r in rows)
    assert header(out)["dimension"] == "12"


def test_oracle(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["oracle", "--n", "3", "--d", "2", "--p-true", "1.0", "--out", str(out)]) == 0
    row = read_csv(out)[0]
    assert row["optimum"] == "-6" and row["unique"] == "True"


def test_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["solve", str(bad)]) == 2
    assert "jomatch solve: error" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.json")]) == 2
    assert main(["certify", "--n", "4", "--d", "1"]) == 2
    assert main(["oracle", "--n", "5", "--d", "3"]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])
