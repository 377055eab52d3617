import csv
import json

import pytest

from matrix_osc.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_remark34(capsys):
    code, out, _ = run(capsys, "analyze", "--preset", "remark34", "--horizon", "20")
    assert code == 0
    summary = json.loads(out)
    assert summary["oscillatory"] == summary["count"] == 5
    assert summary["prepared"] == 5


def test_analyze_thm33_demo_uses_cone(capsys):
    code, out, _ = run(capsys, "analyze", "--preset", "thm33_demo", "--horizon", "50")
    summary = json.loads(out)
    assert code == 0 and summary["init"] == "cone"
    assert summary["nonoscillatory"] == summary["count"]


def test_analyze_writes_files(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "--preset", "remark34", "--horizon", "7", "--count", "2", "--out", str(tmp_path))
    assert code == 0 and out == ""
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["summary.json", "trajectory_00.csv", "trajectory_01.csv", "zeros_00.json", "zeros_01.json"]
    header = next(csv.reader(open(tmp_path / "trajectory_00.csv")))
    assert header[0] == "t" and header[1] == "phi11"


def test_malformed_problem_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"P": [[')
    code, _, err = run(capsys, "analyze", "--problem", str(bad))
    assert code == 2 and "offset" in err


def test_missing_source_exits_2(capsys):
    code, _, err = run(capsys, "criteria")
    assert code == 2 and "--preset" in err


def test_bad_expression_exits_2(tmp_path, capsys):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"P": [["0", "0"], ["0", "0"]], "Q": [["1", "0"], ["0", "1"]], "R": [["-1 +", "0"], ["0", "-1"]], "S": [["0", "0"], ["0", "0"]]}))
    code, _, err = run(capsys, "analyze", "--problem", str(p))
    assert code == 2 and "byte" in err


def test_runtime_overflow_exits_3(tmp_path, capsys):
    p = tmp_path / "p.json"
    z = [["0", "0"], ["0", "0"]]
    p.write_text(json.dumps({"P": z, "Q": [["1", "0"], ["0", "1"]], "R": [["exp(t^2)", "0"], ["0", "-1"]], "S": z}))
    code, _, err = run(capsys, "analyze", "--problem", str(p), "--horizon", "30", "--count", "1")
    assert code == 3 and "numerical failure" in err


def test_criteria_cor32_exact_window(capsys):
    code, out, _ = run(capsys, "criteria", "--preset", "example33", "--lambda", "pi/2", "--cor32", "--t1", "2*pi", "--t2", "3*pi")
    rep = json.loads(out)[0]
    assert code == 0 and rep["verdict"] == "holds"
    iv = [c for c in rep["components"] if c["criterion"] == "cond_IV"][0]
    assert abs(iv["margin"]) < 1e-9


def test_criteria_cor32_rounded_window_is_reported_honestly(capsys):
    # 9.4248 > 3 pi, so q = lambda sin t < 0 at the right end
    code, out, _ = run(capsys, "criteria", "--preset", "example33", "--lambda", "1.5707963", "--cor32", "--t1", "6.2832", "--t2", "9.4248")
    rep = json.loads(out)[0]
    iv = [c for c in rep["components"] if c["criterion"] == "cond_IV"][0]
    assert code == 0 and abs(iv["margin"]) < 1e-4


def test_criteria_cor31_example32(capsys):
    code, out, _ = run(capsys, "criteria", "--preset", "example32", "--cor31", "--horizon", "62.8")
    rep = json.loads(out)[0]
    kinds = {c["criterion"]: c["verdict"] for c in rep["components"]}
    assert kinds == {"cond_I": "holds", "cond_III": "undecided_at_horizon"}


def test_criteria_cond_I_ray(capsys):
    code, out, _ = run(capsys, "criteria", "--preset", "example33", "--cond-I-ray")
    rep = json.loads(out)[0]
    assert rep["verdict"] == "fails"
    import math

    assert math.sin(rep["witnesses"][0]) < 0


def test_riccati_blow_up(capsys):
    code, out, _ = run(capsys, "riccati", "--preset", "remark34", "--horizon", "3")
    rep = json.loads(out)
    lo, hi = rep["termination"]["bracket"]
    assert code == 0 and rep["termination"]["status"] == "blow_up"
    assert lo <= 1.5707963267948966 <= hi


def test_examples_only_remark34(capsys):
    code, out, _ = run(capsys, "examples", "--only", "remark34")
    rep = json.loads(out)
    assert code == 0 and rep["remark34"]["ok"]


def test_examples_example31_with_params(capsys):
    code, out, _ = run(capsys, "examples", "--only", "example31", "--params", "a1=1,a2=1,mu1=1,mu2=1.414213,b=1,alpha=2,mu=1", "--horizon", "200")
    assert code == 0 and json.loads(out)["example31"]["ok"]


def test_examples_unknown(capsys):
    code, _, err = run(capsys, "examples", "--only", "nope")
    assert code == 2


def test_sweep_csv(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--preset", "example33", "--param", "lambda", "--values", "1:2:3", "--t1", "2*pi", "--t2", "3*pi", "--out", str(tmp_path))
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert code == 0
    assert [r["verdict"] for r in rows] == ["fails", "fails", "holds"]
    assert float(rows[2]["margin"]) == pytest.approx(4 - 3.141592653589793, abs=1e-9)


def test_reports_are_byte_identical(tmp_path, capsys):
    outs = []
    for _ in range(2):
        code, out, _ = run(capsys, "analyze", "--preset", "example33", "--lambda", "2", "--horizon", "15", "--seed", "7")
        outs.append(out)
    assert outs[0] == outs[1]
    code, other, _ = run(capsys, "analyze", "--preset", "example33", "--lambda", "2", "--horizon", "15", "--seed", "8")
    assert other != outs[0]


def test_argparse_rejects_unknown_preset(capsys):
    with pytest.raises(SystemExit) as info:
        main(["analyze", "--preset", "nope"])
    assert info.value.code == 2
