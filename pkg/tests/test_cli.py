import json
import math

import pytest

from reeblab.cli import main

BROKEN = """spec_version = 1
name = "broken"
[[coordinates]]
name = "x"
range = [0, 1
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_pass(capsys):
    code, out, _ = run(capsys, "verify", "t3_bm", "--m", "1", "--samples", "50",
                       "--z-samples", "20")
    assert code == 0
    assert json.loads(out)["verdict"] == "pass"


def test_verify_broken_file(tmp_path, capsys):
    f = tmp_path / "broken.toml"
    f.write_text(BROKEN)
    code, _, err = run(capsys, "verify", str(f))
    assert code == 2
    assert "line" in err and "column" in err


def test_unknown_system(capsys):
    assert run(capsys, "verify", "no_such_system")[0] == 2


def test_flow_t3(tmp_path, capsys):
    out = tmp_path / "trace.json"
    code, _, err = run(capsys, "flow", "t3_bm", "--from", "pi/2,0,pi/2", "--time", "1",
                       "--out", str(out), "--format", "json")
    assert code == 0 and "time-out" in err
    data = json.loads(out.read_text())
    assert data["final"][0] == pytest.approx(2 * math.atan(math.e), abs=1e-9)


def test_flow_csv_and_s1(capsys):
    code, out, _ = run(capsys, "flow", "s1_b", "--from", "0.1", "--time", "20",
                          "--format", "csv")
    assert code == 0
    last = out.strip().splitlines()[-1].split(",")
    assert float(last[1]) == pytest.approx(math.pi, abs=1e-5)


def test_hunt_fixed(capsys):
    code, out, _ = run(capsys, "hunt", "s3_b", "fixed", "--grid", "16")
    assert code == 0
    pts = sorted(round(f["point"][1]) for f in json.loads(out)["findings"])
    assert pts == [-1, 1]


def test_hunt_cylinder_periods(capsys):
    code, out, _ = run(capsys, "hunt", "rpc3bp_infinity_cylinder", "--energy", "1",
                       "periodic", "--pr", "0.5,1.0,1.5")
    assert code == 0
    recs = [f["record"] for f in json.loads(out)["findings"]]
    assert [r["period"] for r in recs] == pytest.approx(
        [math.pi * (p * p + 2) for p in (0.5, 1.0, 1.5)], abs=1e-6)


def test_hunt_singular(capsys):
    code, out, _ = run(capsys, "hunt", "s3_b", "singular", "--from", "1,0,0,0")
    rec = json.loads(out)["findings"][0]["record"]
    assert code == 0 and rec["confirmed_plus"] and rec["confirmed_minus"]


def test_trap_table(capsys):
    code, out, err = run(capsys, "trap", "--eps", "0.1", "--grid", "0.01,0.05,0.2")
    assert code == 0 and "entry-exit violated" in err
    rows = out.strip().splitlines()[1:]
    assert [float(r.split(",")[3]) for r in rows] == pytest.approx([9999, 399, 0], abs=1e-9)


def test_desingularize(tmp_path, capsys):
    out = tmp_path / "smooth.toml"
    code, _, err = run(capsys, "desingularize", "t3_bm", "--m", "2", "--eps", "0.1",
                       "--samples", "30", "--out", str(out))
    assert code == 0 and json.loads(err)["verdict"] == "pass"
    assert "[profiles.fe]" in out.read_text()
    assert run(capsys, "desingularize", "t3_bm", "--m", "1", "--eps", "0.1")[0] == 1


def test_transform_check(capsys):
    code, out, _ = run(capsys, "transform-check", "--samples", "20", "--no-stamp")
    assert code == 0 and json.loads(out)["verdict"] == "pass"


def test_bad_usage(capsys):
    with pytest.raises(SystemExit) as info:
        main(["flow", "t3_bm"])
    assert info.value.code == 2
    assert run(capsys, "trap", "--eps", "-1")[0] == 2


def test_atomic_output_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for f in (a, b):
        assert run(capsys, "verify", "s1_b", "--samples", "30", "--seed", "4",
                   "--out", str(f))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.json", "b.json"]
