import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from bellfit.cli import main, round_sig
from conftest import TABLE

REF_CSV = "angle_deg,rate,sigma\n" + "".join(f"{a},{r},{s}\n" for a, r, s in TABLE)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def ref_csv(tmp_path):
    p = tmp_path / "ref.csv"
    p.write_text(REF_CSV)
    return str(p)


def write_json(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_round_sig():
    assert round_sig({"a": [0.123456789, 12345678.9], "b": "x", "c": 3}) == \
        {"a": [0.123457, 12345700.0], "b": "x", "c": 3}


def test_fit_json(capsys, ref_csv):
    code, out, err = run(capsys, "fit", ref_csv, "--json")
    assert code == 0
    res = json.loads(out)
    assert res["visibility"] == pytest.approx(0.9897, abs=0.0005)
    assert json.loads(err)["command"] == "fit"
    code, out, _ = run(capsys, "fit", ref_csv, "--exclude-deg", "90", "--json", "--quiet")
    assert json.loads(out)["visibility"] == pytest.approx(0.9966, abs=0.0005)
    assert json.loads(out)["excluded_angles_deg"] == [90.0]


def test_fit_builtin_matches_file(capsys, ref_csv):
    a = run(capsys, "--quiet", "fit", ref_csv, "--json")[1]
    b = run(capsys, "--quiet", "fit", "--builtin", "--json")[1]
    assert a == b


def test_fit_text_output(capsys):
    code, out, _ = run(capsys, "fit", "--builtin", "--quiet")
    assert code == 0 and "visibility" in out and "rate(90deg)" in out


def test_out_directory(capsys, tmp_path, ref_csv):
    d = tmp_path / "o"
    code, out, err = run(capsys, "fit", ref_csv, "--out", str(d))
    assert code == 0 and err == ""
    names = sorted(p.name for p in d.iterdir())
    assert names == ["fit.json", "fit_curve.csv", "fit_points.csv", "manifest.json"]
    man = json.loads((d / "manifest.json").read_text())
    assert set(man) == {"command", "parameters", "input_digests", "tool_version", "seeds", "timestamp"}
    assert list(man["input_digests"].values())[0] == __import__("hashlib").sha256(REF_CSV.encode()).hexdigest()
    curve = (d / "fit_curve.csv").read_text().splitlines()
    assert curve[0] == "phi_deg,fit_rate" and len(curve) == 182
    assert b"\r" not in (d / "fit_points.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["fit", "does-not-exist.csv"],
    ["fit"],
    ["inequality", "--builtin"],
    ["inequality", "--builtin", "--eta", "1.5"],
    ["fit", "--builtin", "--exclude-deg", "10"],
])
def test_input_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert "error" in err


def test_malformed_csv_reports_line(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("angle_deg,rate,sigma\n0,1,1\n45,abc,1\n90,1,1\n")
    code, _, err = run(capsys, "fit", str(p))
    assert code == 2 and "line 3" in err


def test_numeric_failure_exit_3(capsys):
    code, _, err = run(capsys, "inequality", "--builtin", "--eta", "0.9", "--resamples", "0")
    assert code == 3 and "numeric" in err


def test_inequality_output(capsys):
    code, out, _ = run(capsys, "inequality", "--builtin", "--family", "LHV3",
                       "--resamples", "500", "--json", "--quiet")
    res = json.loads(out)
    assert code == 0
    assert res["verdict"] == "violated"
    assert res["family"] == "LHV3" and res["eta"] == 0.62
    assert "fit_inverse_variance" in res
    assert res["d_eta_lower_bound"] == pytest.approx(0.048, abs=0.001)


def test_inequality_text(capsys):
    code, out, _ = run(capsys, "inequality", "--builtin", "--eta", "0.31", "--resamples", "100", "--quiet")
    assert code == 0 and "verdict" in out and "delta_exp" in out


def test_model_command(capsys, tmp_path):
    spec = write_json(tmp_path, "m.json", {"rho": {"kind": "lhv4", "epsilon": 0.2},
                                           "detection": {"kind": "cos2", "eta_d": 1.0}})
    code, out, _ = run(capsys, "model", spec, "--angles-deg", "0", "45", "90",
                       "--production-rate", "1000", "--json", "--quiet")
    assert code == 0
    res = json.loads(out)
    assert res["validation"]["status"] == "pass"
    assert [p["angle_deg"] for p in res["probabilities"]] == [0.0, 45.0, 90.0]
    assert all(p["p12"] <= p["p1"] for p in res["probabilities"])


def test_model_invalid_rejected(capsys, tmp_path):
    spec = write_json(tmp_path, "m.json", {"rho": {"kind": "lhv4", "epsilon": 0.5},
                                           "detection": {"kind": "cos2"}})
    code, _, err = run(capsys, "model", spec)
    assert code == 2 and "negative" in err and "outside [0, 1/3]" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "model", str(bad))[0] == 2


def test_simulate_byte_identical(capsys, tmp_path):
    spec = write_json(tmp_path, "m.json", {"rho": {"kind": "lhv4", "epsilon": 0.2},
                                           "detection": {"kind": "cos2", "eta_d": 0.9}})
    outs = []
    for i, workers in enumerate(("1", "3")):
        d = tmp_path / f"run{i}"
        assert run(capsys, "simulate", spec, "--pairs", "20000", "--seed", "42",
                   "--workers", workers, "--out", str(d))[0] == 0
        outs.append(((d / "simulated.csv").read_bytes(), (d / "simulated.json").read_bytes()))
    assert outs[0] == outs[1]
    man = json.loads((tmp_path / "run0" / "manifest.json").read_text())
    assert man["seeds"] == [42]


def test_simulate_quantum(capsys):
    code, out, _ = run(capsys, "simulate", "--quantum", "0.95", "0", "1000", "--grid", "4", "--quiet")
    assert code == 0
    assert out.splitlines()[0] == "angle_deg,rate,sigma" and len(out.splitlines()) == 5
    assert run(capsys, "simulate")[0] == 2


def test_reproduce_schema_and_determinism(capsys):
    a = run(capsys, "reproduce", "--resamples", "300", "--json", "--quiet")
    b = run(capsys, "reproduce", "--resamples", "300", "--json", "--quiet")
    assert a[0] == 0 and a[1] == b[1]
    schema = json.loads(resources.files("bellfit").joinpath("schemas/reproduce.schema.json").read_text())
    jsonschema.validate(json.loads(a[1]), schema)


def test_reproduce_text(capsys):
    code, out, _ = run(capsys, "reproduce", "--resamples", "200", "--quiet")
    assert code == 0
    assert "LHV3: violated" in out and "V_B/V_A" in out


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "bellfit", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
