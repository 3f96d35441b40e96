import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltedps import fock
from tiltedps.cli import RunConfig, parse_angle, parse_args, read_csv, run
from tiltedps.fock import Grid2D


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def report_of(*argv):
    code, out, err = invoke(*argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture(scope="module")
def example_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "g.csv"
    code, out, err = invoke("limit-density", "--theta", "0.7854", "--sigma", "vacuum",
                            "--rho", "coherent:1+0.5i", "--cutoff", "40", "--grid", "-5:5:81",
                            "--out", path)
    assert code == 0, err
    return path, json.loads(out)


def test_limit_density_example(example_csv):
    path, rep = example_csv
    params, header, data = read_csv(path)
    assert header == ["q", "p", "density"]
    assert data.shape == (6561, 3)
    g = data[:, 2].reshape(81, 81)
    w = np.full(81, 10 / 80)
    w[[0, -1]] /= 2
    integral = w @ g @ w
    assert abs(integral - 1) < 1e-2
    assert abs(rep["result"]["integral"] - integral) < 1e-12
    assert params["rho"] == "coherent:1.0+0.5i" and params["cutoff"] == 40


def test_csv_format(example_csv):
    text = example_csv[0].read_bytes().decode()
    assert "\r" not in text
    lines = text.split("\n")
    assert lines[0].startswith("#")
    assert any(line.startswith("# theta=") for line in lines)
    body = [line for line in lines if line and not line.startswith("#")]
    assert body[0] == "q,p,density"
    assert body[1].split(",")[:2] == ["-5", "-5"]
    # 17 significant digits round-trip the doubles exactly
    v = body[1].split(",")[2]
    assert v == "%.17g" % float(v)


def test_compare_example():
    rep = report_of("compare", "--theta", "0.7854", "--z", "3", "--rho", "vacuum", "--sigma", "vacuum")
    assert rep["result"]["tv_distance"] < 0.1
    assert rep["result"]["verdict"] == "pass"
    assert rep["tolerances"]["tv"] == 0.1


def test_compare_tolerance_failure():
    code, out, err = invoke("compare", "--z", "1", "--tol", "tv=1e-3")
    assert code == 3
    assert "tv" in err
    assert json.loads(out)["result"]["verdict"] == "fail"


def test_verify_tilt(tmp_path):
    paths = {}
    for name, theta in (("ref", "pi/2"), ("tilt", "pi/4")):
        paths[name] = tmp_path / f"{name}.csv"
        code, _, err = invoke("limit-density", "--theta", theta, "--generator", "fixed",
                              "--sigma", "vacuum", "--rho", "coherent:1+0.5i", "--cutoff", "20",
                              "--grid", "-5:5:41", "--out", paths[name])
        assert code == 0, err
    rep = report_of("verify-tilt", "--reference", paths["ref"], "--tilted", paths["tilt"])
    assert rep["result"]["verdict"] == "pass"
    assert rep["result"]["max_error_tilted"] <= 1e-9
    assert rep["result"]["max_error_interpolated"] < 5e-3
    # swapped files: the reference is not at pi/2
    code, _, err = invoke("verify-tilt", "--reference", paths["tilt"], "--tilted", paths["ref"])
    assert code == 2 and "reference" in err


def test_verify_tilt_needs_fixed_generator(tmp_path):
    for name, theta in (("ref", "pi/2"), ("tilt", "pi/4")):
        assert invoke("limit-density", "--theta", theta, "--cutoff", "10", "--grid", "-3:3:7",
                      "--out", tmp_path / f"{name}.csv")[0] == 0
    code, _, err = invoke("verify-tilt", "--reference", tmp_path / "ref.csv",
                          "--tilted", tmp_path / "tilt.csv")
    assert code == 2 and err.startswith("error: generator")


def test_deterministic(tmp_path):
    outs = []
    for i in range(2):
        csv_path, rep_path = tmp_path / f"h{i}.csv", tmp_path / f"h{i}.json"
        code, _, _ = invoke("simulate", "--z", "2", "--theta", "-pi/3", "--rho", "number:1",
                            "--out", csv_path, "--report", rep_path)
        assert code == 0
        outs.append((csv_path.read_bytes(), rep_path.read_bytes()))
    assert outs[0] == outs[1]
    assert b"k1,k2,probability" in outs[0][0]


@pytest.mark.parametrize("argv, code, param", [
    (["limit-density", "--grid", "-5:5"], 2, "grid"),
    (["limit-density", "--rho", "squeezed:1"], 2, "rho"),
    (["limit-density", "--sigma", "number:-1"], 2, "sigma"),
    (["limit-density", "--theta", "0"], 2, "theta"),
    (["limit-density", "--theta", "quarter"], 2, "theta"),
    (["simulate", "--z", "0"], 2, "z"),
    (["simulate", "--efficiencies", "1,1,1"], 2, "efficiencies"),
    (["simulate", "--efficiencies", "0.5,1,0.6,1"], 2, "efficiencies"),
    (["limit-density", "--tol", "bogus=1"], 2, "tol"),
    (["limit-density", "--rho", "coherent:3", "--cutoff", "10"], 3, "cutoff"),
    (["simulate", "--lo-cutoff", "5"], 3, "lo_cutoff"),
    (["limit-density", "--theta", "0.3", "--sigma", "number:3", "--s-cutoff", "8"], 3, "s_cutoff"),
    (["tomography", "--samples", "/nonexistent.csv"], 2, "samples"),
])
def test_exit_codes(argv, code, param):
    got, _, err = invoke(*argv)
    assert got == code
    assert err.startswith(f"error: {param}")


def test_usage_error_exit_code():
    assert invoke("limit-density", "--no-such-flag")[0] == 2
    assert invoke()[0] == 2


@pytest.mark.parametrize("text, value", [
    ("pi/4", math.pi / 4), ("-pi/3", -math.pi / 3), ("3pi/4", 3 * math.pi / 4),
    ("pi", math.pi), ("0.7854", 0.7854), ("-2", -2.0), ("2*pi/3", 2 * math.pi / 3),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, rel=1e-15)


def test_negative_values_as_separate_tokens():
    cfg = parse_args(["limit-density", "--theta", "-pi/3", "--grid", "-4:4:9", "--z", "-1+2i"])
    assert cfg.theta == pytest.approx(-math.pi / 3)
    assert Grid2D.parse(cfg.grid) == Grid2D.square(-4, 4, 9)
    assert cfg.z == -1 + 2j


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@given(theta=st.floats(0.01, 3.1), z=st.complex_numbers(max_magnitude=5, allow_nan=False,
                                                        allow_infinity=False),
       lo=finite, width=st.floats(0.5, 5), n=st.integers(2, 200),
       rho=st.sampled_from(["vacuum", "number:3", "coherent:0.25-1.5i", "thermal:0.5"]),
       eff=st.tuples(*[st.floats(0.05, 1.0)] * 4),
       tol=st.dictionaries(st.sampled_from(["trace", "tv", "mass"]), st.floats(1e-12, 1)))
@settings(max_examples=40, deadline=None)
def test_config_round_trip(theta, z, lo, width, n, rho, eff, tol):
    cfg = RunConfig("smear", theta=theta, rho=rho, z=z, cutoff=12, grid=f"{lo}:{lo + width}:{n}",
                    efficiencies=eff, tolerances=tol, generator="fixed", out="x.csv")
    assert parse_args(cfg.to_argv()) == cfg
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_file_with_override(tmp_path):
    cfg = RunConfig("limit-density", theta=1.0, rho="number:1", grid="-3:3:13", cutoff=8)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg.to_dict()))
    loaded = parse_args(["limit-density", "--config", str(path), "--theta", "pi/3"])
    assert loaded.rho == "number:1" and loaded.cutoff == 8
    assert loaded.theta == pytest.approx(math.pi / 3)
    path.write_text(json.dumps({"command": "limit-density", "colour": "red"}))
    code, _, err = invoke("limit-density", "--config", path)
    assert code == 2 and "colour" in err


def test_file_state_and_support_zero_circle(tmp_path):
    S = (fock.number_state(0, 2) + fock.number_state(1, 2)) / 2
    np.save(tmp_path / "s.npy", S)
    rep = report_of("support-check", "--sigma", f"file:{tmp_path / 's.npy'}", "--generator", "fixed",
                    "--theta", "pi/2", "--grid", "-4:4:81")
    radii = np.hypot(*np.array(rep["result"]["flagged"]).T)
    assert rep["result"]["flagged_cells"] > 20
    assert np.abs(radii - 2).max() <= 0.1


def test_invalid_file_state(tmp_path):
    np.save(tmp_path / "bad.npy", np.diag([0.7, 0.7]))
    code, _, err = invoke("limit-density", "--rho", f"file:{tmp_path / 'bad.npy'}")
    assert code == 2 and err.startswith("error: rho")


def test_smear_with_ideal_detectors_matches_limit(tmp_path):
    common = ["--rho", "coherent:0.5", "--theta", "pi/4", "--cutoff", "12", "--grid", "-4:4:17"]
    assert invoke("limit-density", *common, "--out", tmp_path / "a.csv")[0] == 0
    assert invoke("smear", *common, "--out", tmp_path / "b.csv")[0] == 0
    a = read_csv(tmp_path / "a.csv")[2]
    b = read_csv(tmp_path / "b.csv")[2]
    assert np.abs(a - b).max() < 1e-12


def test_margins_command():
    rep = report_of("margins", "--rho", "coherent:0.5-0.4i", "--sigma", "number:1",
                    "--theta", "pi/4", "--grid", "-10:10:81")
    assert rep["result"]["verdict"] == "pass"
    assert max(rep["result"]["l1_q"], rep["result"]["l1_p"]) <= 1e-5


def test_tomography_from_csv(tmp_path):
    path = tmp_path / "husimi.csv"
    assert invoke("limit-density", "--theta", "pi/2", "--generator", "fixed", "--rho", "number:2",
                  "--cutoff", "6", "--grid", "-5:5:41", "--out", path)[0] == 0
    rep = report_of("tomography", "--samples", path, "--theta", "pi/2", "--generator", "fixed",
                    "--rho", "number:2", "--cutoff", "6", "--out", tmp_path / "rho.csv")
    assert rep["result"]["rank"] == 36
    assert rep["result"]["fidelity"] >= 0.99
    _, header, data = read_csv(tmp_path / "rho.csv")
    assert header == ["m", "n", "re", "im"] and data.shape == (36, 4)


def test_tomography_generated_data():
    rep = report_of("tomography", "--rho", "coherent:0.7", "--theta", "pi/2", "--cutoff", "6",
                    "--tol", "state_tail=1e-4")
    assert rep["result"]["fidelity"] >= 0.99
    assert rep["result"]["residual"] <= 1e-8


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tiltedps", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
