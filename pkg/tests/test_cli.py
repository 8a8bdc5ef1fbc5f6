import io
import json

import pytest

from dirichlet_wiener import __version__
from dirichlet_wiener.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, config_hash, run


def call(argv, environ=None):
    buf = io.StringIO()
    code = run(argv, environ=environ or {}, stdout=buf)
    return code, buf.getvalue()


def report(argv, environ=None):
    code, text = call(argv, environ)
    assert code == EXIT_OK
    return json.loads(text)


def test_lemma_example():
    rep = report(["lemma", "--max-level", "6", "--lambda", "power:0.5"])
    assert rep["result"]["passed"] and rep["result"]["max_abs_error"] <= 1e-10


def test_closability_example():
    assert report(["closability", "--lambda", "power:1.5"])["result"]["verdict"] == "diverges"


def test_basis():
    res = report(["basis", "--max-level", "6", "-d", "2"])["result"]
    assert res["passed"]


def test_energy_and_generator():
    res = report(["energy", "--lambda", "power:1", "--F", "x1(1/2)", "--G", "x1(1/2)", "--samples", "50"])["result"]
    assert res["energy"]["value"] == pytest.approx(0.75)
    res = report(["generator", "--F", "x1(1)", "--G", "x1(1)", "--samples", "2000", "--level", "3"])["result"]
    assert res["default_sign_passes"]


def test_report_metadata():
    rep = report(["closability", "--lambda", "constant"], environ={"SEED": "5"})
    assert rep["seed"] == 5 and rep["version"] == f"v{__version__}"
    assert rep["config_hash"] == config_hash(rep["config"])
    assert "threads" not in rep["config"] and "out" not in rep["config"]


def test_seed_flag_overrides_environment():
    assert report(["closability", "--seed", "9"], environ={"SEED": "5"})["seed"] == 9


def test_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('lambda = "power:1.5"\ndepth = 20\n')
    rep = report(["closability", "--config", str(cfg)])
    assert rep["result"]["verdict"] == "diverges" and rep["config"]["depth"] == 20


def test_unknown_key_is_a_config_error(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('lamda = "power:1.5"\n')
    assert call(["closability", "--config", str(cfg)])[0] == EXIT_CONFIG
    assert call(["closability", "--set", "lamda=1"])[0] == EXIT_CONFIG


@pytest.mark.parametrize(
    "argv",
    [
        ["closability", "--set", "depth=1.5"],
        ["closability", "--lambda", "cubic"],
        ["moments", "--weight", "cosh"],
        ["generator", "--F", "x1(1/3)"],
        ["closability", "--drift-sign", "oracle", "--set", "samples=1"],
    ],
)
def test_config_errors(argv):
    assert call(argv)[0] == EXIT_CONFIG


def test_bad_seed_environment():
    assert call(["closability"], environ={"SEED": "x"})[0] == EXIT_CONFIG


def test_numerical_failures():
    argv = ["moments", "--drift-sign", "paper", "--dt", "1", "--horizon", "2000",
            "--set", "t_ladder=[2000.0]", "--set", "indices=[1]", "--samples", "10"]
    assert call(argv)[0] == EXIT_NUMERIC
    assert call(["energy", "--F", "x1(1/3)", "--lambda", "power:1.5", "--samples", "10"])[0] == EXIT_NUMERIC


def test_outputs_written(tmp_path):
    out = tmp_path / "out"
    code, text = call(["moments", "--samples", "500", "--out", str(out), "--set", 'eval_s="1/2"'])
    assert code == EXIT_OK
    assert (out / "moments.json").read_text() == text
    for name in ("first_moment.csv", "second_moment.csv", "evaluation_moment.csv"):
        assert (out / name).read_text().startswith("index,t,empirical_rate,se,analytic_target,pass\n")


def test_moments_deterministic_across_threads():
    # 17000 samples span three blocks
    base = ["moments", "--weight", "trig", "--seed", "7", "--samples", "17000", "--level", "3"]
    _, a = call(base + ["--threads", "1"])
    _, b = call(base + ["--threads", "3"])
    _, c = call(base + ["--threads", "3"])
    assert a == b == c


def test_simulate():
    res = report(["simulate", "--samples", "200", "--truncation", "2"])["result"]
    assert len(res["coordinates"]) == 2 and res["steps"] == 100
