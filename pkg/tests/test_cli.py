"""Command-line interface: schemas, exit codes, determinism."""

import json

import numpy as np
import pytest

from itu_match.cli import EXIT_CONVERGENCE, EXIT_OK, EXIT_VALIDATION, main


@pytest.fixture
def market_file(tmp_path):
    market = {
        "men": [{"label": "x1", "n": 1.0}],
        "women": [{"label": "y1", "m": 1.0}],
        "tech": {"x1|y1": {"type": "TU", "phi": 0.0}},
        "sigma": 1.0,
    }
    path = tmp_path / "market.json"
    path.write_text(json.dumps(market))
    return str(path)


@pytest.fixture
def model_file(tmp_path):
    model = {
        "men": ["x1", "x2"],
        "women": ["y1", "y2"],
        "family": {
            "type": "TU",
            "phi": {
                "base": [[0.0, 0.0], [0.0, 0.0]],
                "basis": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]],
            },
        },
    }
    path = tmp_path / "model.json"
    path.write_text(json.dumps(model))
    return str(path)


def read_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_solve_shipped_example(market_file, tmp_path, capsys):
    out_path = tmp_path / "result.json"
    code = main(["solve", "--input", market_file, "--output", str(out_path)])
    assert code == EXIT_OK
    payload = read_json(capsys)
    assert payload["result"]["mu_xy"] == [[pytest.approx(0.5, abs=1e-9)]]
    assert payload["result"]["mu_x0"][0] == pytest.approx(0.5, abs=1e-9)
    assert payload["config"]["command"] == "solve"
    assert out_path.exists()


def test_solve_jacobi_option(market_file, capsys):
    assert main(["solve", "--input", market_file, "--solver", "jacobi"]) == EXIT_OK
    payload = read_json(capsys)
    assert payload["result"]["W"][0][0] == pytest.approx(0.0, abs=1e-8)


def test_validation_error_names_field(tmp_path, capsys):
    bad = {
        "men": [{"label": "x1", "n": 1.0}],
        "women": [{"label": "y1", "m": 1.0}],
        "tech": {"x1|y1": {"type": "ETU", "alpha": 0, "gamma": 0, "tau": -2.0, "budget": 2}},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["solve", "--input", str(path)]) == EXIT_VALIDATION
    payload = read_json(capsys)
    assert payload["error"]["type"] == "validation"
    assert payload["error"]["field"] == "tau"


def test_convergence_failure_exit_code(market_file, capsys):
    code = main(["solve", "--input", market_file, "--tol", "1e-15", "--max-iter", "3"])
    assert code == EXIT_CONVERGENCE
    payload = read_json(capsys)
    assert payload["error"]["type"] == "convergence"
    assert "residual" in payload["error"]


def test_verify_only_round_trip(market_file, tmp_path, capsys):
    out_path = tmp_path / "result.json"
    main(["solve", "--input", market_file, "--output", str(out_path)])
    capsys.readouterr()
    code = main(["solve", "--input", market_file, "--verify-only", str(out_path)])
    assert code == EXIT_OK
    payload = read_json(capsys)
    first = json.loads(out_path.read_text())["verification"]
    again = payload["verification"]
    for key, val in first.items():
        assert again[key] == pytest.approx(val, abs=1e-12)


def test_simulate_estimate_round_trip_deterministic(model_file, tmp_path, capsys):
    theta = "[1.0, -0.5, 0.1, 0.2, -0.1, 0.3]"
    sample_path = tmp_path / "sample.csv"
    args = [
        "simulate",
        "--model",
        model_file,
        "--theta",
        theta,
        "--n-households",
        "30000",
        "--seed",
        "0",
        "--output",
        str(sample_path),
    ]
    assert main(args) == EXIT_OK
    first_csv = sample_path.read_text()
    capsys.readouterr()
    assert main(args) == EXIT_OK
    assert sample_path.read_text() == first_csv  # seeded determinism
    capsys.readouterr()

    est_args = ["estimate", "--input", str(sample_path), "--model", model_file]
    assert main(est_args) == EXIT_OK
    lam1 = read_json(capsys)["result"]["lambda"]
    assert main(est_args) == EXIT_OK
    lam2 = read_json(capsys)["result"]["lambda"]
    assert lam1 == lam2
    assert lam1[0] == pytest.approx(1.0, abs=0.1)
    assert lam1[1] == pytest.approx(-0.5, abs=0.1)


def test_full_assignment_flag_switches_mode(tmp_path, capsys):
    market = {
        "men": [{"label": "x1", "n": 1.0}],
        "women": [{"label": "y1", "m": 1.0}],
        "tech": {"x1|y1": {"type": "TU", "phi": 0.0}},
        "full_assignment": True,
    }
    path = tmp_path / "full.json"
    path.write_text(json.dumps(market))
    assert main(["solve", "--input", str(path)]) == EXIT_OK
    payload = read_json(capsys)
    assert payload["result"]["mu_xy"] == [[pytest.approx(1.0, abs=1e-9)]]
    assert payload["result"]["a"] == [0.0]
    assert payload["result"]["normalization"]["side"] == "x"


def test_solve_full_command(tmp_path, capsys):
    market = {
        "men": [{"label": "x1", "n": 1.0}, {"label": "x2", "n": 1.0}],
        "women": [{"label": "y1", "m": 2.0}],
        "tech": {
            "x1|y1": {"type": "TU", "phi": 0.5},
            "x2|y1": {"type": "LTU", "lambda": 1.0, "zeta": 1.0, "phi": -0.2},
        },
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(market))
    assert main(["solve-full", "--input", str(path), "--pin", "y:0", "--pin-value", "0.3"]) == EXIT_OK
    payload = read_json(capsys)
    assert payload["result"]["b"] == [0.3]
    mu = np.array(payload["result"]["mu_xy"])
    assert mu.sum(axis=0)[0] == pytest.approx(2.0, abs=1e-9)


def test_compstats_command(tmp_path, capsys):
    market = {
        "men": [{"label": "x1", "n": 1.0}],
        "women": [{"label": "y1", "m": 2.0}],
        "tech": {"x1|y1": {"type": "TU", "phi": 1.0}},
        "delta_n": [0.01],
        "delta_m": [0.0],
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(market))
    assert main(["compstats", "--input", str(path)]) == EXIT_OK
    payload = read_json(capsys)
    res = payload["result"]
    assert res["delta_U"][0][0] < 0.0 < res["delta_V"][0][0]
    assert "symmetry" in res


def test_search_command(market_file, capsys):
    code = main(["search", "--input", market_file, "--rho", "1.0", "--delta", "1.0", "--r", "0.05"])
    assert code == EXIT_OK
    payload = read_json(capsys)
    assert "u" in payload["result"] and "accept" in payload["result"]
    assert payload["config"]["rho"] == 1.0


def test_one_to_many_command(tmp_path, capsys):
    economy = {
        "workers": [{"label": "w1", "n": 1.0}],
        "firms": [{"label": "f1", "m": 1.0}],
        "phi": {"b=[0]": {"f1": 0.0}, "b=[1]": {"f1": 2.0}},
    }
    path = tmp_path / "eco.json"
    path.write_text(json.dumps(economy))
    code = main(["one-to-many", "--input", str(path), "--max-bundle-size", "1"])
    assert code == EXIT_OK
    payload = read_json(capsys)
    assert payload["result"]["experimental"] is True
    assert payload["result"]["converged"] is True
    assert payload["result"]["bundles"] == ["b=[0]", "b=[1]"]


def test_byte_identical_reruns(market_file, tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    main(["solve", "--input", market_file, "--output", str(p1)])
    main(["solve", "--input", market_file, "--output", str(p2)])
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_export(market_file, tmp_path):
    out = tmp_path / "res.csv"
    assert main(["solve", "--input", market_file, "--format", "csv", "--output", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "# result.mu_xy" in text


def test_missing_input_is_validation_error(capsys):
    assert main(["solve", "--input", "/nonexistent/m.json"]) == EXIT_VALIDATION
    payload = read_json(capsys)
    assert payload["error"]["type"] == "validation"
