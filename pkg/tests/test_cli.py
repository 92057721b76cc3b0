import csv
import json

import numpy as np
import pytest

from steklov import __version__, validation
from steklov.cli import config_hash, main


def write(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith(f"# steklov {__version__} ")
    return list(csv.DictReader(lines[1:]))


def test_solve_unit_disk(tmp_path):
    cfg = write(tmp_path, "c.json", {"domain": {"geometry": {"centers": [], "radii": []}},
                                     "solver": {"M": 10, "n_samples": 200, "k_max": 6},
                                     "boundary_traces": True})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "spectrum.csv")
    vals = [float(r["eigenvalue"]) for r in rows]
    np.testing.assert_allclose(vals, [0, 1, 1, 2, 2, 3, 3], atol=1e-10)
    assert [int(r["multiplicity_cluster_id"]) for r in rows] == [0, 1, 1, 2, 2, 3, 3]
    assert float(rows[1]["sigma_times_length"]) == pytest.approx(2 * np.pi)
    assert (tmp_path / "o" / "trace_3.csv").exists()
    meta = json.loads((tmp_path / "o" / "solve.json").read_text())["meta"]
    assert meta["version"] == __version__
    assert meta["config_sha256"] == config_hash(json.loads(open(cfg).read()))


def test_solve_hippopede_fixture(tmp_path):
    cfg = write(tmp_path, "c.json", {"domain": {"fixture": {"name": "hippopede", "params": {"alpha": 0.1}}},
                                     "solver": {"M": 400, "n_samples": 8000, "k_max": 10}})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    vals = np.array([float(r["eigenvalue"]) for r in read_csv(tmp_path / "o" / "spectrum.csv")])
    # the first five tabulated values are reproduced to 1e-6
    np.testing.assert_allclose(vals[1:6], [0.37968380, 1.99258587, 2.02351398, 2.20444005, 2.78126086],
                               atol=1e-6)


def test_solve_four_hole(tmp_path):
    geo = {"centers": [[0.4, 0], [0, 0.4], [-0.4, 0], [0, -0.4]], "radii": [0.1] * 4}
    cfg = write(tmp_path, "c.json", {"domain": {"geometry": geo}, "solver": {"M": 10, "n_samples": 5000,
                                                                              "k_max": 6}})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    vals = [float(r["eigenvalue"]) for r in read_csv(tmp_path / "o" / "spectrum.csv")][1:]
    np.testing.assert_allclose(vals, [0.838384477352, 0.838384477353, 1.870726063693,
                                      1.918875138210, 2.957282822263, 2.957282822263], atol=1e-8)


def test_oracle(tmp_path):
    cfg = write(tmp_path, "c.json", {"j": [1, 3]})
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "oracle.csv")
    assert [int(r["j"]) for r in rows] == [1, 3]
    assert float(rows[0]["sigma_L"]) == pytest.approx(10.4748, abs=1e-3)
    assert float(rows[1]["sigma_L"]) == pytest.approx(20.9496, abs=1e-3)
    assert int(rows[1]["multiplicity"]) == 3


@pytest.mark.parametrize("payload", [
    {"domain": {}, "bogus": 1},
    {"domain": {"geometry": {"centers": [[0.6, 0]], "radii": [0.5]}}},
    {"domain": {"fixture": {"name": "hippopede", "params": {"alpha": 2.0}}}},
    {"domain": {"geometry": {"centers": [[0, 0]], "radii": [0.3]},
                "density": {"fourier_order": 0, "density": [{"a": [1]}]}}},
    {"solver": {"M": 10}},
])
def test_config_errors(tmp_path, payload, capsys):
    cfg = write(tmp_path, "c.json", payload)
    assert main(["solve", "--config", cfg]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["exit_code"] == 2


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # asking for more eigenvalues than the discretization supports
    cfg = write(tmp_path, "c.json", {"domain": {}, "solver": {"M": 2, "n_samples": 16, "k_max": 30}})
    assert main(["solve", "--config", cfg]) == 3


def test_surface_refuses_planar_export(tmp_path):
    cfg = write(tmp_path, "c.json", {"domain": {}, "solver": {"M": 10, "n_samples": 200},
                                     "restarts": 0, "quad_count": 300})
    assert main(["surface", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    m = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert "R^2" in m["export"] and m["metrics"]["sphere_error"] < 1e-8


def test_surface_catenoid(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "domain": {"fixture": {"name": "annulus", "params": {"s": 0.0907762782269, "rho_s": 11.016117,
                                                             "rho_1": 1.0}}},
        "solver": {"M": 20, "n_samples": 3000}, "restarts": 1, "resolution": 60, "quad_count": 2000})
    assert main(["surface", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    m = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert m["cluster_indices"] == [1, 2, 3]
    assert m["metrics"]["sphere_error"] < 1e-3
    obj = (tmp_path / "o" / "surface.obj").read_text().splitlines()
    assert obj[0].startswith("# steklov")
    assert sum(l.startswith("f ") for l in obj) == m["export"]["faces"]
    read_csv(tmp_path / "o" / "surface_vertices.csv")


def test_optimize_resume_and_surface(tmp_path):
    cfg = write(tmp_path, "c.json", {"problem": {"n_components": 2, "max_iter": 6, "order": 2,
                                                 "basis_order": 10, "n_samples": 400},
                                     "checkpoint_every": 3})
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "5"]) == 0
    res = json.loads((tmp_path / "o" / "result.json").read_text())
    assert res["iterations"] == 6 and res["problem"]["seed"] == 5
    assert len(res["sigma_tilde_history"]) == 6
    ck = json.loads((tmp_path / "o" / "checkpoint.json").read_text())
    assert ck["meta"]["config_sha256"] == res["meta"]["config_sha256"]
    assert main(["resume", "--resume", str(tmp_path / "o" / "checkpoint.json"),
                 "--out", str(tmp_path / "r")]) == 0
    # max_iter is part of the checkpointed problem, so nothing is left to do
    assert json.loads((tmp_path / "r" / "result.json").read_text())["iterations"] == 6
    assert len(read_csv(tmp_path / "o" / "iterations.csv")) == 6
    scfg = write(tmp_path, "s.json", {"result": str(tmp_path / "o" / "result.json"), "restarts": 0,
                                      "resolution": 30, "quad_count": 500, "cluster_rtol": 0.5})
    code = main(["surface", "--config", scfg, "--out", str(tmp_path / "s")])
    assert code in (0, 3)
    assert (tmp_path / "s" / "metrics.json").exists()


def test_resume_needs_path():
    assert main(["resume"]) == 2


def test_optimize_bad_problem(tmp_path):
    cfg = write(tmp_path, "c.json", {"problem": {"n_components": 3}, "init": {"kind": "annulus"}})
    assert main(["optimize", "--config", cfg]) == 2


def test_gradcheck(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"domain": {"geometry": {"centers": [[0.2, -0.1]], "radii": [0.3]},
                                                "density": {"fourier_order": 1, "density": [
                                                    {"a": [1, 0.1], "b": [0, 0.05]}, {"a": [1, 0], "b": [0, 0.1]}]}},
                                     "solver": {"M": 20, "n_samples": 1500}, "directions": 3})
    assert main(["gradcheck", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "gradcheck.csv")
    assert len(rows) == 3
    assert max(float(r["relative_error"]) for r in rows) < 1e-5


def test_gradcheck_refuses_cluster(tmp_path):
    cfg = write(tmp_path, "c.json", {"domain": {}, "solver": {"M": 10, "n_samples": 200}})
    assert main(["gradcheck", "--config", cfg]) == 3


def test_validate_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(validation, "FAST", [validation.check_a1])
    assert main(["validate", "--out", str(tmp_path / "v")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("A1") and "PASS" in out
    # corrupting one oracle constant fails only that criterion
    monkeypatch.setattr(validation, "ANNULUS_ROWS", {1: (10.5748, 0.0908)})
    monkeypatch.setattr(validation, "FAST", [validation.check_a1, validation.check_a5])
    assert main(["validate", "--out", str(tmp_path / "v")]) == 4
    rep = json.loads((tmp_path / "v" / "validation.json").read_text())
    assert [r["passed"] for r in rep["results"]] == [True, False]


def test_crashing_check_is_a_failure(monkeypatch):
    def check_a99():
        raise RuntimeError("boom")

    monkeypatch.setattr(validation, "FAST", [check_a99])
    res = validation.run_suite("fast", stream=None)
    assert res[0].name == "A99" and not res[0].passed and "boom" in res[0].details["exception"]


def test_deterministic_outputs(tmp_path):
    cfg = write(tmp_path, "c.json", {"domain": {"geometry": {"centers": [[0.3, 0.1]], "radii": [0.2]}},
                                     "solver": {"M": 12, "n_samples": 600, "k_max": 6}})
    for k in "ab":
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / k), "--seed", "7"]) == 0
    assert (tmp_path / "a" / "spectrum.csv").read_bytes() == (tmp_path / "b" / "spectrum.csv").read_bytes()
    assert (tmp_path / "a" / "solve.json").read_bytes() == (tmp_path / "b" / "solve.json").read_bytes()


def test_bad_seed():
    assert main(["solve", "--seed", "-1"]) == 2
