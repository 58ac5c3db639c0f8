from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from rs_regime.cli import load_surface, run
from rs_regime.hjb import closed_form_no_jump
from rs_regime.market import constant_model
from rs_regime.models import model_m2, random_no_jump_model


def _setup(tmp_path, model, name="model.json", **cfg):
    (tmp_path / name).write_text(json.dumps(model.to_dict() if hasattr(model, "to_dict")
                                            else model))
    conf = {"model_path": name, "output_path": "out", "grid": {"n_steps": 50}, **cfg}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(conf))
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve_no_jump_matches_closed_form(tmp_path):
    m = random_no_jump_model(np.random.default_rng(4), 2, 2)
    cfg = _setup(tmp_path, m)
    assert run(["solve", "--config", str(cfg)]) == 0
    rows = _rows(tmp_path / "out" / "surface.csv")
    assert set(rows[0]) >= {"t", "state", "u", "v", "h_1", "h_2", "min_diag"}
    for r in rows[::7]:
        u, v = closed_form_no_jump(m, float(r["t"]))
        i = int(r["state"])
        assert float(r["u"]) == pytest.approx(u[i], rel=1e-6)
        assert float(r["v"]) == pytest.approx(v[i], rel=1e-6, abs=1e-9)
        assert r["min_diag"] == ""          # no jump constraints


def test_missing_theta_exits_2(tmp_path, capsys):
    d = model_m2().to_dict()
    del d["theta"]
    cfg = _setup(tmp_path, d)
    assert run(["solve", "--config", str(cfg)]) == 2
    assert "theta required and > 0" in capsys.readouterr().err


def test_solve_two_regime(tmp_path):
    cfg = _setup(tmp_path, model_m2())
    assert run(["solve", "--config", str(cfg)]) == 0
    doc = json.loads((tmp_path / "out" / "surface.json").read_text())
    u = np.array(doc["u"])
    assert np.all(np.diff(u, axis=0) >= 0)
    assert doc["invariant_violations"] == []
    assert max(a["star_residual"] for a in doc["allocations"]) <= 1e-6
    surf = load_surface(tmp_path / "out" / "surface.json")
    np.testing.assert_array_equal(surf.u, u)


def test_outputs_need_force(tmp_path, capsys):
    cfg = _setup(tmp_path, model_m2())
    assert run(["solve", "--config", str(cfg)]) == 0
    assert run(["solve", "--config", str(cfg)]) == 2
    assert "--force" in capsys.readouterr().err
    assert run(["solve", "--config", str(cfg), "--force"]) == 0


def test_bad_configs_exit_2(tmp_path):
    cfg = _setup(tmp_path, model_m2(), tolerances={"ode": 0.0})
    assert run(["solve", "--config", str(cfg)]) == 2
    assert run(["solve", "--config", str(tmp_path / "nope.json")]) == 2
    cfg = _setup(tmp_path, model_m2(), grid={"n_steps": 1})
    assert run(["solve", "--config", str(cfg)]) == 2


def test_simulate_requires_seed_and_surface(tmp_path):
    cfg = _setup(tmp_path, model_m2(), strategy={"constant": [0.5]})
    assert run(["simulate", "--config", str(cfg)]) == 2          # no seed
    cfg = _setup(tmp_path, model_m2(), mc={"seed": 1, "n_paths": 1000},
                 strategy={"surface": "missing.json"})
    assert run(["simulate", "--config", str(cfg)]) == 2


def test_simulate_against_surface(tmp_path):
    cfg = _setup(tmp_path, model_m2())
    assert run(["solve", "--config", str(cfg), "--output", str(tmp_path / "solved")]) == 0
    cfg = _setup(tmp_path, model_m2(), mc={"seed": 3, "n_paths": 20000, "i0": 1,
                                           "dump_paths": True},
                 strategy={"surface": "solved/surface.json"})
    assert run(["simulate", "--config", str(cfg)]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())[0]
    assert rep["verdict"] == "pass" and rep["n_paths"] == 20000
    assert len(_rows(tmp_path / "out" / "paths.csv")) == 20000


def test_verify_commands(tmp_path):
    cfg = _setup(tmp_path, model_m2(), mc={"seed": 4, "n_paths": 50000},
                 strategy={"constant": [0.5]})
    assert run(["verify-martingale", "--config", str(cfg)]) == 0
    assert run(["verify-generator", "--config", str(cfg), "--force"]) == 0
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert {r["from"] for r in doc["rates"]} == {0, 1}


def test_generator_check_rejects_time_varying_strategy(tmp_path):
    cfg = _setup(tmp_path, model_m2())
    assert run(["solve", "--config", str(cfg), "--output", str(tmp_path / "solved")]) == 0
    cfg = _setup(tmp_path, model_m2(), mc={"seed": 4, "n_paths": 1000},
                 strategy={"surface": "solved/surface.json"})
    assert run(["verify-generator", "--config", str(cfg)]) == 2


def test_kelly_command(tmp_path):
    cfg = _setup(tmp_path, model_m2())
    assert run(["kelly", "--config", str(cfg)]) == 0
    rows = _rows(tmp_path / "out" / "kelly.csv")
    assert len(rows) == 2
    assert all(float(r["residual"]) <= 1e-8 for r in rows)


def test_compare_symmetric_model(tmp_path):
    from rs_regime.jumps import JumpLaw
    law = JumpLaw.point_mass([-0.1])
    m = constant_model([[-1.0, 1.0], [1.0, -1.0]], [[0.07], [0.07]], [[[0.2]], [[0.2]]],
                       [0.02, 0.02], 1.0, 1.0, jump_laws={(0, 1): law, (1, 0): law})
    cfg = _setup(tmp_path, m)
    assert run(["compare-independent", "--config", str(cfg)]) == 0
    doc = json.loads((tmp_path / "out" / "compare.json").read_text())
    for r in doc["states"]:
        assert r["u_coinciding"] == pytest.approx(r["u_independent"], abs=1e-14)
        assert r["h_coinciding"][0] == pytest.approx(r["h_independent"][0], abs=1e-10)


def test_compare_no_jumps_identical(tmp_path):
    cfg = _setup(tmp_path, model_m2(with_jumps=False))
    assert run(["compare-independent", "--config", str(cfg)]) == 0
    for r in json.loads((tmp_path / "out" / "compare.json").read_text())["states"]:
        assert r["u_coinciding"] == r["u_independent"]
        assert r["h_coinciding"] == r["h_independent"]


def test_compare_two_regime(tmp_path):
    cfg = _setup(tmp_path, model_m2())
    assert run(["compare-independent", "--config", str(cfg)]) == 0
    s0 = json.loads((tmp_path / "out" / "compare.json").read_text())["states"][0]
    assert s0["predicted"] == "more_risk_averse"
    assert abs(s0["h_coinciding"][0]) <= abs(s0["h_independent"][0])


def test_threads_from_environment(tmp_path, monkeypatch):
    cfg = _setup(tmp_path, model_m2(), mc={"seed": 9, "n_paths": 20000},
                 strategy={"constant": [0.5]})
    assert run(["verify-martingale", "--config", str(cfg), "--threads", "1"]) == 0
    one = (tmp_path / "out" / "report.json").read_bytes()
    monkeypatch.setenv("RS_REGIME_THREADS", "4")
    assert run(["verify-martingale", "--config", str(cfg), "--force"]) == 0
    assert (tmp_path / "out" / "report.json").read_bytes() == one
    monkeypatch.setenv("RS_REGIME_THREADS", "four")
    assert run(["verify-martingale", "--config", str(cfg), "--force"]) == 2


def test_seed_override_changes_result(tmp_path):
    cfg = _setup(tmp_path, model_m2(), mc={"seed": 9, "n_paths": 5000},
                 strategy={"constant": [0.5]})
    run(["simulate", "--config", str(cfg)])
    a = json.loads((tmp_path / "out" / "report.json").read_text())[0]
    run(["simulate", "--config", str(cfg), "--force", "--seed", "10"])
    b = json.loads((tmp_path / "out" / "report.json").read_text())[0]
    assert a["seed"] == 9 and b["seed"] == 10 and a["estimate"] != b["estimate"]


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = _setup(tmp_path, model_m2(), tolerances={"grad": 1e-300})
    assert run(["solve", "--config", str(cfg)]) == 3
    assert "numerical failure" in capsys.readouterr().err
