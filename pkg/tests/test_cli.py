import json

import pytest

from c3cert.cli import main
from c3cert.config import ConfigError, load_config, resolve
from c3cert.fixtures import load_table, table_document
from c3cert.pipeline import spec_for_certificate


def test_defaults_materialized():
    cfg = resolve({})
    doc = json.loads(cfg.dumps())
    assert doc["solver"]["tol_feas"] == 1e-11 and doc["input_grid"] == 8
    assert doc["degrees"]["max"] == 4


@pytest.mark.parametrize("doc,msg", [
    ({"constants": {"xi": 0.0}}, "xi"),
    ({"constants": {"xi": -1}}, "xi"),
    ({"simulate": {"horizon": 0}}, "horizon"),
    ({"bogus": 1}, "unknown config key"),
    ({"solver": {"nope": 1}}, "unknown config key"),
    ({"mode": "parity"}, "automaton"),
    ({"system": "chain", "mode": "finite"}, "simulation-only"),
    ({"system": "hopf", "mode": "verify-only"}, "verify_input"),
    ({"degrees": {"T": 5, "max": 4}}, "degrees.max"),
    ({"system": "pendulum"}, "unknown system"),
])
def test_schema_rejections(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        resolve(doc)


def test_inline_system():
    cfg = resolve({"system": {"state_vars": ["x1"], "f": ["x1/2 + u1"], "X": {"box": [[-1, 1]]},
                              "X0": {"box": [[0, 0.1]]}, "U": {"box": [[0, 0]]}},
                   "mode": "finite", "sets": {"X_VF": {"box": [[0.5, 1]]}}})
    assert cfg.system.name == "inline" and cfg.sets["X_VF"].bbox == ((0.5, 1.0),)


def test_cli_config_error_exit(tmp_path, capsys):
    assert main(["synth", "--xi", "0", "--out", str(tmp_path)]) == 4
    assert "xi" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["synth", "--config", str(bad)]) == 4


def test_cli_check_table(tmp_path):
    out = tmp_path / "o"
    code = main(["check", "--cert", "table:1", "--system", "hopf", "--mode", "finite", "--samples", "2000",
                 "--eps", "1e-3", "--out", str(out)])
    assert code == 0
    for f in ("config.resolved.json", "check.json", "check.txt", "check_margins.csv", "check_margins.png"):
        assert (out / f).exists()


def test_cli_check_malformed_row(tmp_path, capsys):
    doc = table_document(1)
    doc["rows"][0]["coefficients"] = doc["rows"][0]["coefficients"][:-2]
    from c3cert.fixtures import rows_digest
    doc["digest"] = rows_digest(doc)
    p = tmp_path / "t.json"
    p.write_text(json.dumps(doc))
    assert main(["check", "--cert", str(p), "--system", "hopf", "--mode", "finite", "--out", str(tmp_path)]) == 4
    assert "'T'" in capsys.readouterr().err


def test_cli_simulate(tmp_path):
    out = tmp_path / "s"
    code = main(["simulate", "--cert", "table:3", "--system", "hopf", "--mode", "fin_inf", "--rollouts", "5",
                 "--horizon", "100", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "simulation.json").read_text())["summary"]
    assert summary["rollouts"] == 5 and summary["finite_proxy_rate"] == 1.0
    assert (out / "trajectories" / "rollout_000.csv").exists()
    assert (out / "trajectories.png").exists() and (out / "rollouts.csv").exists()


def test_cli_export_sdpa(tmp_path):
    out = tmp_path / "e"
    assert main(["export-sdpa", "--system", "hopf", "--mode", "finite", "--deg", "2", "--grid", "2",
                 "--out", str(out)]) == 0
    text = (out / "problem.dat-s").read_text().splitlines()
    assert text[0].startswith('"') and (out / "program.json").exists()


def test_cli_synth_small(tmp_path):
    out = tmp_path / "y"
    code = main(["synth", "--system", "hopf", "--mode", "finite", "--deg", "2", "--deg-max", "2", "--grid", "2",
                 "--samples", "2000", "--out", str(out), "--no-figures"])
    attempts = json.loads((out / "attempts.json").read_text())["attempts"]
    assert len(attempts) == 1 and attempts[0]["deg_T"] == 2
    adir = out / "attempts" / "finite-deg2"
    for f in ("program.json", "problem.dat-s", "solver.json"):
        assert (adir / f).exists()
    if attempts[0]["status"] == "feasible" and attempts[0]["check"] == "pass":
        assert code == 0 and (out / "certificate.json").exists()
    else:
        assert code == 3


def test_parity_all_even(tmp_path):
    dpa = tmp_path / "even.dpa"
    dpa.write_text("alphabet: a b\nstates: 1\ninitial: 1\npriority: 2\ntrans: 1 a 1\ntrans: 1 b 1\n")
    code = main(["parity", "--automaton", str(dpa), "--out", str(tmp_path / "p"), "--no-figures"])
    assert code == 0
    assert json.loads((tmp_path / "p" / "attempts.json").read_text())["attempts"] == []


def test_rebuilt_spec_uses_recorded_grid_and_constants():
    cert = load_table(6)
    cert.meta["U_d"] = [[-3.0], [0.5]]
    cfg = load_config(None, {"system": "hopf_dpa", "automaton": "fig5", "mode": "parity"})
    spec = spec_for_certificate(cfg, cert)
    assert spec.U_d.inputs == ((-3.0,), (0.5,))
    assert spec.constants.xi == 0.01 and cfg.constants.xi == 0.1
