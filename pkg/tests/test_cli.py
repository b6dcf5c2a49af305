import json

import numpy as np
import pytest

from hyperbolic_nbody import cli
from hyperbolic_nbody.acceptance import CriterionResult


def write_config(tmp_path, **kw):
    cfg = {
        "masses": [1.0, 2.0],
        "dimension": 2,
        "initial_configurations": [[[-1.0, 0.0], [0.5, 0.0]]],
        "initial_velocities": [[[0.0, -1.4], [0.0, 0.7]]],
        "limit_shape": [[-1.0, 0.0], [0.5, 0.0]],
    }
    cfg.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


class TestDumps:
    def test_float_format(self):
        s = cli.dumps({"a": 0.1, "b": [1, np.float64(2.5)], "c": np.array([1.0 / 3.0])})
        obj = json.loads(s)
        assert obj["a"] == 0.1 and obj["c"][0] == 1.0 / 3.0
        assert "0.10000000000000001" in s

    def test_nonfinite_is_null(self):
        assert json.loads(cli.dumps({"x": float("inf"), "y": float("nan")})) == {"x": None, "y": None}

    def test_bools_and_nesting(self):
        s = cli.dumps({"ok": np.bool_(True), "rows": [{"k": 1}], "empty": [], "none": {}})
        assert json.loads(s) == {"ok": True, "rows": [{"k": 1}], "empty": [], "none": {}}


class TestExitCodes:
    def test_missing_config(self, tmp_path, monkeypatch):
        monkeypatch.delenv("HNB_CONFIG", raising=False)
        assert cli.main(["shoot", "--out", str(tmp_path)]) == 2

    def test_schema_violation(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"dimension": 2}))
        assert cli.main(["shoot", "--config", str(p), "--out", str(tmp_path)]) == 2
        assert "masses" in capsys.readouterr().err

    def test_collision_in_limit_shape(self, tmp_path, capsys):
        p = write_config(tmp_path, limit_shape=[[0.0, 0.0], [0.0, 0.0]])
        assert cli.main(["shoot", "--config", str(p), "--out", str(tmp_path)]) == 2
        assert "bodies 0 and 1" in capsys.readouterr().err

    def test_numerical_failure(self, tmp_path, capsys):
        # a bound pair: the limit shape does not exist
        p = write_config(tmp_path, initial_velocities=[[[0.0, -0.2], [0.0, 0.1]]])
        assert cli.main(["limit-shape", "--config", str(p), "--out", str(tmp_path)]) == 1
        assert "numerical failure" in capsys.readouterr().err

    def test_bad_tol_scale(self, tmp_path):
        p = write_config(tmp_path)
        assert cli.main(["shoot", "--config", str(p), "--tol-scale", "-1", "--out", str(tmp_path)]) == 2


class TestRuns:
    def test_limit_shape_report(self, tmp_path):
        p = write_config(tmp_path)
        assert cli.main(["limit-shape", "--config", str(p), "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "limit-shape.json").read_text())
        assert rep["status"] == "ok" and rep["command"] == "limit-shape"
        assert len(rep["config_sha256"]) == 64

    def test_shoot_is_deterministic(self, tmp_path):
        outs = []
        for k in range(2):
            d = tmp_path / f"run{k}"
            assert cli.main(["shoot", "--config", "kepler", "--out", str(d)]) == 0
            outs.append((d / "shoot.json").read_bytes())
        assert outs[0] == outs[1]

    def test_env_and_flag_precedence(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HNB_CONFIG", "kepler")
        monkeypatch.setenv("HNB_OUT", str(tmp_path / "env"))
        monkeypatch.setenv("HNB_SEED", "7")
        assert cli.main(["limit-shape"]) == 0
        assert json.loads((tmp_path / "env" / "limit-shape.json").read_text())["seed"] == 7
        assert cli.main(["limit-shape", "--seed", "3", "--out", str(tmp_path / "flag")]) == 0
        assert json.loads((tmp_path / "flag" / "limit-shape.json").read_text())["seed"] == 3

    def test_bad_env_value(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HNB_SEED", "seven")
        assert cli.main(["limit-shape", "--config", "kepler", "--out", str(tmp_path)]) == 2

    def test_verify_plumbing(self, tmp_path, monkeypatch):
        import hyperbolic_nbody.acceptance as acc

        def fake(seed=0, numbers=None, echo=None):
            res = [CriterionResult(1, "one", True, "fine", {}, 0.0), CriterionResult(2, "two", False, "broken", {}, 0.0)]
            for r in res:
                echo(r.line())
            return res

        monkeypatch.setattr(acc, "run_all", fake)
        assert cli.main(["verify", "--out", str(tmp_path)]) == 1
        rep = json.loads((tmp_path / "verify.json").read_text())
        assert rep["status"] == "failed" and not rep["all_passed"]
        assert [c["passed"] for c in rep["criteria"]] == [True, False]

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0
        assert "hnb" in capsys.readouterr().out
