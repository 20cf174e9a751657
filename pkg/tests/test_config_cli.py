import json
import subprocess
import sys

import numpy as np
import pytest

from harmap.checks import run_suite
from harmap.cli import main
from harmap.config import ConfigError, config_from_dict, fixture_config, load_config
from harmap.report import CheckReport, dumps, loads


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
    return p


FLAT2 = {"manifold": {"dim": 2, "resolution": 16}, "metric": "flat", "tasks": ["bianchi"]}


class TestLoadConfig:
    def test_flat_config(self, tmp_path):
        cfg = load_config(write(tmp_path, FLAT2))
        assert (cfg.dim, cfg.resolution, cfg.tasks) == (2, 16, ["bianchi"])
        assert np.array_equal(cfg.domain_metric.g[:, :, 0, 0], np.eye(2))

    def test_overrides(self, tmp_path):
        cfg = load_config(write(tmp_path, FLAT2), resolution=8, seed=5)
        assert (cfg.resolution, cfg.seed) == (8, 5)

    def test_expression_metric(self, tmp_path):
        d = dict(FLAT2, metric={"11": "exp(0.2*sin(x1))", "12": "0", "22": "exp(0.2*sin(x1))"})
        g = load_config(write(tmp_path, d)).domain_metric
        assert g.g[0, 0, 4, 0] == pytest.approx(np.exp(0.2 * np.sin(np.pi / 2)), rel=1e-15)

    def test_indefinite_metric_names_node(self, tmp_path):
        d = dict(FLAT2, metric={"11": "1 + 2*sin(x1)", "12": "0", "22": "1"})
        with pytest.raises(ConfigError, match=r"not positive definite at node \(12, 0\)"):
            load_config(write(tmp_path, d))

    def test_non_periodic_displacement(self, tmp_path):
        d = dict(FLAT2, map={"winding": [[1, 0], [0, 1]], "displacement": ["x1", "0"]})
        with pytest.raises(ConfigError, match="displacement"):
            load_config(write(tmp_path, d))

    def test_malformed_json(self, tmp_path):
        with pytest.raises(ConfigError, match="malformed JSON"):
            load_config(write(tmp_path, "{\"manifold\": "))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")

    @pytest.mark.parametrize("bad,match", [
        ({"colour": 1}, "unknown configuration keys"),
        ({"manifold": {"dim": 4}}, "dim must be 2 or 3"),
        ({"manifold": {"dim": 2, "resolution": 7}}, "even"),
        ({"tasks": "bianchi"}, "list of strings"),
        ({"metric": {"fixture": "bump_t3"}}, "dimension 3"),
        ({"metric": {"fixture": "sphere"}}, "unknown fixture"),
        ({"metric": {"11": "1", "22": "1"}}, "missing"),
        ({"metric": {"11": "1 +", "12": "0", "22": "1"}}, "offset"),
        ({"tolerances": {"rel_tol": 2.0}}, "rel_tol"),
    ])
    def test_rejections(self, bad, match):
        d = dict(FLAT2)
        d.update(bad)
        if "manifold" in bad and "dim" not in bad["manifold"]:
            d["manifold"] = dict(FLAT2["manifold"], **bad["manifold"])
        with pytest.raises(ConfigError, match=match):
            config_from_dict(d)

    def test_fixture_config(self):
        cfg = fixture_config("conformal_t2", 8)
        assert cfg.dim == 2 and cfg.domain_metric.grid.shape == (8, 8)
        with pytest.raises(ConfigError):
            fixture_config("nope")

    def test_map_from_config(self, tmp_path):
        d = dict(FLAT2, map={"winding": [[2, 1], [1, 1]], "displacement": ["0.1*sin(x2)", "0"]})
        f = load_config(write(tmp_path, d)).build_map()
        assert f.winding.tolist() == [[2, 1], [1, 1]]


class TestReports:
    def test_round_trip(self):
        rep = CheckReport("x").add("a", 1e-9, 1e-6).add("b", float("inf")).note("n", np.float64(2.0))
        rep.skip("leg", "why")
        back = loads(dumps([rep]))[0]
        assert back.residuals == rep.residuals and back.skipped == rep.skipped
        assert dumps([back]) == dumps([rep])

    def test_status_logic(self):
        assert CheckReport("a").skip("l", "r").status == "skipped"
        assert CheckReport("a").add("r", 1.0, 0.5).status == "fail"
        assert CheckReport("a").add("r", 0.1, 0.5).skip("l", "r").status == "pass"
        assert CheckReport("a", error="boom").status == "fail"
        assert CheckReport("a").add("nan", float("nan"), 1.0).status == "fail"

    def test_unknown_task_does_not_abort(self):
        cfg = fixture_config("flat_t2", 8)
        reports, code = run_suite(cfg, ["bianchi", "no-such-task", "energy"])
        assert [r.status for r in reports] == ["pass", "fail", "pass"]
        assert "unknown task id" in reports[1].error
        assert code == 1


class TestCli:
    def test_exit_zero_and_deterministic_output(self, tmp_path, capsys):
        cfg = write(tmp_path, FLAT2)
        outs = []
        for k in range(2):
            out = tmp_path / f"r{k}.json"
            assert main(["suite", "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out.read_text())
        assert outs[0] == outs[1]
        assert "runtime_ms" not in outs[0]
        assert "PASS" in capsys.readouterr().out

    def test_timing_flag(self, tmp_path):
        out = tmp_path / "r.json"
        main(["suite", "--config", str(write(tmp_path, FLAT2)), "--out", str(out), "--timing"])
        assert "runtime_ms" in json.loads(out.read_text())[0]["metadata"]

    def test_exit_one_on_failure(self, tmp_path):
        d = dict(FLAT2, tasks=["bianchi", "no-such-task"])
        assert main(["suite", "--config", str(write(tmp_path, d))]) == 1

    def test_exit_two_on_config_error(self, tmp_path, capsys):
        d = dict(FLAT2, metric={"11": "1 + 2*sin(x1)", "12": "0", "22": "1"})
        assert main(["suite", "--config", str(write(tmp_path, d))]) == 2
        assert "configuration error" in capsys.readouterr().err
        assert main(["suite", "--fixture", "flat_t2", "--tol", "3"]) == 2

    def test_decompose_york_report(self, tmp_path):
        out = tmp_path / "york.json"
        code = main(["decompose", "--kind", "york", "--fixture", "flat_t3", "--resolution", "8",
                     "--out", str(out)])
        rep = json.loads(out.read_text())[0]
        assert code == 0 and rep["status"] == "pass"
        assert any("orthogonality" in k for k in rep["residuals"])

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "harmap.cli", "verify-geometry", "--fixture", "flat_t2",
                               "--resolution", "8"], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert "bianchi" in proc.stdout
