import json
import subprocess
import sys

import numpy as np
import pytest

from taskbal.cli import main

SMALL_BENCH = {
    "suite": {
        "tasks": [
            {"id": "a", "seq_len": [3, 6], "noise_level": 0.1, "overlap": {"b": 0.5}, "samples": 200, "classes": 3},
            {"id": "b", "seq_len": [2, 4], "noise_level": 0.3, "overlap": {"a": 0.5}, "samples": 150, "classes": 4},
            {"id": "c", "seq_len": [4, 8], "noise_level": 0.0, "overlap": {}, "samples": 100, "classes": 2},
        ],
        "feature_dim": 6,
    },
    "plan": {"r_mini": 0.25, "epochs": 5, "mini_floor": 5, "batch_size": 4},
}


def read(path):
    return json.loads(path.read_text())


class TestPlan:
    def test_cost_printout(self, data_dir, tmp_path, capsys):
        rc = main(["plan", "--graph", str(data_dir / "m3it_graph.json"), "--r-large", "0.25",
                   "--r-mini", "0.03", "--out", str(tmp_path)])
        assert rc == 0
        assert "0.40" in capsys.readouterr().out
        plan = read(tmp_path / "plan.json")
        assert plan["units"] == ["Cap.", "Cls.", "VQA", "Reas.", "Gen."]
        assert plan["runs"][0] == "mini" and len(plan["runs"]) == 6
        assert plan["cost_estimate"] == pytest.approx(0.40, abs=1e-15)
        assert plan["seed"] == 0 and len(plan["config_hash"]) == 64
        assert (tmp_path / "plan.txt").is_file()

    def test_single_unit(self, tmp_path):
        g = {"schema_version": 1, "tasks": [{"id": "only", "metrics": [{"name": "m"}]}]}
        (tmp_path / "g.json").write_text(json.dumps(g))
        assert main(["plan", "--graph", str(tmp_path / "g.json"), "--out", str(tmp_path / "o")]) == 0
        assert len(read(tmp_path / "o" / "plan.json")["runs"]) == 2

    def test_chat_mode(self, data_dir, tmp_path):
        main(["plan", "--graph", str(data_dir / "academic_graph.json"), "--mode", "chat", "--out", str(tmp_path)])
        runs = read(tmp_path / "plan.json")["runs"]
        assert runs[0] == "base" and len(runs) == 15

    def test_env_output_dir(self, data_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("TASKBAL_OUT", str(tmp_path / "env"))
        assert main(["plan", "--graph", str(data_dir / "m3it_graph.json")]) == 0
        assert (tmp_path / "env" / "plan.json").is_file()

    def test_bad_rates(self, data_dir, tmp_path, capsys):
        rc = main(["plan", "--graph", str(data_dir / "m3it_graph.json"), "--r-mini", "2", "--out", str(tmp_path)])
        assert rc == 1
        assert "error [plan]" in capsys.readouterr().err
        assert not (tmp_path / "plan.json").exists()


class TestWeights:
    def test_strategy_fixture(self, data_dir, tmp_path):
        fx = read(data_dir / "m3it_strategy_weights.json")
        rc = main(["weights", "--strategies", str(data_dir / "m3it_strategy_weights.json"),
                   "--alpha", "0.25,0.25,0.5", "--out", str(tmp_path)])
        assert rc == 0
        got = list(read(tmp_path / "weights.json")["integrated"]["weights"].values())
        np.testing.assert_allclose(got, fx["expected_integrated"], atol=5e-4)

    def test_uniform_fixture(self, data_dir, tmp_path):
        rc = main(["weights", "--matrix", str(data_dir / "uniform_matrix.json"),
                   "--graph", str(data_dir / "uniform_graph.json"), "--out", str(tmp_path)])
        assert rc == 0
        out = read(tmp_path / "weights.json")
        for key in ("out", "in", "diff", "integrated"):
            assert list(out[key]["weights"].values()) == [1.0, 1.0, 1.0]
        assert read(tmp_path / "lambda.json")["strategy"] == "integrated"

    def test_sharp_fixture_auto(self, data_dir, tmp_path):
        main(["weights", "--matrix", str(data_dir / "sharp_matrix.json"),
              "--graph", str(data_dir / "sharp_graph.json"), "--temperature", "auto", "--out", str(tmp_path)])
        out = read(tmp_path / "weights.json")
        for key in ("out", "in", "diff", "integrated"):
            vals = list(out[key]["weights"].values())
            assert 0.5 <= min(vals) and max(vals) <= 2.0
        text = (tmp_path / "weights.txt").read_text()
        assert "contribution" in text and "difficulty" in text and "#" in text

    def test_fixed_temperature(self, data_dir, tmp_path):
        main(["weights", "--matrix", str(data_dir / "sharp_matrix.json"),
              "--graph", str(data_dir / "sharp_graph.json"), "--temperature", "3", "--out", str(tmp_path)])
        assert read(tmp_path / "weights.json")["temperature"] == 3.0

    def test_missing_inputs(self, data_dir, tmp_path, capsys):
        rc = main(["weights", "--graph", str(data_dir / "sharp_graph.json"), "--out", str(tmp_path)])
        assert rc == 1
        assert "error [args]" in capsys.readouterr().err

    def test_incomplete_matrix(self, data_dir, tmp_path, capsys):
        m = read(data_dir / "sharp_matrix.json")
        m["entries"] = [e for e in m["entries"] if e["run"] != "mini"]
        (tmp_path / "m.json").write_text(json.dumps(m))
        rc = main(["weights", "--matrix", str(tmp_path / "m.json"), "--graph", str(data_dir / "sharp_graph.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error [measure]" in capsys.readouterr().err

    @pytest.mark.parametrize("flag,value", [("--alpha", "0.5,0.5,0.5"), ("--temperature", "-1"),
                                            ("--mode", "fast")])
    def test_invalid_flags(self, data_dir, flag, value):
        with pytest.raises(SystemExit) as err:
            main(["weights", "--strategies", str(data_dir / "m3it_strategy_weights.json"), flag, value])
        assert err.value.code == 2


class TestMetrics:
    def test_academic(self, data_dir, tmp_path):
        rc = main(["metrics", "--results", str(data_dir / "academic_results.csv"),
                   "--graph", str(data_dir / "academic_graph.json"), "--out", str(tmp_path)])
        assert rc == 0
        rows = {r["method"]: r for r in read(tmp_path / "metrics.json")["methods"]}
        assert 100 * rows["EW"]["delta_I"] == pytest.approx(8.75, abs=0.03)
        assert 100 * rows["VisATB"]["delta_E"] == pytest.approx(0.15, abs=0.01)

    def test_zero_shot_defaults_to_ew(self, data_dir, tmp_path):
        main(["metrics", "--results", str(data_dir / "zero_shot_results.csv"),
              "--graph", str(data_dir / "zero_shot_graph.json"), "--zero-shot", "--out", str(tmp_path)])
        rep = read(tmp_path / "metrics.json")
        assert rep["baseline"] == "EW"
        rows = {r["method"]: r for r in rep["methods"]}
        assert 100 * rows["VisATB"]["delta_I_zero"] == pytest.approx(1.87, abs=0.03)

    def test_baseline_against_itself(self, tmp_path):
        (tmp_path / "r.csv").write_text("method,task,metric,value\nA,t,m,2\nB,t,m,2\n")
        (tmp_path / "g.json").write_text(json.dumps({"tasks": [{"id": "t", "metrics": [{"name": "m"}]}]}))
        main(["metrics", "--results", str(tmp_path / "r.csv"), "--graph", str(tmp_path / "g.json"),
              "--baseline", "A", "--out", str(tmp_path / "o")])
        rows = read(tmp_path / "o" / "metrics.json")["methods"]
        assert rows == [{"method": "B", "per_task": {"t": 0.0}, "delta_I": 0.0, "delta_E": 0.0}]

    def test_missing_file(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["metrics", "--results", str(tmp_path / "none.csv"), "--graph", str(tmp_path / "none.json")])


class TestBench:
    def run(self, tmp_path, name, *extra):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps(SMALL_BENCH))
        out = tmp_path / name
        return main(["bench", "--config", str(cfg), "--out", str(out), *extra]), out

    def test_repeat_is_identical(self, tmp_path):
        rc1, a = self.run(tmp_path, "a")
        rc2, b = self.run(tmp_path, "b")
        assert rc1 == rc2 == 0
        assert (a / "bench.json").read_bytes() == (b / "bench.json").read_bytes()
        rep = read(a / "bench.json")
        assert rep["seed"] == 0 and rep["schema_version"] == 1 and len(rep["config_hash"]) == 64

    def test_seed_recorded(self, tmp_path):
        rc, out = self.run(tmp_path, "s", "--seed", "4")
        assert rc == 0 and read(out / "bench.json")["seed"] == 4

    def test_outputs_stay_in_out_dir(self, tmp_path):
        (tmp_path / "bench.json").write_text(json.dumps(SMALL_BENCH))
        before = set(tmp_path.iterdir())
        rc, out = self.run(tmp_path, "only")
        after = set(tmp_path.iterdir())
        assert after - before == {out}
        assert sorted(p.name for p in out.iterdir()) == ["bench.json", "bench.txt"]

    def test_malformed_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"suite": {"tasks": [{"id": "x", "classes": 1}]}}))
        rc = main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error [config]" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_unknown_plan_field(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"plan": {"warp": 9}}))
        assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "error [config]" in capsys.readouterr().err

    def test_default_config_seed_zero(self, tmp_path):
        rc = main(["bench", "--seed", "0", "--out", str(tmp_path)])
        assert rc == 0
        rep = read(tmp_path / "bench.json")
        assert rep["units"] == ["caption", "vqa", "ground", "ocr"]


def test_console_entry_point(tmp_path, data_dir):
    proc = subprocess.run([sys.executable, "-m", "taskbal.cli", "plan", "--graph", str(data_dir / "m3it_graph.json"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "runs" in proc.stdout
