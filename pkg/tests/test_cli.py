"""Command-line interface: exit codes, output files, and determinism."""

from __future__ import annotations

import json

import pytest

from ebo import benchmarks
from ebo.cli import main
from ebo.core import Box


def write_config(path, **over):
    payload = {
        "domain": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "objective": "constant",
        "objective_params": {"value": 1.0},
        "T": 2,
        "B": 2,
        "N_p": 2,
        "L": 2,
        "gibbs_sweeps": 0,
        "seed": 0,
    }
    payload.update(over)
    path.write_text(json.dumps(payload))
    return path


class TestRunCommand:
    def test_success_writes_record_csv_and_timings(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json")
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        rec = json.loads((out / "record.json").read_text())
        assert rec["aborted"] is False
        assert len(rec["iterations"]) == 2
        assert "timings" not in rec
        timings = json.loads((out / "timings.json").read_text())
        assert timings and all(v >= 0.0 for v in timings.values())
        csv_lines = (out / "regret.csv").read_text().strip().splitlines()
        assert csv_lines[0].startswith("iteration,")
        assert len(csv_lines) == 3
        stdout = capsys.readouterr().out
        assert "best value" in stdout

    def test_missing_field_exits_2_and_names_it(self, tmp_path, capsys):
        payload = json.loads(write_config(tmp_path / "cfg.json").read_text())
        del payload["B"]
        (tmp_path / "cfg.json").write_text(json.dumps(payload))
        assert main(["run", "--config", str(tmp_path / "cfg.json")]) == 2
        assert "'B'" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert main(["run", "--config", str(cfg)]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_unknown_objective_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", objective="warehouse")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert "objective" in err
        assert not (tmp_path / "record.json").exists()

    def test_objective_failure_exits_3_with_partial_record(
        self, tmp_path, capsys, monkeypatch
    ):
        class Exploding:
            box = Box([0.0, 0.0], [1.0, 1.0])

            def __call__(self, x):
                raise RuntimeError("kaboom")

        monkeypatch.setitem(
            benchmarks._REGISTRY, "exploding", lambda params, domain: Exploding()
        )
        cfg = write_config(tmp_path / "cfg.json", objective="exploding")
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 3
        rec = json.loads((out / "record.json").read_text())
        assert rec["aborted"] is True
        assert "objective failed twice at point" in rec["error"]
        assert (out / "regret.csv").exists()
        assert "partial record written" in capsys.readouterr().err

    def test_worker_count_does_not_change_results(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", objective="demo2d", objective_params={}, seed=3
        )
        outs = []
        for label, workers in (("a", "1"), ("b", "4")):
            out = tmp_path / label
            rc = main(
                ["run", "--config", str(cfg), "--out", str(out), "--workers", workers]
            )
            assert rc == 0
            outs.append(out)
        assert (outs[0] / "record.json").read_bytes() == (
            outs[1] / "record.json"
        ).read_bytes()
        assert (outs[0] / "regret.csv").read_bytes() == (
            outs[1] / "regret.csv"
        ).read_bytes()

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as e:
            main(["run"])  # --config is required
        assert e.value.code == 2


class TestDemoVarianceCommand:
    def test_writes_one_csv_per_size(self, tmp_path, capsys):
        rc = main(
            [
                "demo-variance",
                "--n-obs", "2",
                "--n-obs", "5",
                "--n-features", "15",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        for n in (2, 5):
            lines = (tmp_path / f"variance_{n}.csv").read_text().splitlines()
            assert lines[0] == "x,mu_rff,sigma_rff,mu_exact,sigma_exact,f"
            assert len(lines) == 402
        assert capsys.readouterr().out.count("wrote") == 2

    def test_deterministic_across_invocations(self, tmp_path, capsys):
        args = ["demo-variance", "--n-obs", "4", "--n-features", "12", "--seed", "9"]
        for d in ("one", "two"):
            assert main(args + ["--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "one" / "variance_4.csv").read_bytes() == (
            tmp_path / "two" / "variance_4.csv"
        ).read_bytes()

    def test_env_var_output_fallback(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("EBO_OUT_DIR", str(tmp_path / "envout"))
        assert main(["demo-variance", "--n-obs", "3", "--n-features", "10"]) == 0
        assert (tmp_path / "envout" / "variance_3.csv").exists()

    def test_cwd_is_final_fallback(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("EBO_OUT_DIR", raising=False)
        monkeypatch.chdir(tmp_path)
        assert main(["demo-variance", "--n-obs", "2", "--n-features", "8"]) == 0
        assert (tmp_path / "variance_2.csv").exists()

    def test_bad_sizes_exit_2(self, tmp_path, capsys):
        assert main(["demo-variance", "--n-obs", "-1", "--out", str(tmp_path)]) == 2
        assert main(["demo-variance", "--n-features", "0", "--out", str(tmp_path)]) == 2


class TestBenchCommand:
    def test_list_names_every_suite(self, capsys):
        assert main(["bench", "--list"]) == 0
        names = capsys.readouterr().out.split()
        assert names == sorted(
            ["gibbs-recovery", "kernel-convergence", "rover", "synthetic-regret"]
        )

    def test_unknown_suite_exits_2(self, capsys):
        assert main(["bench", "everything"]) == 2
        assert "known suites" in capsys.readouterr().err

    def test_missing_suite_exits_2(self, capsys):
        assert main(["bench"]) == 2
        assert "known suites" in capsys.readouterr().err

    def test_kernel_convergence_runs_and_passes(self, tmp_path, capsys):
        rc = main(
            ["bench", "kernel-convergence", "--seeds", "3", "--out", str(tmp_path)]
        )
        assert rc == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["passed"] is True
        assert all(c["passed"] for c in summary["checks"])
        assert "[PASS]" in capsys.readouterr().out
