import subprocess
import sys

import numpy as np
import pytest

from knotfit.cli import main


def read(path):
    return path.read_text()


class TestRun:
    def test_interpolant_run_writes_outputs(self, tmp_path, capsys):
        rc = main([
            "run", "--target", "u1", "--pipeline", "interpolant_uniform",
            "--n", "8", "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "pipeline=interpolant_uniform" in out and out.count("\n") == 1
        loss_csv = tmp_path / "run_u1_interpolant_uniform_n8_loss.csv"
        model_csv = tmp_path / "run_u1_interpolant_uniform_n8_model.csv"
        assert loss_csv.exists() and model_csv.exists()
        assert read(loss_csv).splitlines()[0] == "iter,loss"

    def test_rerun_byte_identical(self, tmp_path):
        args = [
            "run", "--target", "u3", "--pipeline", "two_level", "--n", "8",
            "--iters", "400", "--seed", "11", "--out", None, "--no-plots",
        ]
        texts = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            args[-2] = str(d)
            assert main([a for a in args if a is not None]) == 0
            texts.append(read(d / "run_u3_two_level_n8_loss.csv")
                         + read(d / "run_u3_two_level_n8_knots.csv")
                         + read(d / "run_u3_two_level_n8_model.csv"))
        assert texts[0] == texts[1]

    def test_unknown_target_exits_two(self, tmp_path, capsys):
        rc = main([
            "run", "--target", "u99", "--pipeline", "interpolant_uniform",
            "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 2
        assert "unknown target" in capsys.readouterr().err

    def test_training_run_emits_history_and_plots(self, tmp_path):
        rc = main([
            "run", "--target", "u2", "--pipeline", "standard", "--n", "6",
            "--iters", "150", "--out", str(tmp_path),
        ])
        assert rc == 0
        assert (tmp_path / "run_u2_standard_n6_loss.png").exists()
        assert (tmp_path / "run_u2_standard_n6_knots.png").exists()
        assert (tmp_path / "run_u2_standard_n6_fit.png").exists()
        lines = read(tmp_path / "run_u2_standard_n6_knots.csv").splitlines()
        assert lines[0] == "iter,k_0,k_1,k_2,k_3,k_4,k_5"

    def test_deterministic_pipeline_honours_representation(self, tmp_path):
        rc = main([
            "run", "--target", "u2", "--pipeline", "interpolant_uniform",
            "--representation", "relu", "--n", "6",
            "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 0
        model_csv = read(tmp_path / "run_u2_interpolant_uniform_n6_model.csv")
        assert model_csv.startswith("# left_coef=")

    def test_preconditioned_needs_relu(self, tmp_path):
        rc = main([
            "run", "--target", "u2", "--pipeline", "preconditioned", "--n", "6",
            "--iters", "100", "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 2


class TestSweep:
    def test_interpolant_sweep_slope(self, tmp_path):
        rc = main([
            "sweep", "--target", "u1", "--pipeline", "interpolant_uniform",
            "--n-list", "8,16,32,64", "--jobs", "1",
            "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 0
        lines = read(tmp_path / "sweep_u1_interpolant_uniform.csv").splitlines()
        assert lines[0] == "N,loss,slope"
        assert len(lines) == 5
        slope = float(lines[1].split(",")[2])
        assert slope == pytest.approx(-4.0, abs=0.3)

    def test_needs_three_points(self, tmp_path):
        rc = main([
            "sweep", "--target", "u1", "--pipeline", "interpolant_uniform",
            "--n-list", "8,16", "--jobs", "1", "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 2

    def test_parallel_matches_serial(self, tmp_path):
        common = [
            "sweep", "--target", "u3", "--pipeline", "interpolant_optimal",
            "--n-list", "8,16,32",
        ]
        assert main(common + ["--jobs", "1", "--out", str(tmp_path / "s"),
                              "--no-plots"]) == 0
        assert main(common + ["--jobs", "2", "--out", str(tmp_path / "p"),
                              "--no-plots"]) == 0
        assert read(tmp_path / "s/sweep_u3_interpolant_optimal.csv") == read(
            tmp_path / "p/sweep_u3_interpolant_optimal.csv"
        )

    def test_training_pipeline_through_worker_pool(self, tmp_path):
        rc = main([
            "sweep", "--target", "u2", "--pipeline", "two_level",
            "--n-list", "6,8,10", "--iters", "200", "--jobs", "2",
            "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 0
        lines = read(tmp_path / "sweep_u2_two_level.csv").splitlines()
        assert [ln.split(",")[0] for ln in lines[1:]] == ["6", "8", "10"]


class TestCond:
    def test_report_columns(self, tmp_path):
        rc = main(["cond", "--n-list", "8,16", "--out", str(tmp_path), "--no-plots"])
        assert rc == 0
        lines = read(tmp_path / "cond_uniform.csv").splitlines()
        assert lines[0] == "N,kappa_M,kappa_T,kappa_MTinv,predicted"
        row = lines[1].split(",")
        assert row[0] == "8" and all(np.isfinite(float(v)) for v in row[1:])
        assert (tmp_path / "cond_graded.csv").exists()

    def test_cap_rejected(self, tmp_path):
        assert main(["cond", "--n-list", "1024", "--out", str(tmp_path),
                     "--no-plots"]) == 2


class TestMesh:
    def test_singular_target_mesh(self, tmp_path):
        rc = main(["mesh", "--target", "u3", "--n", "16", "--out", str(tmp_path)])
        assert rc == 0
        lines = read(tmp_path / "mesh_u3_n16.csv").splitlines()
        assert lines[0] == "i,k"
        k = np.array([float(ln.split(",")[1]) for ln in lines[1:]])
        np.testing.assert_allclose(k, (np.arange(16) / 15) ** (15 / 7), atol=1e-12)


class TestConfigFile:
    def test_file_values_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("target=u2\nn=4\nquad-points=500\n# comment\n")
        rc = main([
            "run", "--config", str(cfg), "--pipeline", "interpolant_uniform",
            "--target", "u1", "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 0
        # flag overrode the file target; file supplied n=4
        assert (tmp_path / "run_u1_interpolant_uniform_n4_loss.csv").exists()

    def test_bad_config_line(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("target u2\n")
        rc = main(["run", "--config", str(cfg), "--out", str(tmp_path),
                   "--no-plots"])
        assert rc == 2


class TestTableCommand:
    def test_table_runs_at_reduced_budget(self, tmp_path):
        rc = main([
            "table1", "--iters", "400", "--quad-points", "1000",
            "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 0
        lines = read(tmp_path / "table1.csv").splitlines()
        assert lines[0] == "row,label,N,loss,expected"
        assert len(lines) == 1 + 7 * 3
        losses = {}
        for ln in lines[1:]:
            parts = ln.split(",")
            assert np.isfinite(float(parts[3])) and np.isfinite(float(parts[4]))
            losses[(parts[0], int(parts[2]))] = float(parts[3])
        # a better start gives a better optimum, at any iteration budget
        for n in (16, 32, 64):
            assert losses[("e", n)] <= losses[("d", n)]


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "knotfit.cli", "run", "--target", "u1",
             "--pipeline", "interpolant_uniform", "--n", "8",
             "--out", str(tmp_path), "--no-plots"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "loss=" in proc.stdout


class TestExperimentConfig:
    def test_n_floor_rejected(self, tmp_path):
        rc = main([
            "run", "--target", "u1", "--pipeline", "interpolant_uniform",
            "--n", "1", "--out", str(tmp_path), "--no-plots",
        ])
        assert rc == 2

    def test_invariants(self):
        from knotfit.cli import ConfigError, ExperimentConfig

        with pytest.raises(ConfigError):
            ExperimentConfig(n_list=())
        with pytest.raises(ConfigError):
            ExperimentConfig(pipeline="bogus")
        cfg = ExperimentConfig(n_list=(8, 16))
        assert cfg.n_list == (8, 16)

    def test_sweep_result_rows(self):
        from knotfit.cli import SweepResult, SweepRow

        res = SweepResult(rows=(SweepRow(8, 1e-3, -4.0, 0.1),
                                SweepRow(16, 1e-4, -4.0, 0.1)))
        lines = res.to_csv().splitlines()
        assert lines[0] == "N,loss,slope"
        assert len(lines) == 3
