import json

import jsonschema
import numpy as np
import pytest

from condgen.cli import main
from condgen.datasets import load_csv
from condgen.ecmmd import ecmmd_hat_discrete
from condgen.evaluation import REPORT_JSON_SCHEMA
from condgen.generator import load_checkpoint
from condgen.kernels import KernelConfig

TWO_MINUS_2EXP_HALF = 0.7869386805747332


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def trained_dir(tmp_path_factory):
    """A small trained model shared by the sample/eval tests."""
    out = tmp_path_factory.mktemp("trained")
    code = main(
        [
            "train",
            "--task", "linear_gaussian",
            "--n", "64",
            "--epochs", "2",
            "--batch-size", "32",
            "--k", "2",
            "--hidden", "8",
            "--noise-dim", "2",
            "--seed", "1",
            "--out", str(out),
        ]
    )
    assert code == 0
    return out


class TestArgHandling:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["train", "--bogus", "1"]) == 2
        capsys.readouterr()

    def test_missing_out(self, capsys):
        assert main(["train", "--task", "helix"]) == 2
        assert "--out is required" in capsys.readouterr().err

    def test_task_and_data_mutually_exclusive(self, tmp_path, capsys):
        csv = write_csv(tmp_path / "d.csv", "x0,y0\n0.0,1.0\n1.0,2.0\n")
        args = ["train", "--out", str(tmp_path / "o")]
        assert main(args + ["--task", "helix", "--data", csv]) == 2
        assert main(args) == 2
        assert "exactly one of --task or --data" in capsys.readouterr().err

    def test_config_file_not_found(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "no.json"), "--out", "o"]) == 2
        assert "not found" in capsys.readouterr().err

    def test_config_file_bad_json(self, tmp_path, capsys):
        cfg = write_csv(tmp_path / "c.json", "{nope")
        assert main(["train", "--config", cfg, "--out", "o"]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_config_unknown_key_rejected(self, tmp_path, capsys):
        cfg = write_csv(tmp_path / "c.json", '{"epocs": 3}')
        assert main(["train", "--config", cfg, "--task", "helix", "--out", "o"]) == 2
        assert "unknown config keys for train: epocs" in capsys.readouterr().err

    def test_config_must_be_object(self, tmp_path, capsys):
        cfg = write_csv(tmp_path / "c.json", "[1, 2]")
        assert main(["train", "--config", cfg, "--out", "o"]) == 2
        assert "JSON object" in capsys.readouterr().err


class TestTrain:
    def test_writes_checkpoint_and_metrics(self, trained_dir):
        ckpt = (trained_dir / "model.ckpt").read_bytes()
        net = load_checkpoint(ckpt)
        assert net.config.hidden == (8,)
        lines = (trained_dir / "train_metrics.jsonl").read_text().splitlines()
        head = json.loads(lines[0])
        assert head["config"]["task"] == "linear_gaussian"
        assert head["config"]["kernel_resolved"]["family"] == "gaussian"
        assert head["config"]["dataset"] == {"n": 64, "d": 1, "p": 1}
        # execution details stay out so artifacts are byte-reproducible
        assert "out" not in head["config"] and "threads" not in head["config"]
        steps = [json.loads(ln) for ln in lines[1:]]
        assert [s["step"] for s in steps] == [1, 2, 3, 4]  # 2 epochs x 2 batches
        assert all(set(s) == {"step", "epoch", "loss", "wall_ms"} for s in steps)

    def test_metrics_use_lf_endings(self, trained_dir):
        assert b"\r" not in (trained_dir / "train_metrics.jsonl").read_bytes()

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = write_csv(tmp_path / "c.json", '{"epochs": 1, "n": 48, "k": 2, "hidden": "8"}')
        out = tmp_path / "run"
        code = main(
            [
                "train",
                "--config", cfg,
                "--task", "linear_gaussian",
                "--epochs", "2",
                "--batch-size", "24",
                "--noise-dim", "2",
                "--out", str(out),
            ]
        )
        assert code == 0
        head = json.loads((out / "train_metrics.jsonl").read_text().splitlines()[0])
        assert head["config"]["epochs"] == 2  # flag beat the file
        assert head["config"]["n"] == 48  # file beat the default (4000)

    def test_csv_training_data(self, tmp_path):
        rows = "\n".join(f"{i / 16},{(i % 4) / 4}" for i in range(16))
        csv = write_csv(tmp_path / "d.csv", "x0,y0\n" + rows + "\n")
        out = tmp_path / "run"
        code = main(
            [
                "train",
                "--data", csv,
                "--epochs", "1",
                "--batch-size", "8",
                "--k", "2",
                "--hidden", "4",
                "--noise-dim", "2",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "model.ckpt").is_file()

    def test_diverged_training_is_runtime_error(self, tmp_path, capsys):
        with np.errstate(all="ignore"):
            code = main(
                [
                    "train",
                    "--task", "linear_gaussian",
                    "--n", "32",
                    "--epochs", "1",
                    "--batch-size", "16",
                    "--k", "2",
                    "--hidden", "4",
                    "--learning-rate", "1e200",
                    "--out", str(tmp_path / "o"),
                ]
            )
        assert code == 1
        assert "condgen: error: step" in capsys.readouterr().err


class TestSample:
    def test_rows_and_conditioning_column(self, trained_dir, tmp_path):
        out = tmp_path / "draws.csv"
        code = main(
            ["sample", "--ckpt", str(trained_dir / "model.ckpt"),
             "--x", "0.5", "--n", "5", "--out", str(out)]
        )
        assert code == 0
        ds = load_csv(out)
        assert ds.n == 5
        np.testing.assert_array_equal(ds.x[:, 0], np.full(5, 0.5))

    def test_multiple_points_stack(self, trained_dir, tmp_path):
        out = tmp_path / "draws.csv"
        code = main(
            ["sample", "--ckpt", str(trained_dir / "model.ckpt"),
             "--x", "0.0", "--x", "1.0", "--n", "3", "--out", str(out)]
        )
        assert code == 0
        ds = load_csv(out)
        assert ds.n == 6
        np.testing.assert_array_equal(ds.x[:, 0], [0, 0, 0, 1, 1, 1])

    def test_n_zero_writes_header_only(self, trained_dir, tmp_path):
        out = tmp_path / "draws.csv"
        code = main(
            ["sample", "--ckpt", str(trained_dir / "model.ckpt"),
             "--x", "0.5", "--n", "0", "--out", str(out)]
        )
        assert code == 0
        assert out.read_text() == "x0,y0\n"

    def test_byte_identical_across_runs(self, trained_dir, tmp_path):
        args = ["sample", "--ckpt", str(trained_dir / "model.ckpt"),
                "--x", "0.25", "--n", "10", "--seed", "3"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.csv"
        assert main(args[:-2] + ["--seed", "4", "--out", str(c)]) == 0
        assert c.read_bytes() != a.read_bytes()

    def test_wrong_coordinate_count(self, trained_dir, tmp_path, capsys):
        code = main(
            ["sample", "--ckpt", str(trained_dir / "model.ckpt"),
             "--x", "0.5,0.5", "--out", str(tmp_path / "o.csv")]
        )
        assert code == 2
        assert "coordinates" in capsys.readouterr().err

    def test_missing_ckpt_flag(self, tmp_path, capsys):
        assert main(["sample", "--x", "0.5", "--out", str(tmp_path / "o.csv")]) == 2
        capsys.readouterr()

    def test_corrupt_checkpoint_is_runtime_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        code = main(["sample", "--ckpt", str(bad), "--x", "0.5", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "condgen: error:" in capsys.readouterr().err


class TestEval:
    def test_task_grid_report(self, trained_dir, tmp_path):
        out = tmp_path / "report.json"
        code = main(
            ["eval", "--ckpt", str(trained_dir / "model.ckpt"),
             "--task", "linear_gaussian",
             "--x-grid", "0.0,1.0",
             "--n-gen", "64", "--n-true", "64",
             "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, REPORT_JSON_SCHEMA)
        assert len(doc["grid"]) == 2
        assert all(pt["baseline_mmd2"] is not None for pt in doc["grid"])

    def test_no_baseline_flag(self, trained_dir, tmp_path):
        out = tmp_path / "report.json"
        code = main(
            ["eval", "--ckpt", str(trained_dir / "model.ckpt"),
             "--task", "linear_gaussian",
             "--x-grid", "0.0",
             "--n-gen", "32", "--n-true", "32",
             "--no-baseline",
             "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert all(pt["baseline_mmd2"] is None for pt in doc["grid"])

    def test_holdout_report(self, trained_dir, tmp_path):
        rows = "\n".join(f"{i / 32},{(i % 8) / 8}" for i in range(32))
        holdout = write_csv(tmp_path / "h.csv", "x0,y0\n" + rows + "\n")
        out = tmp_path / "report.json"
        code = main(
            ["eval", "--ckpt", str(trained_dir / "model.ckpt"),
             "--holdout", holdout, "--k", "4", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, REPORT_JSON_SCHEMA)
        assert doc["holdout"]["n"] == 32 and doc["holdout"]["k"] == 4

    def test_byte_identical_reports(self, trained_dir, tmp_path):
        args = ["eval", "--ckpt", str(trained_dir / "model.ckpt"),
                "--task", "linear_gaussian", "--x-grid", "0.5",
                "--n-gen", "32", "--n-true", "32", "--seed", "9"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_needs_task_or_holdout(self, trained_dir, tmp_path, capsys):
        code = main(
            ["eval", "--ckpt", str(trained_dir / "model.ckpt"), "--out", str(tmp_path / "o")]
        )
        assert code == 2
        capsys.readouterr()

    def test_missing_checkpoint_file_is_runtime_error(self, tmp_path, capsys):
        code = main(
            ["eval", "--ckpt", str(tmp_path / "nope.ckpt"),
             "--task", "helix", "--out", str(tmp_path / "o")]
        )
        assert code == 1
        capsys.readouterr()


class TestEstimate:
    def two_column_fixture(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", "x0,y0\n0.0,0.0\n1.0,0.0\n")
        b = write_csv(tmp_path / "b.csv", "x0,y0\n0.0,1.0\n1.0,1.0\n")
        return a, b

    def test_two_point_hand_value(self, tmp_path):
        a, b = self.two_column_fixture(tmp_path)
        out = tmp_path / "est.json"
        code = main(
            ["estimate", a, b, "--k", "1", "--bandwidth", "1.0", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["estimate"] == pytest.approx(TWO_MINUS_2EXP_HALF, abs=1e-12)
        assert doc["n"] == 2 and doc["k"] == 1 and doc["discrete"] is False

    def test_identical_files_give_exact_zero(self, tmp_path):
        rows = "x0,y0\n" + "\n".join(f"{i / 8},{(i * 7 % 5) / 5}" for i in range(8)) + "\n"
        a = write_csv(tmp_path / "a.csv", rows)
        b = write_csv(tmp_path / "b.csv", rows)
        out = tmp_path / "est.json"
        assert main(["estimate", a, b, "--k", "2", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["estimate"] == 0.0

    def test_default_k_rule(self, tmp_path):
        rows = "x0,y0\n" + "\n".join(f"{i / 64},{(i * 11 % 9) / 9}" for i in range(64)) + "\n"
        a = write_csv(tmp_path / "a.csv", rows)
        b = write_csv(tmp_path / "b.csv", rows)
        out = tmp_path / "est.json"
        assert main(["estimate", a, b, "--out", str(out)]) == 0
        assert json.loads(out.read_text())["k"] == 4  # max(4, ceil(64^(1/3)))

    def test_mismatched_x_is_runtime_error(self, tmp_path, capsys):
        a = write_csv(tmp_path / "a.csv", "x0,y0\n0.0,0.0\n1.0,0.0\n")
        b = write_csv(tmp_path / "b.csv", "x0,y0\n0.0,1.0\n2.0,1.0\n")
        code = main(["estimate", a, b, "--k", "1", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "identical x columns" in capsys.readouterr().err

    def test_discrete_matches_library(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", "x0,y0\n0.0,0.0\n0.0,1.0\n1.0,2.0\n1.0,3.0\n")
        b = write_csv(tmp_path / "b.csv", "x0,y0\n0.0,1.0\n0.0,2.0\n1.0,3.0\n1.0,4.0\n")
        out = tmp_path / "est.json"
        code = main(["estimate", a, b, "--discrete", "--bandwidth", "1.0", "--out", str(out)])
        assert code == 0
        labels = np.array([0, 0, 1, 1])
        ya = np.array([[0.0], [1.0], [2.0], [3.0]])
        yb = np.array([[1.0], [2.0], [3.0], [4.0]])
        want = ecmmd_hat_discrete(labels, ya, yb, KernelConfig("gaussian", 1.0))
        assert json.loads(out.read_text())["estimate"] == pytest.approx(want, abs=1e-15)

    def test_discrete_rejects_fractional_labels(self, tmp_path, capsys):
        a = write_csv(tmp_path / "a.csv", "x0,y0\n0.5,0.0\n1.0,1.0\n")
        b = write_csv(tmp_path / "b.csv", "x0,y0\n0.5,1.0\n1.0,2.0\n")
        code = main(["estimate", a, b, "--discrete", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "integer" in capsys.readouterr().err

    def test_paths_from_config_file(self, tmp_path):
        a, b = self.two_column_fixture(tmp_path)
        cfg = write_csv(
            tmp_path / "c.json",
            json.dumps({"a": a, "b": b, "k": 1, "bandwidth": 1.0, "out": str(tmp_path / "e.json")}),
        )
        assert main(["estimate", "--config", cfg]) == 0
        doc = json.loads((tmp_path / "e.json").read_text())
        assert doc["estimate"] == pytest.approx(TWO_MINUS_2EXP_HALF, abs=1e-12)

    def test_byte_identical_and_threads(self, tmp_path):
        rows = "x0,y0\n" + "\n".join(f"{i / 32},{(i * 5 % 7) / 7}" for i in range(32)) + "\n"
        a = write_csv(tmp_path / "a.csv", rows)
        b = write_csv(tmp_path / "b.csv", "x0,y0\n" + "\n".join(
            f"{i / 32},{(i * 3 % 7) / 7}" for i in range(32)) + "\n")
        outs = []
        for name, threads in (("t1.json", "1"), ("t4.json", "4")):
            out = tmp_path / name
            assert main(["estimate", a, b, "--k", "3", "--threads", threads,
                         "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
