import pytest
import yaml
from click.testing import CliRunner

from bbdrec.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(runner, tmp_path_factory):
    """Synthetic dataset, config file, and a trained checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "log.csv"
    result = runner.invoke(main, ["synth", "--n-items", "8", "--n-users", "30",
                                  "--len-min", "6", "--len-max", "8",
                                  "--seed", "0", "--out", str(data)])
    assert result.exit_code == 0, result.output

    config = root / "config.yaml"
    config.write_text(yaml.safe_dump({
        "T": 4, "m": 0.05, "d": 8, "L": 6, "batch_size": 64,
        "max_epochs": 3, "patience": 2, "dropout": 0.0, "seed": 0,
    }))
    out_dir = root / "run"
    result = runner.invoke(main, ["train", "--config", str(config),
                                  "--data", str(data), "--out", str(out_dir)])
    assert result.exit_code == 0, result.output
    return {"root": root, "data": data, "config": config,
            "checkpoint": out_dir / "checkpoint.pt", "log": out_dir / "train.log"}


class TestSynth:
    def test_writes_csv_and_sidecar(self, runner, tmp_path):
        out = tmp_path / "s.csv"
        result = runner.invoke(main, ["synth", "--n-items", "5", "--n-users", "4",
                                      "--len-min", "3", "--len-max", "4",
                                      "--out", str(out)])
        assert result.exit_code == 0
        assert out.exists()
        assert (tmp_path / "s.csv.meta.json").exists()
        header = out.read_text().splitlines()[0]
        assert header == "user_id,item_id,timestamp"

    def test_same_seed_identical_output(self, runner, tmp_path):
        args = ["synth", "--n-items", "5", "--n-users", "4", "--len-min", "3",
                "--len-max", "4", "--seed", "11"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        runner.invoke(main, args + ["--out", str(a)])
        runner.invoke(main, args + ["--out", str(b)])
        assert a.read_text() == b.read_text()

    def test_invalid_parameters_fail_cleanly(self, runner, tmp_path):
        result = runner.invoke(main, ["synth", "--n-items", "1",
                                      "--out", str(tmp_path / "x.csv")])
        assert result.exit_code != 0
        assert "Traceback" not in result.output


class TestTrain:
    def test_artifacts_written(self, workspace):
        assert workspace["checkpoint"].exists()
        log_text = workspace["log"].read_text()
        assert "epoch=1" in log_text
        assert "ndcg@20=" in log_text

    def test_missing_config_key_named(self, runner, workspace, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"m": 0.05, "wat": 1}))
        result = runner.invoke(main, ["train", "--config", str(bad),
                                      "--data", str(workspace["data"]),
                                      "--out", str(tmp_path / "run")])
        assert result.exit_code != 0
        assert "missing required config key: T" in result.output
        assert "unknown config key: wat" in result.output

    def test_ablation_option(self, runner, workspace, tmp_path):
        result = runner.invoke(main, ["train", "--config", str(workspace["config"]),
                                      "--data", str(workspace["data"]),
                                      "--out", str(tmp_path / "run"),
                                      "--ablation", "wo_ldiff"])
        assert result.exit_code == 0, result.output


class TestEval:
    def test_report_to_stdout_and_file(self, runner, workspace, tmp_path):
        out = tmp_path / "report.tsv"
        result = runner.invoke(main, ["eval", "--checkpoint", str(workspace["checkpoint"]),
                                      "--data", str(workspace["data"]),
                                      "--ks", "5,10", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert result.output.startswith("metric\tslice\tK\tvalue")
        assert "hr\toverall\t5\t" in result.output
        assert out.read_text() == result.output

    def test_timing_flag(self, runner, workspace):
        result = runner.invoke(main, ["eval", "--checkpoint", str(workspace["checkpoint"]),
                                      "--data", str(workspace["data"]), "--timing"])
        assert result.exit_code == 0, result.output
        assert "encoder_seconds" in result.output
        assert "full_seconds" in result.output


class TestRecommend:
    def test_topk_output(self, runner, workspace):
        result = runner.invoke(main, ["recommend", "--checkpoint",
                                      str(workspace["checkpoint"]),
                                      "--history", "1,2,3", "--k", "4"])
        assert result.exit_code == 0, result.output
        lines = result.output.strip().splitlines()
        assert len(lines) == 4
        for line in lines:
            item, score = line.split("\t")
            assert 1 <= int(item) <= 8
            float(score)

    def test_deterministic_seeded_repeatable(self, runner, workspace):
        args = ["recommend", "--checkpoint", str(workspace["checkpoint"]),
                "--history", "2,3", "--k", "3", "--seed", "5"]
        a = runner.invoke(main, args)
        b = runner.invoke(main, args)
        assert a.output == b.output

    def test_unknown_item_rejected(self, runner, workspace):
        result = runner.invoke(main, ["recommend", "--checkpoint",
                                      str(workspace["checkpoint"]),
                                      "--history", "1,999"])
        assert result.exit_code != 0
        assert "unknown item ids" in result.output

    def test_malformed_history_rejected(self, runner, workspace):
        result = runner.invoke(main, ["recommend", "--checkpoint",
                                      str(workspace["checkpoint"]),
                                      "--history", "1,x"])
        assert result.exit_code != 0
        assert "malformed history" in result.output


class TestVerify:
    def test_schedule_suite_passes(self, runner):
        result = runner.invoke(main, ["verify", "--suite", "schedule"])
        assert result.exit_code == 0, result.output
        assert "PASS" in result.output
        assert "FAIL" not in result.output

    def test_report_file(self, runner, tmp_path):
        out = tmp_path / "verify.txt"
        result = runner.invoke(main, ["verify", "--suite", "schedule",
                                      "--out", str(out)])
        assert result.exit_code == 0
        assert out.read_text() == result.output

    def test_unknown_suite_rejected(self, runner):
        result = runner.invoke(main, ["verify", "--suite", "bogus"])
        assert result.exit_code != 0


class TestSweep:
    def test_sweep_table_with_deduped_values(self, runner, workspace, tmp_path):
        out = tmp_path / "sweep.tsv"
        result = runner.invoke(main, ["sweep", "--param", "T",
                                      "--values", "3,2,3",
                                      "--config", str(workspace["config"]),
                                      "--data", str(workspace["data"]),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = result.output.strip().splitlines()
        assert lines[0] == "T\thr@10\tndcg@10\thr@20\tndcg@20"
        assert [l.split("\t")[0] for l in lines[1:]] == ["2", "3"]
        assert out.read_text() == result.output

    def test_malformed_values_rejected(self, runner, workspace):
        result = runner.invoke(main, ["sweep", "--param", "m", "--values", "a,b",
                                      "--config", str(workspace["config"]),
                                      "--data", str(workspace["data"])])
        assert result.exit_code != 0
        assert "malformed values" in result.output
