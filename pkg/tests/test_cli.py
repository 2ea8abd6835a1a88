import csv
import json
from unittest.mock import patch

import click
import pytest
import typer
from typer.testing import CliRunner

from core.classifier import LinearSVMModel
from core.file_ops import FileOperations
from core.trainer import load_checkpoint
from core.validator import TrainingAbortedError
from main import app, run_command
from tests.helpers import TINY_TABLE

AGENT = {"hidden_sizes": [16], "batch_size": 8, "dropout": 0.1, "buffer_capacity": 500}
CONFIG = {
    "epochs": 2,
    "episodes_per_epoch": 6,
    "update_period": 1,
    "eval_sample_size": 8,
    "seed": 5,
    "master": AGENT,
    "worker": AGENT,
    "flat": AGENT,
    "classifier": {"hidden_size": 16, "batch_size": 8, "epochs_per_fit": 1, "pool_size": 200},
}


def invoke(*args):
    result = CliRunner().invoke(app, ["--log-level", "WARNING", *map(str, args)])
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "table.json").write_text(json.dumps(TINY_TABLE))
    (root / "config.json").write_text(json.dumps(CONFIG))
    invoke("gen-data", "--table", root / "table.json", "--per-disease", 10, "--seed", 3,
           "--out", root / "data.jsonl")
    invoke("train", "--data", root / "data.jsonl", "--ontology", root / "data.ontology.json",
           "--config", root / "config.json", "--seeds", 2, "--out", root / "hrl")
    invoke("train", "--data", root / "data.jsonl", "--ontology", root / "data.ontology.json",
           "--config", root / "config.json", "--flat", "--out", root / "flat")
    return root


class TestGenData:
    def test_writes_dataset_and_ontology(self, workspace):
        lines = (workspace / "data.jsonl").read_text().splitlines()
        assert len(lines) == 40
        assert sum(json.loads(line)["split"] == "train" for line in lines) == 32
        ontology = json.loads((workspace / "data.ontology.json").read_text())
        assert ontology["diseases"] == ["flu", "cold", "migraine", "gastro"]
        assert (workspace / "gen-data.config.json").exists()

    def test_summary_is_printed(self, workspace, temp_dir):
        result = invoke("gen-data", "--table", workspace / "table.json", "--per-disease", 5,
                        "--out", temp_dir / "small.jsonl", "--ontology-out", temp_dir / "onto.json")
        assert "Wrote 20 goals" in result.output
        assert (temp_dir / "onto.json").exists()

    def test_bad_table_exits_1(self, temp_dir):
        (temp_dir / "table.json").write_text(json.dumps({"groups": [{"id": "g1"}]}))
        result = CliRunner().invoke(app, ["gen-data", "--table", str(temp_dir / "table.json"),
                                          "--per-disease", "3", "--out", str(temp_dir / "d.jsonl")])
        assert result.exit_code == 1
        assert "Error" in result.output


class TestStats:
    def test_json_output(self, workspace):
        result = invoke("stats", "--data", workspace / "data.jsonl", "--ontology", workspace / "data.ontology.json",
                        "--json")
        summary = json.loads(result.stdout)
        assert summary["mode"] == "sd"
        assert [row["group"] for row in summary["groups"]] == ["g1", "g2"]
        assert summary["total"]["goals"] == 40
        assert "avg_explicit" not in summary["total"]

    def test_table_and_stats_file(self, workspace, temp_dir):
        result = invoke("stats", "--data", workspace / "data.jsonl", "--out", temp_dir)
        assert "Dataset statistics" in result.output
        assert json.loads((temp_dir / "stats.json").read_text())["total"]["diseases"] == 4


class TestTrain:
    def test_run_layout(self, workspace):
        for seed in (5, 6):
            run = workspace / "hrl" / f"run_{seed}"
            for name in ("manifest.json", "master.net", "worker_00.net", "worker_01.net", "classifier.net"):
                assert (run / "final" / name).exists()
            assert (run / "best" / "manifest.json").exists()
            with open(run / "curves.csv") as f:
                assert [row["epoch"] for row in csv.DictReader(f)] == ["1", "2"]
        assert (workspace / "flat" / "run_5" / "final" / "agent.net").exists()
        assert (workspace / "hrl" / "events.jsonl").exists()

    def test_effective_config_recorded(self, workspace):
        recorded = json.loads((workspace / "hrl" / "train.config.json").read_text())
        assert recorded["config"]["epochs"] == 2
        assert recorded["seeds"] == 2

    def test_epochs_override(self, workspace, temp_dir):
        invoke("train", "--data", workspace / "data.jsonl", "--ontology", workspace / "data.ontology.json",
               "--config", workspace / "config.json", "--epochs", 1, "--seed", 9, "--out", temp_dir)
        with open(temp_dir / "run_9" / "curves.csv") as f:
            assert len(list(csv.DictReader(f))) == 1

    def test_unknown_config_key(self, workspace, temp_dir):
        (temp_dir / "config.json").write_text(json.dumps({"epoch": 3}))
        assert run_command(["train", "--data", str(workspace / "data.jsonl"),
                            "--ontology", str(workspace / "data.ontology.json"),
                            "--config", str(temp_dir / "config.json"), "--out", str(temp_dir / "out")]) == 1


class TestEval:
    def test_training_sample_matches_final_curve(self, workspace, temp_dir):
        result = invoke("eval", "--checkpoint", workspace / "hrl", "--data", workspace / "data.jsonl",
                        "--which", "final", "--training-sample", "--out", temp_dir)
        assert "Reports written to" in result.output

        report = json.loads((temp_dir / "report.json").read_text())
        assert len(report[0]["runs"]) == 2
        for run, seed in zip(report[0]["runs"], (5, 6)):
            with open(workspace / "hrl" / f"run_{seed}" / "curves.csv") as f:
                last = list(csv.DictReader(f))[-1]
            assert run["success_rate"] == pytest.approx(float(last["success"]))
            assert run["episodes"] == 8

        for name in ("report.csv", "workers.json", "workers.csv", "error_matrix.json", "error_matrix.csv"):
            assert (temp_dir / name).exists()
        workers = json.loads((temp_dir / "workers.json").read_text())
        assert [row["group"] for row in workers["workers"]] == ["g1", "g2"]

    def test_baselines(self, workspace, temp_dir):
        invoke("eval", "--checkpoint", workspace / "hrl", "--data", workspace / "data.jsonl", "--seeds", 1,
               "--baselines", "--svm-epochs", 5, "--name", "HRL", "--out", temp_dir)
        names = [entry["name"] for entry in json.loads((temp_dir / "report.json").read_text())]
        assert names == ["HRL", "SVM-ex", "SVM-ex&im"]

        ontology = load_checkpoint(workspace / "hrl" / "run_5" / "final").ontology
        network = FileOperations(temp_dir).read_network("svm_ex_im_5.net")
        model = LinearSVMModel.from_network(network, ontology.diseases, "ex_im")
        assert model.weights.shape == (4, 30)
        assert (temp_dir / "svm_ex_5.net").exists()
        assert not (temp_dir / "svm_ex_6.net").exists()

    def test_flat_has_no_worker_report(self, workspace, temp_dir):
        invoke("eval", "--checkpoint", workspace / "flat", "--data", workspace / "data.jsonl", "--out", temp_dir)
        assert json.loads((temp_dir / "report.json").read_text())[0]["name"] == "flat"
        assert not (temp_dir / "workers.json").exists()
        assert (temp_dir / "error_matrix.json").exists()

    def test_bad_arguments_exit_1(self, workspace, temp_dir):
        common = ["--data", str(workspace / "data.jsonl"), "--out", str(temp_dir)]
        assert run_command(["eval", "--checkpoint", str(workspace / "hrl"), "--which", "middle", *common]) == 1
        assert run_command(["eval", "--checkpoint", str(workspace / "hrl"), "--seeds", "3", *common]) == 1
        assert run_command(["eval", "--checkpoint", str(temp_dir), *common]) == 1


class TestReport:
    def test_combines_eval_outputs(self, workspace, temp_dir):
        invoke("eval", "--checkpoint", workspace / "hrl", "--data", workspace / "data.jsonl",
               "--name", "HRL", "--out", temp_dir / "hrl")
        invoke("eval", "--checkpoint", workspace / "flat", "--data", workspace / "data.jsonl",
               "--name", "Flat-DQN", "--out", temp_dir / "flat")
        result = invoke("report", temp_dir / "hrl", temp_dir / "flat", "--csv", temp_dir / "summary.csv")
        assert "Overall performance" in result.output
        assert "Workers" in result.output

        with open(temp_dir / "summary.csv") as f:
            rows = list(csv.DictReader(f))
        assert [row["method"] for row in rows] == ["HRL", "Flat-DQN"]
        assert rows[0]["runs"] == "2"

    def test_missing_report(self, temp_dir):
        assert run_command(["report", str(temp_dir)]) == 1


class TestTranscript:
    def test_prints_and_saves(self, workspace, temp_dir):
        result = invoke("transcript", "--checkpoint", workspace / "hrl", "--data", workspace / "data.jsonl",
                        "--index", 1, "--out", temp_dir / "dialogue.txt")
        assert "Outcome:" in result.output
        assert "Outcome:" in (temp_dir / "dialogue.txt").read_text()
        saved = json.loads((temp_dir / "dialogue.json").read_text())
        assert saved["columns"] == ["turn", "worker id", "agent action", "user action"]

    def test_flat_columns(self, workspace, temp_dir):
        invoke("transcript", "--checkpoint", workspace / "flat", "--data", workspace / "data.jsonl",
               "--split", "train", "--out", temp_dir / "flat.txt")
        assert json.loads((temp_dir / "flat.json").read_text())["columns"] == ["turn", "agent action", "user action"]

    def test_index_out_of_range(self, workspace):
        assert run_command(["transcript", "--checkpoint", str(workspace / "hrl"),
                            "--data", str(workspace / "data.jsonl"), "--index", "8"]) == 1


class TestExitCodes:
    def test_usage_errors(self, temp_dir):
        assert run_command(["train", "--bogus"]) == 1
        assert run_command(["nope"]) == 1
        assert run_command(["eval", "--which"]) == 1
        assert run_command(["--log-level", "LOUD", "stats", "--data", "x.jsonl"]) == 1

    def test_commands_are_click_commands(self):
        # usage errors are caught as click exceptions
        assert isinstance(typer.main.get_command(app), click.Command)

    def test_missing_file(self, temp_dir):
        assert run_command(["stats", "--data", str(temp_dir / "missing.jsonl")]) == 1

    def test_runtime_failure_exits_2(self, workspace, temp_dir):
        aborted = TrainingAbortedError("Training aborted at epoch 1: non-finite loss nan", None)
        with patch("commands.train.trainer.train", side_effect=aborted):
            code = run_command(["train", "--data", str(workspace / "data.jsonl"),
                                "--ontology", str(workspace / "data.ontology.json"), "--out", str(temp_dir)])
        assert code == 2
