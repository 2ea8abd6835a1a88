from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import typer
from rich.console import Console
from rich.table import Table

from core.classifier import fit_svm, svm_accuracy
from core.evaluation import (
    REPORT_COLUMNS,
    WORKER_COLUMNS,
    accuracy_report,
    aggregate_runs,
    error_matrix,
    evaluate_run,
    report_rows,
    worker_report,
)
from core.file_ops import FileOperations
from core.models import UserGoal
from core.rng import SeedStreams
from core.trainer import HIERARCHICAL, checkpoint_config, eval_sample, load_checkpoint
from core.validator import ValidationError

from .common import OUT_DIR_ENV, reported_errors, run_directories, start_run

app = typer.Typer(help="Evaluate checkpoints and render result tables")
console = Console()

SPLITS = ("train", "test", "all")
CHECKPOINTS = ("best", "final")


def select_goals(dataset, split: str) -> List[UserGoal]:
    if split not in SPLITS:
        raise ValidationError(f"--split must be one of {', '.join(SPLITS)}")
    if split == "all":
        return list(dataset.goals)
    if not dataset.is_split:
        raise ValidationError("Dataset has no train/test split")
    return dataset.train() if split == "train" else dataset.test()


def _cell(summary: Optional[Dict[str, float]]) -> str:
    if summary is None:
        return "-"
    return f"{summary['mean']:.3f} ± {summary['std_error']:.3f}"


def summary_table(reports: Sequence[Dict[str, Any]]) -> Table:
    table = Table(title="Overall performance")
    for column in ("Method", "Success rate", "Ave reward", "Ave discounted reward", "Ave turns", "Runs"):
        table.add_column(column, justify="left" if column == "Method" else "right")
    for report in reports:
        table.add_row(
            report["name"],
            _cell(report["success_rate"]),
            _cell(report.get("average_reward")),
            _cell(report.get("average_discounted_reward")),
            _cell(report.get("average_turns")),
            str(len(report["runs"])),
        )
    return table


def worker_table(workers: Dict[str, Any]) -> Table:
    table = Table(title=f"Workers (overall match rate {workers['overall_match_rate']:.3f})")
    for column in ("Group", "Success rate", "Ave intrinsic reward", "Match rate", "Activation times"):
        table.add_column(column, justify="left" if column == "Group" else "right")
    for row in workers["workers"]:
        table.add_row(row["group"], f"{row['success_rate']:.3f}", f"{row['average_intrinsic_reward']:.3f}",
                      f"{row['match_rate']:.3f}", f"{row['activation_times']:.3f}")
    return table


def error_table(matrix: Dict[str, Any]) -> Table:
    table = Table(title=f"Wrong diagnoses by group (diagonal share {matrix['diagonal_share']:.3f})")
    table.add_column("True \\ Predicted")
    for group in matrix["groups"]:
        table.add_column(group, justify="right")
    for group, counts in zip(matrix["groups"], matrix["counts"]):
        table.add_row(group, *(str(count) for count in counts))
    return table


@app.command("eval")
def evaluate(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Training output, run directory or checkpoint"),
    data: Path = typer.Option(..., "--data", help="Dataset file (JSON lines)"),
    seeds: Optional[int] = typer.Option(None, "--seeds", min=1, help="Number of seeded runs to aggregate"),
    which: str = typer.Option("best", "--which", help="best or final checkpoint of each run"),
    split: str = typer.Option("test", "--split", help="train, test or all"),
    training_sample: bool = typer.Option(False, "--training-sample",
                                         help="Use each run's own training-time evaluation sample"),
    sample_size: Optional[int] = typer.Option(None, "--sample-size", min=1, help="Evaluate on a random subset"),
    seed: int = typer.Option(0, "--seed", help="Seed for --sample-size"),
    baselines: bool = typer.Option(False, "--baselines", help="Also fit and score SVM-ex and SVM-ex&im"),
    svm_epochs: int = typer.Option(50, "--svm-epochs", min=1, help="SVM training epochs"),
    name: Optional[str] = typer.Option(None, "--name", help="Method name in reports"),
    out: Path = typer.Option(..., "--out", envvar=OUT_DIR_ENV, help="Output directory"),
    jobs: int = typer.Option(1, "--jobs", min=1, help="Parallel evaluation episodes"),
):
    """Greedy evaluation with mean ± standard error over seeded runs"""
    with reported_errors():
        if which not in CHECKPOINTS:
            raise ValidationError(f"--which must be one of {', '.join(CHECKPOINTS)}")
        directories = run_directories(checkpoint, which, seeds)
        agents = [load_checkpoint(directory) for directory in directories]
        ontology = agents[0].ontology
        if any(agent.ontology != ontology or agent.kind != agents[0].kind for agent in agents):
            raise ValidationError("All runs must share one ontology and agent kind")
        dataset = FileOperations().read_dataset(data, ontology)
        configs = [checkpoint_config(directory) for directory in directories]

        file_ops = start_run(out, "eval", {
            "checkpoints": directories, "data": data, "which": which, "split": split,
            "training_sample": training_sample, "sample_size": sample_size, "seed": seed,
            "baselines": baselines, "svm_epochs": svm_epochs, "jobs": jobs,
        })

        run_goals = []
        for config in configs:
            if training_sample:
                goals = eval_sample(select_goals(dataset, "train"), config.eval_sample_size,
                                    SeedStreams(config.seed).generator("eval"))
            else:
                goals = select_goals(dataset, split)
                if sample_size is not None:
                    goals = eval_sample(goals, sample_size, SeedStreams(seed).generator("eval"))
            if not goals:
                raise ValidationError(f"No goals in the '{split}' split")
            run_goals.append(goals)

        runs, traces = [], []
        for agent, goals in zip(agents, run_goals):
            metrics, run_traces = evaluate_run(agent, goals, agent.episode, jobs)
            runs.append(metrics)
            traces.append(run_traces)
        reports = [aggregate_runs(name or agents[0].kind, runs, traces)]

        if baselines:
            train_goals = select_goals(dataset, "train")
            for mode, label in (("ex", "SVM-ex"), ("ex_im", "SVM-ex&im")):
                accuracies = []
                for config, goals in zip(configs, run_goals):
                    model = fit_svm(train_goals, ontology, mode, SeedStreams(config.seed).generator("svm"),
                                    epochs=svm_epochs)
                    file_ops.write_network(f"svm_{mode}_{config.seed}.net", model.to_network())
                    accuracies.append(svm_accuracy(model, goals, ontology))
                reports.append(accuracy_report(label, accuracies, len(run_goals[0])))

        report_dicts = [report.to_dict() for report in reports]
        file_ops.write_json("report.json", report_dicts, sort_keys=False)
        file_ops.write_csv("report.csv", REPORT_COLUMNS, report_rows(reports))
        console.print(summary_table(report_dicts))

        all_traces = [trace for run_traces in traces for trace in run_traces]
        if agents[0].kind == HIERARCHICAL:
            workers = worker_report(all_traces, ontology)
            file_ops.write_json("workers.json", workers.to_dict(), sort_keys=False)
            file_ops.write_csv("workers.csv", WORKER_COLUMNS,
                               [[getattr(row, column) for column in WORKER_COLUMNS] for row in workers.rows])
            console.print(worker_table(workers.to_dict()))

        matrix = error_matrix(all_traces, ontology)
        file_ops.write_json("error_matrix.json", matrix.to_dict(), sort_keys=False)
        header, rows = matrix.csv_rows()
        file_ops.write_csv("error_matrix.csv", header, rows)
        console.print(error_table(matrix.to_dict()))
        console.print(f"[green]✓[/green] Reports written to {out}")


@app.command("report")
def report(
    directories: List[Path] = typer.Argument(..., help="Output directories of earlier eval runs"),
    csv_out: Optional[Path] = typer.Option(None, "--csv", help="Write the combined summary CSV here"),
):
    """Render the tables of one or more eval outputs side by side"""
    with reported_errors():
        file_ops = FileOperations()
        reports: List[Dict[str, Any]] = []
        for directory in directories:
            reports.extend(file_ops.read_json(directory / "report.json"))
        console.print(summary_table(reports))

        for directory in directories:
            if (directory / "workers.json").is_file():
                console.print(worker_table(file_ops.read_json(directory / "workers.json")))
            if (directory / "error_matrix.json").is_file():
                console.print(error_table(file_ops.read_json(directory / "error_matrix.json")))

        if csv_out is not None:
            rows = []
            for entry in reports:
                row: List[Any] = [entry["name"], entry["success_rate"]["mean"], entry["success_rate"]["std_error"]]
                for key in ("average_reward", "average_discounted_reward", "average_turns"):
                    summary = entry.get(key)
                    row.extend(["", ""] if summary is None else [summary["mean"], summary["std_error"]])
                row.append(len(entry["runs"]))
                rows.append(row)
            file_ops.write_csv(csv_out, REPORT_COLUMNS, rows)
            console.print(f"[green]✓[/green] Wrote {csv_out}")
