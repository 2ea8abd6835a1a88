import json
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from core.datagen import DatasetStats, dataset_stats, generate_dataset, ontology_from_goals, split_train_test
from core.file_ops import FileOperations
from core.rng import SeedStreams

from .common import OUT_DIR_ENV, reported_errors, start_run

app = typer.Typer(help="Generate and inspect synthetic user-goal datasets")
console = Console()


def stats_table(stats: DatasetStats) -> Table:
    table = Table(title=f"Dataset statistics ({stats.mode.upper()})")
    table.add_column("Group")
    table.add_column("# Goals", justify="right")
    table.add_column("# Diseases", justify="right")
    if stats.mode == "rd":
        table.add_column("Ave # explicit", justify="right")
    table.add_column("Ave # implicit true", justify="right")
    table.add_column("# Symptoms", justify="right")

    for row in stats.groups + [stats.total]:
        cells = [row.group, str(row.goals), str(row.diseases)]
        if stats.mode == "rd":
            cells.append(f"{row.avg_explicit:.2f}")
        cells.extend([f"{row.avg_implicit_true:.2f}", str(row.symptoms)])
        table.add_row(*cells, style="bold" if row is stats.total else None)
    return table


@app.command("gen-data")
def gen_data(
    table: Path = typer.Option(..., "--table", help="Conditional probability table (JSON)"),
    per_disease: int = typer.Option(..., "--per-disease", min=1, help="Goals to sample per disease"),
    seed: int = typer.Option(0, "--seed", help="Seed for generation and the train/test split"),
    out: Path = typer.Option(..., "--out", help="Dataset file to write (JSON lines)"),
    ontology_out: Optional[Path] = typer.Option(None, "--ontology-out", help="Where to write the ontology"),
    ratio: float = typer.Option(0.8, "--ratio", help="Share of goals in the train split"),
    jobs: int = typer.Option(1, "--jobs", min=1, help="Parallel sampling workers"),
):
    """Sample user goals from a probability table and split them train/test"""
    with reported_errors():
        file_ops = FileOperations()
        cpt = file_ops.read_table(table)
        ontology_path = ontology_out or out.with_name(f"{out.stem}.ontology.json")

        start_run(out.parent, "gen-data", {
            "table": table, "per_disease": per_disease, "seed": seed, "out": out,
            "ontology_out": ontology_path, "ratio": ratio, "jobs": jobs,
        })
        dataset = generate_dataset(cpt, per_disease, seed, jobs=jobs)
        dataset = split_train_test(dataset, ratio, SeedStreams(seed).generator("split"))
        ontology = cpt.to_ontology()

        file_ops.write_dataset(out, dataset)
        file_ops.write_ontology(ontology_path, ontology)
        console.print(stats_table(dataset_stats(dataset, ontology)))
        console.print(f"[green]✓[/green] Wrote {len(dataset)} goals to {out} "
                      f"({len(dataset.train())} train / {len(dataset.test())} test)")
        console.print(f"[green]✓[/green] Wrote ontology to {ontology_path}")


@app.command("stats")
def stats(
    data: Path = typer.Option(..., "--data", help="Dataset file (JSON lines)"),
    ontology: Optional[Path] = typer.Option(None, "--ontology", help="Ontology for group order and checks"),
    as_json: bool = typer.Option(False, "--json", help="Print JSON instead of a table"),
    out: Optional[Path] = typer.Option(None, "--out", envvar=OUT_DIR_ENV, help="Also write stats.json here"),
):
    """Show per-group dataset statistics"""
    with reported_errors():
        file_ops = FileOperations()
        onto = file_ops.read_ontology(ontology) if ontology else None
        dataset = file_ops.read_dataset(data, onto)
        if onto is None and any(goal.group is None for goal in dataset.goals):
            onto = ontology_from_goals(dataset.goals)
        summary = dataset_stats(dataset, onto)

        if out is not None:
            run_ops = start_run(out, "stats", {"data": data, "ontology": ontology, "json": as_json})
            run_ops.write_json("stats.json", summary.to_dict(), sort_keys=False)

        if as_json:
            typer.echo(json.dumps(summary.to_dict(), indent=2))
        else:
            console.print(stats_table(summary))

