from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from core.evaluation import Transcript, export_transcript
from core.file_ops import FileOperations
from core.trainer import load_checkpoint
from core.validator import ValidationError

from .common import reported_errors, run_directories
from .evaluate import select_goals

app = typer.Typer(help="Dump a dialogue transcript for one user goal")
console = Console()


def transcript_table(transcript: Transcript, title: Optional[str] = None) -> Table:
    table = Table(title=title)
    for column in transcript.columns:
        table.add_column(column, justify="right" if column == "turn" else "left")
    for row in transcript.rows:
        table.add_row(*row)
    return table


def print_transcript(transcript: Transcript, title: Optional[str] = None) -> None:
    console.print(transcript_table(transcript, title))
    console.print(f"Outcome: [bold]{transcript.outcome}[/bold]")
    if transcript.top_diseases:
        ranked = ", ".join(f"{name} ({p:.3f})" for name, p in transcript.top_diseases)
        console.print(f"Top diseases: {ranked}")


def save_transcript(transcript: Transcript, path: Path) -> None:
    file_ops = FileOperations()
    file_ops.write_text(path, transcript.to_text())
    file_ops.write_json(path.with_suffix(".json"), transcript.to_dict(), sort_keys=False)


@app.command("transcript")
def transcript(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Training output, run directory or checkpoint"),
    data: Path = typer.Option(..., "--data", help="Dataset file (JSON lines)"),
    index: int = typer.Option(0, "--index", min=0, help="Position of the goal within the split"),
    split: str = typer.Option("test", "--split", help="train, test or all"),
    which: str = typer.Option("best", "--which", help="best or final checkpoint"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the transcript (text + .json) here"),
):
    """Run one greedy dialogue and print it turn by turn"""
    with reported_errors():
        directory = run_directories(checkpoint, which)[0]
        agent = load_checkpoint(directory)
        goals = select_goals(FileOperations().read_dataset(data, agent.ontology), split)
        if index >= len(goals):
            raise ValidationError(f"--index {index} is out of range for {len(goals)} '{split}' goals")
        goal = goals[index]

        result = agent.run_episode(goal, None, mode="eval")
        dialogue = export_transcript(result.trace)
        print_transcript(dialogue, title=f"Goal {index}: {goal.disease}")
        if out is not None:
            save_transcript(dialogue, out)
            console.print(f"[green]✓[/green] Transcript saved to {out}")
