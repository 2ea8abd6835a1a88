#!/usr/bin/env python3
"""
hrldx - hierarchical reinforcement learning for dialogue-based diagnosis.
Generate user goals, train master/worker/classifier agents, evaluate and chat with them.
"""

import sys
from pathlib import Path
from typing import Optional, Sequence

import click
import typer

# Add current directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent))

from commands.common import LOG_LEVEL_ENV, console, set_log_level
from commands.datagen import gen_data, stats
from commands.evaluate import evaluate, report
from commands.interact import interact
from commands.train import train
from commands.transcript import transcript
from core.runlog import configure_logging
from core.validator import DiagnosisError, ValidationError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

app = typer.Typer(
    name="hrldx",
    help="Hierarchical RL diagnosis dialogues - goals → agents → reports",
    no_args_is_help=True,
)


@app.callback()
def main(
    log_level: str = typer.Option("INFO", "--log-level", envvar=LOG_LEVEL_ENV, help="Logging level"),
):
    level = log_level.upper()
    if level not in LOG_LEVELS:
        raise typer.BadParameter(f"must be one of {', '.join(LOG_LEVELS)}", param_hint="--log-level")
    set_log_level(level)
    configure_logging(level)


# Register dataset commands
app.command("gen-data")(gen_data)
app.command("stats")(stats)

# Register training and evaluation commands
app.command("train")(train)
app.command("eval")(evaluate)
app.command("report")(report)

# Register dialogue commands
app.command("transcript")(transcript)
app.command("interact")(interact)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Exit 0 on success, 1 on usage or input errors, 2 on runtime failures."""
    command = typer.main.get_command(app)
    try:
        result = command.main(args=list(argv) if argv is not None else None, prog_name="hrldx",
                              standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        console.print("[red]Aborted[/red]")
        return 1
    except ValidationError as exc:
        console.print(f"[red]Error: {exc}[/red]")
        return 1
    except DiagnosisError as exc:
        console.print(f"[red]Error: {exc}[/red]")
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(run_command())
