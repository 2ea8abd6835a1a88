import difflib
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console

from core.evaluation import Transcript, export_transcript, transcript_columns
from core.models import Ontology, SymptomStatus, UserGoal
from core.simulator import EpisodeStatus
from core.trainer import HIERARCHICAL, EpisodeTrace, load_checkpoint
from core.validator import SessionAborted, UnknownSymptomError

from .common import OUT_DIR_ENV, reported_errors, run_directories, start_run
from .transcript import print_transcript, save_transcript

app = typer.Typer(help="Answer the agent's questions yourself")
console = Console()

KEYS = {"y": SymptomStatus.TRUE, "n": SymptomStatus.FALSE, "u": SymptomStatus.UNKNOWN}
TRANSCRIPT_FILE = "interact_transcript.txt"


class TerminalResponder:
    """Stands in for the simulated user: y/n/u answers, q quits."""

    def __call__(self, symptom: str, goal: UserGoal) -> SymptomStatus:
        while True:
            reply = typer.prompt(f"Do you have {symptom}? [y/n/u/q]").strip().lower()
            if reply == "q":
                raise SessionAborted("Session aborted by the user")
            if reply in KEYS:
                return KEYS[reply]
            console.print("[yellow]Please answer y (yes), n (no), u (not sure) or q (quit)[/yellow]")


def ask_opening_symptom(ontology: Ontology) -> str:
    while True:
        reply = typer.prompt("Which symptom brings you here? (q to quit)").strip()
        if reply.lower() == "q":
            raise SessionAborted("Session aborted by the user")
        if reply in ontology.symptom_index:
            return reply
        hints = difflib.get_close_matches(reply, ontology.symptoms, n=3)
        hint = f" Did you mean: {', '.join(hints)}?" if hints else ""
        console.print(f"[yellow]Unknown symptom {reply!r}.{hint}[/yellow]")


def session_transcript(trace: EpisodeTrace, outcome: str) -> Transcript:
    if trace.turns:
        dialogue = export_transcript(trace)
    else:
        dialogue = Transcript(transcript_columns(trace.hierarchical), [], outcome)
    dialogue.outcome = outcome
    return dialogue


@app.command("interact")
def interact(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Training output, run directory or checkpoint"),
    which: str = typer.Option("best", "--which", help="best or final checkpoint"),
    symptom: Optional[List[str]] = typer.Option(None, "--symptom", help="Self-reported symptom (repeatable)"),
    out: Path = typer.Option(Path("."), "--out", envvar=OUT_DIR_ENV, help="Where to save the transcript"),
):
    """Chat with a trained agent: it asks, you answer, it diagnoses"""
    with reported_errors():
        agent = load_checkpoint(run_directories(checkpoint, which)[0])
        ontology = agent.ontology
        for name in symptom or []:
            if name not in ontology.symptom_index:
                raise UnknownSymptomError(name)

        file_ops = start_run(out, "interact", {"checkpoint": checkpoint, "which": which, "symptom": symptom or []})
        trace = EpisodeTrace(goal=UserGoal(disease=None, group=None, explicit=()),
                             hierarchical=agent.kind == HIERARCHICAL)
        try:
            explicit = list(dict.fromkeys(symptom)) if symptom else [ask_opening_symptom(ontology)]
            goal = UserGoal(disease=None, group=None, explicit=tuple(explicit))
            trace.goal = goal
            agent.run_episode(goal, None, mode="eval", responder=TerminalResponder(), trace=trace)
        except SessionAborted:
            console.print("[yellow]Session aborted[/yellow]")
            dialogue = session_transcript(trace, "Aborted")
            save_transcript(dialogue, file_ops.get_path(TRANSCRIPT_FILE))
            console.print(f"Partial transcript saved to {file_ops.get_path(TRANSCRIPT_FILE)}")
            return

        if trace.predicted is not None:
            outcome = "Diagnosis"
            console.print(f"[green]Diagnosis:[/green] [bold]{trace.predicted}[/bold]")
        elif trace.outcome is EpisodeStatus.MAX_TURNS_REACHED:
            outcome = trace.outcome.value
            console.print(f"[yellow]{outcome}: no diagnosis within {agent.episode.max_turns} turns[/yellow]")
        else:
            outcome = trace.outcome.value
            console.print(f"[yellow]{outcome}: the agent repeated a question and stopped[/yellow]")

        dialogue = session_transcript(trace, outcome)
        print_transcript(dialogue)
        save_transcript(dialogue, file_ops.get_path(TRANSCRIPT_FILE))
        console.print(f"[green]✓[/green] Transcript saved to {file_ops.get_path(TRANSCRIPT_FILE)}")
