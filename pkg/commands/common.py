import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import typer
from rich.console import Console

from core.file_ops import FileOperations
from core.runlog import EVENTS_FILE, configure_logging
from core.validator import DiagnosisError, ValidationError

console = Console()

LOG_LEVEL_ENV = "HRLDX_LOG_LEVEL"
OUT_DIR_ENV = "HRLDX_OUT_DIR"

log_level = os.environ.get(LOG_LEVEL_ENV, "INFO")


def set_log_level(level: str) -> None:
    global log_level
    log_level = level


@contextmanager
def reported_errors() -> Iterator[None]:
    """Bad input exits 1, any other engine failure exits 2."""
    try:
        yield
    except ValidationError as exc:
        console.print(f"[red]Error: {exc}[/red]")
        raise typer.Exit(1)
    except DiagnosisError as exc:
        console.print(f"[red]Error: {exc}[/red]")
        raise typer.Exit(2)


def jsonable(params: Dict[str, Any]) -> Dict[str, Any]:
    def convert(value: Any) -> Any:
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, (list, tuple)):
            return [convert(item) for item in value]
        if isinstance(value, dict):
            return {key: convert(item) for key, item in value.items()}
        return value

    return {key: convert(value) for key, value in params.items()}


def start_run(out_dir: Path, command: str, params: Dict[str, Any]) -> FileOperations:
    """Route logs to ``<out>/events.jsonl`` and record the effective parameters."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configure_logging(log_level, out_dir / EVENTS_FILE)
    file_ops = FileOperations(out_dir)
    file_ops.write_effective_config(command, jsonable(params))
    return file_ops


def run_directories(root: Path, which: str, seeds: Optional[int] = None) -> List[Path]:
    """Checkpoint directories under a training output, a run directory, or a checkpoint itself."""
    root = Path(root)
    if (root / "manifest.json").is_file():
        return [root]
    if (root / which / "manifest.json").is_file():
        return [root / which]

    runs = []
    for child in root.glob("run_*"):
        suffix = child.name[len("run_"):]
        if suffix.lstrip("-").isdigit() and (child / which / "manifest.json").is_file():
            runs.append((int(suffix), child / which))
    runs.sort()
    if not runs:
        raise ValidationError(f"No '{which}' checkpoints found under {root}")
    if seeds is not None:
        if len(runs) < seeds:
            raise ValidationError(f"Asked for {seeds} runs but only {len(runs)} exist under {root}")
        runs = runs[:seeds]
    return [path for _, path in runs]
