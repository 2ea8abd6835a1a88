from dataclasses import replace
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console

from core import trainer
from core.file_ops import FileOperations
from core.trainer import TrainConfig

from .common import OUT_DIR_ENV, reported_errors, start_run

app = typer.Typer(help="Train the hierarchical agent or the flat DQN baseline")
console = Console()


def load_train_config(path: Optional[Path], file_ops: FileOperations) -> TrainConfig:
    if path is None:
        return TrainConfig()
    return TrainConfig.from_dict(file_ops.read_json(path))


@app.command("train")
def train(
    data: Path = typer.Option(..., "--data", help="Dataset with a train/test split (JSON lines)"),
    ontology: Path = typer.Option(..., "--ontology", help="Ontology file"),
    config: Optional[Path] = typer.Option(None, "--config", help="Training config (JSON)"),
    out: Path = typer.Option(..., "--out", envvar=OUT_DIR_ENV, help="Output directory"),
    flat: bool = typer.Option(False, "--flat", help="Train the single-level DQN baseline"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the config seed"),
    seeds: int = typer.Option(1, "--seeds", min=1, help="Independent runs with seed, seed+1, ..."),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=1, help="Override the config epoch count"),
    jobs: Optional[int] = typer.Option(None, "--jobs", min=1, help="Parallel episode rollouts"),
):
    """Train and write checkpoints plus learning curves under <out>/run_<seed>/"""
    with reported_errors():
        file_ops = FileOperations()
        onto = file_ops.read_ontology(ontology)
        dataset = file_ops.read_dataset(data, onto)
        base = load_train_config(config, file_ops)
        overrides = {key: value for key, value in (("seed", seed), ("epochs", epochs), ("jobs", jobs))
                     if value is not None}
        base = replace(base, **overrides)

        start_run(out, "train", {
            "data": data, "ontology": ontology, "config": base.to_dict(), "out": out,
            "flat": flat, "seeds": seeds,
        })

        run = trainer.train_flat if flat else trainer.train
        for offset in range(seeds):
            run_seed = base.seed + offset
            run_dir = out / f"run_{run_seed}"
            run_config = replace(base, seed=run_seed, checkpoint_dir=str(run_dir))
            result = run(run_config, dataset, onto, run_dir)
            last = result.curves[-1]
            console.print(
                f"[green]✓[/green] Run {run_seed}: best success {result.best_success:.3f} "
                f"at epoch {result.best_epoch}, final success {last.success:.3f} "
                f"([dim]{run_dir}[/dim])"
            )
