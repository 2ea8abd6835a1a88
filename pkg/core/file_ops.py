import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from .datagen import ConditionalProbabilityTable, Dataset
from .models import Ontology, UserGoal
from .neuralnet import DenseNet
from .validator import RecordError, RecordValidator, ValidationError

PathLike = Union[str, Path]


class FileOperations:
    """Every read and write of the project's files, relative to ``base_dir``."""

    def __init__(self, base_dir: Optional[PathLike] = None):
        if base_dir is None:
            base_dir = Path.cwd()
        self.base_dir = Path(base_dir)

    def get_path(self, path: PathLike) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def _existing(self, path: PathLike) -> Path:
        file_path = self.get_path(path)
        if not file_path.is_file():
            raise ValidationError(f"File not found: {file_path}")
        return file_path

    def _writable(self, path: PathLike) -> Path:
        file_path = self.get_path(path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        return file_path

    def read_json(self, path: PathLike) -> Any:
        file_path = self._existing(path)
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{file_path} is not valid JSON: {exc}") from exc

    def write_json(self, path: PathLike, data: Any, sort_keys: bool = True) -> Path:
        file_path = self._writable(path)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=sort_keys)
            f.write("\n")
        return file_path

    def read_ontology(self, path: PathLike) -> Ontology:
        return Ontology.from_dict(self.read_json(path))

    def write_ontology(self, path: PathLike, ontology: Ontology) -> Path:
        return self.write_json(path, ontology.to_dict(), sort_keys=False)

    def read_table(self, path: PathLike) -> ConditionalProbabilityTable:
        return ConditionalProbabilityTable.from_dict(self.read_json(path))

    def read_dataset(self, path: PathLike, ontology: Optional[Ontology] = None) -> Dataset:
        """Newline-delimited goal records; errors carry the 1-based line number."""
        file_path = self._existing(path)
        validator = RecordValidator()
        goals: List[UserGoal] = []
        with open(file_path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordError(line_number, f"invalid JSON ({exc.msg})") from exc

                is_valid, error = validator.validate_record(record)
                if not is_valid:
                    raise RecordError(line_number, error)
                goal = UserGoal.from_record(record)
                if ontology is not None:
                    self._check_against(goal, ontology, line_number)
                goals.append(goal)

        if not goals:
            raise ValidationError(f"{file_path} contains no records")
        return Dataset(goals=goals)

    def _check_against(self, goal: UserGoal, ontology: Ontology, line_number: int) -> None:
        if goal.disease not in ontology.disease_index:
            raise RecordError(line_number, f"unknown disease {goal.disease!r}")
        for symptom in list(goal.explicit) + list(goal.implicit):
            if symptom not in ontology.symptom_index:
                raise RecordError(line_number, f"unknown symptom {symptom!r}")
        if goal.group is not None and goal.group != ontology.disease_group[goal.disease]:
            raise RecordError(line_number, f"group {goal.group!r} does not own disease {goal.disease!r}")

    def write_dataset(self, path: PathLike, dataset: Dataset) -> Path:
        file_path = self._writable(path)
        with open(file_path, "w", encoding="utf-8") as f:
            for goal in dataset.goals:
                f.write(json.dumps(goal.to_record()) + "\n")
        return file_path

    def read_network(self, path: PathLike) -> DenseNet:
        return DenseNet.from_bytes(self._existing(path).read_bytes())

    def write_network(self, path: PathLike, network: DenseNet) -> Path:
        file_path = self._writable(path)
        file_path.write_bytes(network.to_bytes())
        return file_path

    def write_csv(self, path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        file_path = self._writable(path)
        with open(file_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
        return file_path

    def read_csv(self, path: PathLike) -> List[Dict[str, str]]:
        with open(self._existing(path), "r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))

    def write_text(self, path: PathLike, text: str) -> Path:
        file_path = self._writable(path)
        file_path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        return file_path

    def write_effective_config(self, command: str, params: Dict[str, Any]) -> Path:
        """``<command>.config.json`` with sorted keys and nothing run-dependent."""
        return self.write_json(f"{command}.config.json", params)
