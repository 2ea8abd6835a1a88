from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .validator import (
    OntologyError,
    OntologyValidator,
    RecordValidator,
    UnknownGroupError,
    UnknownSymptomError,
)


BLOCK_SIZE = 3


class SymptomStatus(Enum):
    TRUE = "True"
    FALSE = "False"
    UNKNOWN = "UNK"
    NOT_REQUESTED = "NotRequested"

    @classmethod
    def from_label(cls, label: str) -> "SymptomStatus":
        for status in cls:
            if status.value == label:
                return status
        raise ValueError(f"Unknown symptom status label: {label!r}")


# True's slot is fixed by the potential function; False/Unknown order is a convention.
_STATUS_BLOCKS = {
    SymptomStatus.TRUE: (1.0, 0.0, 0.0),
    SymptomStatus.FALSE: (0.0, 1.0, 0.0),
    SymptomStatus.UNKNOWN: (0.0, 0.0, 1.0),
    SymptomStatus.NOT_REQUESTED: (0.0, 0.0, 0.0),
}


def encode_status(status: SymptomStatus) -> np.ndarray:
    return np.array(_STATUS_BLOCKS[status], dtype=np.float64)


def decode_block(block: np.ndarray) -> SymptomStatus:
    for status, encoded in _STATUS_BLOCKS.items():
        if tuple(float(value) for value in block) == encoded:
            return status
    raise ValueError(f"Not a valid status block: {block!r}")


@dataclass(frozen=True)
class Ontology:
    """Diseases, symptoms and groups with fixed declaration order.

    The order of every list defines the vector indices used everywhere else:
    symptom j occupies state slots [3j, 3j+3), group k is master action k and
    the classifier is master action len(groups).
    """

    diseases: Tuple[str, ...]
    symptoms: Tuple[str, ...]
    groups: Tuple[str, ...]
    disease_group: Mapping[str, str]
    group_symptoms: Mapping[str, Tuple[str, ...]]
    symptom_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    disease_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    group_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _group_slots: Dict[str, np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "diseases", tuple(self.diseases))
        object.__setattr__(self, "symptoms", tuple(self.symptoms))
        object.__setattr__(self, "groups", tuple(str(group) for group in self.groups))
        object.__setattr__(self, "disease_group", dict(self.disease_group))
        object.__setattr__(
            self,
            "group_symptoms",
            {str(group): tuple(symptoms) for group, symptoms in self.group_symptoms.items()},
        )

        validator = OntologyValidator()
        for names, label in ((self.diseases, "diseases"), (self.symptoms, "symptoms"), (self.groups, "groups")):
            is_valid, error = validator.validate_unique(names, label)
            if not is_valid:
                raise OntologyError(error)

        members: Dict[str, List[str]] = {group: [] for group in self.groups}
        for disease, group in self.disease_group.items():
            if group not in members:
                raise OntologyError(f"Disease {disease!r} maps to unknown group {group!r}")
            members[group].append(disease)
        is_valid, error = validator.validate_partition(list(self.diseases), members)
        if not is_valid:
            raise OntologyError(error)

        symptom_index = {name: position for position, name in enumerate(self.symptoms)}
        for group in self.groups:
            subset = self.group_symptoms.get(group)
            if subset is None:
                raise OntologyError(f"Group {group!r} has no symptom list")
            for symptom in subset:
                if symptom not in symptom_index:
                    raise OntologyError(f"Group {group!r} lists unknown symptom {symptom!r}")
            if len(set(subset)) != len(subset):
                raise OntologyError(f"Group {group!r} lists a symptom twice")
        extra = set(self.group_symptoms) - set(self.groups)
        if extra:
            raise OntologyError(f"Symptom lists for unknown groups: {sorted(extra)}")

        slots = {
            group: np.array(
                [BLOCK_SIZE * symptom_index[symptom] + offset
                 for symptom in self.group_symptoms[group]
                 for offset in range(BLOCK_SIZE)],
                dtype=np.int64,
            )
            for group in self.groups
        }
        object.__setattr__(self, "symptom_index", symptom_index)
        object.__setattr__(self, "disease_index", {name: i for i, name in enumerate(self.diseases)})
        object.__setattr__(self, "group_index", {name: i for i, name in enumerate(self.groups)})
        object.__setattr__(self, "_group_slots", slots)

    @property
    def state_size(self) -> int:
        return BLOCK_SIZE * len(self.symptoms)

    @property
    def n_master_actions(self) -> int:
        return len(self.groups) + 1

    def group_slots(self, group: str) -> np.ndarray:
        if group not in self._group_slots:
            raise UnknownGroupError(group)
        return self._group_slots[group]

    def group_diseases(self, group: str) -> List[str]:
        if group not in self.group_index:
            raise UnknownGroupError(group)
        return [disease for disease in self.diseases if self.disease_group[disease] == group]

    @classmethod
    def from_dict(cls, data: Any) -> "Ontology":
        is_valid, error = OntologyValidator().validate_document(data)
        if not is_valid:
            raise OntologyError(error)

        groups = [str(group["id"]) for group in data["groups"]]
        disease_group = {}
        for group in data["groups"]:
            for disease in group.get("diseases", []):
                if disease in disease_group:
                    raise OntologyError(f"Disease {disease!r} is in more than one group")
                disease_group[disease] = str(group["id"])
        group_symptoms = {str(group["id"]): list(group.get("symptoms", [])) for group in data["groups"]}

        return cls(
            diseases=tuple(data["diseases"]),
            symptoms=tuple(data["symptoms"]),
            groups=tuple(groups),
            disease_group=disease_group,
            group_symptoms=group_symptoms,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "diseases": list(self.diseases),
            "symptoms": list(self.symptoms),
            "groups": [
                {
                    "id": group,
                    "diseases": self.group_diseases(group),
                    "symptoms": list(self.group_symptoms[group]),
                }
                for group in self.groups
            ],
        }


@dataclass(frozen=True)
class DialogueState:
    vector: np.ndarray
    turn: int = 0

    def __post_init__(self):
        vector = np.array(self.vector, dtype=np.float64)
        vector.setflags(write=False)
        object.__setattr__(self, "vector", vector)
        if self.turn < 0:
            raise ValueError("turn must be >= 0")

    def block(self, symptom_position: int) -> np.ndarray:
        start = BLOCK_SIZE * symptom_position
        return self.vector[start:start + BLOCK_SIZE]

    def blocks(self) -> np.ndarray:
        return self.vector.reshape(-1, BLOCK_SIZE)

    def with_status(self, symptom_position: int, status: SymptomStatus, turn: Optional[int] = None) -> "DialogueState":
        vector = self.vector.copy()
        start = BLOCK_SIZE * symptom_position
        vector[start:start + BLOCK_SIZE] = encode_status(status)
        return DialogueState(vector=vector, turn=self.turn if turn is None else turn)

    def advance(self) -> "DialogueState":
        return DialogueState(vector=self.vector, turn=self.turn + 1)

    def __eq__(self, other):
        if not isinstance(other, DialogueState):
            return NotImplemented
        return self.turn == other.turn and np.array_equal(self.vector, other.vector)

    def __hash__(self):
        return hash((self.turn, self.vector.tobytes()))


def build_state(answers: Mapping[str, SymptomStatus], ontology: Ontology, turn: int = 0) -> DialogueState:
    vector = np.zeros(ontology.state_size, dtype=np.float64)
    for symptom, status in answers.items():
        if symptom not in ontology.symptom_index:
            raise UnknownSymptomError(symptom)
        start = BLOCK_SIZE * ontology.symptom_index[symptom]
        vector[start:start + BLOCK_SIZE] = encode_status(status)
    return DialogueState(vector=vector, turn=turn)


def extract_worker_state(state: DialogueState, group: str, ontology: Ontology) -> np.ndarray:
    return state.vector[ontology.group_slots(group)].copy()


def count_true(state: DialogueState) -> int:
    blocks = state.blocks()
    return int(np.sum((blocks[:, 0] == 1.0) & (blocks[:, 1] == 0.0) & (blocks[:, 2] == 0.0)))


@dataclass(frozen=True)
class MasterAction:
    """InvokeWorker(group) when ``group`` is set, InvokeClassifier otherwise."""

    group: Optional[str] = None

    @property
    def invokes_classifier(self) -> bool:
        return self.group is None

    def index(self, ontology: Ontology) -> int:
        if self.group is None:
            return len(ontology.groups)
        if self.group not in ontology.group_index:
            raise UnknownGroupError(self.group)
        return ontology.group_index[self.group]

    @classmethod
    def from_index(cls, index: int, ontology: Ontology) -> "MasterAction":
        if not 0 <= index <= len(ontology.groups):
            raise IndexError(f"Master action {index} out of range")
        if index == len(ontology.groups):
            return cls(group=None)
        return cls(group=ontology.groups[index])


@dataclass(frozen=True)
class WorkerAction:
    group: str
    symptom: str

    @classmethod
    def from_index(cls, group: str, index: int, ontology: Ontology) -> "WorkerAction":
        subset = ontology.group_symptoms.get(group)
        if subset is None:
            raise UnknownGroupError(group)
        return cls(group=group, symptom=subset[index])

    @property
    def request(self) -> "SymptomRequest":
        return SymptomRequest(self.symptom)


@dataclass(frozen=True)
class SymptomRequest:
    symptom: str


@dataclass(frozen=True)
class Diagnosis:
    disease: str


@dataclass(frozen=True)
class UserGoal:
    disease: Optional[str]
    group: Optional[str]
    explicit: Tuple[str, ...]
    implicit: Mapping[str, SymptomStatus] = field(default_factory=dict)
    split: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "explicit", tuple(self.explicit))
        object.__setattr__(self, "implicit", dict(self.implicit))
        overlap = set(self.explicit) & set(self.implicit)
        if overlap:
            raise ValueError(f"Symptoms both explicit and implicit: {sorted(overlap)}")

    @property
    def implicit_true(self) -> List[str]:
        return [name for name, status in self.implicit.items() if status is SymptomStatus.TRUE]

    def initial_answers(self) -> Dict[str, SymptomStatus]:
        return {symptom: SymptomStatus.TRUE for symptom in self.explicit}

    def with_split(self, split: Optional[str]) -> "UserGoal":
        return UserGoal(self.disease, self.group, self.explicit, self.implicit, split)

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "UserGoal":
        """Build a goal from a record already checked by RecordValidator."""
        validator = RecordValidator()
        group = record.get("group_id")
        return cls(
            disease=record["disease_tag"],
            group=None if group is None else str(group),
            explicit=tuple(record["explicit_symptoms"]),
            implicit={
                name: SymptomStatus.from_label(validator.normalize_label(label))
                for name, label in record["implicit_symptoms"].items()
            },
            split=record.get("split"),
        )

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "disease_tag": self.disease,
            "group_id": self.group,
            "explicit_symptoms": {name: SymptomStatus.TRUE.value for name in self.explicit},
            "implicit_symptoms": {name: status.value for name, status in self.implicit.items()},
        }
        if self.split is not None:
            record["split"] = self.split
        return record


def goal_answers(goal: UserGoal, include_implicit: bool = True) -> Dict[str, SymptomStatus]:
    answers = goal.initial_answers()
    if include_implicit:
        answers.update(goal.implicit)
    return answers


def symptoms_of(goals: Iterable[UserGoal]) -> List[str]:
    seen: Dict[str, None] = {}
    for goal in goals:
        for name in list(goal.explicit) + list(goal.implicit):
            seen.setdefault(name, None)
    return list(seen)
