import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .models import Ontology, SymptomStatus, UserGoal, symptoms_of
from .rng import SeedStreams
from .validator import GoalSamplingError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 100


@dataclass(frozen=True)
class ConditionalProbabilityTable:
    """Per disease, the probability that each related symptom is present.

    Table files group diseases the same way the ontology does:
    ``{"groups": [{"id": ..., "diseases": {disease: {symptom: p}}}]}``.
    """

    probabilities: Mapping[str, Mapping[str, float]]
    disease_group: Mapping[str, str]
    group_order: Sequence[str] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "probabilities", {d: dict(p) for d, p in self.probabilities.items()})
        object.__setattr__(self, "disease_group", dict(self.disease_group))
        if not self.group_order:
            object.__setattr__(self, "group_order", tuple(dict.fromkeys(self.disease_group.values())))
        else:
            object.__setattr__(self, "group_order", tuple(str(g) for g in self.group_order))

        for disease, table in self.probabilities.items():
            if disease not in self.disease_group:
                raise ValidationError(f"Disease {disease!r} has no group")
            for symptom, p in table.items():
                if not isinstance(p, (int, float)) or not 0.0 <= float(p) <= 1.0 or math.isnan(p):
                    raise ValidationError(f"Probability for {disease!r}/{symptom!r} must be in [0, 1], got {p!r}")

    @property
    def diseases(self) -> List[str]:
        return list(self.probabilities)

    @classmethod
    def from_dict(cls, data: Any) -> "ConditionalProbabilityTable":
        if not isinstance(data, dict) or not isinstance(data.get("groups"), list):
            raise ValidationError("Probability table must be an object with a 'groups' array")
        probabilities: Dict[str, Dict[str, float]] = {}
        disease_group: Dict[str, str] = {}
        order = []
        for group in data["groups"]:
            if not isinstance(group, dict) or "id" not in group or not isinstance(group.get("diseases"), dict):
                raise ValidationError("Each table group needs an 'id' and a 'diseases' object")
            group_id = str(group["id"])
            order.append(group_id)
            for disease, table in group["diseases"].items():
                if disease in probabilities:
                    raise ValidationError(f"Disease {disease!r} appears twice in the table")
                if not isinstance(table, dict) or not table:
                    raise ValidationError(f"Disease {disease!r} needs a non-empty symptom table")
                probabilities[disease] = {symptom: float(p) for symptom, p in table.items()}
                disease_group[disease] = group_id
        return cls(probabilities=probabilities, disease_group=disease_group, group_order=tuple(order))

    def to_ontology(self) -> Ontology:
        """Ontology in table declaration order; S_i is the union over the group's diseases."""
        symptoms: Dict[str, None] = {}
        group_symptoms: Dict[str, Dict[str, None]] = {group: {} for group in self.group_order}
        for disease, table in self.probabilities.items():
            for symptom in table:
                symptoms.setdefault(symptom, None)
                group_symptoms[self.disease_group[disease]].setdefault(symptom, None)
        return Ontology(
            diseases=tuple(self.probabilities),
            symptoms=tuple(symptoms),
            groups=tuple(self.group_order),
            disease_group=self.disease_group,
            group_symptoms={group: tuple(names) for group, names in group_symptoms.items()},
        )


@dataclass
class Dataset:
    goals: List[UserGoal]

    @property
    def is_split(self) -> bool:
        return bool(self.goals) and all(goal.split is not None for goal in self.goals)

    def train(self) -> List[UserGoal]:
        return [goal for goal in self.goals if goal.split == "train"]

    def test(self) -> List[UserGoal]:
        return [goal for goal in self.goals if goal.split == "test"]

    def __len__(self) -> int:
        return len(self.goals)


def sample_user_goal(disease: str, cpt: ConditionalProbabilityTable, rng: np.random.Generator,
                     retry_budget: int = DEFAULT_RETRY_BUDGET) -> UserGoal:
    if disease not in cpt.probabilities:
        raise ValidationError(f"Disease {disease!r} is not in the probability table")

    table = cpt.probabilities[disease]
    names = list(table)
    probabilities = np.array([table[name] for name in names], dtype=np.float64)

    for _ in range(retry_budget):
        present = rng.random(len(names)) < probabilities
        true_positions = np.flatnonzero(present)
        if true_positions.size == 0:
            continue

        explicit_position = int(true_positions[rng.integers(true_positions.size)])
        implicit = {
            name: SymptomStatus.TRUE if present[position] else SymptomStatus.FALSE
            for position, name in enumerate(names)
            if position != explicit_position
        }
        return UserGoal(
            disease=disease,
            group=cpt.disease_group[disease],
            explicit=(names[explicit_position],),
            implicit=implicit,
        )

    raise GoalSamplingError(disease, retry_budget)


def generate_dataset(cpt: ConditionalProbabilityTable, goals_per_disease: int, seed: int,
                     jobs: int = 1, retry_budget: int = DEFAULT_RETRY_BUDGET) -> Dataset:
    if goals_per_disease < 1:
        raise ValidationError("goals_per_disease must be >= 1")

    streams = SeedStreams(seed)
    diseases = cpt.diseases

    def for_disease(position: int) -> List[UserGoal]:
        rng = streams.generator("datagen", position)
        return [sample_user_goal(diseases[position], cpt, rng, retry_budget) for _ in range(goals_per_disease)]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(for_disease, range(len(diseases))))
    else:
        batches = [for_disease(position) for position in range(len(diseases))]

    goals = [goal for batch in batches for goal in batch]
    logger.debug("generated %d goals over %d diseases", len(goals), len(diseases))
    return Dataset(goals=goals)


def split_train_test(dataset: Dataset, ratio: float, rng: np.random.Generator) -> Dataset:
    """Stratified by disease; the overall train count is round(ratio * N)."""
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"ratio must be in (0, 1), got {ratio}")
    if not dataset.goals:
        raise ValidationError("Cannot split an empty dataset")

    by_disease: Dict[str, List[int]] = {}
    for position, goal in enumerate(dataset.goals):
        by_disease.setdefault(goal.disease, []).append(position)

    # largest-remainder allocation keeps each class within one goal of ratio * n
    target_total = int(math.floor(ratio * len(dataset.goals) + 0.5))
    quotas = {disease: ratio * len(members) for disease, members in by_disease.items()}
    counts = {disease: int(math.floor(quota)) for disease, quota in quotas.items()}
    remaining = target_total - sum(counts.values())
    order = sorted(by_disease, key=lambda d: (-(quotas[d] - counts[d]), list(by_disease).index(d)))
    for disease in order[:max(remaining, 0)]:
        counts[disease] += 1

    labels = ["test"] * len(dataset.goals)
    for disease, members in by_disease.items():
        shuffled = rng.permutation(len(members))
        for rank in shuffled[:counts[disease]]:
            labels[members[int(rank)]] = "train"

    return Dataset(goals=[goal.with_split(label) for goal, label in zip(dataset.goals, labels)])


def ontology_from_goals(goals: Sequence[UserGoal]) -> Ontology:
    """One group per disease; each group's symptoms are those observed with its disease."""
    if not goals:
        raise ValidationError("Cannot derive an ontology from zero goals")
    diseases = list(dict.fromkeys(goal.disease for goal in goals))
    group_symptoms = {disease: symptoms_of([g for g in goals if g.disease == disease]) for disease in diseases}
    return Ontology(
        diseases=tuple(diseases),
        symptoms=tuple(symptoms_of(goals)),
        groups=tuple(diseases),
        disease_group={disease: disease for disease in diseases},
        group_symptoms=group_symptoms,
    )


@dataclass
class GroupStats:
    group: str
    goals: int
    diseases: int
    avg_implicit_true: float
    symptoms: int
    avg_explicit: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "group": self.group,
            "goals": self.goals,
            "diseases": self.diseases,
            "avg_implicit_true": self.avg_implicit_true,
            "symptoms": self.symptoms,
        }
        if self.avg_explicit is not None:
            data["avg_explicit"] = self.avg_explicit
        return data


@dataclass
class DatasetStats:
    mode: str
    groups: List[GroupStats]
    total: GroupStats

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "groups": [row.to_dict() for row in self.groups],
            "total": self.total.to_dict(),
        }


def _summarize(label: str, goals: Sequence[UserGoal], rd_mode: bool) -> GroupStats:
    return GroupStats(
        group=label,
        goals=len(goals),
        diseases=len({goal.disease for goal in goals}),
        avg_implicit_true=sum(len(goal.implicit_true) for goal in goals) / len(goals),
        symptoms=len(symptoms_of(goals)),
        avg_explicit=(sum(len(goal.explicit) for goal in goals) / len(goals)) if rd_mode else None,
    )


def dataset_stats(dataset: Dataset, ontology: Optional[Ontology] = None) -> DatasetStats:
    if not dataset.goals:
        raise ValidationError("Cannot report statistics for an empty dataset")

    rd_mode = any(len(goal.explicit) != 1 for goal in dataset.goals)

    def group_of(goal: UserGoal) -> str:
        if goal.group is None and ontology is not None:
            return ontology.disease_group.get(goal.disease, "None")
        return str(goal.group)

    if ontology is not None:
        group_order = list(ontology.groups)
    else:
        group_order = list(dict.fromkeys(group_of(goal) for goal in dataset.goals))

    rows = []
    for group in group_order:
        members = [goal for goal in dataset.goals if group_of(goal) == group]
        if members:
            rows.append(_summarize(group, members, rd_mode))

    return DatasetStats(
        mode="rd" if rd_mode else "sd",
        groups=rows,
        total=_summarize("Total", dataset.goals, rd_mode),
    )
