"""User simulator, extrinsic/intrinsic rewards and potential-based shaping."""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Set, Union

import numpy as np

from .models import (
    DialogueState,
    Diagnosis,
    Ontology,
    SymptomRequest,
    SymptomStatus,
    UserGoal,
    build_state,
    count_true,
)
from .validator import ConfigError, EpisodeTerminatedError, UnknownSymptomError, ValidationError

SUCCESS_REWARD = 1.0
FAILURE_REWARD = -1.0


@dataclass(frozen=True)
class EpisodeConfig:
    max_turns: int = 20
    max_subtask_turns: int = 5
    shaping_lambda: float = 1.0
    master_gamma: float = 0.95
    worker_gamma: float = 0.95

    def __post_init__(self):
        if self.max_turns < 1:
            raise ConfigError("max_turns must be >= 1")
        if self.max_subtask_turns < 1:
            raise ConfigError("max_subtask_turns must be >= 1")
        if self.shaping_lambda < 0:
            raise ConfigError("shaping_lambda must be >= 0")
        for name in ("master_gamma", "worker_gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EpisodeConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown episode config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class EpisodeStatus(Enum):
    ONGOING = "Ongoing"
    SUCCESS_DIAGNOSIS = "SuccessDiagnosis"
    WRONG_DIAGNOSIS = "WrongDiagnosis"
    MAX_TURNS_REACHED = "MaxTurnsReached"
    REPEATED_ACTION = "RepeatedAction"

    @property
    def is_terminal(self) -> bool:
        return self is not EpisodeStatus.ONGOING


class SubtaskStatus(Enum):
    ONGOING = "Ongoing"
    SUCCESS_HIT = "SuccessHit"
    FAIL_REPEAT = "FailRepeat"
    FAIL_BUDGET = "FailBudget"


def answer(symptom: str, goal: UserGoal) -> SymptomStatus:
    if symptom in goal.explicit:
        return SymptomStatus.TRUE
    status = goal.implicit.get(symptom)
    if status is SymptomStatus.TRUE or status is SymptomStatus.FALSE:
        return status
    return SymptomStatus.UNKNOWN


@dataclass(frozen=True)
class StepOutcome:
    state: DialogueState
    reward: float
    status: EpisodeStatus
    answer: Optional[SymptomStatus] = None
    repeated: bool = False


Responder = Callable[[str, UserGoal], SymptomStatus]


def env_step(state: DialogueState, action: Union[SymptomRequest, Diagnosis], goal: UserGoal,
             history: Set[str], ontology: Ontology, config: EpisodeConfig,
             responder: Responder = answer) -> StepOutcome:
    """One user-visible exchange. ``history`` is updated in place with the requested symptom."""
    if isinstance(action, Diagnosis):
        if action.disease not in ontology.disease_index:
            raise ValidationError(f"Unknown disease: {action.disease!r}")
        correct = goal.disease is not None and action.disease == goal.disease
        return StepOutcome(
            state=state.advance(),
            reward=SUCCESS_REWARD if correct else FAILURE_REWARD,
            status=EpisodeStatus.SUCCESS_DIAGNOSIS if correct else EpisodeStatus.WRONG_DIAGNOSIS,
        )

    symptom = action.symptom
    if symptom not in ontology.symptom_index:
        raise UnknownSymptomError(symptom)

    if symptom in history:
        return StepOutcome(
            state=state.advance(),
            reward=FAILURE_REWARD,
            status=EpisodeStatus.REPEATED_ACTION,
            repeated=True,
        )

    history.add(symptom)
    reply = responder(symptom, goal)
    next_state = state.with_status(ontology.symptom_index[symptom], reply, turn=state.turn + 1)
    if next_state.turn >= config.max_turns:
        return StepOutcome(next_state, FAILURE_REWARD, EpisodeStatus.MAX_TURNS_REACHED, reply)
    return StepOutcome(next_state, 0.0, EpisodeStatus.ONGOING, reply)


class DiagnosisEnv:
    """Stateful wrapper around :func:`env_step` for one dialogue at a time.

    The request history is seeded with the goal's explicit symptoms: they were
    already exchanged in the self-report, so asking for them again is a repeat.
    """

    def __init__(self, ontology: Ontology, config: EpisodeConfig, responder: Responder = answer):
        self.ontology = ontology
        self.config = config
        self.responder = responder
        self.state: Optional[DialogueState] = None
        self.goal: Optional[UserGoal] = None
        self.history: Set[str] = set()
        self.status = EpisodeStatus.ONGOING

    def reset(self, goal_source: Union[UserGoal, Sequence[UserGoal]], rng: Optional[np.random.Generator] = None):
        if isinstance(goal_source, UserGoal):
            goal = goal_source
        else:
            if len(goal_source) == 0:
                raise ValidationError("Cannot reset from an empty goal source")
            if rng is None:
                raise ValueError("Sampling a goal requires a random generator")
            goal = goal_source[int(rng.integers(len(goal_source)))]

        self.goal = goal
        self.state = build_state(goal.initial_answers(), self.ontology)
        self.history = set(goal.explicit)
        self.status = EpisodeStatus.ONGOING
        return self.state, goal

    @property
    def done(self) -> bool:
        return self.status.is_terminal

    def step(self, action: Union[SymptomRequest, Diagnosis]) -> StepOutcome:
        if self.state is None:
            raise EpisodeTerminatedError("Environment has not been reset")
        if self.status.is_terminal:
            raise EpisodeTerminatedError(f"Episode already ended with {self.status.value}")
        outcome = env_step(self.state, action, self.goal, self.history, self.ontology, self.config, self.responder)
        self.state = outcome.state
        self.status = outcome.status
        return outcome


def potential(state: DialogueState, terminal: bool, shaping_lambda: float) -> float:
    if terminal:
        return 0.0
    return shaping_lambda * count_true(state)


def shaping(state: DialogueState, next_state: DialogueState, shaping_lambda: float, gamma: float,
            next_terminal: bool = False) -> float:
    return gamma * potential(next_state, next_terminal, shaping_lambda) - potential(state, False, shaping_lambda)


def shaped_reward(outcome: StepOutcome, state: DialogueState, config: EpisodeConfig,
                  gamma: Optional[float] = None) -> float:
    gamma = config.master_gamma if gamma is None else gamma
    return outcome.reward + shaping(state, outcome.state, config.shaping_lambda, gamma, outcome.status.is_terminal)


def intrinsic_reward(repeated: bool, reply: Optional[SymptomStatus], subtask_turn: int,
                     max_subtask_turns: int) -> int:
    """Internal critic reward; +1 exactly when the subtask ends with SuccessHit."""
    if repeated:
        return -1
    if reply is SymptomStatus.TRUE:
        return 1
    if subtask_turn >= max_subtask_turns:
        return -1
    return 0


def subtask_status(reply: Optional[SymptomStatus], repeated: bool, subtask_turn: int,
                   max_subtask_turns: int) -> SubtaskStatus:
    if repeated:
        return SubtaskStatus.FAIL_REPEAT
    if reply is SymptomStatus.TRUE:
        return SubtaskStatus.SUCCESS_HIT
    if subtask_turn >= max_subtask_turns:
        return SubtaskStatus.FAIL_BUDGET
    return SubtaskStatus.ONGOING
