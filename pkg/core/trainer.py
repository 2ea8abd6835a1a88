"""Episode loops for the hierarchical and flat agents, joint training and checkpoints."""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .classifier import ClassifierConfig, DiseaseClassifier
from .evaluation import evaluate_run, parallel_map
from .file_ops import FileOperations
from .models import (
    Diagnosis,
    DialogueState,
    MasterAction,
    Ontology,
    SymptomRequest,
    SymptomStatus,
    UserGoal,
    WorkerAction,
    extract_worker_state,
)
from .neuralnet import DenseNet
from .policy import (
    AgentConfig,
    DQNAgent,
    MasterTransition,
    Transition,
    WorkerTransition,
    accumulate_master_reward,
    flat_action,
)
from .rng import SeedStreams
from .runlog import log_event
from .simulator import (
    DiagnosisEnv,
    EpisodeConfig,
    EpisodeStatus,
    Responder,
    SubtaskStatus,
    answer,
    intrinsic_reward,
    shaped_reward,
    subtask_status,
)
from .validator import (
    ConfigError,
    NonFiniteGradientError,
    ShapeMismatchError,
    TrainingAbortedError,
    ValidationError,
)

logger = logging.getLogger(__name__)

CLASSIFIER_ACTOR = "/"
FLAT_ACTOR = "agent"
HIERARCHICAL = "hierarchical"
FLAT = "flat"


@dataclass(frozen=True)
class TrainConfig:
    """Discounts live in ``episode``; agent ``gamma`` values are kept in sync with it."""

    epochs: int = 500
    episodes_per_epoch: int = 100
    update_period: int = 10
    eval_sample_size: int = 500
    seed: int = 0
    jobs: int = 1
    checkpoint_dir: Optional[str] = None
    master: AgentConfig = field(default_factory=AgentConfig)
    worker: AgentConfig = field(default_factory=AgentConfig)
    flat: AgentConfig = field(default_factory=AgentConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)

    def __post_init__(self):
        for name in ("epochs", "episodes_per_epoch", "update_period", "eval_sample_size", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        object.__setattr__(self, "master", replace(self.master, gamma=self.episode.master_gamma))
        object.__setattr__(self, "flat", replace(self.flat, gamma=self.episode.master_gamma))
        object.__setattr__(self, "worker", replace(self.worker, gamma=self.episode.worker_gamma))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        if not isinstance(data, dict):
            raise ConfigError("Training config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown training config keys: {sorted(unknown)}")

        episode = EpisodeConfig.from_dict(data.get("episode", {}))
        for section, gamma in (("master", episode.master_gamma), ("flat", episode.master_gamma),
                               ("worker", episode.worker_gamma)):
            given = data.get(section, {}).get("gamma")
            if given is not None and given != gamma:
                raise ConfigError(f"Set discounts under 'episode', not '{section}.gamma'")

        scalars = {key: value for key, value in data.items()
                   if key not in ("master", "worker", "flat", "classifier", "episode")}
        return cls(
            master=AgentConfig.from_dict(data.get("master", {})),
            worker=AgentConfig.from_dict(data.get("worker", {})),
            flat=AgentConfig.from_dict(data.get("flat", {})),
            classifier=ClassifierConfig.from_dict(data.get("classifier", {})),
            episode=episode,
            **scalars,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": self.epochs,
            "episodes_per_epoch": self.episodes_per_epoch,
            "update_period": self.update_period,
            "eval_sample_size": self.eval_sample_size,
            "seed": self.seed,
            "jobs": self.jobs,
            "checkpoint_dir": self.checkpoint_dir,
            "master": self.master.to_dict(),
            "worker": self.worker.to_dict(),
            "flat": self.flat.to_dict(),
            "classifier": self.classifier.to_dict(),
            "episode": self.episode.to_dict(),
        }


@dataclass
class TurnRecord:
    turn: int
    actor: str
    kind: str
    target: str
    answer: Optional[SymptomStatus] = None
    repeated: bool = False
    reward: float = 0.0
    shaped_reward: float = 0.0
    intrinsic_reward: Optional[int] = None
    top_diseases: List[Tuple[str, float]] = field(default_factory=list)

    @property
    def is_request(self) -> bool:
        return self.kind == "request"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "turn": self.turn,
            "actor": self.actor,
            "kind": self.kind,
            "target": self.target,
            "answer": None if self.answer is None else self.answer.value,
            "repeated": self.repeated,
            "reward": self.reward,
            "shaped_reward": self.shaped_reward,
            "intrinsic_reward": self.intrinsic_reward,
            "top_diseases": [[name, p] for name, p in self.top_diseases],
        }


@dataclass
class SubtaskRecord:
    group: str
    status: SubtaskStatus
    turns: int
    intrinsic_rewards: List[int]
    master_reward: float


@dataclass
class EpisodeTrace:
    goal: UserGoal
    hierarchical: bool = True
    turns: List[TurnRecord] = field(default_factory=list)
    subtasks: List[SubtaskRecord] = field(default_factory=list)
    outcome: EpisodeStatus = EpisodeStatus.ONGOING
    predicted: Optional[str] = None

    @property
    def n_turns(self) -> int:
        return len(self.turns)

    @property
    def total_reward(self) -> float:
        return float(sum(turn.reward for turn in self.turns))

    def discounted_reward(self, gamma: float) -> float:
        return float(sum(gamma ** turn.turn * turn.reward for turn in self.turns))

    @property
    def requests(self) -> List[TurnRecord]:
        return [turn for turn in self.turns if turn.is_request]

    def actions(self) -> List[Union[SymptomRequest, Diagnosis]]:
        return [SymptomRequest(t.target) if t.is_request else Diagnosis(t.target) for t in self.turns]

    def replay(self, ontology: Ontology, config: EpisodeConfig) -> Tuple[DialogueState, EpisodeStatus]:
        """Re-run the recorded actions against the simulator for the same goal."""
        env = DiagnosisEnv(ontology, config, responder=_recorded_responder(self))
        env.reset(self.goal)
        for action in self.actions():
            env.step(action)
        return env.state, env.status

    def to_dict(self) -> Dict[str, Any]:
        return {
            "goal": self.goal.to_record(),
            "hierarchical": self.hierarchical,
            "outcome": self.outcome.value,
            "predicted": self.predicted,
            "turns": [turn.to_dict() for turn in self.turns],
            "subtasks": [
                {"group": s.group, "status": s.status.value, "turns": s.turns,
                 "intrinsic_rewards": list(s.intrinsic_rewards), "master_reward": s.master_reward}
                for s in self.subtasks
            ],
        }


def _recorded_responder(trace: EpisodeTrace) -> Responder:
    replies = {turn.target: turn.answer for turn in trace.turns if turn.is_request and turn.answer is not None}

    def respond(symptom: str, goal: UserGoal) -> SymptomStatus:
        return replies.get(symptom) or answer(symptom, goal)

    return respond


@dataclass
class EpisodeResult:
    trace: EpisodeTrace
    master_transitions: List[Transition] = field(default_factory=list)
    worker_transitions: Dict[str, List[Transition]] = field(default_factory=dict)
    classifier_pairs: List[Tuple[np.ndarray, str]] = field(default_factory=list)


@dataclass
class CurvePoint:
    epoch: int
    success: float
    avg_reward: float
    avg_turns: float
    loss: float
    best: bool = False

    def to_row(self) -> List[Any]:
        return [self.epoch, self.success, self.avg_reward, self.avg_turns, self.loss, int(self.best)]


CURVE_COLUMNS = ("epoch", "success", "avg_reward", "avg_turns", "loss", "best")


class HierarchicalAgent:
    """Master over h groups + classifier, one worker per group, and the disease classifier."""

    kind = HIERARCHICAL

    def __init__(self, ontology: Ontology, master: DQNAgent, workers: Dict[str, DQNAgent],
                 classifier: DiseaseClassifier, episode: EpisodeConfig = EpisodeConfig()):
        if master.network.spec.input_size != ontology.state_size or master.n_actions != ontology.n_master_actions:
            raise ShapeMismatchError("Master network does not match the ontology")
        if set(workers) != set(ontology.groups):
            raise ShapeMismatchError("Workers must cover exactly the ontology's groups")
        for group, worker in workers.items():
            size = len(ontology.group_symptoms[group])
            if worker.n_actions != size or worker.network.spec.input_size != 3 * size:
                raise ShapeMismatchError(f"Worker {group!r} does not match its symptom subset")
        if classifier.ontology != ontology:
            raise ShapeMismatchError("Classifier was built for a different ontology")
        self.ontology = ontology
        self.master = master
        self.workers = workers
        self.classifier = classifier
        self.episode = episode
        self.workers_flush_pending = False

    @classmethod
    def create(cls, ontology: Ontology, config: TrainConfig, streams: SeedStreams) -> "HierarchicalAgent":
        for group in ontology.groups:
            if not ontology.group_symptoms[group]:
                raise ConfigError(f"Group {group!r} has no symptoms to request")
        master = DQNAgent("master", ontology.state_size, ontology.n_master_actions, config.master,
                          streams.generator("init", 0))
        workers = {
            group: DQNAgent(f"worker[{group}]", 3 * len(ontology.group_symptoms[group]),
                            len(ontology.group_symptoms[group]), config.worker, streams.generator("init", 1, k),
                            uses_subtask_steps=False)
            for k, group in enumerate(ontology.groups)
        }
        classifier = DiseaseClassifier.create(ontology, config.classifier, streams.generator("init", 2))
        return cls(ontology, master, workers, classifier, config.episode)

    def run_episode(self, goal: UserGoal, rng: Optional[np.random.Generator] = None, mode: str = "eval",
                    episode: Optional[EpisodeConfig] = None, responder: Responder = answer,
                    trace: Optional[EpisodeTrace] = None) -> EpisodeResult:
        env = DiagnosisEnv(self.ontology, episode or self.episode, responder)
        return run_hierarchical_episode(self.master, self.workers, self.classifier, env, goal, mode, rng, trace)

    def store(self, result: EpisodeResult) -> None:
        self.master.remember(result.master_transitions)
        for group, transitions in result.worker_transitions.items():
            self.workers[group].remember(transitions)

    def replay(self, epoch: int, config: TrainConfig, replay_rng: np.random.Generator,
               dropout_rng: np.random.Generator, pairs: Sequence[Tuple[np.ndarray, str]]) -> float:
        loss = self.master.experience_replay(replay_rng, dropout_rng)
        if epoch % config.update_period == 0:
            for group in self.ontology.groups:
                self.workers[group].experience_replay(replay_rng, dropout_rng)
            if pairs:
                self.classifier.fit(pairs, config.classifier.epochs_per_fit, dropout_rng)
            flushed = self.workers_flush_pending
            if flushed:
                self.flush_workers()
            log_event(logger, "workers_updated", epoch=epoch, classifier_pairs=len(pairs), flushed=flushed)
        return loss

    def flush(self) -> None:
        """Empty the master buffer now and the worker buffers right after their next replay."""
        self.master.flush()
        self.workers_flush_pending = True

    def flush_workers(self) -> None:
        for worker in self.workers.values():
            worker.flush()
        self.workers_flush_pending = False

    def buffer_sizes(self) -> Dict[str, int]:
        sizes = {"master": len(self.master.buffer)}
        sizes.update({f"worker[{group}]": len(worker.buffer) for group, worker in self.workers.items()})
        return sizes

    def networks(self) -> List[DenseNet]:
        return [self.master.network, self.classifier.network] + [w.network for w in self.workers.values()]


class FlatAgent:
    """Single DQN over D ∪ S actions."""

    kind = FLAT

    def __init__(self, ontology: Ontology, agent: DQNAgent, episode: EpisodeConfig = EpisodeConfig()):
        n_actions = len(ontology.symptoms) + len(ontology.diseases)
        if agent.network.spec.input_size != ontology.state_size or agent.n_actions != n_actions:
            raise ShapeMismatchError("Flat network does not match the ontology")
        self.ontology = ontology
        self.agent = agent
        self.episode = episode

    @classmethod
    def create(cls, ontology: Ontology, config: TrainConfig, streams: SeedStreams) -> "FlatAgent":
        agent = DQNAgent("flat", ontology.state_size, len(ontology.symptoms) + len(ontology.diseases),
                         config.flat, streams.generator("init", 0), uses_subtask_steps=False)
        return cls(ontology, agent, config.episode)

    def run_episode(self, goal: UserGoal, rng: Optional[np.random.Generator] = None, mode: str = "eval",
                    episode: Optional[EpisodeConfig] = None, responder: Responder = answer,
                    trace: Optional[EpisodeTrace] = None) -> EpisodeResult:
        env = DiagnosisEnv(self.ontology, episode or self.episode, responder)
        return run_flat_episode(self.agent, env, goal, mode, rng, trace)

    def store(self, result: EpisodeResult) -> None:
        self.agent.remember(result.master_transitions)

    def replay(self, epoch: int, config: TrainConfig, replay_rng: np.random.Generator,
               dropout_rng: np.random.Generator, pairs: Sequence[Tuple[np.ndarray, str]]) -> float:
        return self.agent.experience_replay(replay_rng, dropout_rng)

    def flush(self) -> None:
        self.agent.flush()

    def buffer_sizes(self) -> Dict[str, int]:
        return {"flat": len(self.agent.buffer)}

    def networks(self) -> List[DenseNet]:
        return [self.agent.network]


Agent = Union[HierarchicalAgent, FlatAgent]


def _epsilon(agent: DQNAgent, mode: str) -> float:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return agent.config.epsilon if mode == "train" else 0.0


def run_hierarchical_episode(master: DQNAgent, workers: Dict[str, DQNAgent], classifier: DiseaseClassifier,
                             env: DiagnosisEnv, goal: UserGoal, mode: str = "eval",
                             rng: Optional[np.random.Generator] = None,
                             trace: Optional[EpisodeTrace] = None) -> EpisodeResult:
    """One dialogue driven by the master; workers run subtasks until the internal critic stops them.

    ``trace`` may be passed in to observe turns as they happen; it is filled in place.
    """
    ontology = env.ontology
    config = env.config
    if classifier.ontology != ontology or set(workers) != set(ontology.groups):
        raise ShapeMismatchError("Master, workers and classifier must share the environment's ontology")

    master_epsilon = _epsilon(master, mode)
    state, goal = env.reset(goal)
    trace = trace if trace is not None else EpisodeTrace(goal=goal)
    trace.goal, trace.hierarchical = goal, True
    result = EpisodeResult(trace=trace, worker_transitions={group: [] for group in ontology.groups})

    while not env.done:
        choice = master.act(state.vector, master_epsilon, rng)
        action = MasterAction.from_index(choice, ontology)
        # classifier pairs: every master decision state, labelled with the goal disease
        result.classifier_pairs.append((state.vector.copy(), goal.disease))

        if action.invokes_classifier:
            top = classifier.top_k(state, k=3)
            disease = top[0][0]
            outcome = env.step(Diagnosis(disease))
            shaped = shaped_reward(outcome, state, config, config.master_gamma)
            result.master_transitions.append(MasterTransition(
                state.vector, choice, outcome.reward, outcome.state.vector, True, 1,
            ))
            trace.turns.append(TurnRecord(
                turn=outcome.state.turn, actor=CLASSIFIER_ACTOR, kind="inform", target=disease,
                reward=outcome.reward, shaped_reward=shaped, top_diseases=top,
            ))
            trace.predicted = disease
            state = outcome.state
            break

        group = action.group
        worker = workers[group]
        worker_epsilon = _epsilon(worker, mode)
        start = state
        shaped_rewards: List[float] = []
        intrinsic_rewards: List[int] = []
        status = SubtaskStatus.ONGOING

        while True:
            worker_state = extract_worker_state(state, group, ontology)
            choice_w = worker.act(worker_state, worker_epsilon, rng)
            request = WorkerAction.from_index(group, choice_w, ontology)
            outcome = env.step(request.request)
            subtask_turn = len(shaped_rewards) + 1
            shaped = shaped_reward(outcome, state, config, config.master_gamma)
            reward_i = intrinsic_reward(outcome.repeated, outcome.answer, subtask_turn, config.max_subtask_turns)
            status = subtask_status(outcome.answer, outcome.repeated, subtask_turn, config.max_subtask_turns)
            finished = status is not SubtaskStatus.ONGOING or outcome.status.is_terminal

            shaped_rewards.append(shaped)
            intrinsic_rewards.append(reward_i)
            result.worker_transitions[group].append(WorkerTransition(
                worker_state, choice_w, float(reward_i), extract_worker_state(outcome.state, group, ontology),
                finished, 1,
            ))
            trace.turns.append(TurnRecord(
                turn=outcome.state.turn, actor=group, kind="request", target=request.symptom,
                answer=outcome.answer, repeated=outcome.repeated, reward=outcome.reward,
                shaped_reward=shaped, intrinsic_reward=reward_i,
            ))
            state = outcome.state
            if finished:
                break

        if status is SubtaskStatus.ONGOING:
            # the episode cap ended the dialogue mid-subtask
            status = SubtaskStatus.FAIL_BUDGET
        master_reward = accumulate_master_reward(shaped_rewards, config.master_gamma)
        result.master_transitions.append(MasterTransition(
            start.vector, choice, master_reward, state.vector, env.done, len(shaped_rewards),
        ))
        trace.subtasks.append(SubtaskRecord(group, status, len(shaped_rewards), intrinsic_rewards, master_reward))

    if env.status is not EpisodeStatus.SUCCESS_DIAGNOSIS and env.status is not EpisodeStatus.WRONG_DIAGNOSIS:
        result.classifier_pairs.append((state.vector.copy(), goal.disease))
    trace.outcome = env.status
    return result


def run_flat_episode(agent: DQNAgent, env: DiagnosisEnv, goal: UserGoal, mode: str = "eval",
                     rng: Optional[np.random.Generator] = None,
                     trace: Optional[EpisodeTrace] = None) -> EpisodeResult:
    ontology = env.ontology
    config = env.config
    epsilon = _epsilon(agent, mode)
    state, goal = env.reset(goal)
    trace = trace if trace is not None else EpisodeTrace(goal=goal)
    trace.goal, trace.hierarchical = goal, False
    result = EpisodeResult(trace=trace)

    while not env.done:
        choice = agent.act(state.vector, epsilon, rng)
        action = flat_action(choice, ontology)
        outcome = env.step(action)
        shaped = shaped_reward(outcome, state, config, config.master_gamma)
        result.master_transitions.append(Transition(
            state.vector, choice, shaped, outcome.state.vector, outcome.status.is_terminal, 1,
        ))
        if isinstance(action, Diagnosis):
            trace.turns.append(TurnRecord(outcome.state.turn, FLAT_ACTOR, "inform", action.disease,
                                          reward=outcome.reward, shaped_reward=shaped))
            trace.predicted = action.disease
        else:
            trace.turns.append(TurnRecord(outcome.state.turn, FLAT_ACTOR, "request", action.symptom,
                                          answer=outcome.answer, repeated=outcome.repeated,
                                          reward=outcome.reward, shaped_reward=shaped))
        state = outcome.state

    trace.outcome = env.status
    return result


def eval_sample(goals: Sequence[UserGoal], size: int, rng: np.random.Generator) -> List[UserGoal]:
    """Fixed evaluation subset; the whole list when it is not larger than ``size``."""
    if len(goals) <= size:
        return list(goals)
    positions = np.sort(rng.choice(len(goals), size=size, replace=False))
    return [goals[int(position)] for position in positions]


@dataclass
class TrainResult:
    agent: Agent
    curves: List[CurvePoint]
    best_epoch: Optional[int]
    best_success: float
    run_dir: Optional[Path] = None


def _check_goals(goals: Sequence[UserGoal], ontology: Ontology) -> None:
    for position, goal in enumerate(goals):
        if goal.disease not in ontology.disease_index:
            raise ValidationError(f"Goal {position} has disease {goal.disease!r} outside the ontology")
        for symptom in list(goal.explicit) + list(goal.implicit):
            if symptom not in ontology.symptom_index:
                raise ValidationError(f"Goal {position} mentions unknown symptom {symptom!r}")


def _train(agent: Agent, config: TrainConfig, goals: Sequence[UserGoal], ontology: Ontology,
           run_dir: Optional[Path]) -> TrainResult:
    if not goals:
        raise ValidationError("Training split is empty")
    _check_goals(goals, ontology)

    streams = SeedStreams(config.seed)
    file_ops = FileOperations(run_dir) if run_dir is not None else None
    eval_goals = eval_sample(goals, config.eval_sample_size, streams.generator("eval"))
    pairs: List[Tuple[np.ndarray, str]] = []
    curves: List[CurvePoint] = []
    history: List[float] = []
    best_success, best_epoch = -math.inf, None
    best_dir = run_dir / "best" if run_dir is not None else None

    def rollout(rng: np.random.Generator) -> EpisodeResult:
        goal = goals[int(rng.integers(len(goals)))]
        return agent.run_episode(goal, rng, mode="train")

    for epoch in range(1, config.epochs + 1):
        results = parallel_map(rollout, streams.spawn("rollout", config.episodes_per_epoch, epoch), config.jobs)
        for result in results:
            agent.store(result)
            pairs.extend(result.classifier_pairs)
        del pairs[:max(0, len(pairs) - config.classifier.pool_size)]

        try:
            loss = agent.replay(epoch, config, streams.generator("replay", epoch), streams.generator("dropout", epoch),
                                pairs)
        except NonFiniteGradientError as exc:
            _abort(epoch, str(exc), best_dir if best_epoch is not None else None)
        if not math.isfinite(loss) or not all(net.params.is_finite() for net in agent.networks()):
            _abort(epoch, f"non-finite loss {loss}", best_dir if best_epoch is not None else None)

        metrics, _ = evaluate_run(agent, eval_goals, config.episode, jobs=config.jobs)
        history.append(metrics.success_rate)
        improved = metrics.success_rate > best_success
        curves.append(CurvePoint(epoch, metrics.success_rate, metrics.average_reward, metrics.average_turns,
                                 loss, improved))

        if improved:
            best_success, best_epoch = metrics.success_rate, epoch
            agent.flush()
            log_event(logger, "buffers_flushed", epoch=epoch, success=metrics.success_rate)
            if file_ops is not None:
                save_checkpoint(agent, best_dir, config, epoch, history)
        if file_ops is not None:
            file_ops.write_csv("curves.csv", CURVE_COLUMNS, [point.to_row() for point in curves])

        log_event(logger, "epoch", epoch=epoch, success=round(metrics.success_rate, 4),
                  avg_reward=round(metrics.average_reward, 4), avg_turns=round(metrics.average_turns, 3),
                  loss=round(loss, 6), best=improved)

    if file_ops is not None:
        save_checkpoint(agent, run_dir / "final", config, config.epochs, history)
    return TrainResult(agent, curves, best_epoch, best_success, run_dir)


def _abort(epoch: int, reason: str, last_checkpoint: Optional[Path]) -> None:
    log_event(logger, "training_aborted", level=logging.ERROR, epoch=epoch, reason=reason,
              last_checkpoint=str(last_checkpoint) if last_checkpoint else None)
    raise TrainingAbortedError(f"Training aborted at epoch {epoch}: {reason}",
                               str(last_checkpoint) if last_checkpoint else None)


def _train_goals(dataset) -> List[UserGoal]:
    if not dataset.is_split:
        raise ValidationError("Dataset has no train/test split; regenerate it with gen-data")
    return dataset.train()


def train(config: TrainConfig, dataset, ontology: Ontology, run_dir: Optional[Path] = None) -> TrainResult:
    """Joint master/worker/classifier training on the dataset's train split."""
    goals = _train_goals(dataset)
    agent = HierarchicalAgent.create(ontology, config, SeedStreams(config.seed))
    log_event(logger, "train_started", kind=HIERARCHICAL, seed=config.seed, goals=len(goals), epochs=config.epochs)
    return _train(agent, config, goals, ontology, run_dir)


def train_flat(config: TrainConfig, dataset, ontology: Ontology, run_dir: Optional[Path] = None) -> TrainResult:
    goals = _train_goals(dataset)
    agent = FlatAgent.create(ontology, config, SeedStreams(config.seed))
    log_event(logger, "train_started", kind=FLAT, seed=config.seed, goals=len(goals), epochs=config.epochs)
    return _train(agent, config, goals, ontology, run_dir)


def _sidecar(agent: DQNAgent, epoch: int, history: Sequence[float]) -> Dict[str, Any]:
    return {"name": agent.name, "config": agent.config.to_dict(), "epoch": epoch,
            "success_history": [float(value) for value in history]}


def save_checkpoint(agent: Agent, directory: Path, config: TrainConfig, epoch: int,
                    history: Sequence[float]) -> Path:
    """Write every network plus JSON sidecars; identical inputs give identical bytes."""
    directory = Path(directory)
    file_ops = FileOperations(directory)
    file_ops.write_ontology("ontology.json", agent.ontology)

    manifest: Dict[str, Any] = {
        "kind": agent.kind,
        "epoch": epoch,
        "success_rate": float(history[epoch - 1]) if 0 < epoch <= len(history) else None,
        "config": config.to_dict(),
    }
    if isinstance(agent, HierarchicalAgent):
        manifest["workers"] = {group: f"worker_{k:02d}" for k, group in enumerate(agent.ontology.groups)}
        file_ops.write_network("master.net", agent.master.network)
        file_ops.write_json("master.json", _sidecar(agent.master, epoch, history))
        for group, stem in manifest["workers"].items():
            worker = agent.workers[group]
            file_ops.write_network(f"{stem}.net", worker.network)
            file_ops.write_json(f"{stem}.json", {**_sidecar(worker, epoch, history), "group": group})
        file_ops.write_network("classifier.net", agent.classifier.network)
        file_ops.write_json("classifier.json",
                            {"config": agent.classifier.config.to_dict(), "epoch": epoch,
                             "success_history": [float(value) for value in history]})
    else:
        file_ops.write_network("agent.net", agent.agent.network)
        file_ops.write_json("agent.json", _sidecar(agent.agent, epoch, history))

    file_ops.write_json("manifest.json", manifest)
    log_event(logger, "checkpoint_saved", path=str(directory), epoch=epoch)
    return directory


def _restore(name: str, network: DenseNet, config: AgentConfig, uses_subtask_steps: bool) -> DQNAgent:
    agent = DQNAgent(name, network.spec.input_size, network.spec.output_size, config,
                     np.random.default_rng(0), uses_subtask_steps)
    agent.network = network
    agent.sync_target()
    return agent


def read_manifest(directory: Path) -> Dict[str, Any]:
    directory = Path(directory)
    if not (directory / "manifest.json").is_file():
        raise ValidationError(f"No checkpoint manifest in {directory}")
    return FileOperations(directory).read_json("manifest.json")


def checkpoint_config(directory: Path) -> TrainConfig:
    return TrainConfig.from_dict(read_manifest(directory)["config"])


def load_checkpoint(directory: Path) -> Agent:
    file_ops = FileOperations(directory)
    manifest = read_manifest(directory)
    config = TrainConfig.from_dict(manifest["config"])
    ontology = file_ops.read_ontology("ontology.json")

    if manifest["kind"] == FLAT:
        agent = _restore("flat", file_ops.read_network("agent.net"), config.flat, False)
        return FlatAgent(ontology, agent, config.episode)
    if manifest["kind"] != HIERARCHICAL:
        raise ValidationError(f"Unknown checkpoint kind {manifest['kind']!r}")

    master = _restore("master", file_ops.read_network("master.net"), config.master, True)
    workers = {
        group: _restore(f"worker[{group}]", file_ops.read_network(f"{stem}.net"), config.worker, False)
        for group, stem in manifest["workers"].items()
    }
    classifier = DiseaseClassifier(ontology, file_ops.read_network("classifier.net"), config.classifier)
    return HierarchicalAgent(ontology, master, workers, classifier, config.episode)
