"""Dialogue metrics, per-worker analysis, group error matrix and transcript export."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .models import Ontology, SymptomStatus, UserGoal
from .simulator import EpisodeConfig, EpisodeStatus, SubtaskStatus
from .validator import ValidationError

if TYPE_CHECKING:
    from .trainer import EpisodeTrace

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """Order-preserving map; threads only when ``jobs`` > 1."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


@dataclass(frozen=True)
class RunMetrics:
    success_rate: float
    average_reward: float
    average_discounted_reward: float
    average_turns: float
    episodes: int

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "success_rate": self.success_rate,
            "average_reward": self.average_reward,
            "average_discounted_reward": self.average_discounted_reward,
            "average_turns": self.average_turns,
            "episodes": self.episodes,
        }
        return {key: value for key, value in data.items() if not (isinstance(value, float) and math.isnan(value))}


def summarize(traces: Sequence["EpisodeTrace"], gamma: float) -> RunMetrics:
    if not traces:
        raise ValidationError("Cannot summarize zero episodes")
    successes = sum(1 for trace in traces if trace.outcome is EpisodeStatus.SUCCESS_DIAGNOSIS)
    return RunMetrics(
        success_rate=successes / len(traces),
        average_reward=float(np.mean([trace.total_reward for trace in traces])),
        average_discounted_reward=float(np.mean([trace.discounted_reward(gamma) for trace in traces])),
        average_turns=float(np.mean([trace.n_turns for trace in traces])),
        episodes=len(traces),
    )


def evaluate_run(policy, goals: Sequence[UserGoal], episode: EpisodeConfig,
                 jobs: int = 1) -> Tuple[RunMetrics, List["EpisodeTrace"]]:
    """One greedy episode per goal. ``policy`` is anything with a ``run_episode`` method."""
    if not goals:
        raise ValidationError("Cannot evaluate on zero goals")
    results = parallel_map(lambda goal: policy.run_episode(goal, None, mode="eval", episode=episode), goals, jobs)
    traces = [result.trace for result in results]
    return summarize(traces, episode.master_gamma), traces


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std_error: float

    def format(self, digits: int = 3) -> str:
        return f"{self.mean:.{digits}f} ± {self.std_error:.{digits}f}"

    def to_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "std_error": self.std_error}


def mean_and_se(values: Sequence[float]) -> MetricSummary:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("Cannot aggregate zero runs")
    if values.size == 1:
        return MetricSummary(float(values[0]), 0.0)
    return MetricSummary(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)))


@dataclass
class EvalReport:
    """Mean ± standard error over seeded runs. Accuracy-only baselines leave reward and turns empty."""

    name: str
    runs: List[RunMetrics]
    success_rate: MetricSummary
    average_reward: Optional[MetricSummary] = None
    average_discounted_reward: Optional[MetricSummary] = None
    average_turns: Optional[MetricSummary] = None
    traces: List[List["EpisodeTrace"]] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"name": self.name, "runs": [run.to_dict() for run in self.runs],
                                "success_rate": self.success_rate.to_dict()}
        for key in ("average_reward", "average_discounted_reward", "average_turns"):
            value = getattr(self, key)
            if value is not None:
                data[key] = value.to_dict()
        return data


def aggregate_runs(name: str, runs: Sequence[RunMetrics],
                   traces: Optional[List[List["EpisodeTrace"]]] = None) -> EvalReport:
    return EvalReport(
        name=name,
        runs=list(runs),
        success_rate=mean_and_se([run.success_rate for run in runs]),
        average_reward=mean_and_se([run.average_reward for run in runs]),
        average_discounted_reward=mean_and_se([run.average_discounted_reward for run in runs]),
        average_turns=mean_and_se([run.average_turns for run in runs]),
        traces=traces or [],
    )


def evaluate(policies, goals: Sequence[UserGoal], episode: EpisodeConfig, name: str = "policy",
             jobs: int = 1) -> EvalReport:
    """Evaluate one policy, or several seeded runs of the same method, greedily on ``goals``."""
    if hasattr(policies, "run_episode"):
        policies = [policies]
    runs, traces = [], []
    for policy in policies:
        metrics, run_traces = evaluate_run(policy, goals, episode, jobs)
        runs.append(metrics)
        traces.append(run_traces)
    report = aggregate_runs(name, runs, traces)
    logger.info("%s: success %s over %d run(s)", name, report.success_rate.format(), len(runs))
    return report


def accuracy_report(name: str, accuracies: Sequence[float], episodes: int) -> EvalReport:
    runs = [RunMetrics(float(a), math.nan, math.nan, math.nan, episodes) for a in accuracies]
    return EvalReport(name=name, runs=runs, success_rate=mean_and_se(accuracies))


REPORT_COLUMNS = ("method", "success", "success_se", "reward", "reward_se",
                  "discounted_reward", "discounted_reward_se", "turns", "turns_se", "runs")


def report_rows(reports: Sequence[EvalReport]) -> List[List[Any]]:
    rows = []
    for report in reports:
        row: List[Any] = [report.name, report.success_rate.mean, report.success_rate.std_error]
        for summary in (report.average_reward, report.average_discounted_reward, report.average_turns):
            row.extend(["", ""] if summary is None else [summary.mean, summary.std_error])
        row.append(len(report.runs))
        rows.append(row)
    return rows


def _is_match(turn, goal: UserGoal) -> bool:
    return turn.answer is SymptomStatus.TRUE and goal.implicit.get(turn.target) is SymptomStatus.TRUE


def match_counts(traces: Sequence["EpisodeTrace"], actor: Optional[str] = None) -> Tuple[int, int]:
    """(requests answered True on an implicit-True symptom, all symptom requests)."""
    hits = requests = 0
    for trace in traces:
        for turn in trace.requests:
            if actor is not None and turn.actor != actor:
                continue
            requests += 1
            hits += _is_match(turn, trace.goal)
    return hits, requests


def match_rate(traces: Sequence["EpisodeTrace"], actor: Optional[str] = None) -> float:
    if not traces:
        raise ValidationError("Match rate needs at least one trace")
    hits, requests = match_counts(traces, actor)
    return hits / requests if requests else 0.0


@dataclass(frozen=True)
class WorkerStats:
    group: str
    activations: int
    success_rate: float
    average_intrinsic_reward: float
    match_rate: float
    activation_times: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "group": self.group,
            "activations": self.activations,
            "success_rate": self.success_rate,
            "average_intrinsic_reward": self.average_intrinsic_reward,
            "match_rate": self.match_rate,
            "activation_times": self.activation_times,
        }


@dataclass
class WorkerReport:
    rows: List[WorkerStats]
    overall_match_rate: float

    def to_dict(self) -> Dict[str, Any]:
        return {"workers": [row.to_dict() for row in self.rows], "overall_match_rate": self.overall_match_rate}


WORKER_COLUMNS = ("group", "activations", "success_rate", "average_intrinsic_reward", "match_rate",
                  "activation_times")


def worker_report(traces: Sequence["EpisodeTrace"], ontology: Ontology) -> WorkerReport:
    if not traces:
        raise ValidationError("Worker report needs at least one trace")
    rows = []
    for group in ontology.groups:
        subtasks = [s for trace in traces for s in trace.subtasks if s.group == group]
        rewards = [r for s in subtasks for r in s.intrinsic_rewards]
        hits, requests = match_counts(traces, actor=group)
        successes = sum(1 for s in subtasks if s.status is SubtaskStatus.SUCCESS_HIT)
        rows.append(WorkerStats(
            group=group,
            activations=len(subtasks),
            success_rate=successes / len(subtasks) if subtasks else 0.0,
            average_intrinsic_reward=float(np.mean(rewards)) if rewards else 0.0,
            match_rate=hits / requests if requests else 0.0,
            activation_times=len(subtasks) / len(traces),
        ))
    return WorkerReport(rows=rows, overall_match_rate=match_rate(traces))


@dataclass
class ErrorMatrix:
    """counts[i, j]: wrong diagnoses of a group-i disease as a group-j disease."""

    groups: Tuple[str, ...]
    counts: np.ndarray
    episodes: Dict[str, int]
    successes: Dict[str, int]
    undiagnosed: Dict[str, int]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def diagonal_share(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def wrong(self, group: str) -> int:
        return int(self.counts[self.groups.index(group)].sum())

    def csv_rows(self) -> Tuple[List[str], List[List[Any]]]:
        header = ["true\\predicted", *self.groups]
        return header, [[group, *map(int, self.counts[i])] for i, group in enumerate(self.groups)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "groups": list(self.groups),
            "counts": self.counts.astype(int).tolist(),
            "episodes": dict(self.episodes),
            "successes": dict(self.successes),
            "undiagnosed": dict(self.undiagnosed),
            "diagonal_share": self.diagonal_share,
        }


def error_matrix(traces: Sequence["EpisodeTrace"], ontology: Ontology) -> ErrorMatrix:
    groups = ontology.groups
    counts = np.zeros((len(groups), len(groups)), dtype=np.int64)
    episodes = {group: 0 for group in groups}
    successes = {group: 0 for group in groups}
    undiagnosed = {group: 0 for group in groups}

    for trace in traces:
        if trace.goal.disease not in ontology.disease_group:
            raise ValidationError(f"Trace goal disease {trace.goal.disease!r} is not in the ontology")
        true_group = ontology.disease_group[trace.goal.disease]
        episodes[true_group] += 1
        if trace.outcome is EpisodeStatus.SUCCESS_DIAGNOSIS:
            successes[true_group] += 1
        elif trace.outcome is EpisodeStatus.WRONG_DIAGNOSIS:
            predicted_group = ontology.disease_group[trace.predicted]
            counts[ontology.group_index[true_group], ontology.group_index[predicted_group]] += 1
        else:
            undiagnosed[true_group] += 1

    return ErrorMatrix(groups, counts, episodes, successes, undiagnosed)


_ANSWER_TEXT = {
    SymptomStatus.TRUE: "Yes",
    SymptomStatus.FALSE: "No",
    SymptomStatus.UNKNOWN: "Not sure",
}


@dataclass
class Transcript:
    columns: Tuple[str, ...]
    rows: List[Tuple[str, ...]]
    outcome: str
    top_diseases: List[Tuple[str, float]] = field(default_factory=list)

    def to_text(self) -> str:
        widths = [max([len(column)] + [len(row[i]) for row in self.rows]) for i, column in enumerate(self.columns)]
        lines = [
            " | ".join(column.ljust(width) for column, width in zip(self.columns, widths)),
            "-+-".join("-" * width for width in widths),
        ]
        lines.extend(" | ".join(cell.ljust(width) for cell, width in zip(row, widths)) for row in self.rows)
        lines.append(f"Outcome: {self.outcome}")
        if self.top_diseases:
            lines.append("Top diseases: " + ", ".join(f"{name} ({p:.3f})" for name, p in self.top_diseases))
        return "\n".join(lines)

    def to_dict(self) -> Dict[str, Any]:
        return {"columns": list(self.columns), "rows": [list(row) for row in self.rows], "outcome": self.outcome,
                "top_diseases": [[name, p] for name, p in self.top_diseases]}


def transcript_columns(hierarchical: bool) -> Tuple[str, ...]:
    if hierarchical:
        return ("turn", "worker id", "agent action", "user action")
    return ("turn", "agent action", "user action")


def export_transcript(trace: "EpisodeTrace") -> Transcript:
    """Table-shaped dialogue: hierarchical traces carry a worker id column, flat ones do not."""
    if not trace.turns:
        raise ValidationError("Cannot export an empty trace")

    rows = []
    for turn in trace.turns:
        if turn.is_request:
            agent_text = f"Do you have {turn.target}?"
            user_text = "(repeated)" if turn.repeated else _ANSWER_TEXT.get(turn.answer, "")
        else:
            agent_text = f"Inform the disease of {turn.target}."
            user_text = "Over"
        cells = (str(turn.turn), turn.actor, agent_text, user_text) if trace.hierarchical \
            else (str(turn.turn), agent_text, user_text)
        rows.append(cells)

    last = trace.turns[-1]
    return Transcript(transcript_columns(trace.hierarchical), rows, trace.outcome.value, list(last.top_diseases))
