import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .models import Diagnosis, Ontology, SymptomRequest
from .neuralnet import DenseNet, DenseNetSpec, OptimizerConfig, q_loss_grad
from .validator import ConfigError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentConfig:
    epsilon: float = 0.1
    gamma: float = 0.95
    learning_rate: float = 0.0005
    buffer_capacity: int = 10000
    batch_size: int = 32
    hidden_sizes: Tuple[int, ...] = (512, 512)
    dropout: float = 0.5
    optimizer: str = "adam"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.buffer_capacity < 1 or self.batch_size < 1:
            raise ConfigError("buffer_capacity and batch_size must be >= 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base: Optional["AgentConfig"] = None) -> "AgentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown agent config keys: {sorted(unknown)}")
        merged = asdict(base or cls())
        merged.update(data)
        return cls(**merged)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["hidden_sizes"] = list(self.hidden_sizes)
        return data

    def network_spec(self, input_size: int, n_actions: int) -> DenseNetSpec:
        return DenseNetSpec(widths=(input_size, *self.hidden_sizes, n_actions), dropout=self.dropout, head="linear")


@dataclass(frozen=True)
class Transition:
    """(s, a, r, s', terminal) with N environment turns between s and s'."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    n_steps: int = 1


@dataclass(frozen=True)
class MasterTransition(Transition):
    pass


@dataclass(frozen=True)
class WorkerTransition(Transition):
    pass


class ReplayBuffer:
    """Bounded FIFO of transitions, sampled uniformly with replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("Replay capacity must be >= 1")
        self.capacity = capacity
        self.buffer: Deque[Transition] = deque(maxlen=capacity)

    def push(self, transition: Transition) -> None:
        self.buffer.append(transition)

    def extend(self, transitions: Sequence[Transition]) -> None:
        self.buffer.extend(transitions)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        if not self.buffer:
            raise ValidationError("Cannot sample from an empty replay buffer")
        positions = rng.integers(len(self.buffer), size=batch_size)
        return [self.buffer[int(position)] for position in positions]

    def flush(self) -> None:
        self.buffer.clear()

    def __len__(self) -> int:
        return len(self.buffer)


def select_action(q_values: np.ndarray, epsilon: float, rng: Optional[np.random.Generator] = None) -> int:
    q_values = np.asarray(q_values).reshape(-1)
    if q_values.size == 0:
        raise ValidationError("Cannot select from an empty action set")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q_values.size))
    return int(np.argmax(q_values))


def accumulate_master_reward(rewards: Sequence[float], gamma: float) -> float:
    """r^m = sum_{t'=1..N} gamma^t' r_t' (the first turn is already discounted once)."""
    if len(rewards) < 1:
        raise ValidationError("A subtask spans at least one turn")
    total = 0.0
    discount = 1.0
    for reward in rewards:
        discount *= gamma
        total += discount * reward
    return total


def _bootstrap(reward: float, terminal: bool, n_steps: int, next_q: np.ndarray, gamma: float) -> float:
    if terminal:
        return float(reward)
    return float(reward + gamma ** n_steps * np.max(next_q))


def master_target(transition: Transition, target_net: DenseNet, gamma: float) -> float:
    next_q = target_net(transition.next_state)[0] if not transition.terminal else None
    return _bootstrap(transition.reward, transition.terminal, transition.n_steps, next_q, gamma)


def worker_target(transition: Transition, target_net: DenseNet, gamma_w: float) -> float:
    next_q = target_net(transition.next_state)[0] if not transition.terminal else None
    return _bootstrap(transition.reward, transition.terminal, 1, next_q, gamma_w)


def batch_targets(transitions: Sequence[Transition], target_net: DenseNet, gamma: float,
                  use_steps: bool = True) -> np.ndarray:
    """Vectorised master/worker targets; matches the scalar functions exactly."""
    rewards = np.array([t.reward for t in transitions], dtype=np.float64)
    terminal = np.array([t.terminal for t in transitions], dtype=bool)
    steps = np.array([t.n_steps if use_steps else 1 for t in transitions], dtype=np.float64)
    targets = rewards.copy()
    live = ~terminal
    if np.any(live):
        next_states = np.stack([t.next_state for t, alive in zip(transitions, live) if alive])
        next_max = target_net(next_states).max(axis=1)
        targets[live] = rewards[live] + np.power(gamma, steps[live]) * next_max
    return targets


class DQNAgent:
    """Current and target Q-networks with their own replay buffer."""

    def __init__(self, name: str, input_size: int, n_actions: int, config: AgentConfig,
                 rng: np.random.Generator, uses_subtask_steps: bool = True):
        self.name = name
        self.config = config
        self.uses_subtask_steps = uses_subtask_steps
        spec = config.network_spec(input_size, n_actions)
        self.network = DenseNet.create(spec, rng, OptimizerConfig(name=config.optimizer))
        self.target = self.network.copy()
        self.buffer = ReplayBuffer(config.buffer_capacity)

    @property
    def n_actions(self) -> int:
        return self.network.spec.output_size

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.network(state)[0]

    def act(self, state: np.ndarray, epsilon: float, rng: Optional[np.random.Generator]) -> int:
        return select_action(self.q_values(state), epsilon, rng)

    def remember(self, transitions: Union[Transition, Sequence[Transition]]) -> None:
        if isinstance(transitions, Transition):
            self.buffer.push(transitions)
        else:
            self.buffer.extend(transitions)

    def replay_update(self, batch_size: int, replay_rng: np.random.Generator,
                      dropout_rng: np.random.Generator) -> float:
        """One mini-batch step against the frozen target network."""
        batch = self.buffer.sample(batch_size, replay_rng)
        targets = batch_targets(batch, self.target, self.config.gamma, self.uses_subtask_steps)
        states = np.stack([t.state for t in batch])
        actions = [t.action for t in batch]
        loss, grads = q_loss_grad(self.network.params, self.network.spec, states, actions, targets,
                                  mode="train", rng=dropout_rng)
        self.network.apply(grads, self.config.learning_rate)
        return loss

    def experience_replay(self, replay_rng: np.random.Generator, dropout_rng: np.random.Generator) -> float:
        """ceil(|B| / batch) mini-batches, then the target is replaced by the current network."""
        if len(self.buffer) == 0:
            return float("nan")
        n_batches = math.ceil(len(self.buffer) / self.config.batch_size)
        losses = [self.replay_update(self.config.batch_size, replay_rng, dropout_rng) for _ in range(n_batches)]
        self.sync_target()
        mean_loss = float(np.mean(losses))
        logger.debug("%s replay: %d batches, loss %.6f", self.name, n_batches, mean_loss)
        return mean_loss

    def sync_target(self) -> None:
        self.target = self.network.copy()

    def flush(self) -> None:
        self.buffer.flush()


def flat_action(index: int, ontology: Ontology) -> Union[SymptomRequest, Diagnosis]:
    """Indices below |S| request a symptom; the rest inform a disease."""
    n_symptoms = len(ontology.symptoms)
    if not 0 <= index < n_symptoms + len(ontology.diseases):
        raise IndexError(f"Flat action {index} out of range")
    if index < n_symptoms:
        return SymptomRequest(ontology.symptoms[index])
    return Diagnosis(ontology.diseases[index - n_symptoms])
