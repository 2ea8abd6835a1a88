import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import DialogueState, Ontology, UserGoal, build_state, goal_answers
from .neuralnet import DenseNet, DenseNetSpec, NetParams, OptimizerConfig, ce_loss_grad
from .validator import ConfigError, ShapeMismatchError, ValidationError

logger = logging.getLogger(__name__)

SVM_MODES = ("ex", "ex_im")


@dataclass(frozen=True)
class ClassifierConfig:
    hidden_size: int = 512
    dropout: float = 0.5
    learning_rate: float = 0.0005
    batch_size: int = 32
    epochs_per_fit: int = 5
    pool_size: int = 20000

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClassifierConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown classifier config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class DiseaseClassifier:
    """input -> hidden -> |D| softmax over the full master state."""

    def __init__(self, ontology: Ontology, network: DenseNet, config: ClassifierConfig = ClassifierConfig()):
        if network.spec.input_size != ontology.state_size or network.spec.output_size != len(ontology.diseases):
            raise ShapeMismatchError("Classifier network does not match the ontology")
        self.ontology = ontology
        self.network = network
        self.config = config

    @classmethod
    def create(cls, ontology: Ontology, config: ClassifierConfig, rng: np.random.Generator) -> "DiseaseClassifier":
        spec = DenseNetSpec(
            widths=(ontology.state_size, config.hidden_size, len(ontology.diseases)),
            dropout=config.dropout,
            head="softmax",
        )
        return cls(ontology, DenseNet.create(spec, rng), config)

    def classify(self, state: DialogueState) -> Tuple[np.ndarray, str]:
        if state.vector.shape[0] != self.ontology.state_size:
            raise ShapeMismatchError(
                f"State has length {state.vector.shape[0]}, expected {self.ontology.state_size}"
            )
        probabilities = self.network(state.vector, mode="eval")[0]
        return probabilities, self.ontology.diseases[int(np.argmax(probabilities))]

    def top_k(self, state: DialogueState, k: int = 3) -> List[Tuple[str, float]]:
        probabilities, _ = self.classify(state)
        order = np.argsort(-probabilities, kind="stable")[:k]
        return [(self.ontology.diseases[int(i)], float(probabilities[i])) for i in order]

    def fit(self, pairs: Sequence[Tuple[np.ndarray, str]], epochs: int, rng: np.random.Generator) -> List[float]:
        """Mini-batch cross-entropy over (terminal state, goal disease) pairs; returns per-epoch mean loss."""
        if not pairs:
            raise ValidationError("Classifier fit needs at least one labelled state")
        states = np.stack([np.asarray(state, dtype=np.float64) for state, _ in pairs])
        labels = np.array([self.ontology.disease_index[disease] for _, disease in pairs], dtype=np.int64)

        history = []
        for _ in range(epochs):
            order = rng.permutation(len(labels))
            losses = []
            for start in range(0, len(order), self.config.batch_size):
                rows = order[start:start + self.config.batch_size]
                loss, grads = ce_loss_grad(self.network.params, self.network.spec, states[rows], labels[rows],
                                           mode="train", rng=rng)
                self.network.apply(grads, self.config.learning_rate)
                losses.append(loss * len(rows))
            history.append(float(sum(losses) / len(labels)))
        logger.debug("classifier fit on %d pairs, final loss %.4f", len(labels), history[-1] if history else float("nan"))
        return history


def fit_classifier(classifier: DiseaseClassifier, pairs: Sequence[Tuple[np.ndarray, str]],
                   rng: np.random.Generator, epochs: Optional[int] = None) -> DiseaseClassifier:
    classifier.fit(pairs, classifier.config.epochs_per_fit if epochs is None else epochs, rng)
    return classifier


@dataclass
class LinearSVMModel:
    """One-vs-rest linear margins ``W x + b`` with one row per disease."""

    weights: np.ndarray
    biases: np.ndarray
    diseases: Tuple[str, ...]
    mode: str = "ex_im"

    def margins(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(features) @ self.weights.T + self.biases

    def to_network(self) -> DenseNet:
        """The degenerate single linear layer used for checkpoint storage."""
        spec = DenseNetSpec(widths=(self.weights.shape[1], self.weights.shape[0]), dropout=0.0, head="linear")
        return DenseNet(spec, NetParams(weights=[self.weights.T.copy()], biases=[self.biases.copy()]),
                        OptimizerConfig(name="sgd"))

    @classmethod
    def from_network(cls, network: DenseNet, diseases: Sequence[str], mode: str) -> "LinearSVMModel":
        if network.spec.n_layers != 1:
            raise ValidationError("An SVM checkpoint holds exactly one linear layer")
        return cls(network.params.weights[0].T.copy(), network.params.biases[0].copy(), tuple(diseases), mode)


def encode_goal(goal: UserGoal, ontology: Ontology, mode: str) -> np.ndarray:
    if mode not in SVM_MODES:
        raise ValidationError(f"Unknown SVM mode {mode!r}")
    return build_state(goal_answers(goal, include_implicit=(mode == "ex_im")), ontology).vector.copy()


def fit_linear_svm(features: np.ndarray, labels: np.ndarray, n_classes: int, rng: np.random.Generator,
                   epochs: int = 50, regularization: float = 1e-4, learning_rate: float = 0.1,
                   batch_size: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """Hinge loss + L2, stochastic sub-gradient with a 1 / (1 + eta0 * lambda * t) step decay."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ValidationError("SVM training needs at least two classes")

    n_samples, n_features = features.shape
    weights = np.zeros((n_classes, n_features))
    biases = np.zeros(n_classes)
    signs = np.where(labels[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)

    step = 0
    for _ in range(epochs):
        order = rng.permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            rows = order[start:start + batch_size]
            eta = learning_rate / (1.0 + learning_rate * regularization * step)
            x, y = features[rows], signs[rows]
            violated = (y * (x @ weights.T + biases)) < 1.0
            coefficient = (violated * y) / len(rows)
            weights *= 1.0 - eta * regularization
            weights += eta * coefficient.T @ x
            biases += eta * coefficient.sum(axis=0)
            step += 1
    return weights, biases


def fit_svm(goals: Sequence[UserGoal], ontology: Ontology, mode: str, rng: np.random.Generator,
            epochs: int = 50, regularization: float = 1e-4) -> LinearSVMModel:
    """SVM-ex zeroes implicit blocks; SVM-ex&im sees every labelled symptom."""
    features = np.stack([encode_goal(goal, ontology, mode) for goal in goals])
    labels = np.array([ontology.disease_index[goal.disease] for goal in goals], dtype=np.int64)
    weights, biases = fit_linear_svm(features, labels, len(ontology.diseases), rng, epochs, regularization)
    return LinearSVMModel(weights, biases, ontology.diseases, mode)


def svm_predict(model: LinearSVMModel, features: np.ndarray) -> str:
    return model.diseases[int(np.argmax(model.margins(features)[0]))]


def svm_accuracy(model: LinearSVMModel, goals: Sequence[UserGoal], ontology: Ontology) -> float:
    if not goals:
        raise ValidationError("Cannot score an SVM on zero goals")
    features = np.stack([encode_goal(goal, ontology, model.mode) for goal in goals])
    predicted = np.argmax(model.margins(features), axis=1)
    truth = np.array([ontology.disease_index[goal.disease] for goal in goals])
    return float(np.mean(predicted == truth))
