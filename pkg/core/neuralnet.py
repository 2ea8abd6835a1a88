"""Dense feed-forward networks with inverted dropout, backprop and Adam/SGD.

Everything is float64. Weight matrices are stored (fan_in, fan_out) so a
batch ``x`` of shape (B, fan_in) maps to ``x @ W + b``.
"""

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .validator import ConfigError, NonFiniteGradientError, ShapeMismatchError, ValidationError

CHECKPOINT_MAGIC = b"HRLDXNET"
CHECKPOINT_VERSION = 1
HEADS = ("linear", "softmax")


@dataclass(frozen=True)
class DenseNetSpec:
    widths: Tuple[int, ...]
    dropout: float = 0.5
    head: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ConfigError("A network needs at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ConfigError(f"Layer widths must be >= 1, got {self.widths}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"Dropout rate must be in [0, 1), got {self.dropout}")
        if self.head not in HEADS:
            raise ConfigError(f"Unknown output head {self.head!r}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def input_size(self) -> int:
        return self.widths[0]

    @property
    def output_size(self) -> int:
        return self.widths[-1]


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.name not in ("adam", "sgd"):
            raise ConfigError(f"Unknown optimizer {self.name!r}")


@dataclass
class NetParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not self.first_moments:
            self.first_moments = [np.zeros_like(p) for p in self.arrays()]
        if not self.second_moments:
            self.second_moments = [np.zeros_like(p) for p in self.arrays()]

    def arrays(self) -> List[np.ndarray]:
        """Parameters in (W0, b0, W1, b1, ...) order, shared with gradients and moments."""
        out = []
        for weight, bias in zip(self.weights, self.biases):
            out.extend([weight, bias])
        return out

    def copy(self) -> "NetParams":
        return copy.deepcopy(self)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.arrays())


def init_params(spec: DenseNetSpec, rng: np.random.Generator) -> NetParams:
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return NetParams(weights=weights, biases=biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass
class _ForwardCache:
    activations: List[np.ndarray]
    pre_activations: List[np.ndarray]
    masks: List[Optional[np.ndarray]]
    logits: np.ndarray


def _as_batch(spec: DenseNetSpec, inputs: np.ndarray) -> np.ndarray:
    batch = np.asarray(inputs, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != spec.input_size:
        raise ShapeMismatchError(f"Expected input width {spec.input_size}, got shape {np.shape(inputs)}")
    return batch


def _forward(params: NetParams, spec: DenseNetSpec, inputs: np.ndarray, mode: str,
             rng: Optional[np.random.Generator]) -> _ForwardCache:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    use_dropout = mode == "train" and spec.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("Train-mode forward with dropout needs a random generator")

    hidden = _as_batch(spec, inputs)
    activations, pre_activations, masks = [hidden], [], []
    last = spec.n_layers - 1
    for layer, (weight, bias) in enumerate(zip(params.weights, params.biases)):
        z = hidden @ weight + bias
        pre_activations.append(z)
        if layer == last:
            return _ForwardCache(activations, pre_activations, masks, z)
        hidden = np.maximum(z, 0.0)
        if use_dropout:
            keep = 1.0 - spec.dropout
            mask = (rng.random(hidden.shape) < keep) / keep
            hidden = hidden * mask
            masks.append(mask)
        else:
            masks.append(None)
        activations.append(hidden)
    raise AssertionError("unreachable")


def forward(params: NetParams, spec: DenseNetSpec, inputs: np.ndarray, mode: str = "eval",
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    logits = _forward(params, spec, inputs, mode, rng).logits
    return softmax(logits) if spec.head == "softmax" else logits


def _backward(params: NetParams, spec: DenseNetSpec, cache: _ForwardCache, grad_logits: np.ndarray) -> List[np.ndarray]:
    grads: List[np.ndarray] = []
    delta = grad_logits
    for layer in range(spec.n_layers - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(cache.activations[layer].T @ delta)
        if layer == 0:
            break
        delta = delta @ params.weights[layer].T
        mask = cache.masks[layer - 1]
        if mask is not None:
            delta = delta * mask
        delta = delta * (cache.pre_activations[layer - 1] > 0.0)
    grads.reverse()
    # reversed pairs come out as (W, b) per layer
    return grads


def q_loss_grad(params: NetParams, spec: DenseNetSpec, states: np.ndarray, actions: Sequence[int],
                targets: Sequence[float], mode: str = "train",
                rng: Optional[np.random.Generator] = None) -> Tuple[float, List[np.ndarray]]:
    """Mean squared TD error on the selected action outputs only."""
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    if not np.all(np.isfinite(targets)):
        raise ValidationError("Q targets must be finite")
    if np.any(actions < 0) or np.any(actions >= spec.output_size):
        raise ValidationError(f"Action index out of range [0, {spec.output_size})")

    cache = _forward(params, spec, states, mode, rng)
    batch = cache.logits.shape[0]
    rows = np.arange(batch)
    error = cache.logits[rows, actions] - targets
    loss = float(np.mean(error ** 2))

    grad_logits = np.zeros_like(cache.logits)
    grad_logits[rows, actions] = 2.0 * error / batch
    return loss, _backward(params, spec, cache, grad_logits)


def ce_loss_grad(params: NetParams, spec: DenseNetSpec, states: np.ndarray, labels: Sequence[int],
                 mode: str = "train", rng: Optional[np.random.Generator] = None) -> Tuple[float, List[np.ndarray]]:
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= spec.output_size):
        raise ValidationError(f"Label out of range [0, {spec.output_size})")

    cache = _forward(params, spec, states, mode, rng)
    batch = cache.logits.shape[0]
    rows = np.arange(batch)
    log_probs = log_softmax(cache.logits)
    loss = float(-np.mean(log_probs[rows, labels]))

    grad_logits = np.exp(log_probs)
    grad_logits[rows, labels] -= 1.0
    grad_logits /= batch
    return loss, _backward(params, spec, cache, grad_logits)


def optimizer_step(params: NetParams, grads: List[np.ndarray], learning_rate: float,
                   optimizer: OptimizerConfig = OptimizerConfig()) -> NetParams:
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise ShapeMismatchError(f"Expected {len(arrays)} gradient arrays, got {len(grads)}")
    for grad, array in zip(grads, arrays):
        if grad.shape != array.shape:
            raise ShapeMismatchError(f"Gradient shape {grad.shape} does not match parameter {array.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(
                f"Non-finite gradient at step {params.step + 1}: max |g| = {np.nanmax(np.abs(grad))}"
            )

    params.step += 1
    if optimizer.name == "sgd":
        for array, grad in zip(arrays, grads):
            array -= learning_rate * grad
        return params

    b1, b2 = optimizer.beta1, optimizer.beta2
    correction1 = 1.0 - b1 ** params.step
    correction2 = 1.0 - b2 ** params.step
    for array, grad, m, v in zip(arrays, grads, params.first_moments, params.second_moments):
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad ** 2
        array -= learning_rate * (m / correction1) / (np.sqrt(v / correction2) + optimizer.eps)
    return params


class DenseNet:
    """A spec, its parameters and the optimizer settings used to train them."""

    def __init__(self, spec: DenseNetSpec, params: NetParams, optimizer: OptimizerConfig = OptimizerConfig()):
        self.spec = spec
        self.params = params
        self.optimizer = optimizer

    @classmethod
    def create(cls, spec: DenseNetSpec, rng: np.random.Generator,
               optimizer: OptimizerConfig = OptimizerConfig()) -> "DenseNet":
        return cls(spec, init_params(spec, rng), optimizer)

    def __call__(self, inputs: np.ndarray, mode: str = "eval", rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return forward(self.params, self.spec, inputs, mode, rng)

    def copy(self) -> "DenseNet":
        return DenseNet(self.spec, self.params.copy(), self.optimizer)

    def apply(self, grads: List[np.ndarray], learning_rate: float) -> None:
        optimizer_step(self.params, grads, learning_rate, self.optimizer)

    def to_bytes(self) -> bytes:
        arrays = self.params.arrays() + self.params.first_moments + self.params.second_moments
        header = json.dumps(
            {
                "spec": {"widths": list(self.spec.widths), "dropout": self.spec.dropout, "head": self.spec.head},
                "optimizer": asdict(self.optimizer),
                "step": self.params.step,
                "shapes": [list(array.shape) for array in self.params.arrays()],
            },
            sort_keys=True,
        ).encode("utf-8")
        body = b"".join(np.ascontiguousarray(array, dtype="<f8").tobytes() for array in arrays)
        return CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(header)) + header + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DenseNet":
        if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise ValidationError("Not a network checkpoint (bad magic)")
        offset = len(CHECKPOINT_MAGIC)
        version, header_length = struct.unpack_from("<II", blob, offset)
        if version != CHECKPOINT_VERSION:
            raise ValidationError(f"Unsupported checkpoint version {version}")
        offset += 8
        header: Dict[str, Any] = json.loads(blob[offset:offset + header_length].decode("utf-8"))
        offset += header_length

        spec = DenseNetSpec(widths=tuple(header["spec"]["widths"]), dropout=header["spec"]["dropout"],
                            head=header["spec"]["head"])
        shapes = [tuple(shape) for shape in header["shapes"]]
        arrays = []
        for shape in shapes * 3:
            count = int(np.prod(shape))
            arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
            offset += 8 * count
        if offset != len(blob):
            raise ValidationError("Checkpoint has trailing or missing bytes")

        n = len(shapes)
        values, first, second = arrays[:n], arrays[n:2 * n], arrays[2 * n:]
        params = NetParams(weights=values[0::2], biases=values[1::2], first_moments=first,
                           second_moments=second, step=int(header["step"]))
        return cls(spec, params, OptimizerConfig(**header["optimizer"]))
