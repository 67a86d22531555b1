"""From-scratch MLP binary classifier over sampled power features.

Inputs are (power, instruction, category) only; the sampled stage identity
is intentionally excluded. Hidden layers use sigmoid activations, the output
layer is a two-way softmax, and training minimizes class-weighted
cross-entropy with deterministic full-batch gradient descent using
per-parameter adaptive step sizes. Epochs run in blocks of ten: if a block's
mean loss rises, the block is rolled back and the learning rate halves, so
the loss trace averaged over ten-epoch windows is non-increasing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, TrainingError
from .isa import InstructionCategory
from .metrics import EvalReport, tally
from .spcab import FeatureStream, SampledFeature
from .seeding import rng_for

MODEL_FORMAT_VERSION = 1

N_INPUTS = 7  # power z-score, opcode scalar, 5-way category one-hot
N_OUTPUTS = 2  # un-intruded, intruded


@dataclass(frozen=True)
class MlpTopology:
    hidden_layers: int
    neurons_per_layer: int

    def __post_init__(self) -> None:
        if self.hidden_layers not in (1, 2):
            raise ConfigError("hidden_layers must be 1 or 2")
        if self.neurons_per_layer < 1:
            raise ConfigError("neurons_per_layer must be positive")

    def layer_sizes(self) -> list[int]:
        return [N_INPUTS] + [self.neurons_per_layer] * self.hidden_layers + [N_OUTPUTS]

    def parameter_count(self) -> int:
        sizes = self.layer_sizes()
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def mac_count(self) -> int:
        """Multiply-accumulates per inference."""
        sizes = self.layer_sizes()
        return sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True)
class FeatureNorm:
    """Affine normalization fitted on training data."""

    power_mean: float
    power_scale: float
    opcode_scale: float

    def __post_init__(self) -> None:
        if self.power_scale <= 0 or self.opcode_scale <= 0:
            raise ConfigError("normalization scales must be positive")


def fit_norm(stream: FeatureStream) -> FeatureNorm:
    scale = float(stream.power.std())
    return FeatureNorm(
        power_mean=float(stream.power.mean()),
        power_scale=scale if scale > 0 else 1.0,
        opcode_scale=float(max(int(stream.opcode.max()), 1)),
    )


def encode_stream(stream: FeatureStream, norm: FeatureNorm) -> np.ndarray:
    """(n, 7) input matrix: z-scored power, scaled opcode, category one-hot.

    Ground truth never enters the encoding.
    """
    n = len(stream)
    x = np.zeros((n, N_INPUTS))
    x[:, 0] = (stream.power - norm.power_mean) / norm.power_scale
    x[:, 1] = stream.opcode / norm.opcode_scale
    cats = stream.category - int(InstructionCategory.CAT1)
    x[np.arange(n), 2 + cats] = 1.0
    return x


def encode(feature: SampledFeature, norm: FeatureNorm) -> np.ndarray:
    """Encode one sampled feature to the 7-dimensional model input."""
    x = np.zeros(N_INPUTS)
    x[0] = (feature.quantized_power - norm.power_mean) / norm.power_scale
    x[1] = feature.opcode_id / norm.opcode_scale
    x[2 + int(feature.category) - int(InstructionCategory.CAT1)] = 1.0
    return x


@dataclass
class TrainingSet:
    features: FeatureStream
    labels: np.ndarray  # (n,) bool, True = intruded
    split_tag: str = "train"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=bool)
        if len(self.features) != self.labels.shape[0]:
            raise DataError("features and labels must have equal length")

    @staticmethod
    def from_stream(stream: FeatureStream, split_tag: str = "train", **provenance) -> "TrainingSet":
        return TrainingSet(
            features=stream,
            labels=stream.ground_truth.copy(),
            split_tag=split_tag,
            provenance=provenance,
        )


@dataclass(frozen=True)
class Hyper:
    seed: int = 0
    epochs: int = 500
    learning_rate: float = 0.05
    class_weight: float | None = None  # None: negative/positive ratio
    threshold: float = 0.5


@dataclass
class MlpModel:
    topology: MlpTopology
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    norm: FeatureNorm
    train_meta: dict = field(default_factory=dict)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def init_params(
    topology: MlpTopology, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Seeded Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    sizes = topology.layer_sizes()
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Intruded/un-intruded probabilities, shape (n, 2)."""
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = _sigmoid(a @ w + b)
    return _softmax(a @ weights[-1] + biases[-1])


def loss_and_grads(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Weighted cross-entropy and its analytic gradients."""
    acts = [x]
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = _sigmoid(a @ w + b)
        acts.append(a)
    probs = _softmax(a @ weights[-1] + biases[-1])

    n = x.shape[0]
    wsum = float(sample_weight.sum())
    eps = 1e-12
    picked = probs[np.arange(n), y.astype(np.int64)]
    loss = float(-(sample_weight * np.log(picked + eps)).sum() / wsum)

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y.astype(np.int64)] = 1.0
    delta = (probs - onehot) * sample_weight[:, None] / wsum

    grad_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            a_prev = acts[layer]
            delta = (delta @ weights[layer].T) * a_prev * (1.0 - a_prev)
    return loss, grad_w, grad_b


def _sample_weights(labels: np.ndarray, class_weight: float | None) -> np.ndarray:
    if class_weight is None:
        pos = int(labels.sum())
        neg = labels.size - pos
        class_weight = neg / pos if pos > 0 else 1.0
    w = np.ones(labels.size)
    w[labels] = class_weight
    return w


_BLOCK = 10  # epochs per monotonicity window
_BETA1, _BETA2, _ADAM_EPS = 0.9, 0.999, 1e-8


class _AdamState:
    """First/second gradient-moment accumulators for one parameter list."""

    def __init__(self, params: list[np.ndarray]) -> None:
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def snapshot(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return [m.copy() for m in self.m], [v.copy() for v in self.v]

    def restore(self, snap: tuple[list[np.ndarray], list[np.ndarray]]) -> None:
        self.m = [m.copy() for m in snap[0]]
        self.v = [v.copy() for v in snap[1]]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float, t: int) -> None:
        c1 = 1.0 - _BETA1**t
        c2 = 1.0 - _BETA2**t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= _BETA1
            m += (1.0 - _BETA1) * g
            v *= _BETA2
            v += (1.0 - _BETA2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + _ADAM_EPS)


def train(data: TrainingSet, topology: MlpTopology, hyper: Hyper) -> MlpModel:
    """Deterministic full-batch training with adaptive per-parameter steps.

    Epochs run in blocks of ten. If a block's mean loss exceeds the previous
    block's, the block is rolled back and retried at half the learning rate
    (which regrows 5% per accepted block, capped at its initial value), so
    the loss trace averaged over ten-epoch windows is non-increasing.
    """
    labels = data.labels
    if labels.all() or not labels.any():
        raise TrainingError("training data must contain both classes")

    norm = fit_norm(data.features)
    x = encode_stream(data.features, norm)
    y = labels.astype(np.int64)
    sw = _sample_weights(labels, hyper.class_weight)

    rng = rng_for(hyper.seed, "mlp-init", topology.hidden_layers, topology.neurons_per_layer)
    weights, biases = init_params(topology, rng)
    opt_w = _AdamState(weights)
    opt_b = _AdamState(biases)

    lr = hyper.learning_rate
    loss_trace: list[float] = []
    prev_mean = np.inf
    epoch = 0
    while epoch < hyper.epochs:
        block = min(_BLOCK, hyper.epochs - epoch)
        snap = (
            [w.copy() for w in weights], [b.copy() for b in biases],
            opt_w.snapshot(), opt_b.snapshot(),
        )
        accepted = False
        for _attempt in range(40):
            # Record the loss after each epoch's update; the evaluation at
            # the top of the next epoch doubles as the previous record.
            block_losses = []
            for j in range(block):
                loss, gw, gb = loss_and_grads(weights, biases, x, y, sw)
                if j > 0:
                    block_losses.append(loss)
                opt_w.step(weights, gw, lr, epoch + j + 1)
                opt_b.step(biases, gb, lr, epoch + j + 1)
            block_losses.append(loss_and_grads(weights, biases, x, y, sw)[0])
            # The end-of-block bound keeps the next block (whose losses start
            # from here) able to match this block's mean at a small enough
            # step size, so halving always terminates.
            mean = float(np.mean(block_losses))
            if mean <= prev_mean and block_losses[-1] <= mean:
                accepted = True
                break
            weights = [w.copy() for w in snap[0]]
            biases = [b.copy() for b in snap[1]]
            opt_w.restore(snap[2])
            opt_b.restore(snap[3])
            lr *= 0.5
        if not accepted:
            break  # converged: no step size yields further descent
        loss_trace.extend(block_losses)
        prev_mean = mean
        lr = min(lr * 1.05, hyper.learning_rate)
        epoch += block

    return MlpModel(
        topology=topology,
        weights=weights,
        biases=biases,
        norm=norm,
        train_meta={
            "seed": hyper.seed,
            "epochs": hyper.epochs,
            "learning_rate": hyper.learning_rate,
            "class_weight": hyper.class_weight,
            "loss_trace": loss_trace,
            "threshold": hyper.threshold,
        },
    )


def scores(model: MlpModel, stream: FeatureStream) -> np.ndarray:
    """Intruded-class probability per sample."""
    x = encode_stream(stream, model.norm)
    return forward(model.weights, model.biases, x)[:, 1]


def classify_stream(
    model: MlpModel, stream: FeatureStream, threshold: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    if threshold is None:
        threshold = float(model.train_meta.get("threshold", 0.5))
    s = scores(model, stream)
    return s >= threshold, s


def classify(
    model: MlpModel, feature: SampledFeature, threshold: float | None = None
) -> tuple[str, float]:
    """Label one sample; the score is the intruded-class probability."""
    if threshold is None:
        threshold = float(model.train_meta.get("threshold", 0.5))
    x = encode(feature, model.norm)[None, :]
    score = float(forward(model.weights, model.biases, x)[0, 1])
    return ("intruded" if score >= threshold else "un_intruded"), score


def k_fold_validate(
    data: TrainingSet, topology: MlpTopology, k: int, hyper: Hyper
) -> list[EvalReport]:
    """Mutually exclusive folds of near-equal size; each fold validates once."""
    n = len(data.features)
    if k < 2:
        raise ConfigError("k must be >= 2")
    if k > n:
        raise ConfigError(f"k={k} exceeds the {n} available samples")
    rng = rng_for(hyper.seed, "kfold", k, n)
    order = rng.permutation(n)
    folds = fold_indices(n, k)
    reports = []
    for i, fold in enumerate(folds):
        val_idx = order[fold]
        train_mask = np.ones(n, dtype=bool)
        train_mask[val_idx] = False
        train_idx = np.flatnonzero(train_mask)
        sub = TrainingSet(
            features=data.features.subset(train_idx),
            labels=data.labels[train_idx],
            split_tag=f"fold{i}-train",
            provenance=dict(data.provenance),
        )
        model = train(sub, topology, hyper)
        pred, _ = classify_stream(model, data.features.subset(val_idx))
        reports.append(
            EvalReport(
                counts=tally(pred, data.labels[val_idx]),
                benchmark=data.provenance.get("benchmark", ""),
                tags={"fold": i, "k": k},
            )
        )
    return reports


def fold_indices(n: int, k: int) -> list[np.ndarray]:
    """Split range(n) into k contiguous chunks with sizes differing by <= 1."""
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [np.arange(bounds[i], bounds[i + 1]) for i in range(k)]


# --- serialization -------------------------------------------------------


def model_to_json(model: MlpModel) -> str:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "topology": {
            "hidden_layers": model.topology.hidden_layers,
            "neurons_per_layer": model.topology.neurons_per_layer,
        },
        "normalization": {
            "power_mean": model.norm.power_mean,
            "power_scale": model.norm.power_scale,
            "opcode_scale": model.norm.opcode_scale,
        },
        "weights": [w.tolist() for w in model.weights],  # row-major per layer
        "biases": [b.tolist() for b in model.biases],
        "train_meta": model.train_meta,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def model_from_json(text: str) -> MlpModel:
    payload = json.loads(text)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version}")
    topo = MlpTopology(
        hidden_layers=payload["topology"]["hidden_layers"],
        neurons_per_layer=payload["topology"]["neurons_per_layer"],
    )
    return MlpModel(
        topology=topo,
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        norm=FeatureNorm(**payload["normalization"]),
        train_meta=payload["train_meta"],
    )
