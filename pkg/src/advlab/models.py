"""Feed-forward classifier zoo: definition, SGD training, persistence, inference.

Models are plain ReLU MLPs over float64 arrays. Everything is deterministic:
weight init and minibatch shuffling come from a counter-based Philox stream
seeded by the spec, so identical inputs reproduce bit-identical weights.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    CheckpointParseError,
    CheckpointVersionError,
    ContractError,
    DimensionError,
    TrainingDivergedError,
    ZooNotDistinctError,
)
from .rng import philox_rng

CHECKPOINT_MAGIC = b"ADVLABCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Architecture + seed; the name identifies the model within an experiment."""

    name: str
    input_dim: int
    hidden_dims: tuple[int, ...]
    num_classes: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.num_classes < 2:
            raise ContractError(f"bad spec for {self.name!r}: input_dim >= 1 and num_classes >= 2 required")
        if any(h < 1 for h in self.hidden_dims):
            raise ContractError(f"bad spec for {self.name!r}: hidden dims must be positive")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.num_classes)


@dataclass
class Prediction:
    logits: np.ndarray
    top_k: list[tuple[int, float]]

    @property
    def top_class(self) -> int:
        return self.top_k[0][0]


@dataclass
class TrainedModel:
    """Immutable after train(); prediction is pure and thread-safe."""

    spec: ModelSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    epochs_trained: int = 0
    final_train_accuracy: float = 0.0
    _packed: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        return self.spec.name

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (params, layer_dims) view consumed by the jit kernels."""
        if self._packed is None:
            chunks = []
            for w, b in zip(self.weights, self.biases):
                chunks.append(np.ascontiguousarray(w, dtype=np.float64).ravel())
                chunks.append(np.ascontiguousarray(b, dtype=np.float64))
            params = np.concatenate(chunks) if chunks else np.zeros(0)
            dims = np.asarray(self.spec.layer_dims, dtype=np.int64)
            self._packed = (params, dims)
        return self._packed


def init_model(spec: ModelSpec) -> TrainedModel:
    """Fresh weights, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    rng = philox_rng(spec.seed, stream=0)
    dims = spec.layer_dims
    weights, biases = [], []
    for din, dout in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(din)
        weights.append(rng.uniform(-bound, bound, size=(din, dout)))
        biases.append(rng.uniform(-bound, bound, size=dout))
    return TrainedModel(spec=spec, weights=weights, biases=biases)


def forward_logits(weights, biases, x: np.ndarray) -> np.ndarray:
    """Plain-numpy forward pass; x is one input vector or a batch matrix."""
    h = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def _accuracy(model: "TrainedModel", inputs: np.ndarray, labels: np.ndarray) -> float:
    logits = forward_logits(model.weights, model.biases, inputs)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def train(spec: ModelSpec, dataset, epochs: int, lr: float, batch_size: int) -> TrainedModel:
    """Minibatch SGD on mean cross-entropy; shuffling is seeded by the spec.

    `dataset` is any object with `.inputs` (n, input_dim) and `.labels` (n,)
    such as evaluation.LabeledDataset.
    """
    inputs = np.asarray(dataset.inputs, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if inputs.shape[0] == 0:
        raise ContractError("cannot train on an empty dataset")
    if inputs.shape[1] != spec.input_dim:
        raise DimensionError(f"dataset dim {inputs.shape[1]} != spec input_dim {spec.input_dim}")
    if labels.max() >= spec.num_classes:
        raise ContractError(f"label {labels.max()} out of range for {spec.num_classes} classes")
    if epochs < 0 or batch_size < 1:
        raise ContractError("epochs must be >= 0 and batch_size >= 1")

    model = init_model(spec)
    shuffle_rng = philox_rng(spec.seed, stream=1)
    n = inputs.shape[0]
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            xb, yb = inputs[rows], labels[rows]
            tape = ad.Tape()
            ws = [tape.leaf(w) for w in model.weights]
            bs = [tape.leaf(b) for b in model.biases]
            h = tape.leaf(xb)
            last = len(ws) - 1
            for i, (w, b) in enumerate(zip(ws, bs)):
                h = ad.add_bias(ad.matmul(h, w), b)
                if i < last:
                    h = ad.relu(h)
            loss = ad.cross_entropy_logits(h, yb)
            if not np.isfinite(loss.item()):
                raise TrainingDivergedError(epoch)
            grads = tape.gradients(loss, ws + bs)
            for w, g in zip(model.weights, grads[:len(ws)]):
                w -= lr * g
            for b, g in zip(model.biases, grads[len(ws):]):
                b -= lr * g
    model.epochs_trained = epochs
    model.final_train_accuracy = _accuracy(model, inputs, labels)
    model._packed = None
    return model


def predict(model: TrainedModel, x, k: int = 1) -> Prediction:
    """Logits plus the top-k classes, ties broken toward the lowest index."""
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape != (model.spec.input_dim,):
        raise DimensionError(f"input shape {xv.shape} != ({model.spec.input_dim},)")
    if not 1 <= k <= model.spec.num_classes:
        raise ContractError(f"k={k} outside [1, {model.spec.num_classes}]")
    logits = forward_logits(model.weights, model.biases, xv)
    order = np.argsort(-logits, kind="stable")[:k]
    return Prediction(logits=logits, top_k=[(int(c), float(logits[c])) for c in order])


def save_model(model: TrainedModel, path) -> None:
    """Versioned binary checkpoint; see README for the byte layout."""
    header = {
        "spec": {
            "name": model.spec.name,
            "input_dim": model.spec.input_dim,
            "hidden_dims": list(model.spec.hidden_dims),
            "num_classes": model.spec.num_classes,
            "seed": model.spec.seed,
        },
        "epochs_trained": model.epochs_trained,
        "final_train_accuracy": model.final_train_accuracy,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> TrainedModel:
    """Bit-exact inverse of save_model."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"bad magic {raw[:len(CHECKPOINT_MAGIC)]!r}; not an advlab checkpoint")
    off = len(CHECKPOINT_MAGIC)
    if len(raw) < off + 8:
        raise CheckpointParseError(len(raw), "truncated header")
    (version,) = struct.unpack_from("<I", raw, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    off += 4
    (blob_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + blob_len:
        raise CheckpointParseError(len(raw), "truncated spec block")
    try:
        header = json.loads(raw[off:off + blob_len].decode("utf-8"))
        spec = ModelSpec(
            name=header["spec"]["name"],
            input_dim=int(header["spec"]["input_dim"]),
            hidden_dims=tuple(header["spec"]["hidden_dims"]),
            num_classes=int(header["spec"]["num_classes"]),
            seed=int(header["spec"]["seed"]),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointParseError(off, f"bad spec block: {exc}") from exc
    off += blob_len
    weights, biases = [], []
    dims = spec.layer_dims
    for din, dout in zip(dims[:-1], dims[1:]):
        for shape in ((din, dout), (dout,)):
            count = int(np.prod(shape))
            nbytes = count * 8
            if len(raw) < off + nbytes:
                raise CheckpointParseError(off, f"truncated weight block, need {nbytes} bytes")
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
            off += nbytes
            (weights if len(shape) == 2 else biases).append(arr.copy())
    if off != len(raw):
        raise CheckpointParseError(off, f"{len(raw) - off} trailing bytes")
    return TrainedModel(
        spec=spec,
        weights=weights,
        biases=biases,
        epochs_trained=int(header.get("epochs_trained", 0)),
        final_train_accuracy=float(header.get("final_train_accuracy", 0.0)),
    )


def check_zoo_distinct(models, probe_inputs: np.ndarray) -> None:
    """Abort a transfer study early if any two models are behaviorally identical.

    Raises ZooNotDistinctError naming the first indistinguishable pair.
    """
    if len(models) < 2:
        return
    preds = []
    for m in models:
        logits = forward_logits(m.weights, m.biases, probe_inputs)
        preds.append(np.argmax(logits, axis=1))
    for i in range(len(models)):
        for j in range(i + 1, len(models)):
            if np.array_equal(preds[i], preds[j]):
                raise ZooNotDistinctError(
                    f"models {models[i].name!r} and {models[j].name!r} agree on all "
                    f"{probe_inputs.shape[0]} probe inputs; transfer results would be degenerate"
                )
