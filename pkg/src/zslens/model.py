"""Two-layer attribute-embedding classifier: dot-product compatibility,
max-margin hinge training, prediction, and evaluation.

The mapping f(x) = W2 relu(W1 x + b1) + b2 takes d-dimensional inputs to the
a-dimensional attribute space. Training minimizes, per instance, the largest
violation max_{y != y_i} [s_w(f(x_i), z_y) - s_w(f(x_i), z_{y_i}) + eta]_+
over the seen classes, where s_w is the attribute-weighted dot product.
Attribute weights enter by rescaling signature rows (w * z), which is
algebraically identical to inserting diag(w) into the compatibility.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SignatureMatrix, Split
from .errors import CheckpointError, TrainingDiverged

CHECKPOINT_MAGIC = b"ZSLM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    margin_eta: float = 0.1
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 50
    weight_decay: float = 1e-5
    hidden_dim: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.margin_eta < 0:
            raise ValueError("margin_eta must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass(frozen=True)
class TrainReport:
    loss_history: tuple[float, ...]
    final_loss: float
    epochs_run: int


@dataclass(frozen=True)
class MappingModel:
    """Parameters of the 2-layer mapping into attribute space."""

    W1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (a, h)
    b2: np.ndarray  # (a,)

    def __post_init__(self):
        # Own private copies: locking a view of a caller's array would
        # freeze the caller's buffer too.
        W1 = np.array(self.W1, dtype=np.float64, order="C")
        b1 = np.array(self.b1, dtype=np.float64, order="C")
        W2 = np.array(self.W2, dtype=np.float64, order="C")
        b2 = np.array(self.b2, dtype=np.float64, order="C")
        if W1.ndim != 2 or W2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise ValueError("W1/W2 must be matrices and b1/b2 vectors")
        h, d = W1.shape
        a, h2 = W2.shape
        if h2 != h or b1.shape != (h,) or b2.shape != (a,):
            raise ValueError("parameter shapes are inconsistent")
        for name, arr in (("W1", W1), ("b1", b1), ("W2", W2), ("b2", b2)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "b2", b2)

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    @property
    def a(self) -> int:
        return self.W2.shape[0]


@dataclass
class ParamGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class Metrics:
    """Per-class and pooled accuracies with instance counts."""

    per_class: dict[int, float]
    counts: dict[int, int]
    mean_per_class: float
    overall: float
    n_instances: int
    n_correct: int

    def to_dict(self, class_names: tuple[str, ...] | None = None) -> dict:
        key = (lambda y: class_names[y]) if class_names else (lambda y: str(y))
        return {
            "per_class": {key(y): acc for y, acc in self.per_class.items()},
            "counts": {key(y): n for y, n in self.counts.items()},
            "mean_per_class": self.mean_per_class,
            "overall": self.overall,
            "n_instances": self.n_instances,
            "n_correct": self.n_correct,
        }


def forward(model: MappingModel, x: np.ndarray) -> np.ndarray:
    """Map one input vector into the attribute space."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d,):
        raise ValueError(f"input must have length {model.d}, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    hidden = np.maximum(model.W1 @ x + model.b1, 0.0)
    return model.W2 @ hidden + model.b2


def forward_batch(model: MappingModel, X: np.ndarray) -> np.ndarray:
    """Map a batch of inputs (rows) into the attribute space."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ValueError(f"batch must be (B, {model.d}), got shape {X.shape}")
    hidden = np.maximum(X @ model.W1.T + model.b1, 0.0)
    return hidden @ model.W2.T + model.b2


def compatibility(z1: np.ndarray, z2: np.ndarray) -> float:
    """Dot product between two attribute-space points."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ValueError("compatibility requires equal-length vectors")
    return float(z1 @ z2)


def weighted_compatibility(z1: np.ndarray, z2: np.ndarray, w: np.ndarray) -> float:
    """Attribute-weighted dot product sum_k w_k z1_k z2_k."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if not z1.shape == z2.shape == w.shape or z1.ndim != 1:
        raise ValueError("weighted_compatibility requires equal-length vectors")
    if (w < 0).any() or (w > 1).any():
        raise ValueError("weights must lie in [0, 1]")
    return float((w * z1) @ z2)


def _check_weights(w: np.ndarray, a: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (a,):
        raise ValueError(f"weight vector must have length {a}")
    if (w < 0).any() or (w > 1).any():
        raise ValueError("weights must lie in [0, 1]")
    return w


def _loss_and_grad_arrays(
    W1: np.ndarray,
    b1: np.ndarray,
    W2: np.ndarray,
    b2: np.ndarray,
    X: np.ndarray,
    y_pos: np.ndarray,
    zw_seen: np.ndarray,
    eta: float,
    weight_decay: float,
):
    """Hinge loss and exact subgradient on raw parameter arrays.

    y_pos indexes rows of zw_seen (the weight-scaled signatures of the seen
    classes, ascending class order). The hinge uses the single argmax violator
    per instance; ties go to the lowest class index, and an exactly-zero hinge
    argument contributes zero gradient.
    """
    B = X.shape[0]
    H_pre = X @ W1.T + b1
    H = np.maximum(H_pre, 0.0)
    M = H @ W2.T + b2
    scores = M @ zw_seen.T  # (B, S)

    rows = np.arange(B)
    true_scores = scores[rows, y_pos]
    viol_scores = scores.copy()
    viol_scores[rows, y_pos] = -np.inf
    viol = viol_scores.argmax(axis=1)
    hinge = viol_scores[rows, viol] - true_scores + eta
    active = hinge > 0

    penalty = 0.0
    if weight_decay:
        penalty = 0.5 * weight_decay * (
            float(np.dot(W1.ravel(), W1.ravel()))
            + float(np.dot(b1, b1))
            + float(np.dot(W2.ravel(), W2.ravel()))
            + float(np.dot(b2, b2))
        )
    loss = float(np.maximum(hinge, 0.0).mean()) + penalty

    G_M = np.zeros_like(M)
    if active.any():
        G_M[active] = (zw_seen[viol[active]] - zw_seen[y_pos[active]]) / B
    gW2 = G_M.T @ H
    gb2 = G_M.sum(axis=0)
    G_H = G_M @ W2
    G_H[H_pre <= 0] = 0.0
    gW1 = G_H.T @ X
    gb1 = G_H.sum(axis=0)
    if weight_decay:
        gW1 += weight_decay * W1
        gb1 += weight_decay * b1
        gW2 += weight_decay * W2
        gb2 += weight_decay * b2
    return loss, gW1, gb1, gW2, gb2


def loss_and_grad(
    model: MappingModel,
    X: np.ndarray,
    y: np.ndarray,
    signatures: SignatureMatrix,
    seen_classes,
    w: np.ndarray,
    eta: float,
    weight_decay: float = 0.0,
) -> tuple[float, ParamGrads]:
    """Mean max-margin loss over a batch plus its exact subgradient."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("batch must be a non-empty (B, d) matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must match the batch length")
    seen = np.asarray(sorted(set(int(c) for c in seen_classes)), dtype=np.int64)
    if seen.size < 2:
        raise ValueError("need at least 2 seen classes for a margin violator")
    if not np.isin(y, seen).all():
        raise ValueError("every batch label must be a seen class")
    w = _check_weights(w, signatures.n_attributes)

    zw_seen = signatures.signatures[seen] * w
    y_pos = np.searchsorted(seen, y)
    loss, gW1, gb1, gW2, gb2 = _loss_and_grad_arrays(
        model.W1, model.b1, model.W2, model.b2, X, y_pos, zw_seen, eta, weight_decay
    )
    return loss, ParamGrads(gW1, gb1, gW2, gb2)


def _init_params(d: int, h: int, a: int, rng: np.random.Generator):
    limit1 = np.sqrt(6.0 / (d + h))
    limit2 = np.sqrt(6.0 / (h + a))
    W1 = rng.uniform(-limit1, limit1, size=(h, d))
    b1 = np.zeros(h)
    W2 = rng.uniform(-limit2, limit2, size=(a, h))
    b2 = np.zeros(a)
    return W1, b1, W2, b2


def train(
    dataset: Dataset,
    split: Split,
    signatures: SignatureMatrix,
    w: np.ndarray,
    config: TrainConfig,
) -> tuple[MappingModel, TrainReport]:
    """Mini-batch SGD with momentum on the max-margin loss.

    Deterministic given config.seed (initialization and shuffling). Raises
    TrainingDiverged with the epoch index if the loss goes non-finite.
    """
    w = _check_weights(w, signatures.n_attributes)
    train_idx = split.train_instances
    if train_idx.size == 0:
        raise ValueError("split has no training instances")
    seen = np.asarray(split.seen_classes, dtype=np.int64)
    if seen.size < 2:
        raise ValueError("need at least 2 seen classes to train")

    X = dataset.features[train_idx].astype(np.float64)
    y = dataset.labels[train_idx]
    y_pos = np.searchsorted(seen, y)
    zw_seen = signatures.signatures[seen] * w

    d = dataset.n_features
    a = signatures.n_attributes
    h = config.hidden_dim
    rng = np.random.default_rng(config.seed)
    W1, b1, W2, b2 = _init_params(d, h, a, rng)
    vW1 = np.zeros_like(W1)
    vb1 = np.zeros_like(b1)
    vW2 = np.zeros_like(W2)
    vb2 = np.zeros_like(b2)

    n = train_idx.size
    history: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            loss, gW1, gb1, gW2, gb2 = _loss_and_grad_arrays(
                W1, b1, W2, b2, X[batch], y_pos[batch], zw_seen,
                config.margin_eta, config.weight_decay,
            )
            epoch_loss += loss * batch.size
            vW1 = config.momentum * vW1 - config.learning_rate * gW1
            vb1 = config.momentum * vb1 - config.learning_rate * gb1
            vW2 = config.momentum * vW2 - config.learning_rate * gW2
            vb2 = config.momentum * vb2 - config.learning_rate * gb2
            W1 = W1 + vW1
            b1 = b1 + vb1
            W2 = W2 + vW2
            b2 = b2 + vb2
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(epoch)
        history.append(epoch_loss)

    model = MappingModel(W1, b1, W2, b2)
    report = TrainReport(tuple(history), history[-1], len(history))
    return model, report


def predict(
    model: MappingModel,
    x: np.ndarray,
    candidate_classes,
    signatures: SignatureMatrix,
    w: np.ndarray,
) -> int:
    """Argmax of the weighted compatibility over candidate classes.

    Ties break to the lowest class index.
    """
    cands = sorted(set(int(c) for c in candidate_classes))
    if not cands:
        raise ValueError("candidate class set is empty")
    w = _check_weights(w, signatures.n_attributes)
    m = forward(model, x)
    scores = (signatures.signatures[cands] * w) @ m
    return cands[int(scores.argmax())]


def predict_batch(
    model: MappingModel,
    X: np.ndarray,
    candidate_classes,
    signatures: SignatureMatrix,
    w: np.ndarray,
) -> np.ndarray:
    """Vectorized predict over the rows of X."""
    cands = np.asarray(sorted(set(int(c) for c in candidate_classes)), dtype=np.int64)
    if cands.size == 0:
        raise ValueError("candidate class set is empty")
    w = _check_weights(w, signatures.n_attributes)
    M = forward_batch(model, X)
    scores = M @ (signatures.signatures[cands] * w).T
    return cands[scores.argmax(axis=1)]


def evaluate(
    model: MappingModel,
    instances: np.ndarray,
    candidate_classes,
    dataset: Dataset,
    signatures: SignatureMatrix,
    w: np.ndarray,
) -> Metrics:
    """Per-class, mean per-class, and overall accuracy over the instances."""
    instances = np.asarray(instances, dtype=np.int64)
    if instances.size == 0:
        raise ValueError("no instances to evaluate")
    cands = sorted(set(int(c) for c in candidate_classes))
    labels = dataset.labels[instances]
    outside = set(labels.tolist()) - set(cands)
    if outside:
        names = ", ".join(dataset.class_names[y] for y in sorted(outside))
        raise ValueError(f"instance labels outside the candidate set: {names}")

    preds = predict_batch(model, dataset.features[instances].astype(np.float64),
                          cands, signatures, w)
    correct = preds == labels
    per_class: dict[int, float] = {}
    counts: dict[int, int] = {}
    for y in cands:
        mask = labels == y
        n_y = int(mask.sum())
        if n_y == 0:
            continue
        counts[y] = n_y
        per_class[y] = float(correct[mask].mean())
    mean_per_class = float(np.mean(list(per_class.values())))
    return Metrics(
        per_class=per_class,
        counts=counts,
        mean_per_class=mean_per_class,
        overall=float(correct.mean()),
        n_instances=int(instances.size),
        n_correct=int(correct.sum()),
    )


def save_checkpoint(path: str | Path, model: MappingModel, weights: np.ndarray, config: TrainConfig) -> None:
    """Write a model checkpoint: dims, float64 parameters, attribute weights,
    and the training config as a JSON trailer."""
    weights = _check_weights(weights, model.a)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IIII", CHECKPOINT_VERSION, model.d, model.h, model.a))
        for arr in (model.W1, model.b1, model.W2, model.b2, weights):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        f.write(json.dumps(asdict(config), sort_keys=True).encode("utf-8"))


def load_checkpoint(path: str | Path) -> tuple[MappingModel, np.ndarray, TrainConfig]:
    """Read a checkpoint back into (model, attribute weights, config)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"missing checkpoint: {path}")
    blob = path.read_bytes()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    offset = len(CHECKPOINT_MAGIC)
    try:
        version, d, h, a = struct.unpack_from("<IIII", blob, offset)
    except struct.error:
        raise CheckpointError(f"{path}: truncated header") from None
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset += struct.calcsize("<IIII")

    arrays = []
    for shape in ((h, d), (h,), (a, h), (a,), (a,)):
        count = int(np.prod(shape))
        nbytes = 8 * count
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated parameter block")
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape))
        offset += nbytes
    W1, b1, W2, b2, weights = arrays

    trailer = blob[offset:]
    try:
        config_dict = json.loads(trailer.decode("utf-8"))
        config = TrainConfig(**config_dict)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad config trailer ({e})") from None
    try:
        model = MappingModel(W1, b1, W2, b2)
        weights = _check_weights(weights.copy(), a)
    except ValueError as e:
        raise CheckpointError(f"{path}: {e}") from None
    return model, weights, config
