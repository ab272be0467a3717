"""Attribute-weight steering: the user-owned weight vector, clamped
decrements with a replayable history, and deterministic cold-start
retraining under the weighted compatibility.

Rescaling signature rows by the weights is the diag(w) compatibility: with
z' = w * z, the plain dot product f(x) . z' equals sum_k w_k f_k(x) z_k.
A weight of 0 removes the attribute from every score.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SignatureMatrix, Split
from .diagnostics import DiagnosticsSummary, aggregate_scores, collect_mispredictions
from .model import MappingModel, TrainConfig, TrainReport, train

# Below this value the UI warns that the weight is outside the range that
# tends to stay useful; it is guidance, not a limit.
GUIDANCE_FLOOR = 0.5

HistoryEntry = tuple[int, float, float, float]  # (attribute, old, new, timestamp)


@dataclass(frozen=True)
class SteeringState:
    weights: np.ndarray
    revision: int
    history: tuple[HistoryEntry, ...]

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if (w < 0).any() or (w > 1).any():
            raise ValueError("weights must lie in [0, 1]")
        if self.revision < 0:
            raise ValueError("revision must be >= 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "history", tuple(self.history))

    @property
    def n_attributes(self) -> int:
        return self.weights.size

    @staticmethod
    def initial(n_attributes: int) -> "SteeringState":
        if n_attributes < 1:
            raise ValueError("n_attributes must be >= 1")
        return SteeringState(np.ones(n_attributes), 0, ())

    def below_guidance(self) -> list[int]:
        """Attributes whose weight sits below the soft floor."""
        return [int(k) for k in np.flatnonzero(self.weights < GUIDANCE_FLOOR)]


def adjust_weight(
    state: SteeringState,
    attribute: int,
    delta: float,
    timestamp: float | None = None,
) -> SteeringState:
    """New state with weights[attribute] moved by delta, clamped to [0, 1].

    Every call bumps the revision, including delta = 0.
    """
    if not 0 <= attribute < state.n_attributes:
        raise IndexError(f"attribute index {attribute} out of range [0, {state.n_attributes})")
    if not np.isfinite(delta):
        raise ValueError("delta must be finite")
    old = float(state.weights[attribute])
    new = min(max(old + float(delta), 0.0), 1.0)
    weights = state.weights.copy()
    weights[attribute] = new
    stamp = time.time() if timestamp is None else float(timestamp)
    return SteeringState(
        weights=weights,
        revision=state.revision + 1,
        history=state.history + ((attribute, old, new, stamp),),
    )


def replay(n_attributes: int, history) -> np.ndarray:
    """Weights obtained by replaying a history from the all-ones start."""
    w = np.ones(n_attributes)
    for attribute, _old, new, _stamp in history:
        if not 0 <= attribute < n_attributes:
            raise IndexError(f"history references attribute {attribute} out of range")
        w[attribute] = new
    return w


@dataclass
class RetrainJob:
    """Lifecycle record for one asynchronous retrain."""

    id: int
    base_revision: int
    status: str = "pending"  # pending -> running -> done | failed
    metrics_before: object = None
    metrics_after: object = None
    error: str | None = None

    _TRANSITIONS = {"pending": {"running"}, "running": {"done", "failed"}}

    def advance(self, status: str) -> None:
        allowed = self._TRANSITIONS.get(self.status, set())
        if status not in allowed:
            raise ValueError(f"illegal job transition {self.status} -> {status}")
        self.status = status

    def to_dict(self, class_names: tuple[str, ...] | None = None) -> dict:
        out = {
            "id": self.id,
            "status": self.status,
            "base_revision": self.base_revision,
            "error": self.error,
        }
        for name in ("metrics_before", "metrics_after"):
            m = getattr(self, name)
            out[name] = m.to_dict(class_names) if m is not None else None
        return out


def retrain(
    dataset: Dataset,
    split: Split,
    signatures: SignatureMatrix,
    state: SteeringState,
    config: TrainConfig,
) -> tuple[MappingModel, TrainReport, DiagnosticsSummary]:
    """Cold-start retrain under the current weights, then fresh diagnostics.

    The same seed as the base run is reused on purpose: any change in the
    result is attributable to the weights alone, and an unchanged all-ones
    state reproduces the base model bit for bit.
    """
    if state.n_attributes != signatures.n_attributes:
        raise ValueError("steering state and signatures disagree on attribute count")
    model, report = train(dataset, split, signatures, state.weights, config)
    summary = diagnose(model, dataset, split, signatures, state.weights)
    return model, report, summary


def diag_class_counts(dataset: Dataset, split: Split) -> dict[int, int]:
    """Diagnostic-instance count per seen class."""
    labels = dataset.labels[split.diag_instances]
    return {int(y): int((labels == y).sum()) for y in split.seen_classes}


def diagnose(
    model: MappingModel,
    dataset: Dataset,
    split: Split,
    signatures: SignatureMatrix,
    w: np.ndarray,
    selected_categories=None,
) -> DiagnosticsSummary:
    """Misprediction summary over the diagnostic split for the given model.

    selected_categories defaults to every seen class that has diagnostic
    instances.
    """
    counts = diag_class_counts(dataset, split)
    if selected_categories is None:
        selected_categories = [y for y in split.seen_classes if counts.get(y, 0) > 0]
    records = collect_mispredictions(
        model, split.diag_instances, split.seen_classes, dataset, signatures, w
    )
    return aggregate_scores(
        records, selected_categories, counts, n_attributes=signatures.n_attributes
    )
