"""Misprediction analysis: per-attribute score decomposition, aggregation
into over/under-prediction bars per category, false-positive breakdowns,
and the attribute sort orders used by the views.

For a misclassified instance the score gap between the predicted and true
class splits exactly across attributes: p_k = f_k(x) (z_pred_k - z_true_k),
and sum_k p_k equals the compatibility difference. Positive p_k means
attribute k pushed the classifier toward the wrong class; the sign of
f_k(x) says whether the mapping over- or under-shot that attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SignatureMatrix
from .model import MappingModel, forward_batch

SIDES = ("over", "under")

# fp_breakdown key: (attribute index, true-class index, side)
FpKey = tuple[int, int, str]


@dataclass(frozen=True)
class MispredictionRecord:
    """One misclassified diagnostic instance with its attribute decomposition."""

    instance: int
    true_class: int
    predicted_class: int
    mapped: np.ndarray  # f(x), length a
    contributions: np.ndarray  # p_k, length a

    def __post_init__(self):
        if self.predicted_class == self.true_class:
            raise ValueError("record requires predicted_class != true_class")
        mapped = np.array(self.mapped, dtype=np.float64)
        contrib = np.array(self.contributions, dtype=np.float64)
        if mapped.ndim != 1 or mapped.shape != contrib.shape:
            raise ValueError("mapped and contributions must be equal-length vectors")
        mapped.setflags(write=False)
        contrib.setflags(write=False)
        object.__setattr__(self, "mapped", mapped)
        object.__setattr__(self, "contributions", contrib)

    @property
    def score_difference(self) -> float:
        return float(self.contributions.sum())


@dataclass(frozen=True)
class DiagnosticsSummary:
    """Aggregated over/under-prediction scores, rows = attributes,
    columns = selected categories (in selected_categories order)."""

    q_over: np.ndarray
    q_under: np.ndarray
    selected_categories: tuple[int, ...]
    per_class_counts: dict[int, int]
    fp_breakdown: dict[FpKey, dict[int, float]] = field(repr=False)

    def __post_init__(self):
        q_over = np.array(self.q_over, dtype=np.float64)
        q_under = np.array(self.q_under, dtype=np.float64)
        if q_over.ndim != 2 or q_over.shape != q_under.shape:
            raise ValueError("q_over and q_under must be equal-shape matrices")
        if q_over.shape[1] != len(self.selected_categories):
            raise ValueError("q columns must match selected_categories")
        for name, q in (("q_over", q_over), ("q_under", q_under)):
            if not np.isfinite(q).all():
                raise ValueError(f"{name} contains non-finite values")
            if (q < 0).any():
                raise ValueError(f"{name} contains negative values")
            q.setflags(write=False)
        object.__setattr__(self, "q_over", q_over)
        object.__setattr__(self, "q_under", q_under)
        object.__setattr__(self, "selected_categories", tuple(int(c) for c in self.selected_categories))

    @property
    def n_attributes(self) -> int:
        return self.q_over.shape[0]

    def q_side(self, side: str) -> np.ndarray:
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        return self.q_over if side == "over" else self.q_under


@dataclass(frozen=True)
class AttributeOrdering:
    key: str
    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError("order must be a permutation of attribute indices")


def attribute_contributions(mapped: np.ndarray, z_true: np.ndarray, z_pred: np.ndarray) -> np.ndarray:
    """p_k = mapped_k (z_pred_k - z_true_k); sums to the score difference."""
    mapped = np.asarray(mapped, dtype=np.float64)
    z_true = np.asarray(z_true, dtype=np.float64)
    z_pred = np.asarray(z_pred, dtype=np.float64)
    if not mapped.shape == z_true.shape == z_pred.shape or mapped.ndim != 1:
        raise ValueError("mapped, z_true, z_pred must be equal-length vectors")
    return mapped * (z_pred - z_true)


def collect_mispredictions(
    model: MappingModel,
    diag_instances: np.ndarray,
    seen_classes,
    dataset: Dataset,
    signatures: SignatureMatrix,
    w: np.ndarray,
) -> list[MispredictionRecord]:
    """Classify held-out seen-class instances among the seen classes and
    decompose every misprediction.

    Contributions are taken against the weight-scaled signatures so the sum
    identity holds for the weighted score difference. Prediction ties break
    to the lowest class index.
    """
    diag_instances = np.asarray(diag_instances, dtype=np.int64)
    seen = np.asarray(sorted(set(int(c) for c in seen_classes)), dtype=np.int64)
    if seen.size == 0:
        raise ValueError("seen class set is empty")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (signatures.n_attributes,):
        raise ValueError(f"weight vector must have length {signatures.n_attributes}")
    if diag_instances.size == 0:
        return []
    labels = dataset.labels[diag_instances]
    if not np.isin(labels, seen).all():
        raise ValueError("diagnostic instances must carry seen-class labels")

    zw = signatures.signatures[seen] * w  # (S, a)
    M = forward_batch(model, dataset.features[diag_instances].astype(np.float64))
    preds_pos = (M @ zw.T).argmax(axis=1)  # first max = lowest class index
    preds = seen[preds_pos]

    records: list[MispredictionRecord] = []
    true_pos = np.searchsorted(seen, labels)
    for i in np.flatnonzero(preds != labels):
        contrib = M[i] * (zw[preds_pos[i]] - zw[true_pos[i]])
        records.append(
            MispredictionRecord(
                instance=int(diag_instances[i]),
                true_class=int(labels[i]),
                predicted_class=int(preds[i]),
                mapped=M[i].copy(),
                contributions=contrib,
            )
        )
    return records


def aggregate_scores(
    records,
    selected_categories,
    per_class_counts: dict[int, int],
    n_attributes: int | None = None,
) -> DiagnosticsSummary:
    """Accumulate positive contributions into per-(attribute, category) scores.

    Each record with true class y in the selection adds p_k / n_y to the
    "over" cell when f_k(x) > 0 and to the "under" cell when f_k(x) < 0,
    for every attribute k with p_k > 0. The same addends, keyed by the
    record's predicted class, form the false-positive breakdown.

    n_attributes is only needed when records is empty (the shape cannot be
    inferred from nothing).
    """
    selected = tuple(int(c) for c in selected_categories)
    if len(set(selected)) != len(selected):
        raise ValueError("selected_categories contains duplicates")
    for y in selected:
        n_y = per_class_counts.get(y, 0)
        if n_y <= 0:
            raise ValueError(f"selected category {y} has no diagnostic instances")

    records = list(records)
    if n_attributes is None:
        if not records:
            raise ValueError("n_attributes is required when records is empty")
        n_attributes = records[0].contributions.shape[0]

    col = {y: j for j, y in enumerate(selected)}
    q_over = np.zeros((n_attributes, len(selected)))
    q_under = np.zeros((n_attributes, len(selected)))
    fp: dict[FpKey, dict[int, float]] = {}

    for rec in records:
        j = col.get(rec.true_class)
        if j is None:
            continue
        if rec.contributions.shape[0] != n_attributes:
            raise ValueError("records disagree on the number of attributes")
        scale = 1.0 / per_class_counts[rec.true_class]
        pos = rec.contributions > 0
        for k in np.flatnonzero(pos):
            addend = rec.contributions[k] * scale
            side = "over" if rec.mapped[k] > 0 else "under"
            target = q_over if side == "over" else q_under
            target[int(k), j] += addend
            cell = fp.setdefault((int(k), rec.true_class, side), {})
            cell[rec.predicted_class] = cell.get(rec.predicted_class, 0.0) + addend

    return DiagnosticsSummary(
        q_over=q_over,
        q_under=q_under,
        selected_categories=selected,
        per_class_counts={y: int(per_class_counts[y]) for y in selected},
        fp_breakdown=fp,
    )


SORT_KEYS = ("under", "over", "total", "unseen_sum")


def sort_attributes(
    summary: DiagnosticsSummary,
    key: str,
    unseen_signatures: np.ndarray | None = None,
) -> AttributeOrdering:
    """Descending stable order of attribute indices by the chosen key."""
    if key not in SORT_KEYS:
        raise ValueError(f"key must be one of {SORT_KEYS}")
    if key == "under":
        values = summary.q_under.sum(axis=1)
    elif key == "over":
        values = summary.q_over.sum(axis=1)
    elif key == "total":
        values = summary.q_over.sum(axis=1) + summary.q_under.sum(axis=1)
    else:
        if unseen_signatures is None:
            raise ValueError("key=unseen_sum requires unseen_signatures")
        unseen_signatures = np.asarray(unseen_signatures, dtype=np.float64)
        if unseen_signatures.ndim != 2 or unseen_signatures.shape[1] != summary.n_attributes:
            raise ValueError("unseen_signatures must be (n_unseen, n_attributes)")
        values = unseen_signatures.sum(axis=0)
    order = np.argsort(-values, kind="stable")
    return AttributeOrdering(key=key, order=tuple(int(k) for k in order))


def stacking_order(summary: DiagnosticsSummary) -> tuple[int, ...]:
    """Selected categories ordered descending by their total over+under mass;
    the single order is shared by every attribute row. Ties break by class
    index ascending."""
    totals = summary.q_over.sum(axis=0) + summary.q_under.sum(axis=0)
    cats = summary.selected_categories
    order = sorted(range(len(cats)), key=lambda j: (-totals[j], cats[j]))
    return tuple(cats[j] for j in order)


def export_diagnostics(
    summary: DiagnosticsSummary,
    dataset: Dataset,
    unseen_signatures: np.ndarray | None = None,
) -> dict:
    """JSON-ready dict: score matrices (row = attribute), breakdowns keyed by
    name, per-category counts, and every available sort order."""
    cat_names = [dataset.class_names[y] for y in summary.selected_categories]
    fp_nested: dict[str, dict] = {side: {} for side in SIDES}
    for (k, y, side), cell in summary.fp_breakdown.items():
        by_attr = fp_nested[side].setdefault(str(k), {})
        by_attr[dataset.class_names[y]] = {
            dataset.class_names[pred]: val for pred, val in sorted(cell.items())
        }
    orderings = {}
    for key in SORT_KEYS:
        if key == "unseen_sum" and unseen_signatures is None:
            continue
        orderings[key] = list(sort_attributes(summary, key, unseen_signatures).order)
    return {
        "attributes": list(dataset.attribute_names),
        "categories": cat_names,
        "q_over": summary.q_over.tolist(),
        "q_under": summary.q_under.tolist(),
        "fp_breakdown": fp_nested,
        "counts": {dataset.class_names[y]: n for y, n in summary.per_class_counts.items()},
        "stacking": [dataset.class_names[y] for y in stacking_order(summary)],
        "orderings": orderings,
    }
