"""Attribute-annotated datasets: loading, validation, signature z-scoring,
seen/unseen splits, and synthetic data generation.

Directory layout (all little-endian):
  features.bin    magic "ZSLF", u32 version=1, u32 n, u32 d, n*d float32 row-major
  labels.csv      header "instance,class"; zero-based instance index, class name
  attributes.csv  header "class,<attr_1>,...,<attr_a>"; one row per class
  split.json      optional {"unseen": [names], "diag_fraction": r, "seed": s}
"""

from __future__ import annotations

import csv
import json
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

FEATURES_MAGIC = b"ZSLF"
FEATURES_VERSION = 1

FEATURES_FILE = "features.bin"
LABELS_FILE = "labels.csv"
ATTRIBUTES_FILE = "attributes.csv"
SPLIT_FILE = "split.json"


def _lock(arr: np.ndarray) -> np.ndarray:
    # Private copy before freezing: locking a view would freeze the
    # caller's buffer with it.
    arr = np.array(arr, order="C")
    arr.setflags(write=False)
    return arr


def _check_unique(names, what: str) -> None:
    seen = set()
    for name in names:
        if name in seen:
            raise ValueError(f"duplicate {what} name: {name!r}")
        seen.add(name)


@dataclass(frozen=True)
class Dataset:
    """Instance features plus per-class attribute strengths.

    features are float32 (matching the on-disk format); attribute values are
    float64. All arrays are read-only after construction.
    """

    features: np.ndarray        # (n, d)
    labels: np.ndarray          # (n,) class indices into class_names
    class_names: tuple[str, ...]
    raw_attributes: np.ndarray  # (C, a)
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        raw = np.ascontiguousarray(self.raw_attributes, dtype=np.float64)
        object.__setattr__(self, "features", _lock(features))
        object.__setattr__(self, "labels", _lock(labels))
        object.__setattr__(self, "raw_attributes", _lock(raw))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))

        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError("features must be a non-empty 2-D matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels must be a length-n vector matching features")
        if raw.ndim != 2 or raw.shape[0] < 2 or raw.shape[1] < 1:
            raise ValueError("raw_attributes must be C x a with C >= 2, a >= 1")
        if len(self.class_names) != raw.shape[0]:
            raise ValueError("class_names length must equal attribute row count")
        if len(self.attribute_names) != raw.shape[1]:
            raise ValueError("attribute_names length must equal attribute column count")
        if labels.min() < 0 or labels.max() >= raw.shape[0]:
            raise ValueError("every label must index a valid class")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        if not np.isfinite(raw).all():
            raise ValueError("raw_attributes contain non-finite values")
        _check_unique(self.class_names, "class")
        _check_unique(self.attribute_names, "attribute")

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.raw_attributes.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.raw_attributes.shape[1]

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ValueError(f"unknown class name: {name!r}") from None


@dataclass(frozen=True)
class SignatureMatrix:
    """Column-wise z-scored class attribute signatures.

    Constant attribute columns are mapped to zero (with stddev stored as 1 so
    the (raw - mean) / stddev identity stays exact) and flagged in
    constant_columns.
    """

    signatures: np.ndarray  # (C, a)
    means: np.ndarray       # (a,)
    stddevs: np.ndarray     # (a,)
    constant_columns: np.ndarray  # (a,) bool

    def __post_init__(self):
        sig = np.ascontiguousarray(self.signatures, dtype=np.float64)
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        stds = np.ascontiguousarray(self.stddevs, dtype=np.float64)
        const = np.ascontiguousarray(self.constant_columns, dtype=bool)
        for name, arr in (("signatures", sig), ("means", means), ("stddevs", stds)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contain non-finite values")
        a = sig.shape[1]
        if means.shape != (a,) or stds.shape != (a,) or const.shape != (a,):
            raise ValueError("means/stddevs/constant_columns must be length-a vectors")
        object.__setattr__(self, "signatures", _lock(sig))
        object.__setattr__(self, "means", _lock(means))
        object.__setattr__(self, "stddevs", _lock(stds))
        object.__setattr__(self, "constant_columns", _lock(const))

    @property
    def n_classes(self) -> int:
        return self.signatures.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.signatures.shape[1]


def standardize_signatures(raw: np.ndarray) -> SignatureMatrix:
    """Z-score each attribute column over classes (population stddev).

    Constant columns become all-zero and are flagged with a warning; they stay
    inert in every downstream dot product.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValueError("raw attribute matrix must be C x a with C >= 2")
    if not np.isfinite(raw).all():
        raise ValueError("raw attribute matrix contains non-finite values")

    constant = np.ptp(raw, axis=0) == 0
    means = raw.mean(axis=0)
    # For an exactly constant column the sample mean can still pick up float
    # rounding; pin it to the repeated value so raw - mean is exactly zero.
    means[constant] = raw[0, constant]
    stddevs = raw.std(axis=0)
    stddevs[constant] = 1.0

    signatures = (raw - means) / stddevs
    signatures[:, constant] = 0.0
    if constant.any():
        warnings.warn(
            f"{int(constant.sum())} constant attribute column(s) standardized to zero",
            stacklevel=2,
        )
    return SignatureMatrix(signatures, means, stddevs, constant)


@dataclass(frozen=True)
class Split:
    """Seen/unseen class partition plus train/diagnostic instance lists.

    diag_instances is the held-out seen-class pool used for misprediction
    diagnostics; it never overlaps train_instances.
    """

    seen_classes: tuple[int, ...]
    unseen_classes: tuple[int, ...]
    train_instances: np.ndarray
    diag_instances: np.ndarray

    def __post_init__(self):
        seen = tuple(sorted(int(c) for c in self.seen_classes))
        unseen = tuple(sorted(int(c) for c in self.unseen_classes))
        if set(seen) & set(unseen):
            raise ValueError("seen and unseen classes must be disjoint")
        train = _lock(np.ascontiguousarray(self.train_instances, dtype=np.int64))
        diag = _lock(np.ascontiguousarray(self.diag_instances, dtype=np.int64))
        if np.intersect1d(train, diag).size:
            raise ValueError("train and diag instances must be disjoint")
        object.__setattr__(self, "seen_classes", seen)
        object.__setattr__(self, "unseen_classes", unseen)
        object.__setattr__(self, "train_instances", train)
        object.__setattr__(self, "diag_instances", diag)

    @property
    def seen_set(self) -> frozenset[int]:
        return frozenset(self.seen_classes)

    @property
    def unseen_set(self) -> frozenset[int]:
        return frozenset(self.unseen_classes)


def make_split(
    dataset: Dataset,
    unseen_class_names: list[str] | tuple[str, ...],
    diag_fraction: float = 0.2,
    seed: int = 0,
) -> Split:
    """Partition classes into seen/unseen and hold out a stratified
    per-class diagnostic fraction of the seen-class instances.

    Holds out ceil(diag_fraction * n_y) instances per seen class (capped at
    n_y - 1 so every seen class keeps at least one training instance).
    Deterministic given seed.
    """
    if not 0.0 < diag_fraction < 1.0:
        raise ValueError("diag_fraction must lie strictly between 0 and 1")
    unseen = sorted({dataset.class_index(name) for name in unseen_class_names})
    seen = sorted(set(range(dataset.n_classes)) - set(unseen))
    if len(seen) < 2:
        raise ValueError("at least 2 seen classes are required")

    rng = np.random.default_rng(seed)
    train_parts: list[np.ndarray] = []
    diag_parts: list[np.ndarray] = []
    for y in seen:
        idx = np.flatnonzero(dataset.labels == y)
        n_y = idx.size
        if n_y < 2:
            raise ValueError(
                f"seen class {dataset.class_names[y]!r} has {n_y} instance(s); need at least 2"
            )
        perm = rng.permutation(idx)
        k = min(math.ceil(diag_fraction * n_y), n_y - 1)
        diag_parts.append(perm[:k])
        train_parts.append(perm[k:])

    train = np.sort(np.concatenate(train_parts))
    diag = np.sort(np.concatenate(diag_parts))
    return Split(tuple(seen), tuple(unseen), train, diag)


def generate_synthetic(
    C_seen: int,
    C_unseen: int,
    a: int,
    d: int,
    per_class: int,
    noise_sigma: float,
    corrupt_attribute: int | None = None,
    seed: int = 0,
) -> Dataset:
    """Sample a linearly liftable synthetic dataset.

    Class signatures are unit-normal per entry; features are x = A z_y + eps
    with a fixed random full-rank lift A (d x a) and eps ~ N(0, noise_sigma^2).
    With corrupt_attribute = k, the signature coordinate k feeding the lift is
    replaced by fresh unit noise per instance, so the feature channel for
    attribute k carries no class information and the attribute is unlearnable
    by construction.
    """
    C = C_seen + C_unseen
    if C_seen < 1 or C_unseen < 0 or C < 2:
        raise ValueError("need C_seen >= 1 and at least 2 classes in total")
    if a < 1 or d < a:
        raise ValueError("need a >= 1 and d >= a for a full-rank lift")
    if per_class < 2:
        raise ValueError("per_class must be at least 2")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if corrupt_attribute is not None and not 0 <= corrupt_attribute < a:
        raise ValueError("corrupt_attribute out of range")

    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((C, a))
    # Column scale 1/sqrt(d) keeps each attribute's feature-space magnitude
    # near unity, so noise_sigma is a meaningful signal-to-noise dial.
    A = rng.standard_normal((d, a)) / np.sqrt(d)

    n = C * per_class
    labels = np.repeat(np.arange(C), per_class)
    z_inst = Z[labels].copy()
    if corrupt_attribute is not None:
        z_inst[:, corrupt_attribute] = rng.standard_normal(n)
    features = z_inst @ A.T
    if noise_sigma > 0:
        features = features + noise_sigma * rng.standard_normal((n, d))

    class_names = tuple(f"seen_{i:02d}" for i in range(C_seen)) + tuple(
        f"unseen_{i:02d}" for i in range(C_unseen)
    )
    attribute_names = tuple(f"attr_{k:02d}" for k in range(a))
    return Dataset(
        features=features.astype(np.float32),
        labels=labels,
        class_names=class_names,
        raw_attributes=Z,
        attribute_names=attribute_names,
    )


def save_dataset(dataset: Dataset, directory: str | Path, split_info: dict | None = None) -> None:
    """Write a dataset directory (features.bin, labels.csv, attributes.csv,
    and optionally split.json)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    n, d = dataset.features.shape
    with open(directory / FEATURES_FILE, "wb") as f:
        f.write(FEATURES_MAGIC)
        f.write(struct.pack("<III", FEATURES_VERSION, n, d))
        f.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())

    with open(directory / LABELS_FILE, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["instance", "class"])
        for i, y in enumerate(dataset.labels):
            writer.writerow([i, dataset.class_names[y]])

    with open(directory / ATTRIBUTES_FILE, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", *dataset.attribute_names])
        for c, name in enumerate(dataset.class_names):
            writer.writerow([name, *(repr(float(v)) for v in dataset.raw_attributes[c])])

    if split_info is not None:
        with open(directory / SPLIT_FILE, "w") as f:
            json.dump(split_info, f, indent=2, sort_keys=True)
            f.write("\n")


def _require_file(directory: Path, name: str) -> Path:
    path = directory / name
    if not path.is_file():
        raise DataFormatError(f"missing file: {path}")
    return path


def _load_features(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    header = struct.calcsize("<III") + len(FEATURES_MAGIC)
    if len(blob) < header:
        raise DataFormatError(f"{path}: truncated header")
    if blob[: len(FEATURES_MAGIC)] != FEATURES_MAGIC:
        raise DataFormatError(f"{path}: bad magic bytes (expected {FEATURES_MAGIC!r})")
    version, n, d = struct.unpack_from("<III", blob, len(FEATURES_MAGIC))
    if version != FEATURES_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = header + 4 * n * d
    if len(blob) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes for {n}x{d} floats, got {len(blob)}")
    features = np.frombuffer(blob, dtype="<f4", offset=header).reshape(n, d)
    if not np.isfinite(features).all():
        rows = np.flatnonzero(~np.isfinite(features).all(axis=1))
        raise DataFormatError(f"{path}: non-finite value at row {int(rows[0])}")
    return features


def _load_attributes(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "class":
            raise DataFormatError(f"{path}: header must be 'class,<attr_1>,...'")
        attribute_names = header[1:]
        class_names: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            class_names.append(row[0])
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise DataFormatError(f"{path}: row {lineno}: non-numeric attribute value") from None
            if not all(math.isfinite(v) for v in values):
                raise DataFormatError(f"{path}: row {lineno}: non-finite attribute value")
            rows.append(values)
    if len(class_names) < 2:
        raise DataFormatError(f"{path}: need at least 2 class rows")
    return class_names, attribute_names, np.asarray(rows, dtype=np.float64)


def _load_labels(path: Path, n: int, class_names: list[str]) -> np.ndarray:
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header != ["instance", "class"]:
            raise DataFormatError(f"{path}: header must be 'instance,class'")
        count = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}: row {lineno}: expected 2 columns")
            try:
                i = int(row[0])
            except ValueError:
                raise DataFormatError(f"{path}: row {lineno}: bad instance index {row[0]!r}") from None
            if not 0 <= i < n:
                raise DataFormatError(f"{path}: row {lineno}: instance index {i} out of range (n={n})")
            if labels[i] != -1:
                raise DataFormatError(f"{path}: row {lineno}: duplicate instance index {i}")
            if row[1] not in index:
                raise DataFormatError(f"{path}: row {lineno}: unknown class {row[1]!r}")
            labels[i] = index[row[1]]
            count += 1
    if count != n:
        raise DataFormatError(f"{path}: {count} label rows for {n} feature rows")
    return labels


def load_dataset(directory: str | Path) -> Dataset:
    """Load and validate a dataset directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"not a directory: {directory}")
    features = _load_features(_require_file(directory, FEATURES_FILE))
    class_names, attribute_names, raw = _load_attributes(_require_file(directory, ATTRIBUTES_FILE))
    labels = _load_labels(_require_file(directory, LABELS_FILE), features.shape[0], class_names)
    return Dataset(
        features=features,
        labels=labels,
        class_names=tuple(class_names),
        raw_attributes=raw,
        attribute_names=tuple(attribute_names),
    )


def load_split_config(directory: str | Path) -> dict | None:
    """Read split.json from a dataset directory if present."""
    path = Path(directory) / SPLIT_FILE
    if not path.is_file():
        return None
    with open(path) as f:
        try:
            config = json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(config, dict) or "unseen" not in config:
        raise DataFormatError(f"{path}: expected an object with an 'unseen' list")
    return config
