"""Shared domain types, validation, and the deterministic RNG contract.

All types are immutable after construction (arrays are marked read-only),
so they can be shared freely across concurrent workers. Randomness is never
drawn from a global state: every stochastic operation derives its own
stream from ``(master_seed, instance_id, operation_tag)`` via
:func:`derive_stream`, which makes per-instance outputs independent of
evaluation order and worker scheduling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    EmptyDataset,
    InvalidConfig,
    NonFiniteValue,
    ShapeMismatch,
)

#: Criterion names in canonical order; every five-vector in the package
#: (raw metrics, rubric scores, profile weights) follows this order.
CRITERIA = ("fidelity", "interpretability", "robustness", "fairness", "completeness")

#: Reserved CSV column names.
GROUP_COLUMN = "__group__"
LABEL_COLUMN = "__label__"

TABULAR = "tabular"
IMAGE = "image"


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """One model input: a 1-D feature vector (tabular) or an H x W grid (image)."""

    features: np.ndarray
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features))
        if self.features.ndim not in (1, 2):
            raise ShapeMismatch(
                f"instance {self.id}: features must be 1-D or 2-D, got {self.features.ndim}-D"
            )

    @property
    def is_image(self) -> bool:
        return self.features.ndim == 2

    @property
    def flat(self) -> np.ndarray:
        return self.features.reshape(-1)

    @property
    def n_features(self) -> int:
        return int(self.features.size)


@dataclass(frozen=True)
class Attribution:
    """Per-feature (or per-pixel) importance for one instance and one class."""

    values: np.ndarray
    target_class: int = 0
    method_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class Dataset:
    """An ordered batch of instances with optional group and label columns."""

    instances: tuple
    kind: str = TABULAR
    group_labels: tuple | None = None
    class_labels: tuple | None = None
    feature_names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        for name in ("group_labels", "class_labels", "feature_names"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def n_features(self) -> int:
        return self.instances[0].n_features

    def feature_matrix(self) -> np.ndarray:
        """Instances stacked as an (N, d) matrix; images are flattened."""
        return np.stack([inst.flat for inst in self.instances])

    def feature_std(self) -> np.ndarray:
        """Per-feature standard deviation over the dataset."""
        return self.feature_matrix().std(axis=0)


def validate_dataset(raw: Dataset) -> Dataset:
    """Enforce all dataset invariants, returning a validated dataset.

    Image values are clipped to [0, 1]; everything else must already hold:
    at least one instance, parallel lists of equal length, one feature
    shape throughout, unique instance ids, and no NaN/Inf anywhere.
    """
    if len(raw.instances) == 0:
        raise EmptyDataset("dataset has no instances")
    if raw.kind not in (TABULAR, IMAGE):
        raise InvalidConfig(f"unknown dataset kind {raw.kind!r}")

    n = len(raw.instances)
    for name in ("group_labels", "class_labels", "feature_names"):
        value = getattr(raw, name)
        if value is None:
            continue
        expected = raw.n_features if name == "feature_names" else n
        if len(value) != expected:
            raise ShapeMismatch(f"{name} has {len(value)} entries, expected {expected}")

    shape = raw.instances[0].features.shape
    seen_ids = set()
    clipped = []
    for inst in raw.instances:
        if inst.features.shape != shape:
            raise ShapeMismatch(
                f"instance {inst.id}: shape {inst.features.shape} differs from {shape}"
            )
        if raw.kind == IMAGE and not inst.is_image:
            raise ShapeMismatch(f"instance {inst.id}: image dataset holds a 1-D instance")
        if raw.kind == TABULAR and inst.is_image:
            raise ShapeMismatch(f"instance {inst.id}: tabular dataset holds a 2-D instance")
        if inst.id in seen_ids:
            raise ShapeMismatch(f"duplicate instance id {inst.id}")
        seen_ids.add(inst.id)
        finite = np.isfinite(inst.features)
        if not finite.all():
            index = int(np.argmin(finite.reshape(-1)))
            raise NonFiniteValue(inst.id, index)
        if raw.kind == IMAGE:
            clipped.append(Instance(np.clip(inst.features, 0.0, 1.0), id=inst.id))
        else:
            clipped.append(inst)

    if raw.class_labels is not None:
        labels = []
        for inst, label in zip(raw.instances, raw.class_labels):
            label = int(label)
            if label < 0:
                raise ShapeMismatch(f"instance {inst.id}: negative class label {label}")
            labels.append(label)
        class_labels = tuple(labels)
    else:
        class_labels = None

    return Dataset(
        instances=tuple(clipped),
        kind=raw.kind,
        group_labels=raw.group_labels,
        class_labels=class_labels,
        feature_names=raw.feature_names,
    )


@dataclass(frozen=True)
class RngSpec:
    """Master seed from which every random stream in a run is derived."""

    master_seed: int

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise InvalidConfig(f"master seed must be a 64-bit unsigned integer, got {seed}")
        object.__setattr__(self, "master_seed", seed)


def derive_stream(spec: RngSpec, instance_id: int, tag: str) -> np.random.Generator:
    """Derive a deterministic random stream for ``(seed, instance id, tag)``.

    The triple is hashed into a 128-bit Philox key, so streams for
    different instances or operations are statistically independent, and
    the same triple always yields bitwise-identical draws regardless of
    execution order. This is the only sanctioned source of randomness.
    """
    material = f"{spec.master_seed}|{int(instance_id)}|{tag}".encode("utf-8")
    key = int.from_bytes(hashlib.sha256(material).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class MetricVector:
    """Raw values of the five criteria, each clipped into [0, 1]."""

    fidelity: float
    interpretability: float
    robustness: float
    fairness: float
    completeness: float

    def __post_init__(self):
        for name in CRITERIA:
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise DataError(f"non-finite {name} metric value")
            object.__setattr__(self, name, min(1.0, max(0.0, value)))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in CRITERIA])

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in CRITERIA}
