"""Model oracles and seeded synthetic dataset generators.

The built-in models are deliberately tiny: a linear model (identity or
softmax link), a one-hidden-layer tanh MLP with softmax output, and a
table-lookup model for brute-force tests. The first two expose analytic
input gradients so that path-integral attributions have a differentiable
target; both are trainable with deterministic full-batch gradient descent
on cross-entropy. Synthetic generators produce desk-scale datasets with
known ground truth (generative weights or relevance masks) for oracle
tests and benchmark sanity checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    IMAGE,
    TABULAR,
    Dataset,
    Instance,
    RngSpec,
    derive_stream,
    validate_dataset,
)
from .errors import (
    DataError,
    DimensionMismatch,
    InvalidConfig,
    MissingLabels,
    NotDifferentiable,
)


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for numerical stability."""
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearModel:
    """Scores X @ W.T + b, optionally pushed through a softmax link."""

    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)
    link: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "weights", np.atleast_2d(_frozen(self.weights)))
        object.__setattr__(self, "bias", np.atleast_1d(_frozen(self.bias)))
        if self.link not in ("identity", "softmax"):
            raise InvalidConfig(f"unknown link {self.link!r}")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise DimensionMismatch("weight rows and bias length differ")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise DataError("non-finite model parameters")

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        scores = X @ self.weights.T + self.bias
        return softmax(scores) if self.link == "softmax" else scores

    def gradient_vector(self, x: np.ndarray, target_class: int) -> np.ndarray:
        if self.link == "identity":
            return self.weights[target_class].copy()
        p = self.predict_matrix(x[None, :])[0]
        # d p_c / dx = p_c * (w_c - sum_k p_k w_k)
        return p[target_class] * (self.weights[target_class] - p @ self.weights)


@dataclass(frozen=True)
class MlpModel:
    """One tanh hidden layer, softmax output: softmax(W2 tanh(W1 x + b1) + b2)."""

    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (C, h)
    b2: np.ndarray  # (C,)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.w1.shape[0] != self.b1.shape[0] or self.w2.shape[0] != self.b2.shape[0]:
            raise DimensionMismatch("layer shapes inconsistent")
        if self.w2.shape[1] != self.w1.shape[0]:
            raise DimensionMismatch("hidden sizes of the two layers differ")
        for name in ("w1", "b1", "w2", "b2"):
            if not np.isfinite(getattr(self, name)).all():
                raise DataError("non-finite model parameters")

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        hidden = np.tanh(X @ self.w1.T + self.b1)
        return softmax(hidden @ self.w2.T + self.b2)

    def gradient_vector(self, x: np.ndarray, target_class: int) -> np.ndarray:
        a1 = np.tanh(self.w1 @ x + self.b1)
        p = softmax((self.w2 @ a1 + self.b2)[None, :])[0]
        dz2 = p[target_class] * (np.eye(self.n_classes)[target_class] - p)
        dz1 = (self.w2.T @ dz2) * (1.0 - a1 * a1)
        return self.w1.T @ dz1


class TableModel:
    """Exhaustive lookup over a small discrete input grid.

    Not differentiable; exists so brute-force oracles can probe arbitrary
    functions, e.g. a product interaction on the {0, 1}^d corners.
    """

    def __init__(self, grid, table: dict):
        self.grid = tuple(tuple(float(v) for v in axis) for axis in grid)
        self.table = {tuple(float(v) for v in key): _frozen(row) for key, row in table.items()}
        expected = 1
        for axis in self.grid:
            expected *= len(axis)
        if len(self.table) != expected:
            raise DataError(f"table covers {len(self.table)} points, grid has {expected}")
        rows = list(self.table.values())
        self._n_classes = rows[0].shape[0]
        for row in rows:
            if row.shape != (self._n_classes,):
                raise DimensionMismatch("table rows have inconsistent class counts")
            if ((row < 0) | (row > 1)).any():
                raise DataError("table probabilities outside [0, 1]")

    @classmethod
    def from_function(cls, grid, fn, n_classes: int = 1) -> "TableModel":
        """Tabulate ``fn`` (point tuple -> length-C sequence) over the grid."""
        grid = tuple(tuple(float(v) for v in axis) for axis in grid)
        points = [()]
        for axis in grid:
            points = [p + (v,) for p in points for v in axis]
        table = {p: np.atleast_1d(np.asarray(fn(p), dtype=np.float64)) for p in points}
        return cls(grid, table)

    @property
    def n_features(self) -> int:
        return len(self.grid)

    @property
    def n_classes(self) -> int:
        return self._n_classes

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], self._n_classes))
        for i, row in enumerate(X):
            key = tuple(float(v) for v in row)
            if key not in self.table:
                raise DataError(f"point {key} is not on the table grid")
            out[i] = self.table[key]
        return out

    def gradient_vector(self, x: np.ndarray, target_class: int) -> np.ndarray:
        raise NotDifferentiable("table models have no gradients")


def predict(model, batch) -> np.ndarray:
    """Batch prediction over instances; returns an (N, C) matrix.

    Rows are class probabilities (softmax models sum to 1 within 1e-12)
    or raw scores for identity-link models.
    """
    instances = list(batch)
    X = np.stack([inst.flat for inst in instances])
    expected = getattr(model, "n_features", None)
    if expected is not None and X.shape[1] != expected:
        raise DimensionMismatch(f"model expects {expected} features, got {X.shape[1]}")
    out = model.predict_matrix(X)
    if not np.isfinite(out).all():
        raise DataError("oracle produced non-finite predictions")
    return out


def gradient(model, x: Instance, target_class: int) -> np.ndarray:
    """Analytic gradient of the model output for ``target_class`` at ``x``."""
    fn = getattr(model, "gradient_vector", None)
    if fn is None:
        raise NotDifferentiable(f"{type(model).__name__} has no gradients")
    vec = x.flat
    expected = getattr(model, "n_features", None)
    if expected is not None and vec.shape[0] != expected:
        raise DimensionMismatch(f"model expects {expected} features, got {vec.shape[0]}")
    return fn(vec, int(target_class))


# -- training -----------------------------------------------------------

@dataclass(frozen=True)
class LinearTemplate:
    n_classes: int = 2


@dataclass(frozen=True)
class MlpTemplate:
    hidden: int = 8
    n_classes: int = 2


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[labels]


def cross_entropy(model, dataset: Dataset) -> float:
    """Mean cross-entropy of a softmax model against the dataset labels."""
    if dataset.class_labels is None:
        raise MissingLabels("dataset has no class labels")
    probs = predict(model, dataset.instances)
    labels = np.asarray(dataset.class_labels)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.clip(picked, 1e-300, None)).mean())


def train(template, dataset: Dataset, epochs: int, learning_rate: float, seed: int):
    """Full-batch gradient descent on cross-entropy; deterministic per seed.

    Zero epochs returns the seeded initial parameters unchanged. There is
    no early stopping and no shuffling, so identical seeds produce
    bitwise-identical parameters.
    """
    if dataset.class_labels is None:
        raise MissingLabels("training requires class labels")
    X = dataset.feature_matrix()
    labels = np.asarray(dataset.class_labels)
    d = X.shape[1]
    n = X.shape[0]
    n_classes = int(template.n_classes)
    if labels.max() >= n_classes:
        raise DataError(f"label {labels.max()} out of range for {n_classes} classes")
    Y = _one_hot(labels, n_classes)
    lr = float(learning_rate)

    if isinstance(template, LinearTemplate):
        rng = derive_stream(RngSpec(seed), 0, "train-init-linear")
        W = 0.1 * rng.standard_normal((n_classes, d))
        b = np.zeros(n_classes)
        for _ in range(int(epochs)):
            P = softmax(X @ W.T + b)
            G = (P - Y) / n
            W = W - lr * (G.T @ X)
            b = b - lr * G.sum(axis=0)
        return LinearModel(W, b, link="softmax")

    if isinstance(template, MlpTemplate):
        h = int(template.hidden)
        rng = derive_stream(RngSpec(seed), 0, "train-init-mlp")
        W1 = rng.standard_normal((h, d)) / np.sqrt(d)
        b1 = np.zeros(h)
        W2 = rng.standard_normal((n_classes, h)) / np.sqrt(h)
        b2 = np.zeros(n_classes)
        for _ in range(int(epochs)):
            A1 = np.tanh(X @ W1.T + b1)
            P = softmax(A1 @ W2.T + b2)
            G2 = (P - Y) / n
            G1 = (G2 @ W2) * (1.0 - A1 * A1)
            W2 = W2 - lr * (G2.T @ A1)
            b2 = b2 - lr * G2.sum(axis=0)
            W1 = W1 - lr * (G1.T @ X)
            b1 = b1 - lr * G1.sum(axis=0)
        return MlpModel(W1, b1, W2, b2)

    raise InvalidConfig(f"unknown model template {type(template).__name__}")


def seeded_mlp(d: int, hidden: int, n_classes: int, seed: int) -> MlpModel:
    """An untrained MLP with seeded Gaussian parameters; handy for tests."""
    rng = derive_stream(RngSpec(seed), 0, "seeded-mlp")
    return MlpModel(
        rng.standard_normal((hidden, d)) / np.sqrt(d),
        0.1 * rng.standard_normal(hidden),
        rng.standard_normal((n_classes, hidden)) / np.sqrt(hidden),
        0.1 * rng.standard_normal(n_classes),
    )


# -- synthetic datasets ---------------------------------------------------

SYNTHETIC_KINDS = ("tabular-linear", "tabular-groups", "image-shapes")

_TABULAR_DIM = 6
_IMAGE_SIDE = 8


@dataclass(frozen=True)
class SyntheticData:
    """A generated dataset plus whatever ground truth the generator knows."""

    dataset: Dataset
    true_weights: np.ndarray | None = None  # tabular-linear / tabular-groups
    masks: np.ndarray | None = None  # image-shapes: (N, H, W) bool relevance


def generate_synthetic(kind: str, n: int, seed: int) -> SyntheticData:
    """Deterministic synthetic data for the three stand-in domains.

    tabular-linear: Gaussian features, labels from the sign of w . x, the
    generative weight vector shipped as ground truth. tabular-groups adds
    two balanced ``__group__`` values. image-shapes emits 8 x 8 grids with
    a bright rectangle (pixels >= 0.8) on a dark background (<= 0.2) and
    ships the rectangle mask.
    """
    n = int(n)
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    if kind not in SYNTHETIC_KINDS:
        raise InvalidConfig(f"unknown synthetic kind {kind!r}")
    spec = RngSpec(seed)

    if kind in ("tabular-linear", "tabular-groups"):
        rng = derive_stream(spec, 0, f"synth-{kind}")
        d = _TABULAR_DIM
        raw = rng.standard_normal(d)
        weights = raw + np.where(raw >= 0, 0.3, -0.3)  # keep |w_i| away from zero
        X = rng.standard_normal((n, d))
        labels = tuple(int(v) for v in (X @ weights > 0))
        groups = None
        if kind == "tabular-groups":
            assignment = np.arange(n) % 2  # both groups non-empty for n >= 2
            assignment = assignment[rng.permutation(n)]
            groups = tuple("A" if g == 0 else "B" for g in assignment)
        dataset = Dataset(
            instances=tuple(Instance(X[i], id=i) for i in range(n)),
            kind=TABULAR,
            group_labels=groups,
            class_labels=labels,
            feature_names=tuple(f"f{i}" for i in range(d)),
        )
        return SyntheticData(validate_dataset(dataset), true_weights=weights)

    side = _IMAGE_SIDE
    rng = derive_stream(spec, 0, "synth-image-shapes")
    grids = np.empty((n, side, side))
    masks = np.zeros((n, side, side), dtype=bool)
    for i in range(n):
        background = rng.uniform(0.0, 0.2, size=(side, side))
        r0 = int(rng.integers(0, side - 3))
        c0 = int(rng.integers(0, side - 3))
        height = int(rng.integers(2, min(4, side - r0) + 1))
        width = int(rng.integers(2, min(4, side - c0) + 1))
        grid = background
        grid[r0 : r0 + height, c0 : c0 + width] = rng.uniform(
            0.8, 1.0, size=(height, width)
        )
        grids[i] = grid
        masks[i, r0 : r0 + height, c0 : c0 + width] = True
    dataset = Dataset(
        instances=tuple(Instance(grids[i], id=i) for i in range(n)),
        kind=IMAGE,
    )
    return SyntheticData(validate_dataset(dataset), masks=masks)


# -- parameter files ------------------------------------------------------

def save_model(model, path) -> None:
    """Persist model parameters as JSON."""
    if isinstance(model, LinearModel):
        doc = {"weights": model.weights.tolist(), "bias": model.bias.tolist(), "link": model.link}
    elif isinstance(model, MlpModel):
        doc = {
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2.tolist(),
        }
    else:
        raise InvalidConfig(f"cannot serialize {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path):
    """Load a LinearModel or MlpModel from its JSON parameter file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if "w1" in doc:
        return MlpModel(doc["w1"], doc["b1"], doc["w2"], doc["b2"])
    if "weights" in doc:
        return LinearModel(doc["weights"], doc["bias"], doc.get("link", "identity"))
    raise DataError(f"{path}: unrecognized model parameter file")
