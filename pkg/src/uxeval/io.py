"""Dataset, saliency-map, and attribution serialization.

Tabular datasets travel as UTF-8 CSV with a header row; the reserved
columns ``__group__`` (string) and ``__label__`` (non-negative integer)
are optional and always written after the feature columns. Image datasets
and saliency maps travel as NPY arrays of shape (N, H, W), little-endian
float64, C-order. Floats are written with ``repr`` so that a load/save
round trip is byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import GROUP_COLUMN, LABEL_COLUMN, IMAGE, TABULAR, Dataset, Instance, validate_dataset
from .errors import DataError, ShapeMismatch


def load_tabular_csv(path) -> Dataset:
    """Read a tabular dataset from CSV and validate it."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty CSV file")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names")
    feature_cols = [i for i, name in enumerate(header) if name not in (GROUP_COLUMN, LABEL_COLUMN)]
    group_col = header.index(GROUP_COLUMN) if GROUP_COLUMN in header else None
    label_col = header.index(LABEL_COLUMN) if LABEL_COLUMN in header else None

    instances = []
    groups: list | None = [] if group_col is not None else None
    labels: list | None = [] if label_col is not None else None
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ShapeMismatch(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        try:
            features = [float(row[j]) for j in feature_cols]
        except ValueError as exc:
            raise DataError(f"{path}: row {i}: {exc}") from None
        instances.append(Instance(features, id=i))
        if groups is not None:
            groups.append(row[group_col])
        if labels is not None:
            try:
                labels.append(int(row[label_col]))
            except ValueError as exc:
                raise DataError(f"{path}: row {i}: {exc}") from None

    dataset = Dataset(
        instances=tuple(instances),
        kind=TABULAR,
        group_labels=tuple(groups) if groups is not None else None,
        class_labels=tuple(labels) if labels is not None else None,
        feature_names=tuple(header[j] for j in feature_cols),
    )
    return validate_dataset(dataset)


def save_tabular_csv(dataset: Dataset, path) -> None:
    """Write a tabular dataset as CSV; output bytes are deterministic."""
    if dataset.kind != TABULAR:
        raise ShapeMismatch("only tabular datasets serialize to CSV")
    path = Path(path)
    names = dataset.feature_names or tuple(f"f{i}" for i in range(dataset.n_features))
    header = list(names)
    if dataset.group_labels is not None:
        header.append(GROUP_COLUMN)
    if dataset.class_labels is not None:
        header.append(LABEL_COLUMN)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for i, inst in enumerate(dataset.instances):
            row = [repr(float(v)) for v in inst.features]
            if dataset.group_labels is not None:
                row.append(dataset.group_labels[i])
            if dataset.class_labels is not None:
                row.append(str(dataset.class_labels[i]))
            writer.writerow(row)


def load_array_npy(path, ndim: int = 3) -> np.ndarray:
    """Load an NPY array and coerce it to float64 with the expected rank."""
    path = Path(path)
    try:
        arr = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if arr.ndim != ndim:
        raise ShapeMismatch(f"{path}: expected a {ndim}-D array, got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=np.float64)


def save_array_npy(arr: np.ndarray, path) -> None:
    np.save(Path(path), np.ascontiguousarray(arr, dtype=np.float64))


def load_image_npy(path) -> Dataset:
    """Read an (N, H, W) NPY file as an image dataset and validate it."""
    arr = load_array_npy(path, ndim=3)
    instances = tuple(Instance(arr[i], id=i) for i in range(arr.shape[0]))
    return validate_dataset(Dataset(instances=instances, kind=IMAGE))


def save_image_npy(dataset: Dataset, path) -> None:
    if dataset.kind != IMAGE:
        raise ShapeMismatch("only image datasets serialize to NPY")
    save_array_npy(np.stack([inst.features for inst in dataset.instances]), path)


def load_dataset(path, kind: str) -> Dataset:
    """Dispatch on dataset kind: CSV for tabular, NPY for image."""
    if kind == TABULAR:
        return load_tabular_csv(path)
    if kind == IMAGE:
        return load_image_npy(path)
    raise DataError(f"unknown dataset kind {kind!r}")


def save_attributions(attributions, path, baseline_description: str = "zeros") -> None:
    """Export attributions as one NPY stack plus a JSON sidecar.

    The stack is (N, d) for tabular attributions or (N, H, W) for image
    ones; the sidecar records the method, per-instance target classes,
    and a description of the baseline used.
    """
    path = Path(path)
    stack = np.stack([att.values for att in attributions])
    save_array_npy(stack, path)
    sidecar = {
        "method": attributions[0].method_name,
        "target_classes": [int(att.target_class) for att in attributions],
        "baseline": baseline_description,
        "shape": list(stack.shape),
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
