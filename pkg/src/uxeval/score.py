"""Rubric normalization, domain weight profiles, and drift-driven adaptation.

Raw criterion values in [0, 1] map linearly onto the 1-5 rubric
(s = 1 + 4 raw); the integer rubric band is report-only. The total is the
weighted sum S = sum(w_i s_i) under a domain profile whose five weights
sum to one. ``weighted_score`` also accepts externally supplied integer
scores, which is how audit runs reproduce published worked examples
exactly. Distribution shift between a stored reference dataset and the
current one is detected with the population stability index over
reference-quantile bins; fired adaptation rules nudge criterion weights
and renormalize.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CRITERIA, Dataset, MetricVector
from .errors import (
    DataError,
    DimensionMismatch,
    InvalidConfig,
    ReferenceTooSmall,
    UnknownProfile,
    WeightsNotNormalized,
)

_WEIGHT_TOL = 1e-9
_PERCENT_TOL = 1e-6

#: Built-in weight distributions, in percent, criterion order as CRITERIA.
BUILTIN_PROFILES = {
    "healthcare": (25, 30, 10, 10, 25),
    "finance": (20, 25, 15, 25, 15),
    "agriculture": (20, 30, 15, 10, 25),
    "security": (25, 20, 15, 20, 20),
}

PSI_THRESHOLD = 0.2
_PSI_FLOOR = 1e-4
_MIN_REFERENCE = 10


@dataclass(frozen=True)
class DomainProfile:
    """A named weight vector over the five criteria; weights sum to one."""

    name: str
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        if weights.shape != (len(CRITERIA),):
            raise WeightsNotNormalized(f"expected {len(CRITERIA)} weights, got {weights.shape}")
        if ((weights < 0) | (weights > 1)).any():
            raise WeightsNotNormalized("weights must lie in [0, 1]")
        if abs(float(weights.sum()) - 1.0) > _WEIGHT_TOL:
            raise WeightsNotNormalized(f"weights sum to {weights.sum()!r}, expected 1")

    def weight(self, criterion: str) -> float:
        return float(self.weights[CRITERIA.index(criterion)])

    def as_dict(self) -> dict:
        return {name: float(w) for name, w in zip(CRITERIA, self.weights)}


def load_profile(name_or_path) -> DomainProfile:
    """A built-in profile by name, or a JSON profile file with percent weights."""
    key = str(name_or_path)
    if key in BUILTIN_PROFILES:
        return DomainProfile(key, np.array(BUILTIN_PROFILES[key], dtype=np.float64) / 100.0)
    path = Path(key)
    if not path.exists():
        raise UnknownProfile(f"{key!r} is not a built-in profile or a readable file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        name = doc["name"]
        percents = np.array([float(doc["weights"][c]) for c in CRITERIA])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"{path}: malformed profile file ({exc})") from None
    if abs(float(percents.sum()) - 100.0) > _PERCENT_TOL:
        raise WeightsNotNormalized(f"{path}: weights sum to {percents.sum()}%, expected 100%")
    return DomainProfile(str(name), percents / 100.0)


def normalize(raw: MetricVector):
    """Continuous rubric scores s = 1 + 4 raw and their integer bands."""
    scores = 1.0 + 4.0 * raw.as_array()
    return scores, np.array([band_of(s) for s in scores], dtype=np.int64)


def band_of(score: float) -> int:
    """Rubric band 1..5 for a continuous score in [1, 5].

    The small guard keeps exact boundary scores (1.8, 2.6, 3.4, 4.2) in
    the upper band despite binary float representation.
    """
    return min(5, 1 + int(math.floor((score - 1.0) / 0.8 + 1e-9)))


def weighted_score(scores, profile: DomainProfile) -> float:
    """S = sum(w_i s_i). Accepts continuous or externally supplied integer scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != profile.weights.shape:
        raise DimensionMismatch(f"{scores.shape[0]} scores for {profile.weights.shape[0]} weights")
    if abs(float(profile.weights.sum()) - 1.0) > _WEIGHT_TOL:
        raise WeightsNotNormalized("profile weights do not sum to 1")
    return float(profile.weights @ scores)


@dataclass(frozen=True)
class ScoreBreakdown:
    """Raw metrics, rubric scores and bands, weights, and the total S."""

    raw: MetricVector
    scores: np.ndarray
    bands: np.ndarray
    weights: np.ndarray
    total: float

    @property
    def n(self) -> int:
        return len(CRITERIA)

    @classmethod
    def from_metrics(cls, raw: MetricVector, profile: DomainProfile) -> "ScoreBreakdown":
        scores, bands = normalize(raw)
        return cls(raw, scores, bands, profile.weights.copy(), weighted_score(scores, profile))

    @classmethod
    def from_audit_scores(cls, raw: MetricVector, scores, profile: DomainProfile) -> "ScoreBreakdown":
        """Score from externally supplied s_i, bypassing normalization."""
        scores = np.asarray(scores, dtype=np.float64)
        if ((scores < 1.0) | (scores > 5.0)).any():
            raise InvalidConfig("audit scores must lie in [1, 5]")
        bands = np.array([band_of(s) for s in scores], dtype=np.int64)
        return cls(raw, scores, bands, profile.weights.copy(), weighted_score(scores, profile))


# -- drift ---------------------------------------------------------------

def population_stability_index(reference: np.ndarray, current: np.ndarray,
                               bins: int = 10) -> float:
    """PSI between two samples over reference-quantile bins.

    Bin edges are the reference quantiles (deciles for bins=10); both bin
    proportion vectors are floored at 1e-4 before the sum of
    (p - q) ln(p / q).
    """
    reference = np.asarray(reference, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    edges = np.percentile(reference, np.linspace(0, 100, bins + 1)[1:-1])
    p = np.bincount(np.searchsorted(edges, reference, side="right"), minlength=bins) / reference.size
    q = np.bincount(np.searchsorted(edges, current, side="right"), minlength=bins) / current.size
    p = np.maximum(p, _PSI_FLOOR)
    q = np.maximum(q, _PSI_FLOOR)
    return float(np.sum((p - q) * np.log(p / q)))


@dataclass(frozen=True)
class DriftReport:
    """Per-feature (and optionally per-class prediction) PSI values."""

    feature_psi: np.ndarray
    prediction_psi: np.ndarray | None = None
    threshold: float = PSI_THRESHOLD

    @property
    def feature_drift(self) -> bool:
        return bool((self.feature_psi > self.threshold).any())

    @property
    def prediction_drift(self) -> bool:
        if self.prediction_psi is None:
            return False
        return bool((self.prediction_psi > self.threshold).any())

    @property
    def any_drift(self) -> bool:
        return self.feature_drift or self.prediction_drift

    def as_dict(self) -> dict:
        doc = {
            "feature_psi": [float(v) for v in self.feature_psi],
            "feature_drift": self.feature_drift,
            "threshold": self.threshold,
        }
        if self.prediction_psi is not None:
            doc["prediction_psi"] = [float(v) for v in self.prediction_psi]
            doc["prediction_drift"] = self.prediction_drift
        return doc


def detect_drift(reference: Dataset, current: Dataset, bins: int = 10,
                 model=None) -> DriftReport:
    """Per-feature PSI between a reference and the current dataset.

    The reference needs at least 10 instances for its quantile bins to
    mean anything. When a model is supplied, PSI over its predicted class
    probabilities is reported as well.
    """
    if len(reference) < _MIN_REFERENCE:
        raise ReferenceTooSmall(
            f"reference has {len(reference)} instances; need >= {_MIN_REFERENCE}"
        )
    ref = reference.feature_matrix()
    cur = current.feature_matrix()
    if ref.shape[1] != cur.shape[1]:
        raise DimensionMismatch(f"reference has {ref.shape[1]} features, current {cur.shape[1]}")
    feature_psi = np.array(
        [population_stability_index(ref[:, j], cur[:, j], bins) for j in range(ref.shape[1])]
    )
    prediction_psi = None
    if model is not None:
        from .oracle import predict

        ref_pred = predict(model, reference.instances)
        cur_pred = predict(model, current.instances)
        prediction_psi = np.array(
            [population_stability_index(ref_pred[:, c], cur_pred[:, c], bins)
             for c in range(ref_pred.shape[1])]
        )
    return DriftReport(feature_psi, prediction_psi)


# -- adaptation -----------------------------------------------------------

TRIGGERS = ("drift-on-features", "drift-on-predictions")


@dataclass(frozen=True)
class AdaptationRule:
    """When the trigger fires, add ``delta`` to one criterion weight.

    All quantities are weight fractions; the adjusted weight is clamped to
    [floor, cap] before the whole profile renormalizes to sum 1.
    """

    trigger: str
    criterion: str
    delta: float
    floor: float = 0.0
    cap: float = 1.0

    def __post_init__(self):
        if self.trigger not in TRIGGERS:
            raise InvalidConfig(f"unknown trigger {self.trigger!r}")
        if self.criterion not in CRITERIA:
            raise InvalidConfig(f"unknown criterion {self.criterion!r}")
        if not 0.0 <= self.floor <= self.cap <= 1.0:
            raise InvalidConfig("need 0 <= floor <= cap <= 1")

    def fires(self, drift: DriftReport) -> bool:
        if self.trigger == "drift-on-features":
            return drift.feature_drift
        return drift.prediction_drift


def adapt_weights(profile: DomainProfile, rules, drift: DriftReport,
                  log=None) -> DomainProfile:
    """Apply every fired rule, then renormalize the weights to sum 1.

    Without drift (or without fired rules) the profile is returned
    unchanged. Applied rules are described in the optional log sink.
    """
    weights = profile.weights.copy()
    fired = False
    for rule in rules:
        if not rule.fires(drift):
            continue
        fired = True
        idx = CRITERIA.index(rule.criterion)
        adjusted = min(rule.cap, max(rule.floor, weights[idx] + rule.delta))
        if log is not None:
            log.append(
                f"rule fired ({rule.trigger}): {rule.criterion} "
                f"{weights[idx]:.4f} -> {adjusted:.4f} before renormalization"
            )
        weights[idx] = adjusted
    if not fired:
        return profile
    weights = weights / weights.sum()
    return DomainProfile(f"{profile.name}+adapted", weights)


def load_rules(path) -> list:
    """Adaptation rules from a JSON file; delta/floor/cap are in percent."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if not isinstance(doc, list):
        raise InvalidConfig(f"{path}: rules file must hold a JSON list")
    rules = []
    for entry in doc:
        rules.append(
            AdaptationRule(
                trigger=entry["trigger"],
                criterion=entry["criterion"],
                delta=float(entry["delta"]) / 100.0,
                floor=float(entry.get("floor", 0.0)) / 100.0,
                cap=float(entry.get("cap", 100.0)) / 100.0,
            )
        )
    return rules
