"""The five raw criterion values, each mapped into [0, 1].

fidelity       deletion test: rank features by |attribution| descending
               (ties by ascending index), progressively replace the top-k
               with the baseline, and average the normalized prediction
               drop over k = 1..K (area over the perturbation curve,
               normalized by the full drop to the baseline, clipped).
interpretability
               Gini coefficient of the absolute attribution mass: 0 for a
               uniform explanation, approaching 1 when a single feature
               carries everything.
robustness     re-explain under Gaussian input perturbations and map the
               normalized mean squared attribution change through
               exp(-MSE), so 1 means perfectly stable.
fairness       one minus the gap between the best and worst per-group mean
               fidelity; a single group scores 1.0 with a warning since
               the criterion is not assessable.
completeness   ablate every feature whose |attribution| clears a fraction
               of the maximum and measure the normalized prediction drop.

Events that would otherwise be silent (zero normalizers, clipping,
missing groups) are appended to the caller's warning sink so reports can
surface every one of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Attribution, Instance, MetricVector, RngSpec, derive_stream
from .errors import (
    ExplainerNotReRunnable,
    GroupSizeZero,
    InvalidConfig,
    OracleRequired,
    UxevalError,
)

_EPS_DEFAULT = 1e-12


@dataclass(frozen=True)
class MetricConfig:
    """Numeric knobs for the metric suite.

    ``deletion_fraction`` and ``perturb_sigma`` default to None, meaning
    "resolve from the data": the full deletion curve for d <= 32 features
    (a quarter of it beyond that) and sigma = 0.05 times the mean feature
    standard deviation.
    """

    deletion_fraction: float | None = None  # K/d in (0, 1]
    perturb_sigma: float | None = None  # > 0
    perturb_samples: int = 20
    mask_threshold: float = 0.1  # tau in (0, 1)
    top_fraction: float = 0.25  # reserved
    epsilon: float = _EPS_DEFAULT

    def __post_init__(self):
        if self.deletion_fraction is not None and not 0.0 < self.deletion_fraction <= 1.0:
            raise InvalidConfig("deletion_fraction must lie in (0, 1]")
        if self.perturb_sigma is not None and self.perturb_sigma <= 0:
            raise InvalidConfig("perturb_sigma must be positive")
        if self.perturb_samples < 1:
            raise InvalidConfig("perturb_samples must be >= 1")
        if not 0.0 < self.mask_threshold < 1.0:
            raise InvalidConfig("mask_threshold must lie in (0, 1)")
        if not 0.0 < self.top_fraction < 1.0:
            raise InvalidConfig("top_fraction must lie in (0, 1)")

    def resolve_k(self, d: int) -> int:
        if self.deletion_fraction is not None:
            return max(1, math.ceil(self.deletion_fraction * d))
        return d if d <= 32 else math.ceil(0.25 * d)

    def resolve_sigma(self, feature_std: np.ndarray) -> float:
        if self.perturb_sigma is not None:
            return float(self.perturb_sigma)
        sigma = 0.05 * float(np.mean(feature_std))
        return sigma if sigma > 0 else 0.05


@dataclass(frozen=True)
class PerInstanceMetrics:
    """Raw per-instance criteria; fairness is dataset-level and lives in aggregate."""

    instance_id: int
    fidelity: float
    interpretability: float
    robustness: float
    completeness: float


def _warn(sink, message: str) -> None:
    if sink is not None:
        sink.append(message)


def _clip_unit(value: float, label: str, instance_id: int, sink) -> float:
    if value < 0.0 or value > 1.0:
        _warn(sink, f"{label}: value {value:.6g} clipped to [0, 1] at instance {instance_id}")
    return min(1.0, max(0.0, value))


def _require_oracle(model) -> None:
    if model is None or not hasattr(model, "predict_matrix"):
        raise OracleRequired("this metric re-queries the model; a live oracle is required")


def deletion_ranking(attribution: Attribution) -> np.ndarray:
    """Feature order for deletion: |a| descending, ties by ascending index."""
    magnitude = np.abs(attribution.flat)
    return np.lexsort((np.arange(magnitude.size), -magnitude))


def fidelity_deletion(model, x: Instance, attribution: Attribution,
                      baseline: Instance, k: int | None = None,
                      epsilon: float = _EPS_DEFAULT, warnings=None) -> float:
    """Normalized area over the deletion curve for the top-K features."""
    _require_oracle(model)
    c = attribution.target_class
    d = x.n_features
    k = d if k is None else min(int(k), d)
    order = deletion_ranking(attribution)

    xf, bf = x.flat, baseline.flat
    batch = np.tile(xf, (k, 1))
    for step in range(k):
        batch[step:, order[step]] = bf[order[step]]
    fx = float(model.predict_matrix(xf[None, :])[0, c])
    fb = float(model.predict_matrix(bf[None, :])[0, c])
    if abs(fx - fb) <= epsilon:
        _warn(warnings, f"fidelity: zero prediction gap at instance {x.id}; raw set to 0")
        return 0.0
    drops = fx - model.predict_matrix(batch)[:, c]
    raw = float(np.mean(drops / (fx - fb + epsilon)))
    return _clip_unit(raw, "fidelity", x.id, warnings)


def interpretability_sparsity(attribution: Attribution) -> float:
    """Gini coefficient of |attribution|: G = 2 sum(i v_i)/(d sum v) - (d+1)/d."""
    v = np.sort(np.abs(attribution.flat))
    d = v.size
    total = v.sum()
    if total <= 0.0:
        return 0.0
    ranks = np.arange(1, d + 1)
    return float((2.0 * (ranks @ v)) / (d * total) - (d + 1) / d)


def robustness_stability(model, explainer, x: Instance, attribution: Attribution,
                         sigma: float, n_samples: int,
                         rng: np.random.Generator) -> float:
    """exp(-MSE) stability of the explanation under input noise.

    Draws x' = x + sigma * eps, recomputes the attribution, and returns
    exp(-mean ||a - a'||^2 / (||a|| ^ 2 + eps)). Ingested maps without
    perturbed companions cannot be re-run and raise.
    """
    base = attribution.flat
    norm = float(base @ base) + _EPS_DEFAULT

    companions = None
    if hasattr(explainer, "perturbed_attributions"):
        companions = explainer.perturbed_attributions(x.id)
    if companions is not None:
        errors = [float(((att.flat - base) ** 2).sum()) / norm for att in companions]
        return float(np.exp(-np.mean(errors)))
    if not getattr(explainer, "re_runnable", True):
        raise ExplainerNotReRunnable(
            "robustness needs a re-runnable explainer or perturbed companion maps"
        )

    explain = explainer.explain if hasattr(explainer, "explain") else explainer
    errors = []
    for _ in range(int(n_samples)):
        noise = sigma * rng.standard_normal(x.features.shape)
        perturbed = Instance(x.features + noise, id=x.id)
        redone = explain(model, perturbed, attribution.target_class)
        errors.append(float(((redone.flat - base) ** 2).sum()) / norm)
    return float(np.exp(-np.mean(errors)))


def fairness_gap(fidelities, group_labels, warnings=None) -> float:
    """One minus the spread of per-group mean fidelity."""
    values = np.asarray(list(fidelities), dtype=np.float64)
    if group_labels is None:
        _warn(warnings, "fairness not assessable: no group labels; raw set to 1.0")
        return 1.0
    labels = list(group_labels)
    if len(labels) != values.size:
        raise GroupSizeZero(f"{len(labels)} group labels for {values.size} fidelity values")
    groups = sorted(set(labels))
    if len(groups) == 1:
        _warn(warnings, "fairness not assessable: single group; raw set to 1.0")
        return 1.0
    means = []
    for group in groups:
        members = values[[i for i, g in enumerate(labels) if g == group]]
        if members.size == 0:
            raise GroupSizeZero(f"group {group!r} is empty")
        means.append(float(members.mean()))
    return float(min(1.0, max(0.0, 1.0 - (max(means) - min(means)))))


def completeness_ablation(model, x: Instance, attribution: Attribution,
                          baseline: Instance, threshold: float = 0.1,
                          epsilon: float = _EPS_DEFAULT, warnings=None) -> float:
    """Normalized prediction drop when all salient features are ablated at once.

    The mask keeps every feature with |a_i| >= threshold * max|a|; an
    all-zero attribution scores 0 since it flags nothing.
    """
    _require_oracle(model)
    c = attribution.target_class
    magnitude = np.abs(attribution.flat)
    peak = magnitude.max()
    if peak <= 0.0:
        _warn(warnings, f"completeness: all-zero attribution at instance {x.id}; raw set to 0")
        return 0.0
    mask = magnitude >= threshold * peak

    xf, bf = x.flat, baseline.flat
    fx = float(model.predict_matrix(xf[None, :])[0, c])
    fb = float(model.predict_matrix(bf[None, :])[0, c])
    if abs(fx - fb) <= epsilon:
        _warn(warnings, f"completeness: zero prediction gap at instance {x.id}; raw set to 0")
        return 0.0
    ablated = np.where(mask, bf, xf)
    f_ablated = float(model.predict_matrix(ablated[None, :])[0, c])
    raw = (fx - f_ablated) / (fx - fb + epsilon)
    return _clip_unit(raw, "completeness", x.id, warnings)


def evaluate_instance(model, explainer, x: Instance, config: MetricConfig,
                      rng_spec: RngSpec, baseline: Instance | None = None,
                      sigma: float | None = None, target_class: int = 0,
                      attribution: Attribution | None = None,
                      warnings=None) -> PerInstanceMetrics:
    """All per-instance criteria for one (model, explainer, instance) triple.

    Component errors are re-raised annotated with the instance id. Passing
    a precomputed attribution skips the initial explanation call.
    """
    if baseline is None:
        baseline = Instance(np.zeros_like(x.features), id=x.id)
    try:
        explain = explainer.explain if hasattr(explainer, "explain") else explainer
        if attribution is None:
            attribution = explain(model, x, target_class)
        k = config.resolve_k(x.n_features)
        if sigma is None:
            sigma = config.perturb_sigma if config.perturb_sigma is not None else 0.05
        fid = fidelity_deletion(model, x, attribution, baseline, k,
                                config.epsilon, warnings)
        interp = interpretability_sparsity(attribution)
        rob = robustness_stability(
            model, explainer, x, attribution, sigma, config.perturb_samples,
            derive_stream(rng_spec, x.id, "metric:robustness"),
        )
        comp = completeness_ablation(model, x, attribution, baseline,
                                     config.mask_threshold, config.epsilon, warnings)
    except UxevalError as exc:
        exc.args = (f"instance {x.id}: {exc}",)
        raise
    return PerInstanceMetrics(x.id, fid, interp, rob, comp)


def aggregate(per_instance, group_labels, warnings=None) -> MetricVector:
    """Dataset-level criteria: means of the per-instance values plus fairness."""
    rows = sorted(per_instance, key=lambda m: m.instance_id)
    if not rows:
        raise GroupSizeZero("no per-instance metrics to aggregate")
    fidelities = [m.fidelity for m in rows]
    return MetricVector(
        fidelity=float(np.mean(fidelities)),
        interpretability=float(np.mean([m.interpretability for m in rows])),
        robustness=float(np.mean([m.robustness for m in rows])),
        fairness=fairness_gap(fidelities, group_labels, warnings),
        completeness=float(np.mean([m.completeness for m in rows])),
    )
