"""Attribution methods.

Native explainers:

* ``ig``            midpoint-rule path integral of the target-class
                    gradient from a baseline to the input.
* ``kshap``         Shapley-kernel weighted least squares over feature
                    coalitions, with the efficiency constraint (values sum
                    to the prediction difference against the baseline)
                    enforced exactly by eliminating one coefficient. All
                    2^d - 2 non-degenerate coalitions are enumerated when
                    the sample budget allows; otherwise coalitions are
                    sampled proportionally to the kernel.
* ``exact-shapley`` brute-force Shapley values over all 2^d coalitions.
* ``lime``          local surrogate: Gaussian perturbations around the
                    input, distance-kernel weights, weighted ridge fit.
* ``occlusion``     non-overlapping baseline patches over an image; the
                    prediction drop is credited to every occluded pixel.
* ``random``        seeded noise attribution, the benchmark floor.

Externally computed saliency maps (e.g. gradient-weighted class activation
maps from a CNN) enter through :func:`ingest_saliency` and are evaluated
like native attributions, except that robustness needs companion maps for
perturbed inputs since the producing model is not available here.

Missing features always mean "replaced by the baseline value"; the default
baseline is the all-zeros input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .core import Attribution, Dataset, Instance, RngSpec, derive_stream
from .errors import (
    DegenerateSystem,
    CountMismatch,
    ExplainerNotReRunnable,
    InvalidConfig,
    PatchTooLarge,
    ShapeMismatch,
    ShapeUnrescalable,
    TooManyFeatures,
)
from .io import load_array_npy
from .oracle import gradient

EXACT_SHAPLEY_MAX_FEATURES = 20

_COND_LIMIT = 1e12


def zeros_like_baseline(instance: Instance) -> Instance:
    """The default baseline: an all-zeros input of the same shape."""
    return Instance(np.zeros_like(instance.features), id=instance.id)


def _predict_one(model, x: np.ndarray, target_class: int) -> float:
    return float(model.predict_matrix(x[None, :])[0, target_class])


def _solve_weighted_ridge(X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray,
                          ridge: float) -> np.ndarray:
    """Solve (X'WX + ridge I) beta = X'Wy, rejecting ill-conditioned systems."""
    WX = sample_weight[:, None] * X
    A = X.T @ WX + ridge * np.eye(X.shape[1])
    b = WX.T @ y
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise DegenerateSystem("least-squares system singular after ridge", cond)
    return np.linalg.solve(A, b)


# -- integrated gradients --------------------------------------------------

def explain_ig(model, x: Instance, target_class: int, baseline: Instance | None = None,
               steps: int = 256) -> Attribution:
    """Path-integral attribution with the midpoint quadrature rule.

    Component i gets (x_i - x'_i) times the mean of df_c/dx_i over the
    points x' + (k - 0.5)/m * (x - x'), k = 1..m. Exact for linear models
    at any m; for smooth models the values sum to f_c(x) - f_c(x') with an
    O(1/m^2) residual.
    """
    steps = int(steps)
    if steps < 1:
        raise InvalidConfig("ig needs at least one quadrature step")
    baseline = baseline if baseline is not None else zeros_like_baseline(x)
    diff = x.flat - baseline.flat
    total = np.zeros_like(diff)
    for k in range(1, steps + 1):
        point = Instance(baseline.flat + (k - 0.5) / steps * diff, id=x.id)
        total += gradient(model, point, target_class)
    values = diff * total / steps
    return Attribution(values.reshape(x.features.shape), target_class, "ig")


# -- Shapley values ----------------------------------------------------------

def _coalition_rows(masks: np.ndarray, x: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    return np.where(masks, x, baseline)


def _kernel_weight(d: int, size: int) -> float:
    return (d - 1) / (math.comb(d, size) * size * (d - size))


def _enumerate_masks(d: int) -> np.ndarray:
    codes = np.arange(1, (1 << d) - 1, dtype=np.int64)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def _sample_masks(d: int, samples: int, rng: np.random.Generator):
    """Draw coalitions with probability proportional to the Shapley kernel.

    Sizes follow p(k) proportional to (d - 1)/(k (d - k)); each draw also
    contributes its complement, and repeated masks accumulate count weight.
    """
    size_weights = np.array([(d - 1) / (k * (d - k)) for k in range(1, d)])
    size_weights /= size_weights.sum()
    counts: dict = {}
    order: list = []
    drawn = 0
    while drawn < samples:
        k = 1 + int(rng.choice(d - 1, p=size_weights))
        mask = np.zeros(d, dtype=bool)
        mask[rng.permutation(d)[:k]] = True
        for m in (mask, ~mask):
            key = m.tobytes()
            if key not in counts:
                counts[key] = 0
                order.append(m.copy())
            counts[key] += 1
            drawn += 1
            if drawn >= samples:
                break
    masks = np.stack(order)
    weights = np.array([counts[m.tobytes()] for m in order], dtype=np.float64)
    return masks, weights


def explain_kshap(model, x: Instance, baseline: Instance | None = None,
                  target_class: int = 0, samples: int = 1000, ridge: float = 0.0,
                  rng: np.random.Generator | None = None) -> Attribution:
    """Kernel-weighted least-squares Shapley estimate.

    The coalition game value is v(z) = f_c(x_z) - f_c(baseline) with
    absent features at the baseline. Solving for d - 1 coefficients and
    deriving the last keeps the efficiency constraint exact even under
    sampling or ridge regularization. With a budget of at least 2^d - 2
    the full coalition space is enumerated and the result matches the
    brute-force Shapley values to solver precision.
    """
    baseline = baseline if baseline is not None else zeros_like_baseline(x)
    xf, bf = x.flat, baseline.flat
    d = x.n_features
    if samples < d + 2:
        raise InvalidConfig(f"kshap needs at least d + 2 = {d + 2} samples, got {samples}")
    fx = _predict_one(model, xf, target_class)
    fb = _predict_one(model, bf, target_class)
    delta = fx - fb

    if d == 1:
        return Attribution(np.array([delta]).reshape(x.features.shape), target_class, "kshap")

    full = (1 << d) - 2
    if samples >= full:
        masks = _enumerate_masks(d)
        sizes = masks.sum(axis=1)
        weights = np.array([_kernel_weight(d, int(s)) for s in sizes])
    else:
        if rng is None:
            raise InvalidConfig("sampled kshap requires a random stream")
        masks, weights = _sample_masks(d, samples, rng)

    v = model.predict_matrix(_coalition_rows(masks, xf, bf))[:, target_class] - fb

    # Efficiency: substitute phi_last = delta - sum(others) and solve the
    # reduced weighted least squares.
    Z = masks.astype(np.float64)
    y2 = v - Z[:, -1] * delta
    X2 = Z[:, :-1] - Z[:, -1:]
    head = _solve_weighted_ridge(X2, y2, weights, ridge)
    phi = np.append(head, delta - head.sum())
    return Attribution(phi.reshape(x.features.shape), target_class, "kshap")


def exact_shapley(model, x: Instance, baseline: Instance | None = None,
                  target_class: int = 0) -> Attribution:
    """Brute-force Shapley values over all 2^d coalitions.

    phi_i = sum over S not containing i of |S|! (d - |S| - 1)! / d! times
    the marginal contribution of i to S; absent features sit at the
    baseline. Requires 2^d model queries, hence the d <= 20 cap.
    """
    d = x.n_features
    if d > EXACT_SHAPLEY_MAX_FEATURES:
        raise TooManyFeatures(f"exact Shapley needs 2^d queries; d = {d} > {EXACT_SHAPLEY_MAX_FEATURES}")
    baseline = baseline if baseline is not None else zeros_like_baseline(x)
    xf, bf = x.flat, baseline.flat

    codes = np.arange(1 << d, dtype=np.int64)
    sizes = np.zeros(1 << d, dtype=np.int64)
    for i in range(d):
        sizes += (codes >> i) & 1

    values = np.empty(1 << d)
    chunk = 1 << 14
    for start in range(0, 1 << d, chunk):
        block = codes[start : start + chunk]
        masks = ((block[:, None] >> np.arange(d)) & 1).astype(bool)
        values[start : start + chunk] = model.predict_matrix(
            _coalition_rows(masks, xf, bf)
        )[:, target_class]

    fact = math.factorial
    weight_by_size = np.array(
        [float(Fraction(fact(s) * fact(d - s - 1), fact(d))) for s in range(d)]
    )

    phi = np.empty(d)
    for i in range(d):
        bit = 1 << i
        without = np.nonzero((codes & bit) == 0)[0]
        gains = values[without | bit] - values[without]
        phi[i] = float(weight_by_size[sizes[without]] @ gains)
    return Attribution(phi.reshape(x.features.shape), target_class, "exact-shapley")


# -- local surrogate ---------------------------------------------------------

def default_kernel_width(d: int, feature_scale: np.ndarray) -> float:
    return 0.75 * math.sqrt(d) * float(np.mean(feature_scale))


def explain_lime(model, x: Instance, samples: int = 1000,
                 kernel_width: float | None = None, ridge: float = 1e-3,
                 target_class: int = 0, rng: np.random.Generator | None = None,
                 feature_scale: np.ndarray | None = None) -> Attribution:
    """Weighted ridge surrogate around one tabular instance.

    Perturbations are x + sigma_data * eps with standard-normal eps from
    the derived stream; each sample is weighted by
    exp(-||x - x_s||^2 / kernel_width^2) and the attribution is the
    coefficient vector of the weighted ridge fit (intercept unpenalized,
    handled by weighted centering).
    """
    if x.is_image:
        raise ShapeMismatch("lime explains tabular instances; flatten images upstream")
    if rng is None:
        raise InvalidConfig("lime requires a random stream")
    samples = int(samples)
    if samples < 2:
        raise InvalidConfig("lime needs at least two perturbation samples")
    d = x.n_features
    scale = np.ones(d) if feature_scale is None else np.asarray(feature_scale, dtype=np.float64)
    width = default_kernel_width(d, scale) if kernel_width is None else float(kernel_width)
    if width <= 0:
        width = 1.0

    eps = rng.standard_normal((samples, d))
    Xs = x.flat + scale * eps
    y = model.predict_matrix(Xs)[:, target_class]
    dist2 = ((Xs - x.flat) ** 2).sum(axis=1)
    sample_weight = np.exp(-dist2 / width**2)

    total = sample_weight.sum()
    if total <= 0:
        raise DegenerateSystem("all surrogate sample weights vanished", float("inf"))
    x_mean = (sample_weight @ Xs) / total
    y_mean = (sample_weight @ y) / total
    coef = _solve_weighted_ridge(Xs - x_mean, y - y_mean, sample_weight, ridge)
    return Attribution(coef, target_class, "lime")


# -- occlusion ----------------------------------------------------------------

def explain_occlusion(model, x: Instance, patch: int = 2,
                      baseline: Instance | None = None,
                      target_class: int = 0) -> Attribution:
    """Patchwise occlusion saliency for one image.

    The image is tiled by non-overlapping patch x patch blocks (stride
    equals patch size, edge blocks clipped); each block is filled with the
    baseline and f_c(x) - f_c(x_occluded) is attributed to every pixel of
    the block.
    """
    if not x.is_image:
        raise ShapeMismatch("occlusion explains image instances")
    height, width = x.features.shape
    patch = int(patch)
    if patch < 1 or patch > min(height, width):
        raise PatchTooLarge(f"patch {patch} outside [1, {min(height, width)}]")
    baseline = baseline if baseline is not None else zeros_like_baseline(x)

    positions = [(r, c) for r in range(0, height, patch) for c in range(0, width, patch)]
    batch = np.empty((len(positions), height * width))
    for k, (r, c) in enumerate(positions):
        occluded = x.features.copy()
        occluded[r : r + patch, c : c + patch] = baseline.features[r : r + patch, c : c + patch]
        batch[k] = occluded.reshape(-1)
    fx = _predict_one(model, x.flat, target_class)
    drops = fx - model.predict_matrix(batch)[:, target_class]

    saliency = np.zeros((height, width))
    for k, (r, c) in enumerate(positions):
        saliency[r : r + patch, c : c + patch] = drops[k]
    return Attribution(saliency, target_class, "occlusion")


# -- random baseline -----------------------------------------------------------

def explain_random(x: Instance, target_class: int, rng: np.random.Generator) -> Attribution:
    """Input-independent noise attribution; the floor any real method must beat."""
    values = rng.standard_normal(x.features.shape)
    return Attribution(values, target_class, "random")


# -- ingestion -------------------------------------------------------------------

def _rescale_nearest(saliency: np.ndarray, target_shape) -> np.ndarray:
    src_h, src_w = saliency.shape
    dst_h, dst_w = target_shape
    for src, dst in ((src_h, dst_h), (src_w, dst_w)):
        if dst % src != 0 and src % dst != 0:
            raise ShapeUnrescalable(
                f"cannot rescale {saliency.shape} to {tuple(target_shape)}: non-integer scale factor"
            )
    rows = np.floor((np.arange(dst_h) + 0.5) * src_h / dst_h).astype(int)
    cols = np.floor((np.arange(dst_w) + 0.5) * src_w / dst_w).astype(int)
    return saliency[np.ix_(rows, cols)]


def ingest_saliency(path, dataset: Dataset, method_name: str = "ingest",
                    target_classes=None) -> list:
    """Load an (N, H, W) NPY saliency stack as one attribution per instance.

    N must equal the dataset size; maps whose H x W differs from the
    instance shape are rescaled by nearest neighbor, which requires an
    integer scale factor per axis.
    """
    maps = load_array_npy(path, ndim=3)
    if maps.shape[0] != len(dataset):
        raise CountMismatch(f"{maps.shape[0]} saliency maps for {len(dataset)} instances")
    attributions = []
    for i, inst in enumerate(dataset.instances):
        if not inst.is_image:
            raise ShapeMismatch("saliency maps apply to image datasets")
        saliency = maps[i]
        if saliency.shape != inst.features.shape:
            saliency = _rescale_nearest(saliency, inst.features.shape)
        if target_classes is not None:
            cls = int(target_classes[i])
        elif dataset.class_labels is not None:
            cls = int(dataset.class_labels[i])
        else:
            cls = 0
        attributions.append(Attribution(saliency, cls, method_name))
    return attributions


# -- configured explainer ---------------------------------------------------------

METHODS = ("lime", "kshap", "exact-shapley", "ig", "occlusion", "ingest", "random")


@dataclass(frozen=True)
class ExplainerConfig:
    """Method selection plus its knobs; unset knobs use per-method defaults."""

    method: str
    samples: int = 1000  # lime / kshap
    kernel_width: float | None = None  # lime; None -> 0.75 sqrt(d) mean(sigma)
    ridge: float | None = None  # None -> 1e-3 for lime, 0.0 for kshap
    steps: int = 256  # ig
    patch: int = 2  # occlusion
    file: str | None = None  # ingest: saliency stack
    perturbed_file: str | None = None  # ingest: (N, P, H, W) companions
    name: str | None = None  # display name override

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfig(f"unknown explainer method {self.method!r}")
        if self.steps < 1:
            raise InvalidConfig("steps must be >= 1")
        if self.patch < 1:
            raise InvalidConfig("patch must be >= 1")
        if self.method == "ingest" and not self.file:
            raise InvalidConfig("ingest needs a saliency file")

    @property
    def display_name(self) -> str:
        return self.name or self.method


class Explainer:
    """A configured, re-runnable explanation engine for one method.

    Stochastic methods derive their stream from (master seed, instance id,
    method tag), so explaining instances in any order or thread yields
    identical attributions.
    """

    def __init__(self, config: ExplainerConfig, rng_spec: RngSpec,
                 feature_scale: np.ndarray | None = None,
                 dataset: Dataset | None = None, baseline_value: float = 0.0):
        self.config = config
        self.rng_spec = rng_spec
        self.feature_scale = feature_scale
        self.baseline_value = float(baseline_value)
        self._ingested: dict | None = None
        self._companions: dict | None = None
        if config.method == "ingest":
            if dataset is None:
                raise InvalidConfig("ingest explainer needs the dataset at construction")
            attributions = ingest_saliency(config.file, dataset, config.display_name)
            self._ingested = {inst.id: att for inst, att in zip(dataset.instances, attributions)}
            if config.perturbed_file:
                self._companions = _load_companions(config.perturbed_file, dataset)

    @property
    def name(self) -> str:
        return self.config.display_name

    @property
    def re_runnable(self) -> bool:
        return self.config.method != "ingest"

    def _stream(self, instance_id: int) -> np.random.Generator:
        return derive_stream(self.rng_spec, instance_id, f"explain:{self.config.method}")

    def _baseline(self, instance: Instance) -> Instance:
        return Instance(np.full_like(instance.features, self.baseline_value), id=instance.id)

    def explain(self, model, instance: Instance, target_class: int = 0) -> Attribution:
        cfg = self.config
        method = cfg.method
        baseline = self._baseline(instance)
        if method == "ig":
            att = explain_ig(model, instance, target_class, baseline, steps=cfg.steps)
        elif method == "kshap":
            att = explain_kshap(
                model, instance, baseline, target_class=target_class, samples=cfg.samples,
                ridge=cfg.ridge if cfg.ridge is not None else 0.0,
                rng=self._stream(instance.id),
            )
        elif method == "exact-shapley":
            att = exact_shapley(model, instance, baseline, target_class=target_class)
        elif method == "lime":
            att = explain_lime(
                model, instance, samples=cfg.samples, kernel_width=cfg.kernel_width,
                ridge=cfg.ridge if cfg.ridge is not None else 1e-3,
                target_class=target_class, rng=self._stream(instance.id),
                feature_scale=self.feature_scale,
            )
        elif method == "occlusion":
            att = explain_occlusion(model, instance, patch=cfg.patch, baseline=baseline,
                                    target_class=target_class)
        elif method == "random":
            att = explain_random(instance, target_class, self._stream(instance.id))
        else:  # ingest
            assert self._ingested is not None
            if instance.id not in self._ingested:
                raise ExplainerNotReRunnable(
                    f"{self.name}: no ingested map for instance {instance.id}; "
                    "ingested explainers cannot be re-run on new inputs"
                )
            att = self._ingested[instance.id]
        if cfg.name and att.method_name != cfg.name:
            att = replace(att, method_name=cfg.name)
        return att

    def perturbed_attributions(self, instance_id: int) -> list | None:
        """Companion attributions for perturbed inputs (ingest only)."""
        if self._companions is None:
            return None
        return self._companions.get(instance_id)


def _load_companions(path, dataset: Dataset) -> dict:
    arr = load_array_npy(path, ndim=4)  # (N, P, H, W)
    if arr.shape[0] != len(dataset):
        raise CountMismatch(f"{arr.shape[0]} companion stacks for {len(dataset)} instances")
    companions: dict = {}
    for inst, stack in zip(dataset.instances, arr):
        maps = []
        for saliency in stack:
            if saliency.shape != inst.features.shape:
                saliency = _rescale_nearest(saliency, inst.features.shape)
            maps.append(Attribution(saliency, 0, "ingest-perturbed"))
        companions[inst.id] = maps
    return companions
