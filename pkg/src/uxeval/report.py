"""Benchmark orchestration and report emission.

``run_benchmark`` drives the whole pipeline for every configured
explanation method: load data, build or train the model, explain each
instance, compute the five criteria, detect drift against an optional
reference dataset, adapt the weight profile, and score. Evaluation is
all-or-nothing per method; a failing method lands in the run warnings and
the others proceed. Reports are deterministic: identical config and seed
give byte-identical ``report.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    CRITERIA,
    TABULAR,
    Dataset,
    Instance,
    RngSpec,
    validate_dataset,
)
from .errors import InvalidConfig, IoError, UxevalError
from .explain import Explainer, ExplainerConfig
from .external import ExternalOracle
from .io import load_dataset
from .metrics import MetricConfig, aggregate, evaluate_instance
from .oracle import LinearTemplate, MlpTemplate, load_model, predict, train
from .score import (
    BUILTIN_PROFILES,
    DomainProfile,
    DriftReport,
    ScoreBreakdown,
    adapt_weights,
    detect_drift,
    load_profile,
    load_rules,
)

_FORMATS = ("json", "markdown", "csv")


@dataclass(frozen=True)
class RunConfig:
    """One benchmark invocation, as parsed from its JSON config document."""

    dataset_path: tuple
    dataset_kind: str
    model: dict
    explainers: tuple
    metrics: MetricConfig
    profile: str
    seed: int
    rules: str | None = None
    reference: str | None = None
    output_dir: str | None = None
    baseline_value: float = 0.0
    audit_scores: dict | None = None
    base_dir: Path = field(default=Path("."), compare=False)
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        try:
            dataset = doc["dataset"]
            paths = dataset["path"]
            if isinstance(paths, str):
                paths = [paths]
            kind = dataset.get("kind", TABULAR)
            explainers = tuple(
                ExplainerConfig(**entry) for entry in doc["explainers"]
            )
            metrics = MetricConfig(**doc.get("metrics", {}))
            seed = int(doc["seed"])
        except (KeyError, TypeError) as exc:
            raise InvalidConfig(f"config: {exc}") from None
        if not explainers:
            raise InvalidConfig("config: need at least one explainer")
        return cls(
            dataset_path=tuple(paths),
            dataset_kind=kind,
            model=dict(doc.get("model", {"kind": "linear"})),
            explainers=explainers,
            metrics=metrics,
            profile=str(doc.get("profile", "healthcare")),
            seed=seed,
            rules=doc.get("rules"),
            reference=doc.get("reference"),
            output_dir=doc.get("output_dir"),
            baseline_value=float(doc.get("baseline", 0.0)),
            audit_scores=doc.get("audit_scores"),
            base_dir=Path(base_dir),
            raw=dict(doc),
        )

    @classmethod
    def from_file(cls, path, seed_override: int | None = None) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
        if seed_override is not None:
            doc["seed"] = int(seed_override)
        return cls.from_dict(doc, base_dir=path.parent)

    def resolve(self, relative) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.base_dir / path

    def canonical(self) -> dict:
        doc = dict(self.raw)
        doc["seed"] = self.seed
        return doc

    def run_id(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class MethodResult:
    name: str
    breakdown: ScoreBreakdown
    per_instance: tuple
    groups: tuple | None
    global_importance: np.ndarray
    warnings: tuple


@dataclass(frozen=True)
class BenchmarkReport:
    run_id: str
    seed: int
    profile: DomainProfile
    effective_profile: DomainProfile
    drift: DriftReport | None
    adaptation_log: tuple
    methods: tuple  # MethodResult, sorted by descending S, ties by name
    warnings: tuple
    config: dict

    @property
    def ranking(self) -> tuple:
        return tuple(m.name for m in self.methods)


def _worker_count() -> int:
    raw = os.environ.get("UXEVAL_THREADS", "").strip()
    if not raw:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidConfig(f"UXEVAL_THREADS must be an integer, got {raw!r}") from None
    if cap == 0:
        return min(os.cpu_count() or 1, 4)
    return max(1, cap)


def _load_run_dataset(config: RunConfig) -> Dataset:
    parts = [load_dataset(config.resolve(p), config.dataset_kind) for p in config.dataset_path]
    if len(parts) == 1:
        return parts[0]
    instances = []
    groups: list | None = [] if all(p.group_labels is not None for p in parts) else None
    labels: list | None = [] if all(p.class_labels is not None for p in parts) else None
    next_id = 0
    for part in parts:
        for i, inst in enumerate(part.instances):
            instances.append(Instance(inst.features, id=next_id))
            next_id += 1
            if groups is not None:
                groups.append(part.group_labels[i])
            if labels is not None:
                labels.append(part.class_labels[i])
    merged = Dataset(
        instances=tuple(instances),
        kind=parts[0].kind,
        group_labels=tuple(groups) if groups is not None else None,
        class_labels=tuple(labels) if labels is not None else None,
        feature_names=parts[0].feature_names,
    )
    return validate_dataset(merged)


def build_model(config: RunConfig, dataset: Dataset):
    """Materialize the model named by the config; external oracles need closing."""
    spec = dict(config.model)
    kind = spec.get("kind", "linear")
    if kind in ("linear", "mlp"):
        params = spec.get("params")
        if not params:
            raise InvalidConfig(f"model kind {kind!r} needs a params file")
        return load_model(config.resolve(params))
    if kind == "train":
        template_name = spec.get("template", "linear")
        classes = int(spec.get("classes") or (max(dataset.class_labels or [1]) + 1))
        if template_name == "linear":
            template = LinearTemplate(n_classes=classes)
        elif template_name == "mlp":
            template = MlpTemplate(hidden=int(spec.get("hidden", 8)), n_classes=classes)
        else:
            raise InvalidConfig(f"unknown training template {template_name!r}")
        return train(
            template,
            dataset,
            epochs=int(spec.get("epochs", 200)),
            learning_rate=float(spec.get("learning_rate", 0.5)),
            seed=config.seed,
        )
    if kind == "external":
        command = spec.get("command")
        if not command:
            raise InvalidConfig("external model needs a command")
        return ExternalOracle(
            command,
            timeout=float(spec.get("timeout", 10.0)),
            n_classes=spec.get("classes"),
        )
    raise InvalidConfig(f"unknown model kind {kind!r}")


def _target_classes(model, dataset: Dataset) -> list:
    """Per-instance explanation target: the label if present, else the argmax."""
    n_classes = getattr(model, "n_classes", None)
    if dataset.class_labels is not None:
        targets = [int(c) for c in dataset.class_labels]
        if n_classes is not None:
            targets = [min(c, n_classes - 1) for c in targets]
        return targets
    probs = predict(model, dataset.instances)
    return [int(c) for c in probs.argmax(axis=1)]


def _evaluate_method(explainer: Explainer, model, dataset: Dataset,
                     config: RunConfig, targets, baseline_for, sigma: float,
                     rng_spec: RngSpec, workers: int):
    """Explain and measure every instance; returns rows, attributions, warnings."""

    def one(index: int):
        inst = dataset.instances[index]
        sink: list = []
        attribution = explainer.explain(model, inst, targets[index])
        row = evaluate_instance(
            model, explainer, inst, config.metrics, rng_spec,
            baseline=baseline_for(inst), sigma=sigma,
            target_class=targets[index], attribution=attribution, warnings=sink,
        )
        return index, row, attribution, sink

    indices = range(len(dataset))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, indices))
    else:
        outcomes = [one(i) for i in indices]
    outcomes.sort(key=lambda item: item[0])
    rows = [item[1] for item in outcomes]
    attributions = [item[2] for item in outcomes]
    warnings: list = []
    for item in outcomes:
        warnings.extend(item[3])
    return rows, attributions, warnings


def run_benchmark(config: RunConfig) -> BenchmarkReport:
    rng_spec = RngSpec(config.seed)
    dataset = _load_run_dataset(config)
    profile = load_profile(
        config.profile if config.profile in BUILTIN_PROFILES
        else config.resolve(config.profile)
    )
    run_warnings: list = []
    model = build_model(config, dataset)
    try:
        targets = _target_classes(model, dataset)
        feature_scale = dataset.feature_std()
        sigma = config.metrics.resolve_sigma(feature_scale)

        def baseline_for(inst: Instance) -> Instance:
            return Instance(np.full_like(inst.features, config.baseline_value), id=inst.id)

        drift = None
        adaptation_log: list = []
        effective_profile = profile
        if config.reference is not None:
            reference = load_dataset(config.resolve(config.reference), config.dataset_kind)
            drift = detect_drift(reference, dataset, model=model)
            rules = load_rules(config.resolve(config.rules)) if config.rules else []
            effective_profile = adapt_weights(profile, rules, drift, adaptation_log)
            if not adaptation_log:
                adaptation_log.append("no adaptation: no rule fired")

        workers = _worker_count()
        methods: list = []
        for explainer_config in config.explainers:
            name = explainer_config.display_name
            try:
                if explainer_config.method == "ingest":
                    resolved = dataclasses.replace(
                        explainer_config,
                        file=str(config.resolve(explainer_config.file)),
                        perturbed_file=(
                            str(config.resolve(explainer_config.perturbed_file))
                            if explainer_config.perturbed_file else None
                        ),
                    )
                else:
                    resolved = explainer_config
                explainer = Explainer(
                    resolved, rng_spec, feature_scale=feature_scale, dataset=dataset,
                    baseline_value=config.baseline_value,
                )
                rows, attributions, method_warnings = _evaluate_method(
                    explainer, model, dataset, config, targets, baseline_for,
                    sigma, rng_spec, workers,
                )
                raw = aggregate(rows, dataset.group_labels, method_warnings)
                audit = (config.audit_scores or {}).get(name)
                if audit is not None:
                    breakdown = ScoreBreakdown.from_audit_scores(raw, audit, effective_profile)
                    method_warnings.append("audit mode: externally supplied rubric scores")
                else:
                    breakdown = ScoreBreakdown.from_metrics(raw, effective_profile)
                global_importance = np.mean([np.abs(a.flat) for a in attributions], axis=0)
                methods.append(
                    MethodResult(
                        name=name,
                        breakdown=breakdown,
                        per_instance=tuple(rows),
                        groups=dataset.group_labels,
                        global_importance=global_importance,
                        warnings=tuple(method_warnings),
                    )
                )
            except UxevalError as exc:
                run_warnings.append(f"method {name} failed: {exc}")
        methods.sort(key=lambda m: (-m.breakdown.total, m.name))
    finally:
        if isinstance(model, ExternalOracle):
            model.close()

    return BenchmarkReport(
        run_id=config.run_id(),
        seed=config.seed,
        profile=profile,
        effective_profile=effective_profile,
        drift=drift,
        adaptation_log=tuple(adaptation_log),
        methods=tuple(methods),
        warnings=tuple(run_warnings),
        config=config.canonical(),
    )


# -- serialization -------------------------------------------------------

def _method_filename(name: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "-", name)
    return f"per_instance_{safe}.csv"


def _five(values) -> dict:
    return {name: float(v) for name, v in zip(CRITERIA, values)}


def report_to_dict(report: BenchmarkReport) -> dict:
    methods = []
    for method in report.methods:
        breakdown = method.breakdown
        methods.append(
            {
                "name": method.name,
                "raw": breakdown.raw.as_dict(),
                "scores": _five(breakdown.scores),
                "bands": {name: int(b) for name, b in zip(CRITERIA, breakdown.bands)},
                "weights": _five(breakdown.weights),
                "total": float(breakdown.total),
                "per_instance_csv": _method_filename(method.name),
                "global_importance": [float(v) for v in method.global_importance],
                "warnings": list(method.warnings),
            }
        )
    return {
        "run_id": report.run_id,
        "seed": report.seed,
        "profile": {"name": report.profile.name, "weights": report.profile.as_dict()},
        "effective_profile": {
            "name": report.effective_profile.name,
            "weights": report.effective_profile.as_dict(),
        },
        "drift": report.drift.as_dict() if report.drift is not None else None,
        "adaptation": list(report.adaptation_log),
        "methods": methods,
        "ranking": list(report.ranking),
        "warnings": list(report.warnings),
        "config": report.config,
    }


def compare_table(report: BenchmarkReport) -> str:
    """Markdown comparison table: one row per method, criteria then total."""
    header = "| Method | " + " | ".join(c.capitalize() for c in CRITERIA) + " | S |"
    rule = "|" + "---|" * (len(CRITERIA) + 2)
    lines = [header, rule]
    for method in report.methods:
        label = method.name
        if method.warnings:
            label = f"{label} ⚠ {len(method.warnings)}"
        cells = [
            f"{s:.2f} ({b})"
            for s, b in zip(method.breakdown.scores, method.breakdown.bands)
        ]
        lines.append(f"| {label} | " + " | ".join(cells) + f" | {method.breakdown.total:.2f} |")
    return "\n".join(lines)


def report_to_markdown(report: BenchmarkReport) -> str:
    parts = [
        "# Explanation method benchmark",
        "",
        f"- run id: `{report.run_id}`",
        f"- seed: {report.seed}",
        f"- profile: {report.profile.name}",
    ]
    if report.effective_profile is not report.profile:
        weights = ", ".join(f"{k}={v:.4f}" for k, v in report.effective_profile.as_dict().items())
        parts.append(f"- effective profile after adaptation: {weights}")
    if report.drift is not None:
        psi = ", ".join(f"{v:.3f}" for v in report.drift.feature_psi)
        parts.append(f"- drift PSI per feature: {psi} (flagged: {report.drift.any_drift})")
    for note in report.adaptation_log:
        parts.append(f"- adaptation: {note}")
    parts += ["", "## Method comparison", "", compare_table(report), ""]
    if report.warnings or any(m.warnings for m in report.methods):
        parts.append("## Warnings")
        parts.append("")
        for warning in report.warnings:
            parts.append(f"- {warning}")
        for method in report.methods:
            for warning in method.warnings:
                parts.append(f"- [{method.name}] {warning}")
        parts.append("")
    return "\n".join(parts)


def _write_bytes(path: Path, payload: bytes) -> None:
    try:
        with path.open("wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from None


def emit(report: BenchmarkReport, out_dir, formats=_FORMATS) -> list:
    """Write report files; returns the paths written.

    ``json`` produces the canonical ``report.json`` (sorted keys),
    ``markdown`` the human-readable ``report.md``, and ``csv`` one
    per-instance file per method. Re-emitting without re-running produces
    identical bytes.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"{out_dir}: {exc}") from None
    unknown = set(formats) - set(_FORMATS)
    if unknown:
        raise InvalidConfig(f"unknown report formats: {sorted(unknown)}")

    written = []
    if "json" in formats:
        path = out_dir / "report.json"
        blob = json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"
        _write_bytes(path, blob.encode("utf-8"))
        written.append(path)
    if "markdown" in formats:
        path = out_dir / "report.md"
        _write_bytes(path, report_to_markdown(report).encode("utf-8"))
        written.append(path)
    if "csv" in formats:
        for method in report.methods:
            path = out_dir / _method_filename(method.name)
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(["id", "fidelity", "interpretability", "robustness",
                             "completeness", "group"])
            for row in method.per_instance:
                group = ""
                if method.groups is not None:
                    group = method.groups[row.instance_id]
                writer.writerow([
                    row.instance_id, repr(row.fidelity), repr(row.interpretability),
                    repr(row.robustness), repr(row.completeness), group,
                ])
            _write_bytes(path, buffer.getvalue().encode("utf-8"))
            written.append(path)
    return written


def schema_path() -> Path:
    """Location of the shipped JSON schema that every report validates against."""
    return Path(__file__).parent / "data" / "report_schema.json"
