"""Command-line interface.

Exit codes: 0 ok, 1 config error, 2 data error, 3 oracle error, 4 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .core import RngSpec, TABULAR
from .errors import InvalidConfig, UxevalError
from .explain import Explainer
from .external import ExternalOracle
from .io import (
    load_dataset,
    save_array_npy,
    save_attributions,
    save_image_npy,
    save_tabular_csv,
)
from .oracle import generate_synthetic
from .report import (
    RunConfig,
    _load_run_dataset,
    _target_classes,
    build_model,
    compare_table,
    emit,
    run_benchmark,
)
from .score import BUILTIN_PROFILES, detect_drift, load_profile


def _cmd_evaluate(args) -> int:
    config = RunConfig.from_file(args.config, seed_override=args.seed)
    report = run_benchmark(config)
    if args.out:
        out_dir = args.out
    elif config.output_dir:
        out_dir = config.resolve(config.output_dir)
    else:
        raise InvalidConfig("no output directory: pass --out or set output_dir in the config")
    formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
    formats = tuple("markdown" if f == "md" else f for f in formats)
    emit(report, out_dir, formats)
    print(f"run {report.run_id}")
    print(compare_table(report))
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_explain(args) -> int:
    config = RunConfig.from_file(args.config, seed_override=args.seed)
    matches = [e for e in config.explainers if e.display_name == args.method]
    if not matches:
        raise InvalidConfig(f"config has no explainer named {args.method!r}")
    dataset = _load_run_dataset(config)
    model = build_model(config, dataset)
    try:
        targets = _target_classes(model, dataset)
        explainer_config = matches[0]
        if explainer_config.method == "ingest":
            explainer_config = dataclasses.replace(
                explainer_config,
                file=str(config.resolve(explainer_config.file)),
                perturbed_file=(
                    str(config.resolve(explainer_config.perturbed_file))
                    if explainer_config.perturbed_file else None
                ),
            )
        explainer = Explainer(
            explainer_config, RngSpec(config.seed),
            feature_scale=dataset.feature_std(), dataset=dataset,
            baseline_value=config.baseline_value,
        )
        attributions = [
            explainer.explain(model, inst, targets[i])
            for i, inst in enumerate(dataset.instances)
        ]
    finally:
        if isinstance(model, ExternalOracle):
            model.close()
    save_attributions(
        attributions, args.out,
        baseline_description=f"constant {config.baseline_value}",
    )
    print(f"wrote {len(attributions)} attributions to {args.out}")
    return 0


def _cmd_profiles(args) -> int:
    if args.action == "list":
        for name in BUILTIN_PROFILES:
            print(name)
        return 0
    if not args.name:
        raise InvalidConfig("profiles show needs a profile name")
    profile = load_profile(args.name)
    doc = {
        "name": profile.name,
        "weights": {k: round(v * 100.0, 10) for k, v in profile.as_dict().items()},
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_drift(args) -> int:
    reference = load_dataset(args.reference, TABULAR)
    current = load_dataset(args.current, TABULAR)
    drift = detect_drift(reference, current, bins=args.bins)
    print(json.dumps(drift.as_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_synth(args) -> int:
    data = generate_synthetic(args.kind, args.n, args.seed)
    out = Path(args.out)
    meta: dict = {"kind": args.kind, "n": args.n, "seed": args.seed}
    if data.dataset.kind == TABULAR:
        save_tabular_csv(data.dataset, out)
        meta["true_weights"] = [float(w) for w in data.true_weights]
    else:
        save_image_npy(data.dataset, out)
        save_array_npy(data.masks.astype(float), out.with_suffix(".mask.npy"))
        meta["mask_file"] = str(out.with_suffix(".mask.npy"))
    out.with_suffix(out.suffix + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(data.dataset)} instances to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uxeval",
        description="Benchmark explanation methods against the five-criterion rubric.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    evaluate = sub.add_parser("evaluate", help="run the full benchmark and emit reports")
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--seed", type=int, default=None)
    evaluate.add_argument("--out", default=None)
    evaluate.add_argument("--format", default="json,markdown,csv")
    evaluate.set_defaults(func=_cmd_evaluate)

    explain = sub.add_parser("explain", help="export one method's attributions as NPY")
    explain.add_argument("--config", required=True)
    explain.add_argument("--method", required=True)
    explain.add_argument("--out", required=True)
    explain.add_argument("--seed", type=int, default=None)
    explain.set_defaults(func=_cmd_explain)

    profiles = sub.add_parser("profiles", help="list or show domain weight profiles")
    profiles.add_argument("action", choices=("list", "show"))
    profiles.add_argument("name", nargs="?")
    profiles.set_defaults(func=_cmd_profiles)

    drift = sub.add_parser("drift", help="population stability index between two CSVs")
    drift.add_argument("--reference", required=True)
    drift.add_argument("--current", required=True)
    drift.add_argument("--bins", type=int, default=10)
    drift.set_defaults(func=_cmd_drift)

    synth = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    synth.add_argument("--kind", required=True,
                       choices=("tabular-linear", "tabular-groups", "image-shapes"))
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UxevalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
