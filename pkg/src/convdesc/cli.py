"""Command-line interface.

Subcommands: train, index, query, evaluate, analyze, bench, synth.
Exit codes: 0 success, 2 validation/parameter error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .analysis import covariance_histogram, retention_stats
from .errors import ConvdescError
from .ingest import read_keypoints, read_manifest, read_tensor
from .masking import MaskKind, apply_mask, compute_mask
from .retrieval import rank
from .synth import SynthConfig, generate_dataset


def _load_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    if args.preset:
        if args.preset not in pipeline.PRESETS:
            raise ConvdescError(
                f"unknown preset {args.preset!r}; available: {', '.join(sorted(pipeline.PRESETS))}"
            )
        config = pipeline.PRESETS[args.preset]
        doc = config.to_dict()
    elif args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = pipeline.PipelineConfig().to_dict()
    overrides = {
        "mask_kind": args.mask,
        "pool_mode": args.pool,
        "pn_alpha": args.pn_alpha,
        "truncate_head": args.truncate_head,
        "democratic_iters": args.democratic_iters,
        "seed": args.seed,
    }
    if args.whiten is not None:
        overrides["whiten"] = args.whiten == "on"
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return pipeline.PipelineConfig.from_dict(doc)


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    manifest = read_manifest(args.manifest)
    model = pipeline.train_pipeline(config, manifest)
    pipeline.save_model(model, args.out)
    print(f"trained {config.embedding_method.value} model: D={config.target_dim} -> {args.out}")
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    model = pipeline.load_model(args.model)
    manifest = read_manifest(args.manifest)
    index = pipeline.build_index(model, manifest)
    pipeline.save_index(index, args.out)
    print(f"indexed {len(index)} images at D={index.dim} -> {args.out}")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    model = pipeline.load_model(args.model)
    index = pipeline.load_index(args.index)
    tensor = read_tensor(args.tensor)
    keypoints = read_keypoints(args.keypoints) if args.keypoints else None
    descriptor = pipeline.describe_image(model, tensor, keypoints)
    ranking = rank(index, descriptor)
    if args.top:
        ranking = ranking[: args.top]
    for image_id, sim in ranking:
        print(f"{image_id}\t{sim:.6f}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    model = pipeline.load_model(args.model)
    manifest = read_manifest(args.manifest)
    index = pipeline.load_index(args.index) if args.index else None
    results, value = pipeline.evaluate_manifest(model, manifest, index)
    for result in results:
        print(f"{result.query_id}\t{result.ap:.4f}")
    print(f"mAP\t{value:.4f}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    kind = MaskKind(args.mask)
    images = [im for im in manifest.images if im.role != "heldout"] or list(manifest.images)
    tensors = [read_tensor(im.tensor_path) for im in images]
    keypoint_sets = None
    if kind is MaskKind.SIFT:
        keypoint_sets = [
            read_keypoints(im.keypoints_path) if im.keypoints_path else None for im in images
        ]
    retention = retention_stats(tensors, kind, keypoint_sets)
    mass = None
    central = []
    for i, tensor in enumerate(tensors):
        keypoints = keypoint_sets[i] if keypoint_sets else None
        features = apply_mask(tensor, compute_mask(tensor, kind, keypoints))
        if len(features) < 2:
            continue
        hist = covariance_histogram(features, args.bins)
        mass = hist.mass if mass is None else mass + hist.mass
        central.append(hist.central_fraction)
    if mass is None:
        raise ConvdescError("no image yielded >= 2 masked features to histogram")
    mass = mass / mass.sum()
    centers = [(-1.0 + (2.0 * i + 1.0) / args.bins) for i in range(args.bins)]
    for center, value in zip(centers, mass):
        print(f"{center:.6f}\t{value:.6f}")
    print(
        f"# mask={kind.value} images={len(tensors)} "
        f"retention_mean={retention.mean:.4f} "
        f"central_fraction_mean={sum(central) / len(central):.4f}"
    )
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    model = pipeline.load_model(args.model)
    manifest = read_manifest(args.manifest)
    timings = pipeline.bench(manifest, model, args.repetitions)
    for stage in pipeline.BENCH_STAGES:
        print(f"{stage}\t{timings.mean[stage] * 1e3:.3f}ms\t{timings.median[stage] * 1e3:.3f}ms")
    print(
        f"total\t{timings.mean_total * 1e3:.3f}ms\t"
        f"(images={timings.images}, repetitions={timings.repetitions})"
    )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        grid_w, grid_h = (int(p) for p in args.grid.lower().split("x"))
    except ValueError as exc:
        raise ConvdescError(f"--grid must look like 12x12, got {args.grid!r}") from exc
    config = SynthConfig(
        classes=args.classes,
        images_per_class=args.per_class,
        grid_w=grid_w,
        grid_h=grid_h,
        channels=args.channels,
        foreground_patterns_per_class=args.patterns,
        background_noise_scale=args.noise,
        burst_rate=args.burst_rate,
        seed=args.seed,
    )
    manifest = generate_dataset(config, args.out, role=args.role, id_prefix=args.id_prefix)
    print(f"wrote {len(manifest.images)} images, {len(manifest.queries)} queries -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convdesc",
        description="Global image descriptors from convolutional feature tensors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="learn PCA, codebook, and rotation from heldout images")
    train.add_argument("--config", help="pipeline config JSON")
    train.add_argument("--preset", help=f"one of: {', '.join(sorted(pipeline.PRESETS))}")
    train.add_argument("--manifest", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--mask", choices=[m.value for m in MaskKind])
    train.add_argument("--pool", choices=["sum", "avg", "max", "democratic"])
    train.add_argument("--pn-alpha", type=float, dest="pn_alpha")
    train.add_argument("--whiten", choices=["on", "off"])
    train.add_argument("--truncate-head", type=int, dest="truncate_head")
    train.add_argument("--democratic-iters", type=int, dest="democratic_iters")
    train.add_argument("--seed", type=int)
    train.set_defaults(func=_cmd_train)

    index = sub.add_parser("index", help="describe database images into an index file")
    index.add_argument("--model", required=True)
    index.add_argument("--manifest", required=True)
    index.add_argument("--out", required=True)
    index.set_defaults(func=_cmd_index)

    query = sub.add_parser("query", help="rank an index against one query tensor")
    query.add_argument("--model", required=True)
    query.add_argument("--index", required=True)
    query.add_argument("--tensor", required=True)
    query.add_argument("--keypoints")
    query.add_argument("--top", type=int, default=0)
    query.set_defaults(func=_cmd_query)

    evaluate = sub.add_parser("evaluate", help="mAP of a model over a manifest's queries")
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--manifest", required=True)
    evaluate.add_argument("--index", help="reuse a prebuilt index file")
    evaluate.set_defaults(func=_cmd_evaluate)

    analyze = sub.add_parser("analyze", help="mask retention and covariance histograms")
    analyze.add_argument("--manifest", required=True)
    analyze.add_argument("--mask", default="none", choices=[m.value for m in MaskKind])
    analyze.add_argument("--bins", type=int, default=41)
    analyze.set_defaults(func=_cmd_analyze)

    bench_cmd = sub.add_parser("bench", help="per-stage descriptor timings")
    bench_cmd.add_argument("--model", required=True)
    bench_cmd.add_argument("--manifest", required=True)
    bench_cmd.add_argument("--repetitions", type=int, default=3)
    bench_cmd.set_defaults(func=_cmd_bench)

    synth = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    synth.add_argument("--classes", type=int, default=4)
    synth.add_argument("--per-class", type=int, default=10, dest="per_class")
    synth.add_argument("--grid", default="12x12")
    synth.add_argument("--channels", type=int, default=64)
    synth.add_argument("--patterns", type=int, default=8)
    synth.add_argument("--noise", type=float, default=0.1)
    synth.add_argument("--burst-rate", type=float, default=0.3, dest="burst_rate")
    synth.add_argument("--seed", type=int, default=76001)
    synth.add_argument("--out", required=True)
    synth.add_argument("--role", choices=["heldout", "database", "query"])
    synth.add_argument("--id-prefix", default="", dest="id_prefix")
    synth.set_defaults(func=_cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvdescError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
