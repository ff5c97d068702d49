"""Command-line entry: extract feature tensors from an image directory."""

from __future__ import annotations

import argparse
import sys

from .extract import LAYER_INDEX, ExtractionError, ExtractorConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convextract",
        description="Write VGG16 activation tensors for a directory of images",
    )
    parser.add_argument("--images", required=True, help="directory of image files")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--layer", default="conv5-3", choices=sorted(LAYER_INDEX))
    parser.add_argument("--max-dim", type=int, default=1024, dest="max_dim")
    parser.add_argument(
        "--weights", default="auto",
        help="'auto' (download pretrained), 'none' (seeded random init), or a "
             "state-dict path",
    )
    parser.add_argument("--seed", type=int, default=0,
                        help="weight init seed when --weights none")
    parser.add_argument("--sift", action="store_true",
                        help="also write SIFT keypoint files (needs opencv)")
    parser.add_argument("--crops", help="JSON {filename: [x1, y1, x2, y2]} of query boxes")
    parser.add_argument("--role", default="database", choices=["database", "heldout"],
                        help="role for uncropped images (heldout corpora train pipelines)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractorConfig(
        layer=args.layer, max_dim=args.max_dim, weights=args.weights,
        seed=args.seed, sift=args.sift, role=args.role,
    )
    try:
        manifest = extract(args.images, args.out, config, crops_path=args.crops)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
