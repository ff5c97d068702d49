"""Seeded synthetic retrieval datasets with planted class structure and burstiness.

Each image mixes three kinds of grid locations:

* foreground: noisy copies of class-specific sparse pattern vectors (these
  locations are also emitted as the image's keypoints),
* burst: exact copies of one of the image's foreground vectors, repeated at
  ``burst_rate`` of the grid (the intra-image burstiness nuisance),
* background: a low-magnitude ambient texture shared by the whole dataset,
  identical at every background location of an image (the smooth redundant
  crowd that masks discard and that inflates cross-image similarities).

All values are non-negative, mimicking post-activation feature maps, with
background magnitudes below foreground so SUM/MAX masks preferentially
select foreground.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .ingest import (
    DatasetManifest,
    FeatureTensor,
    ManifestImage,
    QuerySpec,
    write_manifest,
    write_tensor,
)

FOREGROUND_FRACTION = 0.15
PATTERN_DENSITY = 0.10  # fraction of channels a class pattern activates
PATTERN_LOW, PATTERN_HIGH = 0.5, 1.5
AMBIENT_SCALE = 0.25  # ambient magnitude relative to background_noise_scale
PIXELS_PER_CELL = 16  # virtual image resolution per grid cell for keypoint files


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 4
    images_per_class: int = 10
    grid_w: int = 12
    grid_h: int = 12
    channels: int = 64
    foreground_patterns_per_class: int = 8
    background_noise_scale: float = 0.1
    burst_rate: float = 0.3
    seed: int = 76001

    def __post_init__(self) -> None:
        counts = (
            self.classes,
            self.images_per_class,
            self.grid_w,
            self.grid_h,
            self.channels,
            self.foreground_patterns_per_class,
        )
        if min(counts) < 1:
            raise ParameterError("all synthetic dataset counts must be >= 1")
        if not 0.0 <= self.burst_rate <= 1.0:
            raise ParameterError("burst_rate must lie in [0, 1]")
        if self.background_noise_scale < 0:
            raise ParameterError("background_noise_scale must be >= 0")


def _keypoint_lines(flat_locations: np.ndarray, grid_w: int, grid_h: int) -> str:
    width_px = grid_w * PIXELS_PER_CELL
    height_px = grid_h * PIXELS_PER_CELL
    lines = [f"{width_px} {height_px}"]
    for flat in sorted(int(i) for i in flat_locations):
        gx = flat % grid_w + 1
        gy = flat // grid_w + 1
        # Cell centers project back to exactly (gx, gy) under round-half-up.
        lines.append(f"{gx * PIXELS_PER_CELL - 8} {gy * PIXELS_PER_CELL - 8}")
    return "\n".join(lines) + "\n"


def generate_dataset(
    config: SynthConfig,
    out_dir: str | Path,
    role: str | None = None,
    id_prefix: str = "",
) -> DatasetManifest:
    """Write tensors, keypoints, and a manifest for a seeded synthetic dataset.

    By default the first image of every class is its query and the rest are
    database images. ``role="heldout"`` instead marks every image heldout
    and emits no queries (for training a pipeline on a disjoint corpus);
    give such a corpus an ``id_prefix`` so its ids stay disjoint from the
    evaluation corpus. Byte-identical output for identical arguments.
    """
    out_dir = Path(out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    (out_dir / "keypoints").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    n = config.grid_w * config.grid_h
    n_fg = max(1, round(FOREGROUND_FRACTION * n))
    n_burst = min(round(config.burst_rate * n), n - n_fg)

    # Class patterns are sparse: each activates a small channel subset, so
    # different patterns are near-orthogonal, the way distinct visual
    # structures excite distinct feature maps.
    shape = (config.classes, config.foreground_patterns_per_class, config.channels)
    support = rng.random(shape) < PATTERN_DENSITY
    support[..., 0] |= ~support.any(axis=-1)  # never emit an all-zero pattern
    patterns = rng.uniform(PATTERN_LOW, PATTERN_HIGH, size=shape) * support
    # One ambient texture direction per dataset: the common background every
    # image shares (at its own magnitude), the co-occurrence nuisance that
    # inflates similarities between unrelated images.
    ambient_direction = rng.uniform(0.0, 1.0, size=config.channels)

    images: list[ManifestImage] = []
    members: dict[int, list[str]] = {c: [] for c in range(config.classes)}
    for c in range(config.classes):
        for i in range(config.images_per_class):
            image_id = f"{id_prefix}c{c}_i{i:02d}"
            order = rng.permutation(n)
            fg_locations = order[:n_fg]
            burst_locations = order[n_fg : n_fg + n_burst]
            # Background locations all carry the dataset's ambient direction at
            # a per-image magnitude: perfectly smooth, redundant texture, the
            # kind of feature crowd the masks are meant to discard.
            magnitude = rng.uniform(0.5, 1.0) * AMBIENT_SCALE * config.background_noise_scale
            grid = np.tile(magnitude * ambient_direction, (n, 1))
            choices = rng.integers(
                0, config.foreground_patterns_per_class, size=n_fg
            )
            noise = 1.0 + config.background_noise_scale * rng.normal(
                size=(n_fg, config.channels)
            )
            grid[fg_locations] = np.clip(patterns[c][choices] * noise, 0.0, None)
            if n_burst:
                burst_source = int(rng.integers(0, n_fg))
                grid[burst_locations] = grid[fg_locations[burst_source]]

            tensor = FeatureTensor(
                grid.reshape(config.grid_h, config.grid_w, config.channels).astype(
                    np.float32
                )
            )
            tensor_path = out_dir / "tensors" / f"{image_id}.scf"
            write_tensor(tensor, tensor_path)
            keypoints_path = out_dir / "keypoints" / f"{image_id}.kpt"
            keypoints_path.write_text(
                _keypoint_lines(fg_locations, config.grid_w, config.grid_h),
                encoding="utf-8",
            )
            if role is not None:
                image_role = role
            else:
                image_role = "query" if i == 0 else "database"
            images.append(
                ManifestImage(
                    id=image_id,
                    tensor_path=tensor_path,
                    keypoints_path=keypoints_path,
                    role=image_role,
                )
            )
            members[c].append(image_id)

    queries: list[QuerySpec] = []
    if role is None and config.images_per_class >= 2:
        queries = [
            QuerySpec(query_id=members[c][0], positive_ids=tuple(members[c][1:]))
            for c in range(config.classes)
        ]
    manifest = DatasetManifest(images=tuple(images), queries=tuple(queries))
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest
