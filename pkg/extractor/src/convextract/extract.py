"""Forward images through a VGG16 and write their activation grids.

The named convolutional layer's post-ReLU output is taken, followed by a
2x2 max-pool with stride 2 (so ``conv5-3`` corresponds to the network's
pool5 output). Images are resized so their maximum dimension equals
``max_dim``, preserving aspect ratio, with bilinear interpolation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError
from torchvision import models
from torchvision.transforms import functional as TF

from .formats import write_keypoints, write_manifest, write_tensor

# Post-ReLU feature indices inside torchvision's vgg16().features.
LAYER_INDEX = {
    "conv4-1": 18,
    "conv4-2": 20,
    "conv4-3": 22,
    "conv5-1": 25,
    "conv5-2": 27,
    "conv5-3": 29,
}

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".webp")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ExtractionError(Exception):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    layer: str = "conv5-3"
    max_dim: int = 1024
    weights: str = "auto"  # "auto" (pretrained), "none" (seeded random), or a path
    seed: int = 0
    sift: bool = False
    role: str = "database"  # uncropped images: "database" or "heldout"


def load_backbone(config: ExtractorConfig) -> torch.nn.Module:
    if config.layer not in LAYER_INDEX:
        raise ExtractionError(
            f"unknown layer {config.layer!r}; expected one of {sorted(LAYER_INDEX)}"
        )
    if config.weights == "auto":
        try:
            network = models.vgg16(weights=models.VGG16_Weights.IMAGENET1K_V1)
        except Exception as exc:  # offline environments
            raise ExtractionError(
                "pretrained VGG16 weights are unavailable; pass --weights PATH "
                "or --weights none"
            ) from exc
    elif config.weights == "none":
        torch.manual_seed(config.seed)
        network = models.vgg16(weights=None)
    else:
        network = models.vgg16(weights=None)
        state = torch.load(config.weights, map_location="cpu", weights_only=True)
        network.load_state_dict(state)
    head = network.features[: LAYER_INDEX[config.layer] + 1]
    head.eval()
    return head


def resized_size(width: int, height: int, max_dim: int) -> tuple[int, int]:
    scale = max_dim / max(width, height)
    return max(1, round(width * scale)), max(1, round(height * scale))


def prepare_image(image: Image.Image, max_dim: int) -> tuple[torch.Tensor, int, int]:
    image = image.convert("RGB")
    new_w, new_h = resized_size(image.width, image.height, max_dim)
    resized = image.resize((new_w, new_h), Image.BILINEAR)
    tensor = TF.to_tensor(resized)
    tensor = TF.normalize(tensor, IMAGENET_MEAN, IMAGENET_STD)
    return tensor.unsqueeze(0), new_w, new_h


def activations_for(
    head: torch.nn.Module, batch: torch.Tensor
) -> np.ndarray:
    with torch.no_grad():
        feature_map = head(batch)
        feature_map = F.max_pool2d(feature_map, kernel_size=2, stride=2)
    # (1, K, H, W) -> (H, W, K)
    return feature_map.squeeze(0).permute(1, 2, 0).numpy()


def detect_sift(image: Image.Image) -> list[tuple[float, float]] | None:
    try:
        import cv2
    except ImportError:
        warnings.warn("opencv is not installed; skipping keypoint files")
        return None
    gray = np.asarray(image.convert("L"))
    detector = cv2.SIFT_create()
    keypoints = detector.detect(gray, None)
    return [(float(kp.pt[0]), float(kp.pt[1])) for kp in keypoints]


def load_crops(path: str | Path | None) -> dict[str, list[float]]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def extract(
    image_dir: str | Path,
    out_dir: str | Path,
    config: ExtractorConfig = ExtractorConfig(),
    crops_path: str | Path | None = None,
) -> Path:
    """Write one SCF1 tensor per decodable image plus a dataset manifest.

    Images listed in the crops file are cropped to their bounding box first
    and take the ``query`` role; everything else is ``database``. Returns the
    manifest path.
    """
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    if config.sift:
        (out_dir / "keypoints").mkdir(parents=True, exist_ok=True)
    crops = load_crops(crops_path)
    head = load_backbone(config)

    paths = sorted(
        p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise ExtractionError(f"no images with suffixes {IMAGE_SUFFIXES} in {image_dir}")
    entries = []
    for path in paths:
        try:
            image = Image.open(path)
            image.load()
        except (UnidentifiedImageError, OSError) as exc:
            warnings.warn(f"skipping undecodable image {path.name}: {exc}")
            continue
        role = config.role
        if path.name in crops:
            x1, y1, x2, y2 = crops[path.name]
            image = image.crop((x1, y1, x2, y2))
            role = "query"
        batch, new_w, new_h = prepare_image(image, config.max_dim)
        grid = activations_for(head, batch)
        entry = {
            "id": path.stem,
            "tensor_path": f"tensors/{path.stem}.scf",
            "role": role,
        }
        write_tensor(grid, out_dir / entry["tensor_path"])
        if config.sift:
            points = detect_sift(image.resize((new_w, new_h), Image.BILINEAR))
            if points is not None:
                entry["keypoints_path"] = f"keypoints/{path.stem}.kpt"
                write_keypoints(points, new_w, new_h, out_dir / entry["keypoints_path"])
        entries.append(entry)
    if not entries:
        raise ExtractionError("every image failed to decode")
    manifest_path = out_dir / "manifest.json"
    write_manifest(entries, manifest_path)
    return manifest_path
