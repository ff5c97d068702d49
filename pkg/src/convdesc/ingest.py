"""Reading and writing tensor files, keypoint files, and dataset manifests.

On-disk formats:

* Tensor file (``.scf``): magic ``SCF1``, then little-endian uint32 W, H, K,
  a reserved uint32 (must be 0), then W*H*K little-endian float32 values.
  The header is exactly 20 bytes.  Values are location-major: all K channel
  values of one grid location are contiguous, locations ordered row by row.
* Keypoint file: UTF-8 text. First line ``W_I H_I`` (image size in pixels),
  each following non-empty line ``x y`` (decimal reals). ``#`` starts a
  comment line.
* Manifest: JSON object with keys ``images`` and ``queries``; paths are
  relative to the manifest's directory.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, DataWarning, FormatError, ValidationError

TENSOR_MAGIC = b"SCF1"
TENSOR_HEADER = struct.Struct("<4sIIII")

ROLES = ("database", "query", "heldout")


@dataclass(frozen=True)
class FeatureTensor:
    """One image's activation grid: ``data`` has shape (H, W, K), float32."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValidationError(f"tensor data must be 3-D (H, W, K), got ndim={data.ndim}")
        if min(data.shape) < 1:
            raise ValidationError(f"tensor dims must all be >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("tensor contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def locations(self) -> np.ndarray:
        """All W*H local features in row-major location order, shape (W*H, K)."""
        return self.data.reshape(-1, self.channels)


@dataclass(frozen=True)
class KeypointSet:
    """Detector keypoints in pixel coordinates, origin top-left."""

    image_width: int
    image_height: int
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.image_width < 1 or self.image_height < 1:
            raise ValidationError("keypoint image size must be >= 1 pixel")
        for x, y in self.points:
            if not (0 <= x <= self.image_width and 0 <= y <= self.image_height):
                raise ValidationError(f"keypoint ({x}, {y}) outside image bounds")


@dataclass(frozen=True)
class ManifestImage:
    id: str
    tensor_path: Path
    role: str
    keypoints_path: Path | None = None


@dataclass(frozen=True)
class QuerySpec:
    query_id: str
    positive_ids: tuple[str, ...]
    junk_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[ManifestImage, ...]
    queries: tuple[QuerySpec, ...] = ()

    def __post_init__(self) -> None:
        ids = [im.id for im in self.images]
        seen: set[str] = set()
        for image_id in ids:
            if image_id in seen:
                raise ValidationError(f"duplicate image id {image_id!r}")
            seen.add(image_id)
        for im in self.images:
            if im.role not in ROLES:
                raise ValidationError(f"image {im.id!r} has unknown role {im.role!r}")
        for q in self.queries:
            if q.query_id not in seen:
                raise ValidationError(f"query references unknown id {q.query_id!r}")
            for ref in (*q.positive_ids, *q.junk_ids):
                if ref not in seen:
                    raise ValidationError(f"query {q.query_id!r} references unknown id {ref!r}")
            if q.query_id in q.positive_ids or q.query_id in q.junk_ids:
                raise ValidationError(f"query {q.query_id!r} lists itself as positive or junk")
            overlap = set(q.positive_ids) & set(q.junk_ids)
            if overlap:
                raise ValidationError(
                    f"query {q.query_id!r}: ids {sorted(overlap)} are both positive and junk"
                )

    def image_by_id(self, image_id: str) -> ManifestImage:
        for im in self.images:
            if im.id == image_id:
                return im
        raise KeyError(image_id)

    def with_role(self, role: str) -> tuple[ManifestImage, ...]:
        return tuple(im for im in self.images if im.role == role)


def write_tensor(tensor: FeatureTensor, path: str | Path) -> None:
    """Write ``tensor`` in the SCF1 binary format. Inverse of :func:`read_tensor`."""
    header = TENSOR_HEADER.pack(TENSOR_MAGIC, tensor.width, tensor.height, tensor.channels, 0)
    payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path: str | Path) -> FeatureTensor:
    """Read an SCF1 tensor file, validating header, size, and finiteness."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < TENSOR_HEADER.size:
        raise FormatError(f"{path}: file shorter than the 20-byte header")
    magic, width, height, channels, reserved = TENSOR_HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved header field is {reserved}, expected 0")
    if min(width, height, channels) < 1:
        raise FormatError(f"{path}: header declares empty tensor {width}x{height}x{channels}")
    expected = TENSOR_HEADER.size + 4 * width * height * channels
    if len(raw) != expected:
        raise CorruptionError(
            f"{path}: header declares {expected} bytes total, file has {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=TENSOR_HEADER.size)
    data = data.reshape(height, width, channels)
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: payload contains non-finite values")
    return FeatureTensor(data=data.copy())


def read_keypoints(path: str | Path) -> KeypointSet:
    """Parse a keypoint text file.

    In-range points are kept in file order; out-of-range points are dropped
    with a single counted :class:`DataWarning` (detector output beyond image
    bounds indicates a corrupt file, so clamping would hide the problem).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    header = None
    points: list[tuple[float, float]] = []
    dropped = 0
    for line in lines:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if header is None:
            if len(parts) != 2:
                raise FormatError(f"{path}: header must be 'W_I H_I', got {text!r}")
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError as exc:
                raise FormatError(f"{path}: non-integer image size in header {text!r}") from exc
            if min(header) < 1:
                raise FormatError(f"{path}: image size must be >= 1, got {text!r}")
            continue
        if len(parts) != 2:
            raise FormatError(f"{path}: keypoint line must be 'x y', got {text!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise FormatError(f"{path}: non-numeric keypoint line {text!r}") from exc
        if 0 <= x <= header[0] and 0 <= y <= header[1]:
            points.append((x, y))
        else:
            dropped += 1
    if header is None:
        raise FormatError(f"{path}: missing 'W_I H_I' header line")
    if dropped:
        warnings.warn(
            f"{path}: dropped {dropped} out-of-range keypoint(s)", DataWarning, stacklevel=2
        )
    return KeypointSet(image_width=header[0], image_height=header[1], points=tuple(points))


def read_manifest(path: str | Path) -> DatasetManifest:
    """Load a dataset manifest; relative paths are resolved against the manifest dir."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "images" not in doc:
        raise FormatError(f"{path}: manifest must be an object with an 'images' key")
    base = path.parent
    images = []
    for entry in doc["images"]:
        keypoints = entry.get("keypoints_path")
        images.append(
            ManifestImage(
                id=str(entry["id"]),
                tensor_path=base / entry["tensor_path"],
                role=entry.get("role", "database"),
                keypoints_path=(base / keypoints) if keypoints else None,
            )
        )
    queries = [
        QuerySpec(
            query_id=str(entry["query_id"]),
            positive_ids=tuple(str(i) for i in entry["positive_ids"]),
            junk_ids=tuple(str(i) for i in entry.get("junk_ids", ())),
        )
        for entry in doc.get("queries", ())
    ]
    return DatasetManifest(images=tuple(images), queries=tuple(queries))


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest as JSON with paths relative to the manifest directory."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        return Path(p).resolve().relative_to(base).as_posix()

    doc = {
        "images": [
            {
                "id": im.id,
                "tensor_path": rel(im.tensor_path),
                **({"keypoints_path": rel(im.keypoints_path)} if im.keypoints_path else {}),
                "role": im.role,
            }
            for im in manifest.images
        ],
        "queries": [
            {
                "query_id": q.query_id,
                "positive_ids": list(q.positive_ids),
                "junk_ids": list(q.junk_ids),
            }
            for q in manifest.queries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
