"""End-to-end training and description: configuration, model container, staging.

A trained :class:`PipelineModel` holds everything needed to turn a feature
tensor into a global descriptor deterministically: the PCA basis, the
visual codebook, and the rotation/whitening basis, all learned from a
held-out dataset.
"""

from __future__ import annotations

import statistics
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import model_io
from .aggregate import DEMOCRATIC_DEFAULT_ITERS, PoolMode, pool, pool_democratic
from .codebook import GmmCodebook, KmeansCodebook, fit_gmm, fit_kmeans
from .embed import (
    FFAEMB_DEFAULT_M,
    FFAEMB_DEFAULT_MU,
    EmbeddedSet,
    EmbeddingMethod,
    embed_features,
)
from .errors import ContractViolation, DataWarning, ParameterError, ValidationError
from .ingest import DatasetManifest, FeatureTensor, KeypointSet, read_keypoints, read_tensor
from .masking import FeatureSet, MaskKind, apply_mask, compute_mask
from .postprocess import RotationModel, apply_rotation, fit_rotation, power_law, truncate_ffaemb
from .reduce import PcaModel, fit_pca, reduce_features

MODEL_MAGIC = b"SCM1"
MODEL_VERSION = 1
INDEX_MAGIC = b"SCI1"
INDEX_VERSION = 1

# Method defaults for the post-rotation head truncation; the triangulation
# embedding drops its 128 leading components, the others drop none.
_DEFAULT_TRUNCATE_HEAD = {EmbeddingMethod.TEMB: 128}


@dataclass(frozen=True)
class PipelineConfig:
    mask_kind: MaskKind = MaskKind.MAX
    embedding_method: EmbeddingMethod = EmbeddingMethod.TEMB
    pool_mode: PoolMode = PoolMode.DEMOCRATIC
    pca_d: int = 32
    codebook_k: int = 20
    pn_alpha: float = 0.5
    whiten: bool = True
    truncate_head: int | None = None
    democratic_iters: int = DEMOCRATIC_DEFAULT_ITERS
    ffaemb_m: int | None = None
    ffaemb_mu: float = FFAEMB_DEFAULT_MU
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mask_kind", MaskKind(self.mask_kind))
        object.__setattr__(self, "embedding_method", EmbeddingMethod(self.embedding_method))
        object.__setattr__(self, "pool_mode", PoolMode(self.pool_mode))
        if self.truncate_head is None:
            object.__setattr__(
                self, "truncate_head", _DEFAULT_TRUNCATE_HEAD.get(self.embedding_method, 0)
            )
        if self.ffaemb_m is None:
            object.__setattr__(self, "ffaemb_m", min(FFAEMB_DEFAULT_M, self.codebook_k))
        if self.pca_d < 1 or self.codebook_k < 1:
            raise ParameterError("pca_d and codebook_k must be >= 1")
        if not 0.0 <= self.pn_alpha <= 1.0:
            raise ParameterError("pn_alpha must lie in [0, 1]")
        if self.truncate_head < 0:
            raise ParameterError("truncate_head must be >= 0")
        if self.democratic_iters < 0:
            raise ParameterError("democratic_iters must be >= 0")
        if self.embedding_method is EmbeddingMethod.FFAEMB and not (
            1 <= self.ffaemb_m <= self.codebook_k
        ):
            raise ParameterError("ffaemb_m must lie in [1, codebook_k]")
        if self.rotation_dim <= 0 or self.target_dim <= 0:
            raise ParameterError("configuration yields a non-positive descriptor length")

    @property
    def rotation_dim(self) -> int:
        """Aggregate length entering the rotation (after any leading-block drop)."""
        d, k = self.pca_d, self.codebook_k
        if self.embedding_method is EmbeddingMethod.FV:
            return 2 * d * k
        if self.embedding_method is EmbeddingMethod.FFAEMB:
            return (k - 2) * d * (d + 1) // 2
        return d * k

    @property
    def target_dim(self) -> int:
        """Final descriptor length."""
        return self.rotation_dim - self.truncate_head

    def to_dict(self) -> dict:
        return {
            "mask_kind": self.mask_kind.value,
            "embedding_method": self.embedding_method.value,
            "pool_mode": self.pool_mode.value,
            "pca_d": self.pca_d,
            "codebook_k": self.codebook_k,
            "pn_alpha": self.pn_alpha,
            "whiten": self.whiten,
            "truncate_head": self.truncate_head,
            "democratic_iters": self.democratic_iters,
            "ffaemb_m": self.ffaemb_m,
            "ffaemb_mu": self.ffaemb_mu,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


# Dimension presets: the four embedding configurations compared at a common
# 4224-D length, and the descriptor-length ladder for the default framework.
PRESETS: dict[str, PipelineConfig] = {
    "fv-4224": PipelineConfig(embedding_method=EmbeddingMethod.FV, pca_d=48, codebook_k=44),
    "vlad-4224": PipelineConfig(embedding_method=EmbeddingMethod.VLAD, pca_d=64, codebook_k=66),
    "temb-4224": PipelineConfig(embedding_method=EmbeddingMethod.TEMB, pca_d=64, codebook_k=68),
    "ffaemb-4224": PipelineConfig(
        embedding_method=EmbeddingMethod.FFAEMB, pca_d=32, codebook_k=10
    ),
    "temb-512": PipelineConfig(pca_d=32, codebook_k=20),
    "temb-1024": PipelineConfig(pca_d=64, codebook_k=18),
    "temb-2048": PipelineConfig(pca_d=64, codebook_k=34),
    "temb-4096": PipelineConfig(pca_d=64, codebook_k=66),
    "temb-8064": PipelineConfig(pca_d=128, codebook_k=64),
}


@dataclass(frozen=True)
class PipelineModel:
    config: PipelineConfig
    pca: PcaModel
    codebook: KmeansCodebook | GmmCodebook
    rotation: RotationModel
    trained_on_ids: tuple[str, ...] = ()
    format_version: int = MODEL_VERSION

    def __post_init__(self) -> None:
        if self.pca.output_dim != self.config.pca_d:
            raise ValidationError("PCA output dimension disagrees with the configuration")
        if self.codebook.k != self.config.codebook_k or self.codebook.dim != self.config.pca_d:
            raise ValidationError("codebook shape disagrees with the configuration")
        if self.rotation.input_dim != self.config.rotation_dim:
            raise ValidationError("rotation input dimension disagrees with the configuration")


def _load_image_features(image, mask_kind: MaskKind) -> FeatureSet:
    tensor = read_tensor(image.tensor_path)
    keypoints = None
    if mask_kind is MaskKind.SIFT:
        if image.keypoints_path is None:
            warnings.warn(
                f"{image.id}: no keypoint file; falling back to the full grid",
                DataWarning,
                stacklevel=2,
            )
            mask_kind = MaskKind.NONE
        else:
            keypoints = read_keypoints(image.keypoints_path)
    mask = compute_mask(tensor, mask_kind, keypoints)
    return apply_mask(tensor, mask)


def _stage_mask(
    config: PipelineConfig, tensor: FeatureTensor, keypoints: KeypointSet | None
) -> FeatureSet:
    kind = config.mask_kind
    if kind is MaskKind.SIFT and keypoints is None:
        warnings.warn(
            "SIFT mask requested but no keypoints given; using the full grid",
            DataWarning,
            stacklevel=2,
        )
        kind = MaskKind.NONE
    return apply_mask(tensor, compute_mask(tensor, kind, keypoints))


def _stage_embed(model: PipelineModel, reduced: FeatureSet) -> EmbeddedSet:
    return embed_features(
        model.codebook,
        reduced,
        model.config.embedding_method,
        m=model.config.ffaemb_m,
        mu=model.config.ffaemb_mu,
    )


def _stage_pool(model: PipelineModel, embedded: EmbeddedSet) -> np.ndarray:
    if model.config.pool_mode is PoolMode.DEMOCRATIC:
        return pool_democratic(embedded, max_iter=model.config.democratic_iters)
    return pool(embedded, model.config.pool_mode)


def _pre_rotation(config: PipelineConfig, pooled: np.ndarray) -> np.ndarray:
    if config.embedding_method is EmbeddingMethod.FFAEMB:
        pooled = truncate_ffaemb(pooled, config.pca_d)
    return power_law(pooled, config.pn_alpha)


def _stage_postprocess(model: PipelineModel, pooled: np.ndarray) -> np.ndarray:
    return apply_rotation(model.rotation, _pre_rotation(model.config, pooled))


def train_pipeline(config: PipelineConfig, heldout: DatasetManifest) -> PipelineModel:
    """Fit PCA, codebook, and rotation on the manifest's held-out images.

    Only images with role ``heldout`` participate; training on the corpus
    that will be evaluated would overfit the learned bases, and ``evaluate``
    refuses such models.
    """
    images = heldout.with_role("heldout")
    if len(images) < 2:
        raise ParameterError(
            f"training stage heldout-selection: needs >= 2 heldout images, found {len(images)}"
        )
    feature_sets = [_load_image_features(im, config.mask_kind) for im in images]
    total = sum(len(fs) for fs in feature_sets)
    need = max(config.pca_d, 2 * config.codebook_k)
    if total < need:
        raise ParameterError(
            f"training stage pca: needs >= {need} masked features, found {total}"
        )
    try:
        pca = fit_pca(feature_sets, config.pca_d)
    except ParameterError as exc:
        raise ParameterError(f"training stage pca: {exc}") from exc
    reduced_sets = [reduce_features(pca, fs) for fs in feature_sets]
    try:
        if config.embedding_method is EmbeddingMethod.FV:
            codebook = fit_gmm(reduced_sets, config.codebook_k, config.seed)
        else:
            codebook = fit_kmeans(reduced_sets, config.codebook_k, config.seed)
    except ParameterError as exc:
        raise ParameterError(f"training stage codebook: {exc}") from exc
    partial = PipelineModel(
        config=config,
        pca=pca,
        codebook=codebook,
        rotation=_identity_rotation(config),
        trained_on_ids=tuple(im.id for im in images),
    )
    aggregates = []
    for reduced in reduced_sets:
        pooled = _stage_pool(partial, _stage_embed(partial, reduced))
        aggregates.append(_pre_rotation(config, pooled))
    try:
        rotation = fit_rotation(
            np.vstack(aggregates), whiten=config.whiten, truncate_head=config.truncate_head
        )
    except ParameterError as exc:
        raise ParameterError(f"training stage rotation: {exc}") from exc
    return replace(partial, rotation=rotation)


def _identity_rotation(config: PipelineConfig) -> RotationModel:
    dim = config.rotation_dim
    return RotationModel(
        mean=np.zeros(dim),
        rotation=np.eye(dim),
        eigenvalues=np.zeros(dim),
        whiten=False,
        truncate_head=0,
    )


def describe_image(
    model: PipelineModel,
    tensor: FeatureTensor,
    keypoints: KeypointSet | None = None,
) -> np.ndarray:
    """Produce the final l2-normalized global descriptor of one image."""
    if tensor.channels != model.pca.input_dim:
        raise ContractViolation(
            f"tensor has {tensor.channels} channels but the model expects "
            f"{model.pca.input_dim}"
        )
    features = _stage_mask(model.config, tensor, keypoints)
    reduced = reduce_features(model.pca, features)
    embedded = _stage_embed(model, reduced)
    pooled = _stage_pool(model, embedded)
    return _stage_postprocess(model, pooled)


def describe_manifest_image(model: PipelineModel, image) -> np.ndarray:
    tensor = read_tensor(image.tensor_path)
    keypoints = None
    if model.config.mask_kind is MaskKind.SIFT and image.keypoints_path is not None:
        keypoints = read_keypoints(image.keypoints_path)
    return describe_image(model, tensor, keypoints)


@dataclass(frozen=True)
class StageTimings:
    """Per-stage wall-clock seconds per image (tensor reads excluded)."""

    images: int
    repetitions: int
    mean: dict[str, float]
    median: dict[str, float]

    @property
    def mean_total(self) -> float:
        return sum(self.mean.values())


BENCH_STAGES = ("mask", "reduce", "embed", "pool", "postprocess")


def bench(
    manifest: DatasetManifest, model: PipelineModel, repetitions: int = 3
) -> StageTimings:
    """Time every pipeline stage over the manifest's database and query images."""
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")
    images = [im for im in manifest.images if im.role != "heldout"]
    if not images:
        raise ParameterError("manifest has no database or query images to time")
    per_image: dict[str, list[float]] = {s: [] for s in BENCH_STAGES}
    for image in images:
        tensor = read_tensor(image.tensor_path)
        keypoints = None
        if model.config.mask_kind is MaskKind.SIFT and image.keypoints_path is not None:
            keypoints = read_keypoints(image.keypoints_path)
        totals = dict.fromkeys(BENCH_STAGES, 0.0)
        for _ in range(repetitions):
            t0 = time.perf_counter()
            features = _stage_mask(model.config, tensor, keypoints)
            t1 = time.perf_counter()
            reduced = reduce_features(model.pca, features)
            t2 = time.perf_counter()
            embedded = _stage_embed(model, reduced)
            t3 = time.perf_counter()
            pooled = _stage_pool(model, embedded)
            t4 = time.perf_counter()
            _stage_postprocess(model, pooled)
            t5 = time.perf_counter()
            for stage, dt in zip(BENCH_STAGES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4)):
                totals[stage] += dt
        for stage in BENCH_STAGES:
            per_image[stage].append(totals[stage] / repetitions)
    return StageTimings(
        images=len(images),
        repetitions=repetitions,
        mean={s: float(np.mean(per_image[s])) for s in BENCH_STAGES},
        median={s: float(statistics.median(per_image[s])) for s in BENCH_STAGES},
    )


def build_index(model: PipelineModel, manifest: DatasetManifest):
    """Describe every database image and assemble a DescriptorIndex."""
    from .retrieval import DescriptorIndex

    images = manifest.with_role("database")
    if not images:
        raise ParameterError("manifest has no database images to index")
    rows = [describe_manifest_image(model, im) for im in images]
    return DescriptorIndex(ids=tuple(im.id for im in images), matrix=np.vstack(rows))


def evaluate_manifest(model: PipelineModel, manifest: DatasetManifest, index=None):
    """Describe queries, rank them against the database, and score mAP.

    Refuses a model trained on any of the evaluated ids: parameters must
    come from a disjoint held-out corpus.
    """
    from .retrieval import evaluate_queries, mean_ap

    overlap = set(model.trained_on_ids) & {im.id for im in manifest.images}
    if overlap:
        raise ValidationError(
            f"model was trained on evaluated image ids (e.g. {sorted(overlap)[:3]}); "
            "train on a disjoint held-out dataset"
        )
    if not manifest.queries:
        raise ParameterError("manifest defines no queries")
    if index is None:
        index = build_index(model, manifest)
    query_descriptors = {
        q.query_id: describe_manifest_image(model, manifest.image_by_id(q.query_id))
        for q in manifest.queries
    }
    results = evaluate_queries(index, query_descriptors, manifest.queries)
    return results, mean_ap([r.ap for r in results])


def save_index(index, path: str | Path) -> None:
    model_io.write_container(
        path, INDEX_MAGIC, INDEX_VERSION, {"ids": list(index.ids)}, {"matrix": index.matrix}
    )


def load_index(path: str | Path):
    from .retrieval import DescriptorIndex

    version, meta, arrays = model_io.read_container(path, INDEX_MAGIC)
    if version != INDEX_VERSION:
        raise ValidationError(f"{path}: unsupported index version {version}")
    return DescriptorIndex(ids=tuple(meta["ids"]), matrix=arrays["matrix"])


def save_model(model: PipelineModel, path: str | Path) -> None:
    arrays = {
        "pca_mean": model.pca.mean,
        "pca_matrix": model.pca.matrix,
        "pca_eigenvalues": model.pca.eigenvalues,
        "rot_mean": model.rotation.mean,
        "rot_matrix": model.rotation.rotation,
        "rot_eigenvalues": model.rotation.eigenvalues,
    }
    if isinstance(model.codebook, GmmCodebook):
        codebook_type = "gmm"
        arrays.update(
            cb_weights=model.codebook.weights,
            cb_means=model.codebook.means,
            cb_variances=model.codebook.variances,
        )
    else:
        codebook_type = "kmeans"
        arrays.update(cb_centroids=model.codebook.centroids)
    meta = {
        "config": model.config.to_dict(),
        "codebook_type": codebook_type,
        "trained_on_ids": list(model.trained_on_ids),
        "rotation": {
            "whiten": model.rotation.whiten,
            "epsilon": model.rotation.epsilon,
            "truncate_head": model.rotation.truncate_head,
        },
    }
    model_io.write_container(path, MODEL_MAGIC, model.format_version, meta, arrays)


def load_model(path: str | Path) -> PipelineModel:
    version, meta, arrays = model_io.read_container(path, MODEL_MAGIC)
    if version != MODEL_VERSION:
        raise ValidationError(f"{path}: unsupported model version {version}")
    config = PipelineConfig.from_dict(meta["config"])
    pca = PcaModel(
        mean=arrays["pca_mean"],
        matrix=arrays["pca_matrix"],
        eigenvalues=arrays["pca_eigenvalues"],
    )
    if meta["codebook_type"] == "gmm":
        codebook: KmeansCodebook | GmmCodebook = GmmCodebook(
            weights=arrays["cb_weights"],
            means=arrays["cb_means"],
            variances=arrays["cb_variances"],
        )
    else:
        codebook = KmeansCodebook(centroids=arrays["cb_centroids"])
    rotation = RotationModel(
        mean=arrays["rot_mean"],
        rotation=arrays["rot_matrix"],
        eigenvalues=arrays["rot_eigenvalues"],
        whiten=meta["rotation"]["whiten"],
        epsilon=meta["rotation"]["epsilon"],
        truncate_head=meta["rotation"]["truncate_head"],
    )
    return PipelineModel(
        config=config,
        pca=pca,
        codebook=codebook,
        rotation=rotation,
        trained_on_ids=tuple(meta["trained_on_ids"]),
        format_version=version,
    )
