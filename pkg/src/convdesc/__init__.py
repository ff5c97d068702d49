"""Compact global image descriptors from convolutional feature tensors.

The pipeline: select local features with a mask, compress them with PCA,
embed each feature into a high-dimensional space, aggregate the embedded
set into one vector, and post-process with power-law normalization and a
learned rotation. Retrieval quality is scored by mean average precision.
"""

from .aggregate import (
    DemocraticSolution,
    PoolMode,
    democratic_weights,
    pool,
    pool_democratic,
)
from .analysis import covariance_histogram, retention_stats
from .codebook import (
    GmmCodebook,
    KmeansCodebook,
    fit_gmm,
    fit_kmeans,
    gmm_posteriors,
    nearest_centroid,
)
from .embed import (
    EmbeddedSet,
    EmbeddingMethod,
    embed_features,
    embed_ffaemb,
    embed_fv,
    embed_temb,
    embed_vlad,
)
from .errors import (
    ContractViolation,
    ConvdescError,
    CorruptionError,
    DataWarning,
    DegenerateDataError,
    EmptyInputError,
    FormatError,
    ParameterError,
    UndefinedQueryError,
    ValidationError,
)
from .ingest import (
    DatasetManifest,
    FeatureTensor,
    KeypointSet,
    ManifestImage,
    QuerySpec,
    read_keypoints,
    read_manifest,
    read_tensor,
    write_manifest,
    write_tensor,
)
from .masking import (
    FeatureSet,
    Mask,
    MaskKind,
    apply_mask,
    compute_mask,
    full_grid_mask,
    max_mask,
    sift_mask,
    sum_mask,
)
from .pipeline import (
    PRESETS,
    PipelineConfig,
    PipelineModel,
    bench,
    build_index,
    describe_image,
    evaluate_manifest,
    load_index,
    load_model,
    save_index,
    save_model,
    train_pipeline,
)
from .postprocess import (
    PostprocessParams,
    RotationModel,
    apply_rotation,
    fit_rotation,
    power_law,
    truncate_ffaemb,
)
from .reduce import PcaModel, fit_pca, l2_normalize, reduce_feature, reduce_features
from .retrieval import (
    DescriptorIndex,
    RetrievalResult,
    average_precision,
    evaluate_queries,
    mean_ap,
    rank,
)
from .synth import SynthConfig, generate_dataset

__version__ = "0.1.0"
