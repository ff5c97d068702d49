"""Feature-tensor extraction from images with a pretrained VGG16 backbone."""

from .extract import (
    LAYER_INDEX,
    ExtractionError,
    ExtractorConfig,
    extract,
    load_backbone,
    resized_size,
)
from .formats import write_keypoints, write_manifest, write_tensor

__version__ = "0.1.0"
