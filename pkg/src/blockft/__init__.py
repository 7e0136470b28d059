"""blockft: contiguous-block fine-tuning experiments for encoder-decoder
segmentation networks.

The package covers the full loop: synthetic ultrasound-like phantom data,
U-Net construction with a 9-block parameter partition, scheme-constrained
fine-tuning, Dice scoring with out-of-training-domain (OOTD) columns, exact
small-sample statistics, ft-score-based model selection, and autoencoder
reconstruction-error difficulty ranking.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DivergedRunError,
    ShapeMismatchError,
    ValidationError,
)
from .labels import LABEL_SPACE, DatasetDescriptor, FrameSample, LabelSpace
from .schemes import FULL, SCHEMES, BlockId, Scheme, decoder_scheme, encoder_scheme

__all__ = [
    "BlockId",
    "ConfigurationError",
    "DatasetDescriptor",
    "DegenerateInputError",
    "DivergedRunError",
    "FrameSample",
    "FULL",
    "LABEL_SPACE",
    "LabelSpace",
    "SCHEMES",
    "Scheme",
    "ShapeMismatchError",
    "ValidationError",
    "decoder_scheme",
    "encoder_scheme",
    "__version__",
]
