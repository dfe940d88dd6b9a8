"""Learned fluorescence inference from phase images.

A residual U-Net maps a normalized phase raster to one stain channel.
Submodules: preprocess (normalization and geometry), layers (numpy
inference primitives), network (architecture spec and forward pass),
weights (named-tensor store and the PICSW1 file format).
"""

from .preprocess import (
    INFERENCE_PAD,
    mirror_pad,
    normalize_for_ml,
    rescale_to_network,
)
from .layers import batchnorm_infer, conv2d, maxpool2, relu, upconv2
from .network import (
    InferenceStageError,
    NetSpec,
    StainMap,
    infer_stain,
    unet_forward,
)
from .weights import (
    WeightsFormatError,
    WeightStore,
    load_weights,
    random_weights,
    save_weights,
    spec_from_weights,
    validate_weights,
    zero_weights,
)

__all__ = [
    "INFERENCE_PAD",
    "InferenceStageError",
    "NetSpec",
    "StainMap",
    "WeightStore",
    "WeightsFormatError",
    "batchnorm_infer",
    "conv2d",
    "infer_stain",
    "load_weights",
    "maxpool2",
    "mirror_pad",
    "normalize_for_ml",
    "random_weights",
    "relu",
    "rescale_to_network",
    "save_weights",
    "spec_from_weights",
    "unet_forward",
    "upconv2",
    "validate_weights",
    "zero_weights",
]
