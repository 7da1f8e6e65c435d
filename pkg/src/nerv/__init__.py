"""Image-wise neural video representation: a network maps a frame index to a
whole RGB frame, and compressing the video means compressing the network.
"""

__version__ = "0.1.0"

from .bitstream import deserialize, read_artifact, serialize, write_artifact
from .compression import compress_model, prune_global, quantize_tensor, dequantize_tensor
from .decoder import decode_frames, load
from .errors import (
    CorruptStreamError,
    DataError,
    DomainError,
    FormatError,
    InvalidConfigError,
    NervError,
    NotANervFileError,
    ShapeError,
    TrainingDivergedError,
    VersionError,
)
from .io import VideoTensor, load_frames, save_frames, synthetic_video
from .metrics import ms_ssim, psnr, ssim
from .model import NervConfig, NervModel, build_model, count_params, forward, positional_encode
from .training import TrainConfig, loss, lr_at, train

__all__ = [
    "CorruptStreamError",
    "DataError",
    "DomainError",
    "FormatError",
    "InvalidConfigError",
    "NervConfig",
    "NervError",
    "NervModel",
    "NotANervFileError",
    "ShapeError",
    "TrainConfig",
    "TrainingDivergedError",
    "VersionError",
    "VideoTensor",
    "build_model",
    "compress_model",
    "count_params",
    "decode_frames",
    "dequantize_tensor",
    "deserialize",
    "forward",
    "load",
    "load_frames",
    "loss",
    "lr_at",
    "ms_ssim",
    "positional_encode",
    "prune_global",
    "psnr",
    "quantize_tensor",
    "read_artifact",
    "save_frames",
    "serialize",
    "ssim",
    "synthetic_video",
    "train",
    "write_artifact",
]
