"""Click-based interactive segmentation: single-object refinement and
exemplar-driven multi-object propagation, with training, evaluation, and
an annotation service."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .blocks import ModelConfig
from .geometry import (
    Click,
    ClickSet,
    binarize,
    compose_guidance,
    encode_clicks,
    iou,
    rle_decode,
    rle_encode,
)
from .models import (
    ExemplarPropagationNet,
    ExemplarTarget,
    SingleObjectNet,
    predict_with_refinement,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "ModelConfig",
    "Click",
    "ClickSet",
    "binarize",
    "compose_guidance",
    "encode_clicks",
    "iou",
    "rle_decode",
    "rle_encode",
    "ExemplarPropagationNet",
    "ExemplarTarget",
    "SingleObjectNet",
    "predict_with_refinement",
]
