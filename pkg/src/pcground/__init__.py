"""Text-prompted 3D grounding on fused LiDAR and 4D radar bird's-eye-view features.

A small numpy autodiff engine carries the whole network: pillar encoders,
agent cross-attention fusion, text-gated dynamic graph fusion and a
nearest-edge anchored detection head, together with synthetic scenes,
metrics and analytic cost counters.
"""

from .autodiff import NonFiniteError, Tensor, no_grad
from .baca import BacaParams, baca_forward
from .dggf import DGGFBlock, dggf_forward, estimate_stats, max_relative
from .eval import ap_aos, bev_iou, grounding_accuracy, iou_3d
from .geometry import Box3D, anchor_point, corner_points, nearest_edge
from .head import HeadNet, build_targets, decode, head_forward
from .kernels import backend, use_backend
from .model import GroundingNet, ModelConfig, default_vocabulary, prepare_batch
from .pillars import GridSpec
from .scenes import Scene, gen_scene, make_scenes, read_dataset, write_dataset
from .training import LossConfig, total_loss, train_overfit

__version__ = "0.1.0"

__all__ = [
    "NonFiniteError", "Tensor", "no_grad",
    "BacaParams", "baca_forward",
    "DGGFBlock", "dggf_forward", "estimate_stats", "max_relative",
    "ap_aos", "bev_iou", "grounding_accuracy", "iou_3d",
    "Box3D", "anchor_point", "corner_points", "nearest_edge",
    "HeadNet", "build_targets", "decode", "head_forward",
    "backend", "use_backend",
    "GroundingNet", "ModelConfig", "default_vocabulary", "prepare_batch",
    "GridSpec",
    "Scene", "gen_scene", "make_scenes", "read_dataset", "write_dataset",
    "LossConfig", "total_loss", "train_overfit",
]
