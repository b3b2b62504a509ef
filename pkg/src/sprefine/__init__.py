"""Superpixel CRF refinement of per-pixel label probabilities."""

from .core import (Instance, InstanceSet, InvariantError, LabelMap, SuperpixelFeatures,
                   SuperpixelMap, validate_partition)
from .crf import (CrfModel, CrfParams, KernelParams, PairwiseTerm, brute_force_map,
                  mean_field_infer, map_labels, total_energy, unary_energy)
from .metrics import ap_r, miou, pixel_accuracy
from .pipeline import PipelineConfig, StageError, refine
from .simgraph import EdgeList, mst_topk
from .slic import SlicParams, enforce_connectivity, slic_segment
from .sppool import ReceptiveFieldGrid, global_average, pool_superpixels, sp_cam

__version__ = "0.1.0"

__all__ = [
    "CrfModel", "CrfParams", "EdgeList", "Instance", "InstanceSet", "InvariantError", "KernelParams",
    "LabelMap", "PairwiseTerm", "PipelineConfig", "ReceptiveFieldGrid", "SlicParams", "StageError",
    "SuperpixelFeatures", "SuperpixelMap", "ap_r", "brute_force_map", "enforce_connectivity",
    "global_average", "map_labels", "mean_field_infer", "miou", "mst_topk", "pixel_accuracy",
    "pool_superpixels", "refine", "slic_segment", "sp_cam", "total_energy", "unary_energy",
    "validate_partition",
]
