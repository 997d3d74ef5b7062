"""Learning-free LiDAR place recognition with probabilistic polar BEV occupancy."""

__version__ = "0.1.0"

from .config import PolarConfig
from .descriptor import (Descriptor, load_descriptor, make_descriptor, marginalize_occupancy,
                         save_descriptor)
from .errors import ProbeError
from .evaluation import EvalReport, multisession_eval, online_eval, pr_curve
from .matching import MatchScore, score_pair
from .pointcloud import PointCloud, Trajectory, load_poses, load_scan_bin, voxel_downsample
from .retrieval import DescriptorIndex, build_index, query_topk, retrieve_best

__all__ = [
    "PolarConfig", "Descriptor", "make_descriptor", "marginalize_occupancy", "save_descriptor",
    "load_descriptor", "ProbeError", "EvalReport", "online_eval", "multisession_eval",
    "pr_curve", "MatchScore", "score_pair", "PointCloud", "Trajectory", "load_poses",
    "load_scan_bin", "voxel_downsample", "DescriptorIndex", "build_index", "query_topk",
    "retrieve_best",
]
