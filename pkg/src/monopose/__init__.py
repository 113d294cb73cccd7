"""Geometric and evaluative core of a monocular multi-person 3D pose pipeline."""

from .core import (DEFAULT_SKELETON, EPS_DEPTH_MM, CameraIntrinsics, GlobalPose,
                   Keypoints2D, PersonRecord, Pose3D, Scene, Skeleton, bone_length_sum,
                   default_skeleton, orthographic_project, perspective_project, root_align)
from .evaluation import (MatchConfig, Mode, Setting, auc_pck, detection_rate, evaluate,
                         greedy_match, mpjpe, pck_3d)
from .heatmap import Heatmap, SoftArgmaxDecoder, soft_argmax, synthesize_gaussian
from .lifting import LiftingConfig, LiftingModel, PoseLifter
from .placement import (GlobalPosePlacer, PlacementOptions, PlacementResult, init_focal,
                        place_scene, refine, weak_perspective_init)
from .synth import SynthConfig, generate_lifting_dataset, generate_scene

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SKELETON", "EPS_DEPTH_MM", "CameraIntrinsics", "GlobalPose", "Keypoints2D",
    "PersonRecord", "Pose3D", "Scene", "Skeleton", "bone_length_sum", "default_skeleton",
    "orthographic_project", "perspective_project", "root_align",
    "MatchConfig", "Mode", "Setting", "auc_pck", "detection_rate", "evaluate",
    "greedy_match", "mpjpe", "pck_3d",
    "Heatmap", "SoftArgmaxDecoder", "soft_argmax", "synthesize_gaussian",
    "LiftingConfig", "LiftingModel", "PoseLifter",
    "GlobalPosePlacer", "PlacementOptions", "PlacementResult", "init_focal", "place_scene",
    "refine", "weak_perspective_init",
    "SynthConfig", "generate_lifting_dataset", "generate_scene",
]
