"""Synthetic multi-person scenes with exact ground truth.

Poses are produced by forward kinematics from a standing template: every
bone gets a random local rotation of bounded angle, composed down the tree,
so bone lengths are preserved exactly and poses stay human-plausible.
"""

from dataclasses import dataclass, field
import functools
import math

import numpy as np

from .core import (DEFAULT_SKELETON, CameraIntrinsics, GlobalPose, Keypoints2D,
                   PersonRecord, Pose3D, Scene, perspective_project)

# Standing template for the default skeleton, camera frame (y down), mm.
TEMPLATE_POSE_MM = np.array([
    [0.0, 0.0, 0.0],        # pelvis
    [0.0, -250.0, 0.0],     # spine
    [0.0, -520.0, 0.0],     # neck
    [0.0, -700.0, 0.0],     # head
    [0.0, -650.0, -90.0],   # nose
    [170.0, -500.0, 0.0],   # l_shoulder
    [190.0, -230.0, 0.0],   # l_elbow
    [200.0, 20.0, 0.0],     # l_wrist
    [-170.0, -500.0, 0.0],  # r_shoulder
    [-190.0, -230.0, 0.0],  # r_elbow
    [-200.0, 20.0, 0.0],    # r_wrist
    [100.0, 20.0, 0.0],     # l_hip
    [105.0, 440.0, 0.0],    # l_knee
    [110.0, 850.0, 0.0],    # l_ankle
    [-100.0, 20.0, 0.0],    # r_hip
    [-105.0, 440.0, 0.0],   # r_knee
    [-110.0, 850.0, 0.0],   # r_ankle
])
TEMPLATE_SPAN_MM = float(np.ptp(TEMPLATE_POSE_MM[:, 1]))


@dataclass(frozen=True)
class SynthConfig:
    n_persons: tuple = (1, 4)
    depth_range_mm: tuple = (3000.0, 8000.0)
    lateral_range_mm: tuple = (-1200.0, 1200.0)
    vertical_range_mm: tuple = (-200.0, 200.0)
    pose_scale_mm: float = TEMPLATE_SPAN_MM
    max_joint_angle_deg: float = 30.0
    height_variation: float = 0.0
    noise_sigma_px: float = 0.0
    occlusion_rate: float = 0.0
    seed: int = 0
    image_w: float = 1000.0
    image_h: float = 800.0
    true_fov_degrees: float = 50.0
    template: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        lo, hi = self.depth_range_mm
        if not 0 < lo <= hi:
            raise ValueError("depth range must be strictly positive and ordered")
        if not 0 <= self.occlusion_rate < 1:
            raise ValueError("occlusion_rate must be in [0, 1)")
        if not 1 <= self.n_persons[0] <= self.n_persons[1]:
            raise ValueError("n_persons must be an ordered range with minimum >= 1")
        if not 0 < self.true_fov_degrees < 180:
            raise ValueError("true_fov_degrees must be in (0, 180)")
        if self.noise_sigma_px < 0 or self.pose_scale_mm <= 0:
            raise ValueError("noise_sigma_px must be >= 0 and pose_scale_mm > 0")
        if not 0 <= self.height_variation < 1:
            raise ValueError("height_variation must be in [0, 1)")

    def camera(self):
        f = (self.image_w / 2.0) / math.tan(math.radians(self.true_fov_degrees) / 2.0)
        return CameraIntrinsics.centered(f, self.image_w, self.image_h)


def _random_rotations(rng, count, max_angle):
    """``count`` rotations about uniform random axes by angles in ``[-max, max]``."""
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(-max_angle, max_angle, size=count)
    K = np.zeros((count, 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -axes[:, 2], axes[:, 1]
    K[:, 1, 0], K[:, 1, 2] = axes[:, 2], -axes[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -axes[:, 1], axes[:, 0]
    return (np.eye(3) + np.sin(angles)[:, None, None] * K
            + (1.0 - np.cos(angles))[:, None, None] * (K @ K))


@functools.lru_cache(maxsize=16)
def _topological_order(skeleton):
    order, frontier = [], [skeleton.root_index]
    children = {j: [] for j in range(skeleton.n_joints)}
    for c, p in skeleton.bones:
        children[p].append(c)
    while frontier:
        j = frontier.pop(0)
        order.append(j)
        frontier.extend(sorted(children[j]))
    return tuple(order)


def sample_pose(rng, cfg, skeleton=DEFAULT_SKELETON, scale=1.0):
    """Randomly articulated root-relative pose, bone lengths preserved."""
    template = TEMPLATE_POSE_MM if cfg.template is None else np.asarray(cfg.template, float)
    if template.shape != (skeleton.n_joints, 3):
        raise ValueError("template does not match skeleton")
    template = template - template[skeleton.root_index]
    template = template * (cfg.pose_scale_mm / TEMPLATE_SPAN_MM) * scale
    order = [j for j in _topological_order(skeleton) if skeleton.parent_of[j] >= 0]
    local = _random_rotations(rng, len(order), math.radians(cfg.max_joint_angle_deg))
    joints = np.zeros_like(template)
    rot = {skeleton.root_index: np.eye(3)}
    for j, r in zip(order, local):
        p = skeleton.parent_of[j]
        rot[j] = rot[p] @ r
        joints[j] = joints[p] + rot[j] @ (template[j] - template[p])
    joints[skeleton.root_index] = 0.0
    return Pose3D(joints, skeleton.root_index)


def _sample_translation(rng, cfg):
    return np.array([rng.uniform(*cfg.lateral_range_mm),
                     rng.uniform(*cfg.vertical_range_mm),
                     rng.uniform(*cfg.depth_range_mm)])


def generate_scene(cfg, skeleton=DEFAULT_SKELETON, sequence=None):
    """Scene whose predicted fields are noisy/occluded copies of exact ground truth."""
    rng = np.random.default_rng(cfg.seed)
    cam = cfg.camera()
    n = int(rng.integers(cfg.n_persons[0], cfg.n_persons[1] + 1))
    persons = []
    for _ in range(n):
        scale = 1.0 + rng.uniform(-cfg.height_variation, cfg.height_variation)
        pose = sample_pose(rng, cfg, skeleton, scale)
        t = _sample_translation(rng, cfg)
        gt_2d = perspective_project(pose, t, cam)
        noisy = gt_2d.joints + rng.normal(scale=cfg.noise_sigma_px, size=gt_2d.joints.shape) \
            if cfg.noise_sigma_px > 0 else gt_2d.joints.copy()
        occluded = rng.random(skeleton.n_joints) < cfg.occlusion_rate
        noisy[occluded] = np.nan
        persons.append(PersonRecord(
            keypoints_2d=Keypoints2D(noisy, ~occluded),
            pose_3d=pose,
            gt_keypoints_2d=gt_2d,
            gt_global_pose=GlobalPose(pose, t),
            gt_occluded=occluded if cfg.occlusion_rate > 0 else None,
        ))
    return Scene(cfg.image_w, cfg.image_h, tuple(persons), cam, skeleton, sequence)


def generate_lifting_dataset(cfg, count, skeleton=DEFAULT_SKELETON):
    """``count`` pairs of projected pixel keypoints and root-relative poses.

    Keypoints are in pixels of a ``cfg.image_w x cfg.image_h`` image; the
    lifter normalises them by image size.
    """
    if count <= 0:
        raise ValueError("count must be > 0")
    rng = np.random.default_rng(cfg.seed)
    cam = cfg.camera()
    out = []
    for _ in range(int(count)):
        scale = 1.0 + rng.uniform(-cfg.height_variation, cfg.height_variation)
        pose = sample_pose(rng, cfg, skeleton, scale)
        kp = perspective_project(pose, _sample_translation(rng, cfg), cam)
        if cfg.noise_sigma_px > 0:
            kp = Keypoints2D(kp.joints + rng.normal(scale=cfg.noise_sigma_px, size=kp.joints.shape))
        out.append((kp, pose))
    return out
