"""Shared pose types and the geometric primitives built on them.

Conventions: 3D coordinates are millimetres in a camera frame with x to the
right, y down and z forward; 2D coordinates are pixels with the origin at the
top-left image corner.  All types are immutable once constructed.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import as_points, as_vector, check_positive
from .exceptions import DepthTooSmall, MissingJoint

#: Smallest admissible camera-frame depth of a projected joint, in mm.
EPS_DEPTH_MM = 1.0


def _arrays_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)


@dataclass(frozen=True)
class Skeleton:
    """Joint vocabulary and kinematic tree.

    Bones are indexed in joint order: bone ``k`` connects the ``k``-th
    non-root joint to its parent.  ``torso_bone_indices`` selects the bones
    used for the foreshortening-resistant scale sums.
    """

    joint_names: tuple
    parent_of: tuple
    root_index: int
    torso_bone_indices: tuple

    def __post_init__(self):
        names = tuple(str(n) for n in self.joint_names)
        parents = tuple(-1 if p is None else int(p) for p in self.parent_of)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "parent_of", parents)
        object.__setattr__(self, "torso_bone_indices", tuple(int(b) for b in self.torso_bone_indices))
        n = len(names)
        if n == 0 or len(parents) != n:
            raise ValueError("joint_names and parent_of must be non-empty and of equal length")
        roots = [j for j, p in enumerate(parents) if p < 0]
        if roots != [self.root_index]:
            raise ValueError(f"exactly one root expected at index {self.root_index}, found {roots}")
        for j, p in enumerate(parents):
            if p >= n:
                raise ValueError(f"parent index {p} of joint {j} out of range")
        # every joint must reach the root without revisiting a joint
        for j in range(n):
            seen = set()
            k = j
            while k != self.root_index:
                if k in seen:
                    raise ValueError(f"cycle in parent graph through joint {j}")
                seen.add(k)
                k = parents[k]
        if not self.torso_bone_indices:
            raise ValueError("torso_bone_indices must be non-empty")
        for b in self.torso_bone_indices:
            if not 0 <= b < n - 1:
                raise ValueError(f"torso bone index {b} out of range [0, {n - 1})")

    @property
    def n_joints(self):
        return len(self.joint_names)

    @property
    def bones(self):
        """``(child, parent)`` pairs in bone-index order."""
        return tuple((j, p) for j, p in enumerate(self.parent_of) if p >= 0)

    @property
    def torso_bones(self):
        bones = self.bones
        return tuple(bones[b] for b in self.torso_bone_indices)

    def bone_index(self, a, b):
        """Index of the bone joining joints ``a`` and ``b`` in either order."""
        for k, (c, p) in enumerate(self.bones):
            if {c, p} == {a, b}:
                return k
        raise ValueError(f"joints {a} and {b} are not connected by a bone")

    @classmethod
    def from_dict(cls, d):
        joints = list(d["joints"])
        parents = [(-1 if p is None else p) for p in d["parents"]]
        torso = d.get("torso_bones")
        probe = cls(joints, parents, int(d["root"]), (0,))
        if torso is None:
            indices = tuple(range(len(probe.bones)))
        else:
            indices = tuple(probe.bone_index(int(a), int(b)) for a, b in torso)
        return cls(joints, parents, int(d["root"]), indices)

    def to_dict(self):
        return {
            "joints": list(self.joint_names),
            "parents": [None if p < 0 else p for p in self.parent_of],
            "root": self.root_index,
            "torso_bones": [list(self.bones[b]) for b in self.torso_bone_indices],
        }


_DEFAULT_JOINTS = (
    "pelvis", "spine", "neck", "head", "nose",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)
_DEFAULT_PARENTS = (-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15)


def default_skeleton():
    """17-joint pelvis-rooted skeleton with a six-bone torso subset."""
    probe = Skeleton(_DEFAULT_JOINTS, _DEFAULT_PARENTS, 0, (0,))
    torso = [(0, 1), (1, 2), (2, 5), (2, 8), (0, 11), (0, 14)]
    return Skeleton(_DEFAULT_JOINTS, _DEFAULT_PARENTS, 0,
                    tuple(probe.bone_index(a, b) for a, b in torso))


DEFAULT_SKELETON = default_skeleton()


@dataclass(frozen=True, eq=False)
class Pose3D:
    """Root-relative 3D joints in millimetres."""

    joints: np.ndarray
    root_index: int = 0

    def __post_init__(self):
        joints = as_points(self.joints, 3, "Pose3D.joints")
        if not 0 <= self.root_index < joints.shape[0]:
            raise ValueError("root_index out of range")
        if np.any(joints[self.root_index] != 0.0):
            raise ValueError("Pose3D root joint must be exactly at the origin")
        object.__setattr__(self, "joints", joints)

    @classmethod
    def from_global(cls, joints, root_index=0):
        arr = np.asarray(joints, dtype=np.float64)
        return cls(arr - arr[root_index], root_index)

    @property
    def n_joints(self):
        return self.joints.shape[0]

    @property
    def depth_extent(self):
        return float(np.ptp(self.joints[:, 2]))

    def __eq__(self, other):
        return (isinstance(other, Pose3D) and self.root_index == other.root_index
                and _arrays_equal(self.joints, other.joints))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Keypoints2D:
    """Image-space joints in pixels with a per-joint visibility mask.

    Invisible joints may carry NaN coordinates.
    """

    joints: np.ndarray
    visibility: np.ndarray = None

    def __post_init__(self):
        joints = as_points(self.joints, 2, "Keypoints2D.joints", allow_nan=True)
        if self.visibility is None:
            vis = np.isfinite(joints).all(axis=1)
        else:
            vis = np.array(self.visibility, dtype=bool).reshape(-1)
            if vis.shape[0] != joints.shape[0]:
                raise ValueError("visibility length must match number of joints")
        if not np.isfinite(joints[vis]).all():
            raise ValueError("visible joints must have finite coordinates")
        vis.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visibility", vis)

    @property
    def n_joints(self):
        return self.joints.shape[0]

    @property
    def n_visible(self):
        return int(self.visibility.sum())

    def __eq__(self, other):
        return (isinstance(other, Keypoints2D)
                and _arrays_equal(self.joints, other.joints)
                and _arrays_equal(self.visibility, other.visibility))

    __hash__ = None


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal length and principal point in pixels."""

    f: float
    o_x: float
    o_y: float
    image_w: float
    image_h: float

    def __post_init__(self):
        object.__setattr__(self, "f", check_positive(self.f, "f"))
        object.__setattr__(self, "image_w", check_positive(self.image_w, "image_w"))
        object.__setattr__(self, "image_h", check_positive(self.image_h, "image_h"))
        for name in ("o_x", "o_y"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)

    @classmethod
    def centered(cls, f, image_w, image_h):
        return cls(f, image_w / 2.0, image_h / 2.0, image_w, image_h)

    def with_focal(self, f):
        return CameraIntrinsics(f, self.o_x, self.o_y, self.image_w, self.image_h)


@dataclass(frozen=True, eq=False)
class GlobalPose:
    """A root-relative pose together with its camera-frame root translation."""

    pose: Pose3D
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", as_vector(self.translation, 3, "translation"))

    @property
    def joints(self):
        return self.pose.joints + self.translation

    def __eq__(self, other):
        return (isinstance(other, GlobalPose) and self.pose == other.pose
                and _arrays_equal(self.translation, other.translation))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PersonRecord:
    """Predicted and/or ground-truth data for one person in one image."""

    keypoints_2d: Keypoints2D = None
    pose_3d: Pose3D = None
    gt_keypoints_2d: Keypoints2D = None
    gt_global_pose: GlobalPose = None
    gt_occluded: np.ndarray = None
    heatmaps: object = None

    def __post_init__(self):
        if all(v is None for v in (self.keypoints_2d, self.pose_3d, self.heatmaps,
                                   self.gt_keypoints_2d, self.gt_global_pose)):
            raise ValueError("PersonRecord needs at least one predicted or ground-truth field")
        if self.gt_occluded is not None:
            occ = np.array(self.gt_occluded, dtype=bool).reshape(-1)
            occ.setflags(write=False)
            object.__setattr__(self, "gt_occluded", occ)

    @property
    def has_prediction(self):
        return self.pose_3d is not None or self.keypoints_2d is not None

    @property
    def has_ground_truth(self):
        return self.gt_global_pose is not None or self.gt_keypoints_2d is not None

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return PersonRecord(**fields)

    def __eq__(self, other):
        if not isinstance(other, PersonRecord):
            return NotImplemented
        return (self.keypoints_2d == other.keypoints_2d and self.pose_3d == other.pose_3d
                and self.gt_keypoints_2d == other.gt_keypoints_2d
                and self.gt_global_pose == other.gt_global_pose
                and _arrays_equal(self.gt_occluded, other.gt_occluded)
                and self.heatmaps == other.heatmaps)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Scene:
    """One image worth of persons sharing a skeleton and (optionally) a known camera."""

    image_w: float
    image_h: float
    persons: tuple = ()
    camera: CameraIntrinsics = None
    skeleton: Skeleton = field(default=DEFAULT_SKELETON)
    sequence: str = None

    def __post_init__(self):
        object.__setattr__(self, "image_w", check_positive(self.image_w, "image_w"))
        object.__setattr__(self, "image_h", check_positive(self.image_h, "image_h"))
        persons = tuple(self.persons)
        n = self.skeleton.n_joints
        for i, p in enumerate(persons):
            for name in ("keypoints_2d", "pose_3d", "gt_keypoints_2d"):
                v = getattr(p, name)
                if v is not None and v.n_joints != n:
                    raise ValueError(f"person {i} {name} has {v.n_joints} joints, skeleton has {n}")
            if p.gt_global_pose is not None and p.gt_global_pose.pose.n_joints != n:
                raise ValueError(f"person {i} gt_global_pose joint count mismatch")
        object.__setattr__(self, "persons", persons)

    @property
    def principal_point(self):
        if self.camera is not None:
            return self.camera.o_x, self.camera.o_y
        return self.image_w / 2.0, self.image_h / 2.0

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return Scene(**fields)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.image_w == other.image_w and self.image_h == other.image_h
                and self.camera == other.camera and self.skeleton == other.skeleton
                and self.sequence == other.sequence and self.persons == other.persons)

    __hash__ = None


def _joints_of(pose):
    if isinstance(pose, Pose3D):
        return pose.joints
    return np.asarray(pose, dtype=np.float64)


def perspective_project(pose, t, cam):
    """Pinhole projection of ``pose + t`` through ``cam``.

    Raises :class:`DepthTooSmall` if any joint lies at or behind
    ``EPS_DEPTH_MM`` in front of the camera.
    """
    joints = _joints_of(pose) + np.asarray(t, dtype=np.float64).reshape(1, 3)
    depth = joints[:, 2]
    if np.any(depth <= EPS_DEPTH_MM):
        raise DepthTooSmall(f"joint depth {depth.min():.6g} mm <= {EPS_DEPTH_MM} mm")
    uv = np.empty((joints.shape[0], 2))
    uv[:, 0] = cam.f * joints[:, 0] / depth + cam.o_x
    uv[:, 1] = cam.f * joints[:, 1] / depth + cam.o_y
    return Keypoints2D(uv, np.ones(joints.shape[0], dtype=bool))


def orthographic_project(pose):
    """Drop the depth coordinate; units stay millimetres."""
    joints = _joints_of(pose)
    return Keypoints2D(joints[:, :2].copy(), np.ones(joints.shape[0], dtype=bool))


def bone_length_sum(points, skeleton, torso_only=True):
    """Sum of Euclidean bone lengths over the torso subset (or all bones).

    ``points`` may be a :class:`Keypoints2D`, :class:`Pose3D` or an
    ``(n, 2|3)`` array.  Bones touching an invisible joint raise
    :class:`MissingJoint`.
    """
    if isinstance(points, Keypoints2D):
        coords, vis = points.joints, points.visibility
    else:
        coords = _joints_of(points)
        vis = np.isfinite(coords).all(axis=1)
    if coords.ndim != 2 or coords.shape[1] not in (2, 3):
        raise ValueError(f"points must be (n, 2) or (n, 3), got {coords.shape}")
    if coords.shape[0] != skeleton.n_joints:
        raise ValueError("points do not match skeleton joint count")
    bones = skeleton.torso_bones if torso_only else skeleton.bones
    child = np.array([c for c, _ in bones])
    parent = np.array([p for _, p in bones])
    broken = ~(vis[child] & vis[parent])
    if broken.any():
        k = int(np.argmax(broken))
        raise MissingJoint(f"bone {bones[k]} has an invisible endpoint")
    return float(np.linalg.norm(coords[child] - coords[parent], axis=1).sum())


def root_align(pred, gt, root_index=0):
    """Translate both joint sets so their roots sit at the origin."""
    return (Pose3D.from_global(_joints_of(pred), root_index),
            Pose3D.from_global(_joints_of(gt), root_index))
