"""Camera-frame placement of root-relative poses.

Each person is first placed with a weak-perspective guess: the ratio of
metric to pixel torso size turns the root keypoint into a translation.
A shared focal length and all per-person translations are then refined
jointly by Levenberg-Marquardt on the summed squared reprojection error of
the visible joints.  Rotations are fixed to identity.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import EPS_DEPTH_MM, CameraIntrinsics, GlobalPose, Keypoints2D, Pose3D
from .exceptions import (DegenerateScale, MissingJoint, NonFiniteResidual,
                         NoVisibleJoints)

MIN_VISIBLE_JOINTS = 3


@dataclass(frozen=True)
class PlacementOptions:
    init_fov_degrees: float = 60.0
    max_iterations: int = 200
    residual_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    damping_init: float = 1e-3
    #: Focal bounds in pixels; ``None`` means ``(0.2, 20) * image_w``.
    f_bounds: tuple = None
    fix_focal: bool = False
    eps_scale: float = 1e-6

    def __post_init__(self):
        if not 0 < self.init_fov_degrees < 180:
            raise ValueError("init_fov_degrees must be in (0, 180)")
        if self.residual_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("tolerances must be > 0")
        if self.damping_init <= 0 or self.max_iterations < 0:
            raise ValueError("damping_init must be > 0 and max_iterations >= 0")

    def bounds_for(self, image_w):
        if self.f_bounds is None:
            return 0.2 * image_w, 20.0 * image_w
        lo, hi = self.f_bounds
        if not 0 < lo <= hi:
            raise ValueError("f_bounds must satisfy 0 < min <= max")
        return float(lo), float(hi)


@dataclass(frozen=True, eq=False)
class PlacementResult:
    camera: CameraIntrinsics
    translations: np.ndarray
    global_poses: tuple
    initial_residual: float
    final_residual: float
    iterations: int
    converged: bool
    trace: tuple = ()
    active: tuple = ()
    stop_reason: str = ""
    initial_focal: float = field(default=float("nan"))

    def __eq__(self, other):
        if not isinstance(other, PlacementResult):
            return NotImplemented
        return (self.camera == other.camera
                and np.array_equal(self.translations, other.translations)
                and self.global_poses == other.global_poses
                and self.initial_residual == other.initial_residual
                and self.final_residual == other.final_residual
                and self.iterations == other.iterations
                and self.converged == other.converged
                and self.trace == other.trace and self.active == other.active
                and self.stop_reason == other.stop_reason)

    __hash__ = None


def init_focal(image_w, fov_degrees=60.0):
    """Pinhole focal length (px) giving a horizontal field of view of ``fov_degrees``."""
    if not 0 < fov_degrees < 180:
        raise ValueError("fov_degrees must be in (0, 180)")
    return (image_w / 2.0) / math.tan(math.radians(fov_degrees) / 2.0)


def _scale_bones(kp, skeleton):
    bones = [b for b in skeleton.torso_bones if kp.visibility[b[0]] and kp.visibility[b[1]]]
    if not bones:
        raise MissingJoint("no torso bone has both endpoints visible")
    return np.array(bones)


def weak_perspective_init(kp, pose, cam, skeleton, eps_scale=1e-6):
    """Weak-perspective root translation ``(X, Y, Z)`` in mm.

    The metric-to-pixel ratio is the summed orthographic torso bone length
    of ``pose`` over the summed torso bone length of ``kp``, using only
    bones whose endpoints are visible in ``kp``.  The root keypoint gives X
    and Y; when it is hidden, the centroid of the visible torso joints is
    used instead.
    """
    bones = _scale_bones(kp, skeleton)
    xy3 = pose.joints[:, :2]
    s2d = float(np.linalg.norm(kp.joints[bones[:, 0]] - kp.joints[bones[:, 1]], axis=1).sum())
    s3d = float(np.linalg.norm(xy3[bones[:, 0]] - xy3[bones[:, 1]], axis=1).sum())
    if s2d <= eps_scale:
        raise DegenerateScale(f"2D torso length {s2d:.3g} px is degenerate")
    ratio = s3d / s2d
    root = skeleton.root_index
    if kp.visibility[root]:
        anchor_2d = kp.joints[root]
        anchor_3d = xy3[root]
    else:
        ids = np.unique(bones)
        anchor_2d = kp.joints[ids].mean(axis=0)
        anchor_3d = xy3[ids].mean(axis=0)
    X = (anchor_2d[0] - cam.o_x) * ratio - anchor_3d[0]
    Y = (anchor_2d[1] - cam.o_y) * ratio - anchor_3d[1]
    Z = cam.f * ratio
    return np.array([X, Y, Z])


class _Problem:
    """Stacked visible-joint data of the active persons."""

    def __init__(self, persons, cam, active):
        self.cam = cam
        self.active = [i for i, a in enumerate(active) if a]
        pts, obs, owner = [], [], []
        for slot, i in enumerate(self.active):
            kp, pose = persons[i]
            vis = kp.visibility
            pts.append(pose.joints[vis])
            obs.append(kp.joints[vis])
            owner.append(np.full(int(vis.sum()), slot))
        self.points = np.concatenate(pts)
        self.observed = np.concatenate(obs)
        self.owner = np.concatenate(owner)
        self.n_obs = self.points.shape[0]

    def camera_points(self, t):
        return self.points + t[self.owner]

    def residuals(self, f, t):
        P = self.camera_points(t)
        u = f * P[:, 0] / P[:, 2] + self.cam.o_x
        v = f * P[:, 1] / P[:, 2] + self.cam.o_y
        r = np.empty(2 * self.n_obs)
        r[0::2] = u - self.observed[:, 0]
        r[1::2] = v - self.observed[:, 1]
        return r

    def jacobian(self, f, t, with_focal=True):
        P = self.camera_points(t)
        X, Y, Z = P[:, 0], P[:, 1], P[:, 2]
        n_t = 3 * len(self.active)
        off = 1 if with_focal else 0
        J = np.zeros((2 * self.n_obs, off + n_t))
        rows_u = np.arange(0, 2 * self.n_obs, 2)
        rows_v = rows_u + 1
        if with_focal:
            J[rows_u, 0] = X / Z
            J[rows_v, 0] = Y / Z
        col = off + 3 * self.owner
        J[rows_u, col] = f / Z
        J[rows_u, col + 2] = -f * X / Z ** 2
        J[rows_v, col + 1] = f / Z
        J[rows_v, col + 2] = -f * Y / Z ** 2
        return J

    def min_depth(self, t):
        return float(self.camera_points(t)[:, 2].min())

    def rms(self, r):
        return math.sqrt(float(r @ r) / self.n_obs)


def reprojection_residuals(f, translations, persons, cam):
    """Stacked ``(u, v)`` residuals of all visible joints (projected - observed)."""
    prob = _Problem(persons, cam, [True] * len(persons))
    return prob.residuals(float(f), np.asarray(translations, dtype=np.float64).reshape(-1, 3))


def reprojection_jacobian(f, translations, persons, cam):
    """Analytic Jacobian of :func:`reprojection_residuals` w.r.t. ``[f, t_1, ..., t_N]``."""
    prob = _Problem(persons, cam, [True] * len(persons))
    return prob.jacobian(float(f), np.asarray(translations, dtype=np.float64).reshape(-1, 3))


def _as_pairs(persons):
    out = []
    for p in persons:
        if isinstance(p, tuple):
            out.append(p)
        else:
            out.append((p.keypoints_2d, p.pose_3d))
    return out


def refine(persons, cam_init, t_init, opts=None):
    """Jointly refine the shared focal length and per-person translations.

    ``persons`` is a sequence of ``(Keypoints2D, Pose3D)`` pairs in the same
    order as ``t_init``.  Persons with fewer than three visible joints keep
    their initial translation and do not inform the focal length.
    """
    opts = opts or PlacementOptions()
    persons = _as_pairs(persons)
    t_all = np.array(t_init, dtype=np.float64).reshape(-1, 3)
    if len(persons) == 0 or len(persons) != t_all.shape[0]:
        raise ValueError("need at least one person and one initial translation per person")
    active = [kp.n_visible >= MIN_VISIBLE_JOINTS for kp, _ in persons]
    if not any(active):
        raise NoVisibleJoints(f"no person has {MIN_VISIBLE_JOINTS} visible joints")

    prob = _Problem(persons, cam_init, active)
    f_lo, f_hi = opts.bounds_for(cam_init.image_w)
    f = min(max(cam_init.f, f_lo), f_hi)
    t = t_all[prob.active].copy()
    # keep the start feasible: push persons whose joints reach behind the camera
    for slot in range(len(prob.active)):
        zmin = prob.points[prob.owner == slot, 2].min() + t[slot, 2]
        if zmin <= EPS_DEPTH_MM:
            t[slot, 2] += 2.0 * EPS_DEPTH_MM - zmin
    with_focal = not opts.fix_focal

    r = prob.residuals(f, t)
    if not np.isfinite(r).all():
        raise NonFiniteResidual("non-finite residual at initialisation")
    cost = float(r @ r)
    initial = prob.rms(r)
    trace = [initial]
    lam = opts.damping_init
    iterations, converged, reason = 0, False, "max_iterations"
    if cost == 0.0:
        converged, reason = True, "zero_residual"

    while not converged and iterations < opts.max_iterations:
        iterations += 1
        J = prob.jacobian(f, t, with_focal)
        A = J.T @ J
        g = J.T @ r
        d = np.maximum(np.diag(A), 1e-300)
        try:
            delta = np.linalg.solve(A + lam * np.diag(d), -g)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(A + lam * np.diag(d), -g, rcond=None)[0]
        if not np.isfinite(delta).all():
            raise NonFiniteResidual("non-finite LM step")

        step_t = delta[1:] if with_focal else delta
        step_t = step_t.reshape(-1, 3)
        step_f = delta[0] if with_focal else 0.0
        # halve the step until every joint stays in front of the camera
        scale = 1.0
        for _ in range(60):
            if prob.min_depth(t + scale * step_t) > EPS_DEPTH_MM:
                break
            scale *= 0.5
        else:
            lam *= 10.0
            continue
        f_new = min(max(f + scale * step_f, f_lo), f_hi)
        t_new = t + scale * step_t
        r_new = prob.residuals(f_new, t_new)
        if not np.isfinite(r_new).all():
            raise NonFiniteResidual("non-finite residual during refinement")
        cost_new = float(r_new @ r_new)

        if cost_new < cost:
            rel_change = (cost - cost_new) / cost
            theta = np.concatenate([[f], t.ravel()])
            theta_new = np.concatenate([[f_new], t_new.ravel()])
            rel_step = np.max(np.abs(theta_new - theta) / (np.abs(theta) + 1e-300))
            f, t, r, cost = f_new, t_new, r_new, cost_new
            trace.append(prob.rms(r))
            lam = max(lam / 10.0, 1e-12)
            if cost == 0.0:
                converged, reason = True, "zero_residual"
            elif rel_change < opts.residual_tolerance and lam <= opts.damping_init:
                converged, reason = True, "residual_tolerance"
            elif rel_step < opts.step_tolerance:
                converged, reason = True, "step_tolerance"
        else:
            lam *= 10.0
            if lam > 1e16:
                converged, reason = True, "no_descent"

    t_all[prob.active] = t
    cam = cam_init.with_focal(f)
    poses = tuple(GlobalPose(pose, t_all[i]) for i, (_, pose) in enumerate(persons))
    t_all.setflags(write=False)
    return PlacementResult(
        camera=cam, translations=t_all, global_poses=poses,
        initial_residual=initial, final_residual=prob.rms(r), iterations=iterations,
        converged=converged, trace=tuple(trace), active=tuple(active),
        stop_reason=reason, initial_focal=float(cam_init.f))


def place(persons, image_w, image_h, principal_point=None, skeleton=None, opts=None):
    """Weak-perspective initialisation followed by :func:`refine`."""
    from .core import DEFAULT_SKELETON

    opts = opts or PlacementOptions()
    skeleton = skeleton or DEFAULT_SKELETON
    persons = _as_pairs(persons)
    if principal_point is None:
        principal_point = (image_w / 2.0, image_h / 2.0)
    cam = CameraIntrinsics(init_focal(image_w, opts.init_fov_degrees),
                           principal_point[0], principal_point[1], image_w, image_h)
    t0 = [weak_perspective_init(kp, pose, cam, skeleton, opts.eps_scale)
          for kp, pose in persons]
    return refine(persons, cam, t0, opts)


def place_scene(scene, opts=None):
    """Place every person of ``scene`` that carries both 2D and 3D predictions."""
    persons = [(p.keypoints_2d, p.pose_3d) for p in scene.persons
               if p.keypoints_2d is not None and p.pose_3d is not None]
    if not persons:
        raise NoVisibleJoints("scene has no person with predicted 2D and 3D joints")
    return place(persons, scene.image_w, scene.image_h, scene.principal_point,
                 scene.skeleton, opts)


class GlobalPosePlacer(BaseEstimator):
    """Estimator fitting the shared focal length and root translations of a scene.

    ``fit`` accepts a :class:`~monopose.core.Scene` or a sequence of
    ``(Keypoints2D, Pose3D)`` pairs (then ``image_size`` is required).
    ``transform`` returns the placed :class:`~monopose.core.GlobalPose` list.
    """

    def __init__(self, fov_degrees=60.0, max_iterations=200, residual_tolerance=1e-8,
                 step_tolerance=1e-10, damping_init=1e-3, f_bounds=None, fix_focal=False):
        self.fov_degrees = fov_degrees
        self.max_iterations = max_iterations
        self.residual_tolerance = residual_tolerance
        self.step_tolerance = step_tolerance
        self.damping_init = damping_init
        self.f_bounds = f_bounds
        self.fix_focal = fix_focal

    def options(self):
        return PlacementOptions(
            init_fov_degrees=self.fov_degrees, max_iterations=self.max_iterations,
            residual_tolerance=self.residual_tolerance, step_tolerance=self.step_tolerance,
            damping_init=self.damping_init, f_bounds=self.f_bounds, fix_focal=self.fix_focal)

    def fit(self, scene, image_size=None, skeleton=None):
        if hasattr(scene, "persons"):
            self.result_ = place_scene(scene, self.options())
        else:
            if image_size is None:
                raise ValueError("image_size is required when fitting raw person pairs")
            w, h = image_size
            self.result_ = place(scene, w, h, None, skeleton, self.options())
        self.focal_ = self.result_.camera.f
        self.translations_ = self.result_.translations
        return self

    def transform(self, scene=None):
        check_is_fitted(self, "result_")
        return list(self.result_.global_poses)

    def fit_transform(self, scene, image_size=None, skeleton=None):
        return self.fit(scene, image_size, skeleton).transform()
