"""Versioned JSON documents for every artifact the command line reads or writes.

Lengths carry their unit in the field name (``_mm``, ``_px``).  Invisible
or missing 2D joints are written as ``null``.  Parsers raise
:class:`~monopose.exceptions.SchemaError` with a path to the offending
field; with ``strict=True`` unknown fields are rejected, otherwise ignored.
"""

from dataclasses import asdict, fields
import json
import math
import os

import numpy as np

from .core import (DEFAULT_SKELETON, CameraIntrinsics, GlobalPose, Keypoints2D,
                   PersonRecord, Pose3D, Scene, Skeleton)
from .evaluation import EvalReport
from .exceptions import SchemaError
from .heatmap import Heatmap
from .placement import PlacementResult
from .synth import SynthConfig

FORMAT_VERSION = 1


# ---------------------------------------------------------------- helpers

def _check_keys(d, path, required=(), optional=(), strict=False):
    if not isinstance(d, dict):
        raise SchemaError(f"expected an object, got {type(d).__name__}", path)
    for k in required:
        if k not in d:
            raise SchemaError("missing required field", f"{path}.{k}" if path else k)
    if strict:
        known = set(required) | set(optional)
        extra = sorted(set(d) - known)
        if extra:
            raise SchemaError(f"unknown field(s) {extra}", path)


def _sub(path, key):
    return f"{path}.{key}" if path else key


def _check_version(d, path, kind=None):
    if d.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {d.get('format_version')!r}",
                          _sub(path, "format_version"))
    if kind is not None and d.get("kind", kind) != kind:
        raise SchemaError(f"expected kind {kind!r}, got {d.get('kind')!r}", _sub(path, "kind"))


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"expected a number, got {v!r}", path)
    return float(v)


def _matrix(v, cols, path, allow_null=False):
    if not isinstance(v, list):
        raise SchemaError("expected a list of coordinate rows", path)
    out = np.full((len(v), cols), np.nan)
    for i, row in enumerate(v):
        if row is None and allow_null:
            continue
        if not isinstance(row, list) or len(row) != cols:
            raise SchemaError(f"expected {cols} coordinates", f"{path}[{i}]")
        out[i] = [_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)]
    return out


def _rows(arr, allow_null=False):
    out = []
    for row in np.asarray(arr):
        if allow_null and not np.isfinite(row).all():
            out.append(None)
        else:
            out.append([float(x) for x in row])
    return out


def _wrap(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SchemaError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise SchemaError(str(exc), path) from exc


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------- skeleton

def skeleton_to_json(skeleton):
    return skeleton.to_dict()


def skeleton_from_json(d, path="skeleton", strict=False):
    if d is None or d == "default":
        return DEFAULT_SKELETON
    _check_keys(d, path, ("joints", "parents", "root"), ("torso_bones",), strict)
    return _wrap(path, Skeleton.from_dict, d)


def load_skeleton(path):
    with open(path) as fh:
        return skeleton_from_json(json.load(fh), "")


# ---------------------------------------------------------------- leaf types

def keypoints_to_json(kp):
    vis = kp.visibility
    rows = [[float(x) for x in kp.joints[j]] if np.isfinite(kp.joints[j]).all() else None
            for j in range(kp.n_joints)]
    return {"joints_px": rows, "visibility": [bool(v) for v in vis]}


def keypoints_from_json(d, path="keypoints_2d", strict=False):
    _check_keys(d, path, ("joints_px",), ("visibility",), strict)
    joints = _matrix(d["joints_px"], 2, _sub(path, "joints_px"), allow_null=True)
    vis = d.get("visibility")
    if vis is not None and (not isinstance(vis, list) or len(vis) != len(joints)):
        raise SchemaError("visibility must be a list with one flag per joint",
                          _sub(path, "visibility"))
    return _wrap(path, Keypoints2D, joints, vis)


def pose_to_json(pose):
    return _rows(pose.joints)


def pose_from_json(v, root_index, path="pose_3d_mm"):
    joints = _matrix(v, 3, path)
    return _wrap(path, Pose3D, joints, root_index)


def camera_to_json(cam):
    return {"f_px": cam.f, "o_x_px": cam.o_x, "o_y_px": cam.o_y,
            "image_w_px": cam.image_w, "image_h_px": cam.image_h}


def camera_from_json(d, path="camera", strict=False):
    keys = ("f_px", "o_x_px", "o_y_px", "image_w_px", "image_h_px")
    _check_keys(d, path, keys, (), strict)
    vals = [_number(d[k], _sub(path, k)) for k in keys]
    return _wrap(path, CameraIntrinsics, *vals)


def heatmap_to_json(hm, scale=None, offset=None):
    out = {"w": hm.width, "h": hm.height,
           "joints": [[float(x) for x in g.ravel()] for g in hm.values]}
    if scale is not None:
        out["scale"] = scale
    if offset is not None:
        out["offset"] = list(offset)
    return out


def heatmap_from_json(d, path="heatmaps", strict=False):
    _check_keys(d, path, ("w", "h", "joints"), ("scale", "offset", "format_version", "kind"),
                strict)
    w, h = int(_number(d["w"], _sub(path, "w"))), int(_number(d["h"], _sub(path, "h")))
    grids = []
    for i, g in enumerate(d["joints"]):
        if not isinstance(g, list) or len(g) != w * h:
            raise SchemaError(f"expected {w * h} row-major values", f"{path}.joints[{i}]")
        grids.append(np.asarray(g, dtype=np.float64).reshape(h, w))
    if not grids:
        raise SchemaError("no joint grids", _sub(path, "joints"))
    return _wrap(path, Heatmap, np.stack(grids))


def heatmap_affine(d):
    """``(scale, offset)`` stored alongside a heatmap document, defaults identity."""
    scale = d.get("scale", 1.0)
    offset = tuple(d.get("offset", (0.0, 0.0)))
    return scale, offset


# ---------------------------------------------------------------- persons / scenes

_PERSON_KEYS = ("keypoints_2d", "pose_3d_mm", "gt_keypoints_2d", "gt_pose_3d_mm",
                "gt_translation_mm", "gt_occluded", "heatmaps")


def person_to_json(p):
    d = {}
    if p.keypoints_2d is not None:
        d["keypoints_2d"] = keypoints_to_json(p.keypoints_2d)
    if p.pose_3d is not None:
        d["pose_3d_mm"] = pose_to_json(p.pose_3d)
    if p.gt_keypoints_2d is not None:
        d["gt_keypoints_2d"] = keypoints_to_json(p.gt_keypoints_2d)
    if p.gt_global_pose is not None:
        d["gt_pose_3d_mm"] = pose_to_json(p.gt_global_pose.pose)
        d["gt_translation_mm"] = [float(x) for x in p.gt_global_pose.translation]
    if p.gt_occluded is not None:
        d["gt_occluded"] = [bool(x) for x in p.gt_occluded]
    if p.heatmaps is not None:
        d["heatmaps"] = p.heatmaps if isinstance(p.heatmaps, dict) else heatmap_to_json(p.heatmaps)
    return d


def person_from_json(d, root_index, path="person", strict=False):
    _check_keys(d, path, (), _PERSON_KEYS, strict)
    kw = {}
    if "keypoints_2d" in d:
        kw["keypoints_2d"] = keypoints_from_json(d["keypoints_2d"], _sub(path, "keypoints_2d"),
                                                 strict)
    if "pose_3d_mm" in d:
        kw["pose_3d"] = pose_from_json(d["pose_3d_mm"], root_index, _sub(path, "pose_3d_mm"))
    if "gt_keypoints_2d" in d:
        kw["gt_keypoints_2d"] = keypoints_from_json(d["gt_keypoints_2d"],
                                                    _sub(path, "gt_keypoints_2d"), strict)
    if "gt_pose_3d_mm" in d:
        if "gt_translation_mm" not in d:
            raise SchemaError("gt_pose_3d_mm requires gt_translation_mm",
                              _sub(path, "gt_translation_mm"))
        pose = pose_from_json(d["gt_pose_3d_mm"], root_index, _sub(path, "gt_pose_3d_mm"))
        kw["gt_global_pose"] = _wrap(_sub(path, "gt_translation_mm"), GlobalPose, pose,
                                     d["gt_translation_mm"])
    if "gt_occluded" in d:
        kw["gt_occluded"] = d["gt_occluded"]
    if "heatmaps" in d:
        heatmap_from_json(d["heatmaps"], _sub(path, "heatmaps"), strict)
        kw["heatmaps"] = d["heatmaps"]
    return _wrap(path, PersonRecord, **kw)


def scene_to_json(scene):
    d = {"format_version": FORMAT_VERSION, "kind": "scene",
         "image_w_px": scene.image_w, "image_h_px": scene.image_h}
    if scene.sequence is not None:
        d["sequence"] = scene.sequence
    d["skeleton"] = "default" if scene.skeleton == DEFAULT_SKELETON else skeleton_to_json(
        scene.skeleton)
    if scene.camera is not None:
        d["camera"] = camera_to_json(scene.camera)
    d["persons"] = [person_to_json(p) for p in scene.persons]
    return d


def scene_from_json(d, path="", strict=False):
    _check_keys(d, path, ("format_version", "image_w_px", "image_h_px", "persons"),
                ("kind", "sequence", "skeleton", "camera"), strict)
    _check_version(d, path, "scene")
    skeleton = skeleton_from_json(d.get("skeleton"), _sub(path, "skeleton"), strict)
    camera = camera_from_json(d["camera"], _sub(path, "camera"), strict) if d.get("camera") else None
    if not isinstance(d["persons"], list):
        raise SchemaError("expected a list", _sub(path, "persons"))
    persons = tuple(person_from_json(p, skeleton.root_index, f"{_sub(path, 'persons')}[{i}]",
                                     strict)
                    for i, p in enumerate(d["persons"]))
    n = skeleton.n_joints
    for i, p in enumerate(persons):
        for attr, key in (("keypoints_2d", "keypoints_2d"), ("pose_3d", "pose_3d_mm"),
                          ("gt_keypoints_2d", "gt_keypoints_2d")):
            v = getattr(p, attr)
            if v is not None and v.n_joints != n:
                raise SchemaError(f"has {v.n_joints} joints, skeleton has {n}",
                                  f"{_sub(path, 'persons')}[{i}].{key}")
    return _wrap(path or "scene", Scene, _number(d["image_w_px"], _sub(path, "image_w_px")),
                 _number(d["image_h_px"], _sub(path, "image_h_px")), persons, camera,
                 skeleton, d.get("sequence"))


def scenes_to_json(scenes):
    return {"format_version": FORMAT_VERSION, "kind": "scenes",
            "scenes": [scene_to_json(s) for s in scenes]}


def scenes_from_json(d, strict=False):
    """Accept either a single scene document or a ``kind: scenes`` collection."""
    if isinstance(d, dict) and d.get("kind") == "scenes":
        _check_keys(d, "", ("format_version", "scenes"), ("kind",), strict)
        _check_version(d, "")
        return [scene_from_json(s, f"scenes[{i}]", strict) for i, s in enumerate(d["scenes"])]
    return [scene_from_json(d, "", strict)]


# ---------------------------------------------------------------- placement

def placement_to_json(result, skeleton=DEFAULT_SKELETON, keypoints=None, include_trace=False):
    persons = []
    for i, gp in enumerate(result.global_poses):
        entry = {"translation_mm": [float(x) for x in gp.translation],
                 "pose_3d_mm": pose_to_json(gp.pose),
                 "active": bool(result.active[i]) if result.active else True}
        if keypoints is not None and keypoints[i] is not None:
            entry["keypoints_2d"] = keypoints_to_json(keypoints[i])
        persons.append(entry)
    d = {"format_version": FORMAT_VERSION, "kind": "placement",
         "skeleton": "default" if skeleton == DEFAULT_SKELETON else skeleton_to_json(skeleton),
         "camera": camera_to_json(result.camera),
         "initial_focal_px": _finite_or_none(result.initial_focal),
         "persons": persons,
         "initial_residual_px": result.initial_residual,
         "final_residual_px": result.final_residual,
         "iterations": result.iterations, "converged": result.converged,
         "stop_reason": result.stop_reason}
    if include_trace:
        d["trace_px"] = list(result.trace)
    return d


def placement_from_json(d, strict=False):
    """Return ``(PlacementResult, skeleton, keypoints list)``."""
    _check_keys(d, "", ("format_version", "camera", "persons", "initial_residual_px",
                        "final_residual_px", "iterations", "converged"),
                ("kind", "skeleton", "initial_focal_px", "stop_reason", "trace_px"), strict)
    _check_version(d, "", "placement")
    skeleton = skeleton_from_json(d.get("skeleton"), "skeleton", strict)
    cam = camera_from_json(d["camera"], "camera", strict)
    poses, keypoints, active = [], [], []
    for i, p in enumerate(d["persons"]):
        path = f"persons[{i}]"
        _check_keys(p, path, ("translation_mm", "pose_3d_mm"), ("active", "keypoints_2d"), strict)
        pose = pose_from_json(p["pose_3d_mm"], skeleton.root_index, _sub(path, "pose_3d_mm"))
        poses.append(_wrap(path, GlobalPose, pose, p["translation_mm"]))
        keypoints.append(keypoints_from_json(p["keypoints_2d"], _sub(path, "keypoints_2d"), strict)
                         if "keypoints_2d" in p else None)
        active.append(bool(p.get("active", True)))
    t = np.array([gp.translation for gp in poses]).reshape(-1, 3)
    t.setflags(write=False)
    f0 = d.get("initial_focal_px")
    result = PlacementResult(
        camera=cam, translations=t, global_poses=tuple(poses),
        initial_residual=float(d["initial_residual_px"]),
        final_residual=float(d["final_residual_px"]), iterations=int(d["iterations"]),
        converged=bool(d["converged"]), trace=tuple(float(x) for x in d.get("trace_px", ())),
        active=tuple(active), stop_reason=d.get("stop_reason", ""),
        initial_focal=float("nan") if f0 is None else float(f0))
    return result, skeleton, keypoints


# ---------------------------------------------------------------- datasets / reports / configs

def dataset_to_json(samples, image_w, image_h, skeleton=DEFAULT_SKELETON):
    return {"format_version": FORMAT_VERSION, "kind": "lifting_dataset",
            "image_w_px": image_w, "image_h_px": image_h,
            "skeleton": "default" if skeleton == DEFAULT_SKELETON else skeleton_to_json(skeleton),
            "samples": [{"keypoints_2d_px": _rows(kp.joints), "pose_3d_mm": pose_to_json(pose)}
                        for kp, pose in samples]}


def dataset_from_json(d, strict=False):
    """Return ``(samples, image_w, image_h, skeleton)``."""
    _check_keys(d, "", ("format_version", "image_w_px", "image_h_px", "samples"),
                ("kind", "skeleton"), strict)
    _check_version(d, "", "lifting_dataset")
    skeleton = skeleton_from_json(d.get("skeleton"), "skeleton", strict)
    samples = []
    for i, s in enumerate(d["samples"]):
        path = f"samples[{i}]"
        _check_keys(s, path, ("keypoints_2d_px", "pose_3d_mm"), (), strict)
        kp = _wrap(path, Keypoints2D, _matrix(s["keypoints_2d_px"], 2, _sub(path, "keypoints_2d_px")))
        samples.append((kp, pose_from_json(s["pose_3d_mm"], skeleton.root_index,
                                           _sub(path, "pose_3d_mm"))))
    if not samples:
        raise SchemaError("dataset has no samples", "samples")
    return samples, float(d["image_w_px"]), float(d["image_h_px"]), skeleton


def report_to_json(report):
    d = {"format_version": FORMAT_VERSION, "kind": "eval_report"}
    d.update(report.to_dict())
    return d


def report_from_json(d, strict=False):
    keys = tuple(f.name for f in fields(EvalReport))
    _check_keys(d, "", ("format_version",) + keys, ("kind",), strict)
    _check_version(d, "", "eval_report")
    return EvalReport.from_dict(d)


def synth_config_to_json(cfg):
    d = asdict(cfg)
    d.pop("template", None)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def synth_config_from_json(d, strict=False):
    names = [f.name for f in fields(SynthConfig) if f.name != "template"]
    _check_keys(d, "", (), names, strict)
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items() if k in names}
    return _wrap("", SynthConfig, **kw)


# ---------------------------------------------------------------- files

def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", os.fspath(path)) from exc


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, allow_nan=False)
        fh.write("\n")
