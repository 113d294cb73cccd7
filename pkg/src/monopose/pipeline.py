"""End-to-end wiring: decode -> lift -> place -> evaluate.

Each stage is optional and driven by what the scene carries: heatmaps
trigger decoding, a lifting model triggers lifting, ground truth triggers
evaluation.  Errors are re-raised as :class:`StageError` tagged with the
failing stage.
"""

from dataclasses import dataclass, field
import os

from . import io
from .core import Keypoints2D
from .evaluation import MatchConfig, evaluate, format_report
from .exceptions import MonoposeError, StageError
from .heatmap import Heatmap, soft_argmax
from .lifting import LiftingModel, PoseLifter
from .placement import PlacementOptions, place_scene


@dataclass(frozen=True)
class PipelineOptions:
    temperature: float = 1.0
    placement: PlacementOptions = field(default_factory=PlacementOptions)
    match: MatchConfig = field(default_factory=MatchConfig)
    weighted: bool = True
    include_trace: bool = False


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except MonoposeError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc
    except (ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def decode_scene(scene, temperature=1.0):
    persons = []
    for p in scene.persons:
        if p.heatmaps is None:
            persons.append(p)
            continue
        if isinstance(p.heatmaps, Heatmap):
            hm, (scale, offset) = p.heatmaps, (1.0, (0.0, 0.0))
        else:
            hm, (scale, offset) = io.heatmap_from_json(p.heatmaps), io.heatmap_affine(p.heatmaps)
        persons.append(p.replace(keypoints_2d=soft_argmax(hm, temperature, scale, offset)))
    return scene.replace(persons=tuple(persons))


def _fill_hidden(kp):
    joints = kp.joints.copy()
    if not kp.visibility.all():
        if not kp.visibility.any():
            raise ValueError("cannot lift a person without visible joints")
        joints[~kp.visibility] = joints[kp.visibility].mean(axis=0)
    return joints


def lift_scene(scene, model):
    lifter = model if isinstance(model, PoseLifter) else PoseLifter.from_model(model)
    persons = []
    for p in scene.persons:
        if p.keypoints_2d is None:
            persons.append(p)
            continue
        pose = lifter.lift(Keypoints2D(_fill_hidden(p.keypoints_2d)))
        persons.append(p.replace(pose_3d=pose))
    return scene.replace(persons=tuple(persons))


def run_pipeline(scene, model=None, opts=None):
    """Run every applicable stage on ``scene``.

    Returns a dict with ``decoded`` / ``lifted`` scenes (when those stages
    ran), ``placement`` (a :class:`PlacementResult`), ``placed_scene`` and
    ``report`` (an :class:`EvalReport` or ``None``).
    """
    opts = opts or PipelineOptions()
    out = {}
    if any(p.heatmaps is not None for p in scene.persons):
        scene = _stage("decode", decode_scene, scene, opts.temperature)
        out["decoded"] = scene
    if model is not None:
        scene = _stage("lift", lift_scene, scene, model)
        out["lifted"] = scene
    result = _stage("place", place_scene, scene, opts.placement)
    out["placement"] = result
    out["placed_scene"] = scene
    out["report"] = None
    if any(p.gt_global_pose is not None for p in scene.persons):
        out["report"] = _stage("eval", evaluate, [(scene, scene)], opts.match, opts.weighted)
    return out


def load_model(path):
    return LiftingModel.from_dict(io.read_json(path))


def run_pipeline_file(scene_path, out_dir, model_path=None, opts=None, strict=False):
    """File-level pipeline; writes one JSON artifact per stage into ``out_dir``.

    Artifacts are prefixed with the input file stem so several scenes can
    share an output directory.  Returns the list of written paths.
    """
    opts = opts or PipelineOptions()
    scenes = _stage("read", lambda: io.scenes_from_json(io.read_json(scene_path), strict))
    if len(scenes) != 1:
        raise StageError("read", ValueError("pipeline expects a single scene per file"))
    model = _stage("read", load_model, model_path) if model_path else None
    out = run_pipeline(scenes[0], model, opts)
    stem = os.path.splitext(os.path.basename(scene_path))[0]
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name, doc):
        path = os.path.join(out_dir, f"{stem}.{name}.json")
        io.write_json(doc, path)
        written.append(path)

    if "decoded" in out:
        emit("decoded", io.scene_to_json(out["decoded"]))
    if "lifted" in out:
        emit("lifted", io.scene_to_json(out["lifted"]))
    placed = out["placed_scene"]
    kps = [p.keypoints_2d for p in placed.persons
           if p.keypoints_2d is not None and p.pose_3d is not None]
    emit("placed", io.placement_to_json(out["placement"], placed.skeleton, kps,
                                        opts.include_trace))
    if out["report"] is not None:
        emit("report", io.report_to_json(out["report"]))
        with open(os.path.join(out_dir, f"{stem}.report.txt"), "w") as fh:
            fh.write(format_report(out["report"]) + "\n")
    return written
