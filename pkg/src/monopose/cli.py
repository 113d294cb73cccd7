"""``monopose`` command line.

Exit codes: 0 success, 1 other failure, 2 schema error, 3 numerical
failure, 4 degenerate input.  Option values resolve as command-line flag,
then ``--config`` file entry, then built-in default.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import logging
import sys

import numpy as np

from . import io
from .evaluation import MatchConfig, Mode, evaluate, format_report
from .exceptions import MonoposeError, SchemaError
from .heatmap import soft_argmax
from .lifting import LiftingModel, PoseLifter
from .pipeline import PipelineOptions, lift_scene, run_pipeline_file
from .placement import PlacementOptions, place_scene
from .render import render_svg
from .synth import SynthConfig, generate_lifting_dataset, generate_scene

log = logging.getLogger("monopose")

DEFAULTS = {
    "fov": 60.0,
    "max_iters": 200,
    "temperature": 1.0,
    "setting": 1,
    "mode": "all",
    "threshold_mm": 150.0,
    "px_proximity": 40.0,
    "jobs": 1,
    "count": 1000,
    "epochs": 100,
    "hidden_width": 256,
    "learning_rate": 1e-3,
    "batch_size": 32,
    "seed": 0,
}


def _resolve(args):
    """Fill unset options from the config file, then from DEFAULTS."""
    config = {}
    if getattr(args, "config", None) and args.command != "synth":
        config = io.read_json(args.config)
        if not isinstance(config, dict):
            raise SchemaError("config file must hold a JSON object", args.config)
        config = {k.replace("-", "_"): v for k, v in config.items()}
        if args.strict:
            unknown = sorted(set(config) - set(DEFAULTS))
            if unknown:
                raise SchemaError(f"unknown config key(s) {unknown}", args.config)
    for key, default in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, config.get(key, default))
    return args


def _placement_opts(args):
    return PlacementOptions(init_fov_degrees=float(args.fov), max_iterations=int(args.max_iters))


def cmd_synth(args):
    cfg = SynthConfig()
    if args.config:
        cfg = io.synth_config_from_json(io.read_json(args.config), args.strict)
    if args.synth_seed is not None:
        cfg = replace(cfg, seed=int(args.synth_seed))
    if args.kind == "dataset":
        samples = generate_lifting_dataset(cfg, int(args.count))
        io.write_json(io.dataset_to_json(samples, cfg.image_w, cfg.image_h), args.out)
    else:
        io.write_json(io.scene_to_json(generate_scene(cfg, sequence=args.sequence)), args.out)
    return 0


def cmd_decode(args):
    doc = io.read_json(args.heatmaps)
    hm = io.heatmap_from_json(doc, "", args.strict)
    scale, offset = io.heatmap_affine(doc)
    kp = soft_argmax(hm, float(args.temperature), scale, offset)
    out = {"format_version": io.FORMAT_VERSION, "kind": "keypoints_2d"}
    out.update(io.keypoints_to_json(kp))
    io.write_json(out, args.out)
    return 0


def cmd_lift_train(args):
    samples, w, h, skeleton = io.dataset_from_json(io.read_json(args.data), args.strict)
    lifter = PoseLifter(hidden_width=int(args.hidden_width), learning_rate=float(args.learning_rate),
                        n_epochs=int(args.epochs), batch_size=int(args.batch_size), image_w=w,
                        image_h=h, root_index=skeleton.root_index, seed=int(args.seed))
    X = np.stack([kp.joints for kp, _ in samples])
    Y = np.stack([pose.joints for _, pose in samples])
    lifter.fit(X, Y)
    io.write_json(lifter.model_.to_dict(), args.out)
    trace = lifter.loss_trace_
    log.info("training loss %.6g -> %.6g mm^2", trace[0], trace[-1])
    print(f"loss {trace[0]:.6g} -> {trace[-1]:.6g} mm^2 over {len(trace) - 1} epochs")
    return 0


def cmd_lift_infer(args):
    model = LiftingModel.from_dict(io.read_json(args.model))
    doc = io.read_json(args.keypoints)
    if isinstance(doc, dict) and doc.get("kind") == "keypoints_2d":
        kp = io.keypoints_from_json(doc, "", False)
        pose = PoseLifter.from_model(model).lift(kp)
        out = {"format_version": io.FORMAT_VERSION, "kind": "pose_3d",
               "pose_3d_mm": io.pose_to_json(pose)}
    else:
        scenes = io.scenes_from_json(doc, args.strict)
        lifted = [lift_scene(s, model) for s in scenes]
        out = io.scene_to_json(lifted[0]) if len(lifted) == 1 else io.scenes_to_json(lifted)
    io.write_json(out, args.out)
    return 0


def cmd_place(args):
    scenes = io.scenes_from_json(io.read_json(args.scene), args.strict)
    if len(scenes) != 1:
        raise SchemaError("place expects a single scene", "kind")
    scene = scenes[0]
    result = place_scene(scene, _placement_opts(args))
    kps = [p.keypoints_2d for p in scene.persons
           if p.keypoints_2d is not None and p.pose_3d is not None]
    io.write_json(io.placement_to_json(result, scene.skeleton, kps, args.trace), args.out)
    print(f"f = {result.camera.f:.3f} px, residual {result.initial_residual:.4g} -> "
          f"{result.final_residual:.4g} px in {result.iterations} iterations "
          f"({result.stop_reason})")
    return 0


def cmd_eval(args):
    preds = io.scenes_from_json(io.read_json(args.pred), args.strict)
    gts = io.scenes_from_json(io.read_json(args.gt), args.strict)
    if len(preds) != len(gts):
        raise SchemaError(f"{len(preds)} prediction scenes vs {len(gts)} ground-truth scenes",
                          "scenes")
    cfg = MatchConfig(setting=int(args.setting), px_proximity=float(args.px_proximity),
                      pck_threshold_mm=float(args.threshold_mm))
    report = evaluate(list(zip(preds, gts)), cfg, weighted=not args.unweighted)
    if args.report:
        io.write_json(io.report_to_json(report), args.report)
    mode = Mode(args.mode)
    headline = (report.pck_all_annotated if mode == Mode.ALL_ANNOTATED
                else report.pck_detected_only)
    print(format_report(report))
    print(f"3DPCK ({mode.value}) = {headline:.2f}%")
    return 0


def cmd_render(args):
    result, skeleton, keypoints = io.placement_from_json(io.read_json(args.placed), args.strict)
    render_svg(result, args.out, keypoints, skeleton)
    return 0


def _pipeline_one(job):
    scene_path, out_dir, model_path, opts, strict = job
    try:
        return 0, run_pipeline_file(scene_path, out_dir, model_path, opts, strict)
    except MonoposeError as exc:
        return exc.exit_code, f"{scene_path}: {exc}"


def cmd_pipeline(args):
    opts = PipelineOptions(
        temperature=float(args.temperature), placement=_placement_opts(args),
        match=MatchConfig(setting=int(args.setting), px_proximity=float(args.px_proximity),
                          pck_threshold_mm=float(args.threshold_mm)),
        include_trace=args.trace)
    jobs = [(s, args.out_dir, args.model, opts, args.strict) for s in args.scenes]
    if int(args.jobs) > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(args.jobs)) as pool:
            results = list(pool.map(_pipeline_one, jobs))
    else:
        results = [_pipeline_one(j) for j in jobs]
    code = 0
    for status, payload in results:
        if status:
            print(payload, file=sys.stderr)
            code = code or status
        else:
            for path in payload:
                print(path)
    return code


def build_parser():
    parser = argparse.ArgumentParser(prog="monopose", description=__doc__.splitlines()[0])
    parser.add_argument("--strict", action="store_true", help="reject unknown JSON fields")
    parser.add_argument("--config", help="JSON file of option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene or lifting dataset")
    p.add_argument("kind", nargs="?", choices=("scene", "dataset"), default="scene")
    p.add_argument("--config", dest="config", help="SynthConfig JSON")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", dest="synth_seed", type=int)
    p.add_argument("--sequence")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decode", help="soft-argmax a heatmap file into keypoints")
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--temperature", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("lift", help="train or apply the lifting network")
    lift = p.add_subparsers(dest="lift_command", required=True)
    t = lift.add_parser("train")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--hidden-width", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_lift_train)
    i = lift.add_parser("infer")
    i.add_argument("--model", required=True)
    i.add_argument("--keypoints", required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_lift_infer)

    p = sub.add_parser("place", help="place root-relative poses in camera coordinates")
    p.add_argument("--scene", required=True)
    p.add_argument("--fov", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--trace", action="store_true", help="include the residual trace")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("eval", help="multi-person 3DPCK / AUC / MPJPE")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--setting", type=int, choices=(1, 2))
    p.add_argument("--mode", choices=("all", "detected"))
    p.add_argument("--threshold-mm", type=float)
    p.add_argument("--px-proximity", type=float)
    p.add_argument("--unweighted", action="store_true",
                   help="average sequences instead of pooling persons")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="SVG of a placed scene")
    p.add_argument("--placed", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="decode, lift, place and evaluate scene files")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model")
    p.add_argument("--jobs", type=int)
    p.add_argument("--fov", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--setting", type=int, choices=(1, 2))
    p.add_argument("--threshold-mm", type=float)
    p.add_argument("--px-proximity", type=float)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _resolve(args)
        return args.func(args)
    except MonoposeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
