import xml.etree.ElementTree as ET

import numpy as np

from monopose.core import CameraIntrinsics
from monopose.placement import PlacementResult, place_scene
from monopose.render import render_svg, svg_document
from monopose.synth import SynthConfig, generate_scene

NS = "{http://www.w3.org/2000/svg}"


def _classes(root, tag, cls):
    return [e for e in root.iter(NS + tag) if e.get("class") == cls]


def test_empty_scene_renders_frame_only(tmp_path):
    empty = PlacementResult(CameraIntrinsics.centered(800.0, 640, 480), np.zeros((0, 3)), (),
                            0.0, 0.0, 0, True)
    root = ET.fromstring(render_svg(empty, tmp_path / "e.svg").split("\n", 1)[1])
    assert len(_classes(root, "rect", "frame")) == 1
    assert not _classes(root, "g", "skeleton") and not _classes(root, "circle", "root")


def test_two_person_scene_counts(tmp_path):
    scene = generate_scene(SynthConfig(seed=1, n_persons=(2, 2)))
    result = place_scene(scene)
    kps = [p.keypoints_2d for p in scene.persons]
    out = tmp_path / "two.svg"
    text = render_svg(result, out, kps)
    assert out.read_text() == text
    root = ET.parse(out).getroot()
    groups = _classes(root, "g", "skeleton")
    assert len(groups) == 2
    assert len(_classes(root, "circle", "root")) == 2
    assert all(len(list(g.iter(NS + "line"))) == 16 for g in groups)
    assert all(len(list(g.iter(NS + "circle"))) == 17 for g in groups)


def test_minimap_preserves_depth_order():
    scene = generate_scene(SynthConfig(seed=3, n_persons=(3, 3)))
    result = place_scene(scene)
    root = ET.fromstring(svg_document(result).split("\n", 1)[1])
    cy = [float(c.get("cy")) for c in _classes(root, "circle", "root")]
    z = result.translations[:, 2]
    # farther people sit higher in the top-down map
    assert list(np.argsort(cy)) == list(np.argsort(-z))


def test_render_deterministic(clean_scene):
    result = place_scene(clean_scene)
    assert svg_document(result) == svg_document(place_scene(clean_scene))
