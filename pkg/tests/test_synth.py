import numpy as np
import pytest

from monopose.core import bone_length_sum, perspective_project
from monopose.synth import (TEMPLATE_POSE_MM, SynthConfig, generate_lifting_dataset,
                            generate_scene, sample_pose)


def _bone_lengths(joints, skeleton):
    return np.array([np.linalg.norm(joints[c] - joints[p]) for c, p in skeleton.bones])


def test_config_validation():
    for kw in ({"depth_range_mm": (0.0, 10.0)}, {"depth_range_mm": (5.0, 1.0)},
               {"occlusion_rate": 1.0}, {"n_persons": (0, 2)}, {"noise_sigma_px": -1.0}):
        with pytest.raises(ValueError):
            SynthConfig(**kw)


def test_same_seed_same_scene():
    cfg = SynthConfig(seed=9, noise_sigma_px=1.5, occlusion_rate=0.1)
    assert generate_scene(cfg) == generate_scene(cfg)
    assert generate_scene(cfg) != generate_scene(SynthConfig(seed=10))


def test_noise_free_prediction_is_exact_projection():
    scene = generate_scene(SynthConfig(seed=4, n_persons=(4, 4)))
    assert len(scene.persons) == 4
    for p in scene.persons:
        gp = p.gt_global_pose
        proj = perspective_project(gp.pose, gp.translation, scene.camera)
        np.testing.assert_array_equal(p.keypoints_2d.joints, proj.joints)
        assert p.pose_3d == gp.pose


def test_bone_lengths_within_template_band(skeleton):
    ref = _bone_lengths(TEMPLATE_POSE_MM, skeleton)
    rng = np.random.default_rng(0)
    for _ in range(200):
        pose = sample_pose(rng, SynthConfig())
        assert np.all(pose.joints[0] == 0.0)
        ratio = _bone_lengths(pose.joints, skeleton) / ref
        assert np.all(np.abs(ratio - 1) <= 0.2)


def test_height_variation_scales_people(skeleton):
    rng = np.random.default_rng(1)
    sums = [bone_length_sum(sample_pose(rng, SynthConfig(), scale=s).joints, skeleton)
            for s in (0.8, 1.0, 1.2)]
    assert sums[0] == pytest.approx(0.8 * sums[1]) and sums[2] == pytest.approx(1.2 * sums[1])
    scene = generate_scene(SynthConfig(seed=2, n_persons=(4, 4), height_variation=0.3))
    lengths = [bone_length_sum(p.pose_3d.joints, skeleton) for p in scene.persons]
    assert np.ptp(lengths) > 0.05 * np.mean(lengths)


def test_translations_in_range():
    cfg = SynthConfig(seed=12, n_persons=(4, 4))
    for p in generate_scene(cfg).persons:
        x, y, z = p.gt_global_pose.translation
        assert cfg.lateral_range_mm[0] <= x <= cfg.lateral_range_mm[1]
        assert cfg.vertical_range_mm[0] <= y <= cfg.vertical_range_mm[1]
        assert cfg.depth_range_mm[0] <= z <= cfg.depth_range_mm[1]


def test_noise_and_occlusion():
    cfg = SynthConfig(seed=6, n_persons=(3, 3), noise_sigma_px=2.0, occlusion_rate=0.3)
    scene = generate_scene(cfg)
    resid, hidden = [], 0
    for p in scene.persons:
        vis = p.keypoints_2d.visibility
        assert np.array_equal(~vis, p.gt_occluded)
        assert np.isnan(p.keypoints_2d.joints[~vis]).all()
        resid.append((p.keypoints_2d.joints - p.gt_keypoints_2d.joints)[vis])
        hidden += int((~vis).sum())
    resid = np.concatenate(resid)
    assert 1.0 < resid.std() < 3.0
    assert 0 < hidden < 51
    assert generate_scene(SynthConfig()).persons[0].gt_occluded is None


def test_camera_from_fov():
    cam = SynthConfig(image_w=1000, true_fov_degrees=90).camera()
    assert cam.f == pytest.approx(500.0)
    assert (cam.o_x, cam.o_y) == (500.0, 400.0)


def test_lifting_dataset_contract():
    with pytest.raises(ValueError):
        generate_lifting_dataset(SynthConfig(), 0)
    data = generate_lifting_dataset(SynthConfig(seed=3), 25)
    assert len(data) == 25
    assert all(np.all(pose.joints[0] == 0.0) for _, pose in data)
    again = generate_lifting_dataset(SynthConfig(seed=3), 25)
    assert all(a[0].joints.tobytes() == b[0].joints.tobytes() for a, b in zip(data, again))


def test_lifting_dataset_inside_image():
    cfg = SynthConfig(seed=21)
    data = generate_lifting_dataset(cfg, 10000)
    means = np.array([kp.joints.mean(axis=0) for kp, _ in data])
    inside = ((means >= 0) & (means <= [cfg.image_w, cfg.image_h])).all(axis=1)
    assert inside.mean() >= 0.99
