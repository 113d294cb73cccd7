import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from monopose.core import GlobalPose, Keypoints2D, PersonRecord, Pose3D, Scene
from monopose.evaluation import (DEFAULT_AUC_THRESHOLDS_MM, EvalReport, MatchConfig, Mode,
                                 Setting, auc_pck, detection_rate, evaluate, format_report,
                                 greedy_assign, greedy_match, mpjpe, pck_3d, scene_counts,
                                 score_matrix)
from monopose.exceptions import EmptyMatching
from monopose.synth import SynthConfig, generate_scene
from oracles import auc_loop, greedy_simulation, mpjpe_loop, noisy_predictions, pck_loop


def _shift(joints, j, dx):
    out = np.array(joints, dtype=float)
    out[j, 0] += dx
    return out


def _gt_as_pred(scene):
    return scene.replace(persons=tuple(
        PersonRecord(keypoints_2d=p.gt_keypoints_2d, pose_3d=p.pose_3d) for p in scene.persons))


# ------------------------------------------------------------------ config

def test_match_config_defaults():
    cfg = MatchConfig()
    assert cfg.setting == Setting.SETTING1
    assert cfg.px_proximity == 40.0 and cfg.pck_threshold_mm == 150.0
    assert cfg.matching_joint_subset is None
    assert DEFAULT_AUC_THRESHOLDS_MM[0] == 0 and DEFAULT_AUC_THRESHOLDS_MM[-1] == 150
    assert len(DEFAULT_AUC_THRESHOLDS_MM) == 31
    with pytest.raises(ValueError):
        MatchConfig(px_proximity=0)
    with pytest.raises(ValueError):
        MatchConfig(setting=3)


# ------------------------------------------------------------------ greedy

def test_greedy_crafted_matrix():
    S = [[5, 9, 1],
         [9, 3, 0],
         [2, 8, 7]]
    # 9 at (0,1) beats 9 at (1,0) on gt index; then (1,0); then (2,2)
    assert greedy_assign(S) == [(0, 1), (1, 0), (2, 2)]
    assert greedy_assign(S) == greedy_simulation(S)


def test_greedy_ignores_zero_scores():
    assert greedy_assign([[0, 0], [0, 3]]) == [(1, 1)]
    assert greedy_assign(np.zeros((0, 3))) == []


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.data())
def test_greedy_equals_simulation(n_gt, n_pred, data):
    S = data.draw(arrays(np.int64, (n_gt, n_pred), elements=st.integers(0, 4)))
    got = greedy_assign(S)
    assert got == greedy_simulation(S.tolist())
    gs = [g for g, _ in got]
    ps = [p for _, p in got]
    assert len(set(gs)) == len(gs) and len(set(ps)) == len(ps)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.randoms(use_true_random=False))
def test_greedy_permutation_invariant_for_distinct_scores(n, rnd):
    values = list(range(1, n * n + 1))
    rnd.shuffle(values)
    S = np.array(values).reshape(n, n)
    perm = list(range(n))
    rnd.shuffle(perm)
    base = {(g, p) for g, p in greedy_assign(S)}
    permuted = {(g, perm[p]) for g, p in greedy_assign(S[:, perm])}
    assert base == permuted


def test_two_separated_people_match_regardless_of_order(clean_scene):
    gt = list(clean_scene.persons[:2])
    preds = [PersonRecord(keypoints_2d=p.gt_keypoints_2d, pose_3d=p.pose_3d) for p in gt]
    for cfg in (MatchConfig(setting=1), MatchConfig(setting=2)):
        assert greedy_match(preds, gt, cfg).pairs == ((0, 0), (1, 1))
        assert greedy_match(preds[::-1], gt, cfg).pairs == ((0, 1), (1, 0))


def test_setting1_score_counts_close_joints():
    base = np.tile([[100.0, 100.0]], (17, 1)) + np.arange(17)[:, None] * 10
    gt = PersonRecord(gt_keypoints_2d=Keypoints2D(base),
                      gt_global_pose=GlobalPose(Pose3D(np.zeros((17, 3))), [0, 0, 1000]))
    moved = base.copy()
    moved[:5] += [40.0, 0.0]   # exactly at the proximity: not counted
    moved[5:7] += [39.0, 0.0]
    pred = PersonRecord(keypoints_2d=Keypoints2D(moved), pose_3d=Pose3D(np.zeros((17, 3))))
    assert score_matrix([pred], [gt]).tolist() == [[12]]
    subset = MatchConfig(matching_joint_subset=(0, 1, 5, 10))
    assert score_matrix([pred], [gt], subset).tolist() == [[2]]


def test_setting2_identical_gets_max_score(clean_scene):
    preds = [PersonRecord(pose_3d=p.pose_3d) for p in clean_scene.persons]
    S = score_matrix(preds, clean_scene.persons, MatchConfig(setting=2))
    assert np.all(np.diag(S) == 17)


def test_empty_matching():
    m = greedy_match([], [])
    assert m.pairs == () and m.unmatched_gt == () and m.unmatched_pred == ()


# ------------------------------------------------------------------ pck / auc / mpjpe

def test_pck_counting_rule(random_pose):
    a = random_pose()
    assert pck_3d([(a, a)]) == 100.0
    b = random_pose()
    assert pck_3d([(a, a)], [b]) == 50.0
    assert pck_3d([(a, a)], [b], Mode.DETECTED_ONLY) == 100.0
    assert pck_3d([], [], Mode.DETECTED_ONLY) == 100.0


def test_pck_threshold_is_strict():
    gt = np.zeros((2, 3))
    assert pck_3d([(_shift(gt, 1, 149.999), gt)]) == 100.0
    assert pck_3d([(_shift(gt, 1, 150.001), gt)]) == 50.0
    assert pck_3d([(_shift(gt, 1, 150.0), gt)]) == 50.0


def test_pck_root_alignment(random_pose):
    a = random_pose()
    assert pck_3d([(a + [1e4, -3e3, 9e3], a)]) == 100.0


def test_auc_examples(random_pose):
    a = random_pose()
    assert auc_pck([(a, a)]) == 1.0
    gt = np.zeros((2, 3))
    pred = _shift(gt, 1, 72.5)  # between grid points 70 and 75
    # root always counts; joint 1 counts for thresholds 75..150 (16 of 31)
    assert auc_pck([(pred, gt)]) == pytest.approx((31 + 16) / (2 * 31), abs=1e-12)
    with pytest.raises(ValueError):
        auc_pck([(a, a)], thresholds=(10, 5))


def test_auc_not_above_pck_at_grid_max(rng, random_pose):
    for _ in range(10):
        a = random_pose()
        pairs = [(a + rng.normal(scale=100, size=a.shape), a)]
        assert auc_pck(pairs) <= pck_3d(pairs, threshold_mm=150.0 + 1e-9) / 100 + 1e-12


def test_mpjpe_examples(random_pose):
    a = random_pose()
    assert mpjpe([(a, a)]) == 0.0
    b = a + [10.0, 0, 0]
    b[0] = a[0]
    assert mpjpe([(b, a)]) == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(EmptyMatching):
        mpjpe([])


def test_metrics_match_scalar_oracles(rng, random_pose):
    for _ in range(10):
        matched = [(random_pose() * 0.2, random_pose() * 0.2) for _ in range(rng.integers(1, 4))]
        missed = [17] * int(rng.integers(0, 3))
        for t in (50.0, 150.0):
            for all_annotated, mode in ((True, Mode.ALL_ANNOTATED), (False, Mode.DETECTED_ONLY)):
                assert abs(pck_3d(matched, missed, mode, t)
                           - pck_loop(matched, missed, t, all_annotated)) < 1e-9
        assert abs(auc_pck(matched, missed)
                   - auc_loop(matched, missed, DEFAULT_AUC_THRESHOLDS_MM)) < 1e-9
        assert abs(mpjpe(matched) - mpjpe_loop(matched)) < 1e-9


def test_detection_rate_examples():
    assert detection_rate(2, 2) == 100.0
    assert detection_rate([(0, 0)], [1, 2]) == 50.0
    assert detection_rate(0, 0) == 100.0


# ------------------------------------------------------------------ reports

def test_gt_as_prediction_is_perfect(clean_scene):
    for setting in (1, 2):
        rep = evaluate([(_gt_as_pred(clean_scene), clean_scene)], MatchConfig(setting=setting))
        assert rep.pck_all_annotated == 100.0 and rep.mpjpe_mm == 0.0
        assert rep.detection_rate == 100.0 and rep.auc == 1.0
        assert rep.pck_occluded is None


def test_missed_person_report(clean_scene):
    pred = _gt_as_pred(clean_scene)
    pred = pred.replace(persons=pred.persons[:2])
    rep = evaluate([(pred, clean_scene)])
    assert rep.pck_all_annotated == pytest.approx(200 / 3)
    assert rep.pck_detected_only == 100.0
    assert rep.detection_rate == pytest.approx(200 / 3)
    assert rep.n_gt == 3 and rep.n_matched == 2


def _random_pairs(seed, n=12):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        gt = generate_scene(SynthConfig(seed=seed * 100 + i, occlusion_rate=0.2),
                            sequence=f"seq{i % 3}")
        out.append((noisy_predictions(gt, rng), gt))
    return out


def test_report_matches_oracles_on_random_scenes():
    pairs = _random_pairs(1)
    cfg = MatchConfig(setting=1)
    rep = evaluate(pairs, cfg)
    matched, missed = [], []
    for pred, gt in pairs:
        m = greedy_match(pred.persons, gt.persons, cfg)
        matched += [(pred.persons[p].pose_3d.joints, gt.persons[g].pose_3d.joints)
                    for g, p in m.pairs]
        missed += [17] * len(m.unmatched_gt)
    assert abs(rep.pck_all_annotated - pck_loop(matched, missed, 150.0)) < 1e-9
    assert abs(rep.pck_detected_only - pck_loop(matched, missed, 150.0, False)) < 1e-9
    assert abs(rep.auc - auc_loop(matched, missed, DEFAULT_AUC_THRESHOLDS_MM)) < 1e-9
    assert abs(rep.mpjpe_mm - mpjpe_loop(matched)) < 1e-9
    assert rep.pck_detected_only >= rep.pck_all_annotated
    assert rep.pck_occluded is not None and 0 <= rep.pck_occluded <= 100
    assert set(rep.per_sequence) == {"seq0", "seq1", "seq2"}


def test_aggregation_is_order_independent():
    pairs = _random_pairs(2)
    a = evaluate(pairs)
    shuffled = list(pairs)
    random.Random(4).shuffle(shuffled)
    assert evaluate(shuffled) == a
    b = evaluate(shuffled, weighted=False)
    vals = [v["pck_all_annotated"] for v in b.per_sequence.values()]
    assert b.pck_all_annotated == pytest.approx(sum(vals) / len(vals))


def test_counts_merge_is_associative():
    pairs = _random_pairs(3, n=3)
    cs = [scene_counts(p.persons, g.persons) for p, g in pairs]
    left = cs[0].merge(cs[1]).merge(cs[2]).metrics()
    right = cs[0].merge(cs[1].merge(cs[2])).metrics()
    assert left == right


def test_report_ranges_and_round_trip():
    rep = evaluate(_random_pairs(4, n=4), MatchConfig(setting=2))
    for v in (rep.pck_all_annotated, rep.pck_detected_only, rep.detection_rate):
        assert 0 <= v <= 100
    assert 0 <= rep.auc <= 1
    assert EvalReport.from_dict(rep.to_dict()) == rep
    text = format_report(rep)
    assert "Setting 2" in text and "total" in text


def test_empty_ground_truth_is_vacuous():
    scene = Scene(100, 100)
    rep = evaluate([(scene, scene)])
    assert rep.detection_rate == 100.0 and rep.pck_all_annotated == 100.0
    assert rep.mpjpe_mm is None
