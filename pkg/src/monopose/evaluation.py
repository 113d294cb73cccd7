"""Multi-person 3D pose evaluation.

Predictions are matched to ground truth greedily.  Setting 1 scores a
(ground truth, prediction) pair by the number of 2D joints closer than
``px_proximity``; Setting 2 uses the number of root-aligned 3D joints closer
than ``pck_threshold_mm``.  Metrics are computed on root-aligned poses:

* 3DPCK, either over all annotated persons (missed persons count as wrong)
  or over detected persons only,
* AUC of the PCK curve over a 0-150 mm grid,
* MPJPE over matched persons and non-root joints,
* detection rate.

Per-scene results are kept as integer counts plus float partial sums so
that aggregation does not depend on scene order.
"""

from dataclasses import dataclass, field
import enum
import math

import numpy as np

from .core import GlobalPose, Pose3D
from .exceptions import EmptyMatching

DEFAULT_AUC_THRESHOLDS_MM = tuple(float(t) for t in range(0, 155, 5))


class Setting(enum.IntEnum):
    SETTING1 = 1
    SETTING2 = 2


class Mode(str, enum.Enum):
    ALL_ANNOTATED = "all"
    DETECTED_ONLY = "detected"


@dataclass(frozen=True)
class MatchConfig:
    setting: Setting = Setting.SETTING1
    px_proximity: float = 40.0
    pck_threshold_mm: float = 150.0
    #: Joints used for matching scores; ``None`` means every joint.
    matching_joint_subset: tuple = None
    root_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(int(self.setting)))
        if not (self.px_proximity > 0 and self.pck_threshold_mm > 0):
            raise ValueError("thresholds must be > 0")
        if self.matching_joint_subset is not None:
            object.__setattr__(self, "matching_joint_subset",
                               tuple(int(j) for j in self.matching_joint_subset))


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple
    unmatched_gt: tuple
    unmatched_pred: tuple


def _joints3d(x):
    if isinstance(x, GlobalPose):
        return x.pose.joints
    if isinstance(x, Pose3D):
        return x.joints
    return np.asarray(x, dtype=np.float64)


def joint_errors(pred, gt, root_index=0):
    """Per-joint Euclidean distance after moving both roots to the origin."""
    p = _joints3d(pred)
    g = _joints3d(gt)
    return np.linalg.norm((p - p[root_index]) - (g - g[root_index]), axis=-1)


def _pred_fields(p):
    return getattr(p, "keypoints_2d", None), getattr(p, "pose_3d", None)


def _gt_fields(g):
    gp = getattr(g, "gt_global_pose", None)
    return getattr(g, "gt_keypoints_2d", None), (gp.pose if gp is not None else None)


def score_matrix(predictions, ground_truths, cfg=None):
    """Integer ``(n_gt, n_pred)`` matrix of per-pair matching scores."""
    cfg = cfg or MatchConfig()
    S = np.zeros((len(ground_truths), len(predictions)), dtype=np.int64)
    for gi, g in enumerate(ground_truths):
        g2d, g3d = _gt_fields(g)
        for pi, p in enumerate(predictions):
            p2d, p3d = _pred_fields(p)
            if cfg.setting == Setting.SETTING1:
                if g2d is None or p2d is None:
                    continue
                ok = g2d.visibility & p2d.visibility
                d = np.full(ok.shape, np.inf)
                d[ok] = np.linalg.norm(g2d.joints[ok] - p2d.joints[ok], axis=1)
                hit = d < cfg.px_proximity
            else:
                if g3d is None or p3d is None:
                    continue
                hit = joint_errors(p3d, g3d, cfg.root_index) < cfg.pck_threshold_mm
            if cfg.matching_joint_subset is not None:
                hit = hit[list(cfg.matching_joint_subset)]
            S[gi, pi] = int(hit.sum())
    return S


def greedy_assign(scores):
    """Greedy one-to-one assignment on a ``(n_gt, n_pred)`` score matrix.

    Repeatedly takes the highest positive score among unused rows and
    columns; ties go to the lower ground-truth index, then the lower
    prediction index.
    """
    S = np.array(scores, dtype=np.float64)
    if S.size == 0:
        return []
    pairs = []
    S[S <= 0] = -np.inf
    while True:
        best = S.max()
        if not np.isfinite(best):
            break
        # row-major argmax on the max-mask gives the lexicographic tie-break
        g, p = np.unravel_index(int(np.argmax(S == best)), S.shape)
        pairs.append((int(g), int(p)))
        S[g, :] = -np.inf
        S[:, p] = -np.inf
    return pairs


def greedy_match(predictions, ground_truths, cfg=None):
    scores = score_matrix(predictions, ground_truths, cfg)
    pairs = sorted(greedy_assign(scores))
    used_g = {g for g, _ in pairs}
    used_p = {p for _, p in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_gt=tuple(i for i in range(len(ground_truths)) if i not in used_g),
        unmatched_pred=tuple(i for i in range(len(predictions)) if i not in used_p),
    )


def _n_joints(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    return _joints3d(x).shape[0]


def pck_3d(matched, unmatched_gt=(), mode=Mode.ALL_ANNOTATED, threshold_mm=150.0, root_index=0):
    """Percentage of joints with root-aligned error strictly below ``threshold_mm``.

    ``matched`` holds ``(pred, gt)`` joint sets; ``unmatched_gt`` holds missed
    ground-truth poses (or their joint counts), which count as wrong in
    ``ALL_ANNOTATED`` mode and are ignored in ``DETECTED_ONLY`` mode.  An
    empty denominator yields 100.
    """
    mode = Mode(mode)
    correct = total = 0
    for pred, gt in matched:
        err = joint_errors(pred, gt, root_index)
        correct += int((err < threshold_mm).sum())
        total += err.size
    if mode == Mode.ALL_ANNOTATED:
        total += sum(_n_joints(g) for g in unmatched_gt)
    return 100.0 if total == 0 else 100.0 * correct / total


def auc_pck(matched, unmatched_gt=(), thresholds=DEFAULT_AUC_THRESHOLDS_MM, root_index=0):
    """Mean all-annotated PCK fraction over ``thresholds``.

    A joint counts at threshold ``t`` when its error is ``<= t``, so exact
    predictions score 1.0 including the zero threshold.
    """
    th = np.asarray(thresholds, dtype=np.float64)
    if th.size == 0 or np.any(np.diff(th) < 0):
        raise ValueError("thresholds must be non-empty and ascending")
    errs = [joint_errors(p, g, root_index) for p, g in matched]
    total = sum(e.size for e in errs) + sum(_n_joints(g) for g in unmatched_gt)
    if total == 0:
        return 1.0
    if errs:
        flat = np.concatenate(errs)
        hits = (flat[None, :] <= th[:, None]).sum(axis=1)
    else:
        hits = np.zeros(th.size)
    return float(np.mean(hits / total))


def mpjpe(matched, root_index=0):
    """Mean root-aligned error over matched persons and non-root joints (mm)."""
    if len(matched) == 0:
        raise EmptyMatching("MPJPE needs at least one matched pair")
    errs = []
    for pred, gt in matched:
        e = joint_errors(pred, gt, root_index)
        errs.append(np.delete(e, root_index))
    return float(np.concatenate(errs).mean())


def detection_rate(matched, ground_truths):
    """Matched ground-truth share in percent; 100 when there is no ground truth."""
    n_gt = ground_truths if isinstance(ground_truths, int) else len(ground_truths)
    n_m = matched if isinstance(matched, int) else len(matched)
    return 100.0 if n_gt == 0 else 100.0 * n_m / n_gt


@dataclass
class EvalCounts:
    """Order-independent sufficient statistics of one or more scenes."""

    n_gt: int = 0
    n_matched: int = 0
    correct: int = 0
    matched_joints: int = 0
    missed_joints: int = 0
    occluded_correct: int = 0
    occluded_total: int = 0
    has_occlusion: bool = False
    mpjpe_parts: list = field(default_factory=list)
    mpjpe_count: int = 0
    auc_hits: np.ndarray = None

    def merge(self, other):
        hits = None
        if self.auc_hits is None:
            hits = None if other.auc_hits is None else other.auc_hits.copy()
        else:
            hits = self.auc_hits + (0 if other.auc_hits is None else other.auc_hits)
        return EvalCounts(
            self.n_gt + other.n_gt, self.n_matched + other.n_matched,
            self.correct + other.correct, self.matched_joints + other.matched_joints,
            self.missed_joints + other.missed_joints,
            self.occluded_correct + other.occluded_correct,
            self.occluded_total + other.occluded_total,
            self.has_occlusion or other.has_occlusion,
            self.mpjpe_parts + other.mpjpe_parts, self.mpjpe_count + other.mpjpe_count,
            hits)

    def metrics(self, thresholds=DEFAULT_AUC_THRESHOLDS_MM):
        all_total = self.matched_joints + self.missed_joints
        out = {
            "pck_all_annotated": 100.0 if all_total == 0 else 100.0 * self.correct / all_total,
            "pck_detected_only": (100.0 if self.matched_joints == 0
                                  else 100.0 * self.correct / self.matched_joints),
            "pck_occluded": None,
            "auc": 1.0,
            "mpjpe_mm": (math.fsum(self.mpjpe_parts) / self.mpjpe_count
                         if self.mpjpe_count else None),
            "detection_rate": detection_rate(self.n_matched, self.n_gt),
            "n_gt": self.n_gt,
            "n_matched": self.n_matched,
        }
        if self.has_occlusion:
            out["pck_occluded"] = (100.0 if self.occluded_total == 0
                                   else 100.0 * self.occluded_correct / self.occluded_total)
        if all_total and self.auc_hits is not None:
            out["auc"] = float(np.mean(self.auc_hits / all_total))
        elif all_total:
            out["auc"] = 0.0
        return out


@dataclass(frozen=True)
class EvalReport:
    pck_all_annotated: float
    pck_detected_only: float
    pck_occluded: float
    auc: float
    mpjpe_mm: float
    detection_rate: float
    n_gt: int
    n_matched: int
    setting: int
    threshold_mm: float
    weighted: bool
    per_sequence: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "pck_all_annotated": self.pck_all_annotated,
            "pck_detected_only": self.pck_detected_only,
            "pck_occluded": self.pck_occluded,
            "auc": self.auc,
            "mpjpe_mm": self.mpjpe_mm,
            "detection_rate": self.detection_rate,
            "n_gt": self.n_gt,
            "n_matched": self.n_matched,
            "setting": self.setting,
            "threshold_mm": self.threshold_mm,
            "weighted": self.weighted,
            "per_sequence": {k: dict(v) for k, v in self.per_sequence.items()},
        }

    @classmethod
    def from_dict(cls, d):
        keys = cls.__dataclass_fields__
        return cls(**{k: d[k] for k in keys if k in d})


def scene_counts(predictions, ground_truths, cfg=None, thresholds=DEFAULT_AUC_THRESHOLDS_MM):
    """Match one scene and reduce it to :class:`EvalCounts`."""
    cfg = cfg or MatchConfig()
    m = greedy_match(predictions, ground_truths, cfg)
    th = np.asarray(thresholds, dtype=np.float64)
    c = EvalCounts(n_gt=len(ground_truths), n_matched=len(m.pairs), auc_hits=np.zeros(th.size, int))
    for g, p in m.pairs:
        gt = ground_truths[g]
        err = joint_errors(predictions[p].pose_3d, gt.gt_global_pose, cfg.root_index)
        ok = err < cfg.pck_threshold_mm
        c.correct += int(ok.sum())
        c.matched_joints += err.size
        c.auc_hits += (err[None, :] <= th[:, None]).sum(axis=1)
        c.mpjpe_parts.append(float(np.delete(err, cfg.root_index).sum()))
        c.mpjpe_count += err.size - 1
        occ = getattr(gt, "gt_occluded", None)
        if occ is not None:
            c.has_occlusion = True
            c.occluded_correct += int((ok & occ).sum())
            c.occluded_total += int(occ.sum())
    for g in m.unmatched_gt:
        gt = ground_truths[g]
        c.missed_joints += gt.gt_global_pose.pose.n_joints
        occ = getattr(gt, "gt_occluded", None)
        if occ is not None:
            c.has_occlusion = True
            c.occluded_total += int(occ.sum())
    return c


def evaluate(scene_pairs, cfg=None, weighted=True, thresholds=DEFAULT_AUC_THRESHOLDS_MM):
    """Evaluate ``(pred_scene, gt_scene)`` pairs and build an :class:`EvalReport`.

    Overall numbers pool all joints (person-weighted) or, with
    ``weighted=False``, average the per-sequence numbers.
    """
    cfg = cfg or MatchConfig()
    by_seq = {}
    for pred_scene, gt_scene in scene_pairs:
        preds = [p for p in pred_scene.persons if p.pose_3d is not None]
        gts = [g for g in gt_scene.persons if g.gt_global_pose is not None]
        key = gt_scene.sequence or pred_scene.sequence or "all"
        c = scene_counts(preds, gts, cfg, thresholds)
        by_seq[key] = by_seq[key].merge(c) if key in by_seq else c
    per_seq = {k: by_seq[k].metrics(thresholds) for k in sorted(by_seq)}
    total = EvalCounts(auc_hits=np.zeros(len(thresholds), int))
    for k in sorted(by_seq):
        total = total.merge(by_seq[k])
    overall = total.metrics(thresholds)
    if not weighted and per_seq:
        for name in ("pck_all_annotated", "pck_detected_only", "pck_occluded", "auc",
                     "mpjpe_mm", "detection_rate"):
            vals = [v[name] for v in per_seq.values() if v[name] is not None]
            overall[name] = math.fsum(vals) / len(vals) if vals else None
    return EvalReport(
        pck_all_annotated=overall["pck_all_annotated"],
        pck_detected_only=overall["pck_detected_only"],
        pck_occluded=overall["pck_occluded"], auc=overall["auc"],
        mpjpe_mm=overall["mpjpe_mm"], detection_rate=overall["detection_rate"],
        n_gt=overall["n_gt"], n_matched=overall["n_matched"], setting=int(cfg.setting),
        threshold_mm=cfg.pck_threshold_mm, weighted=weighted, per_sequence=per_seq)


def format_report(report):
    """Aligned text table: one row per sequence plus a total row."""
    cols = ("PCK-all", "PCK-det", "PCK-occ", "AUC", "MPJPE", "Det%")
    head = f"{'sequence':<12}" + "".join(f"{c:>10}" for c in cols)
    lines = [f"Setting {report.setting}, PCK threshold {report.threshold_mm:g} mm", head,
             "-" * len(head)]

    def row(name, m):
        cells = [m["pck_all_annotated"], m["pck_detected_only"], m["pck_occluded"],
                 m["auc"], m["mpjpe_mm"], m["detection_rate"]]
        txt = "".join(f"{'-':>10}" if v is None else f"{v:>10.{3 if i == 3 else 1}f}"
                      for i, v in enumerate(cells))
        return f"{name:<12}" + txt

    for name, m in report.per_sequence.items():
        lines.append(row(name, m))
    lines.append("-" * len(head))
    lines.append(row("total", report.to_dict()))
    return "\n".join(lines)
