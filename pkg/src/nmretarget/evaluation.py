"""Cycle-reconstruction and end-effector position metrics, plus report I/O."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FrameCountMismatch, SkeletonMismatch, UnknownEndEffector
from .kinematics import motion_fk
from .motion import MotionClip
from .retarget_net import cycle_clip

EE_KEYS = ("head", "left_hand", "right_hand")
DEFAULT_UNIT_SCALE_MM = 10.0  # BVH files in centimetres

# Full-scale figures reported for the original human/robot corpora. They are
# not reproducible without those corpora and only feed report rendering.
REFERENCE = {
    "cycle_mjpe_mm": {"ours": 14.7, "baseline": 32.3},
    "ee_gap_vs_ik_cm": {"open": 9.4, "wipe": 15.4},
    "table1_ee_cm": {
        "open": {"ours": [10.7, 26.1, 17.8], "ik": [11.2, 24.2, 22.5]},
        "wipe": {"ours": [3.8, 31.9, 16.2], "ik": [12.9, 32.2, 36.5]},
    },
}


def _check_pair(skeleton, clip_a: MotionClip, clip_b: MotionClip):
    if clip_a.num_frames != clip_b.num_frames:
        raise FrameCountMismatch(f"clips have {clip_a.num_frames} and {clip_b.num_frames} frames")
    for clip in (clip_a, clip_b):
        diff = skeleton.topology_difference(clip.skeleton)
        if diff is not None:
            raise SkeletonMismatch(f"clip {clip.name!r} does not match skeleton at {diff!r}", diff)


def position_errors(pos_a: np.ndarray, pos_b: np.ndarray) -> np.ndarray:
    """Per-frame mean non-root joint distance for root-local positions ``[N, J, 3]``."""
    d = np.linalg.norm(pos_a[:, 1:] - pos_b[:, 1:], axis=-1)
    return d.mean(axis=1) if d.shape[1] else np.zeros(len(d))


def mean_joint_position_error(skeleton, clip_a: MotionClip, clip_b: MotionClip,
                              unit_scale_mm: float = DEFAULT_UNIT_SCALE_MM) -> float:
    """Mean Euclidean distance over frames and non-root joints, in millimetres."""
    _check_pair(skeleton, clip_a, clip_b)
    if clip_a.num_frames == 0:
        return 0.0
    pa = motion_fk(skeleton, clip_a, root_local=True)
    pb = motion_fk(skeleton, clip_b, root_local=True)
    return float(position_errors(pa, pb).mean() * unit_scale_mm)


def resample_nearest(clip: MotionClip, frames: int) -> MotionClip:
    """Nearest-frame resampling to ``frames`` frames (time-aligned end points)."""
    if frames == clip.num_frames:
        return clip
    if clip.num_frames == 0 or frames == 0:
        return clip.take(np.zeros(0, dtype=int))
    idx = np.rint(np.linspace(0, clip.num_frames - 1, frames)).astype(int)
    return clip.take(idx)


def end_effector_errors(skeleton_a, clip_a: MotionClip, skeleton_b, clip_b: MotionClip,
                        ee_map: dict, unit_scale_cm: float = 1.0) -> dict[str, float]:
    """Mean root-local distance per mapped end effector, in centimetres.

    ``ee_map`` maps a key (e.g. ``"left_hand"``) to ``(joint name in a, joint name in b)``.
    """
    if clip_a.num_frames != clip_b.num_frames:
        raise FrameCountMismatch(f"clips have {clip_a.num_frames} and {clip_b.num_frames} frames")
    names_a, names_b = set(skeleton_a.names), set(skeleton_b.names)
    for key, (ja, jb) in ee_map.items():
        if ja not in names_a:
            raise UnknownEndEffector(f"{key}: joint {ja!r} not in first skeleton")
        if jb not in names_b:
            raise UnknownEndEffector(f"{key}: joint {jb!r} not in second skeleton")
    if clip_a.num_frames == 0:
        return {k: 0.0 for k in ee_map}
    pa = motion_fk(skeleton_a, clip_a, root_local=True)
    pb = motion_fk(skeleton_b, clip_b, root_local=True)
    return {k: float(np.linalg.norm(pa[:, skeleton_a.index(ja)] - pb[:, skeleton_b.index(jb)],
                                    axis=-1).mean() * unit_scale_cm)
            for k, (ja, jb) in ee_map.items()}


def ee_map_from_configs(config_a, config_b) -> dict:
    return {k: (config_a.end_effectors[k], config_b.end_effectors[k]) for k in EE_KEYS}


@dataclass
class MotionMetrics:
    name: str
    frames: int
    mjpe_mm: float | None
    ee_cm: dict = field(default_factory=dict)


@dataclass
class MetricsReport:
    per_motion: list[MotionMetrics] = field(default_factory=list)
    mjpe_mm: float | None = 0.0
    ee_cm: dict = field(default_factory=dict)
    unit_scale_mm: float = DEFAULT_UNIT_SCALE_MM
    reference: dict | None = None

    @property
    def per_motion_mean_mm(self) -> float:
        if not self.per_motion:
            return 0.0
        vals = [m.mjpe_mm for m in self.per_motion]
        return None if None in vals else float(np.mean(vals))

    def to_dict(self) -> dict:
        out = {"aggregate": {"mjpe_mm": self.mjpe_mm, "ee_cm": dict(self.ee_cm)},
               "per_motion": [asdict(m) for m in self.per_motion],
               "unit_scale_mm": self.unit_scale_mm}
        if self.reference is not None:
            out["reference"] = self.reference
        return out

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        agg = d.get("aggregate", {})
        return cls([MotionMetrics(m["name"], int(m["frames"]), _opt_float(m["mjpe_mm"]),
                                  dict(m.get("ee_cm", {}))) for m in d.get("per_motion", [])],
                   _opt_float(agg.get("mjpe_mm", 0.0)), dict(agg.get("ee_cm", {})),
                   float(d.get("unit_scale_mm", DEFAULT_UNIT_SCALE_MM)), d.get("reference"))


def _opt_float(v):
    return None if v is None else float(v)


def aggregate(per_motion, unit_scale_mm=DEFAULT_UNIT_SCALE_MM, reference=None) -> MetricsReport:
    """Frame-weighted pooling of per-motion values.

    A motion without an MJPE (skeletons of different topology) makes the
    pooled MJPE ``None``.
    """
    frames = np.array([m.frames for m in per_motion], dtype=np.float64)
    total = frames.sum()
    if total == 0:
        return MetricsReport(list(per_motion), 0.0, {}, unit_scale_mm, reference)
    vals = [m.mjpe_mm for m in per_motion]
    mjpe = None if None in vals else float(np.dot(frames, vals) / total)
    keys = per_motion[0].ee_cm.keys() if per_motion else ()
    ee = {k: float(np.dot(frames, [m.ee_cm[k] for m in per_motion]) / total) for k in keys}
    return MetricsReport(list(per_motion), mjpe, ee, unit_scale_mm, reference)


def cycle_evaluate(model, home, other, clips, unit_scale_mm: float = DEFAULT_UNIT_SCALE_MM,
                   reference=None) -> MetricsReport:
    """Cycle ``home -> other -> home`` each clip and report MJPE per clip and pooled."""
    home_dom = model.domain(home)
    rows = []
    for clip in clips:
        recon = cycle_clip(model, home_dom, other, clip)
        rows.append(MotionMetrics(clip.name, clip.num_frames,
                                  mean_joint_position_error(home_dom.skeleton, clip, recon,
                                                            unit_scale_mm)))
    return aggregate(rows, unit_scale_mm, reference)


def write_report(report: MetricsReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def read_report(path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def reference_table_rows() -> dict:
    """Table-layout rows for the reference end-effector figures: {motion: {method: [h, l, r]}}."""
    return {m.capitalize(): {"Ours": v["ours"], "IK-based": v["ik"]}
            for m, v in REFERENCE["table1_ee_cm"].items()}


def render_report_table(rows, methods=None) -> str:
    """Aligned text table: one row per motion, Head/L.Hand/R.Hand columns per method.

    ``rows`` is ``{motion: {method: [head, left, right]}}`` or a
    :class:`MetricsReport` (rendered as a single method column group).
    """
    if isinstance(rows, MetricsReport):
        rows = {m.name: {"Model": [m.ee_cm.get(k, float("nan")) for k in EE_KEYS]}
                for m in rows.per_motion}
    if methods is None:
        methods = []
        for by_method in rows.values():
            methods.extend(k for k in by_method if k not in methods)
    sub = ["Head", "L.Hand", "R.Hand"]
    name_w = max([len("Motion")] + [len(n) for n in rows])
    cell = 7
    group_w = len(sub) * (cell + 1) - 1
    lines = [" " * name_w + " | " + " | ".join(m.center(group_w) for m in methods),
             "Motion".ljust(name_w) + " | " + " | ".join(" ".join(s.rjust(cell) for s in sub)
                                                       for _ in methods)]
    lines.insert(1, "-" * len(lines[1]))
    for name, by_method in rows.items():
        groups = []
        for m in methods:
            vals = by_method.get(m)
            groups.append(" ".join((f"{v:.1f}" if vals is not None else "-").rjust(cell)
                                   for v in (vals if vals is not None else [None] * 3)))
        lines.append(name.ljust(name_w) + " | " + " | ".join(groups))
    return "\n".join(lines) + "\n"

