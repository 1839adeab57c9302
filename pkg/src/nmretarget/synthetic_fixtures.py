"""Deterministic paired-skeleton motion corpora for tests and desk-scale training.

Domain A ("human") is an upper-body skeleton; domain B ("robot") scales
every link and splits each upper-arm link with one extra actuated joint, so
the two domains differ in both proportions and joint count.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rotations as rot
from .bvh_io import save_bvh
from .errors import ConfigError
from .motion import MotionClip, clip_to_document
from .skeleton_model import Joint, JointKind, Skeleton, SkeletonConfig, bind_config, save_skeleton_config

ROOT_CHANNELS = ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation")
ROT_CHANNELS = ("Zrotation", "Xrotation", "Yrotation")
FRAME_TIME = 0.02  # 50 Hz


@dataclass
class FixtureSpec:
    seed: int = 42
    motions: int = 20
    frames: int = 200
    heldout: int = 0
    scale: float = 1.3
    upper_arm: float = 1.0
    forearm: float = 0.9
    freq_band: tuple[float, float] = (0.2, 1.2)
    amplitude_deg: float = 25.0
    harmonics: int = 2

    def validate(self):
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        lo, hi = self.freq_band
        if not 0 <= lo <= hi < 0.5 / FRAME_TIME:
            raise ConfigError(f"frequency band {self.freq_band} must lie below Nyquist "
                              f"({0.5 / FRAME_TIME} Hz)")
        if self.motions < 0 or self.frames < 0 or self.heldout < 0:
            raise ConfigError("counts must be non-negative")
        if self.amplitude_deg * self.harmonics * 3 >= 180:
            raise ConfigError("amplitude too large for sign-continuous quaternions")

    @classmethod
    def from_dict(cls, d) -> "FixtureSpec":
        d = dict(d)
        if "freq_band" in d:
            d["freq_band"] = tuple(d["freq_band"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown fixture fields {sorted(unknown)}")
        return cls(**d)


@dataclass
class DomainFixture:
    skeleton: Skeleton
    config: SkeletonConfig
    clips: list[MotionClip]
    heldout: list[MotionClip] = field(default_factory=list)


@dataclass
class Fixture:
    human: DomainFixture
    robot: DomainFixture


# --- skeletons -----------------------------------------------------------------------

def _build(rows, scale):
    """rows: (name, parent name, offset, kind, part)."""
    index = {}
    joints, kinds, parts = [], {}, {}
    for name, parent, offset, kind, part in rows:
        if kind is JointKind.END_EFFECTOR:
            channels = ()
        elif parent is None:
            channels = ROOT_CHANNELS
        else:
            channels = ROT_CHANNELS
        off = tuple(float(v) * scale for v in offset)
        joints.append(Joint(name, None if parent is None else index[parent], off, channels))
        index[name] = len(joints) - 1
        kinds[name] = kind
        parts[name] = part
    return Skeleton(tuple(joints)), kinds, parts


def make_skeletons(spec: FixtureSpec):
    """Return ``((human_skeleton, human_config), (robot_skeleton, robot_config))``."""
    A, F, E = JointKind.ACTUATED, JointKind.FIXED, JointKind.END_EFFECTOR
    ua, fa = spec.upper_arm, spec.forearm

    def rows(extra_joint):
        out = [
            ("Hips", None, (0, 0, 0), F, 0),
            ("Spine", "Hips", (0, 1.0, 0), A, 0),
            ("Chest", "Spine", (0, 1.0, 0), F, 0),
            ("Neck", "Chest", (0, 0.6, 0), A, 1),
            ("Head", "Neck", (0, 0.4, 0), A, 1),
            ("Head_end", "Head", (0, 0.4, 0), E, 1),
        ]
        for side, sign, part in (("Left", 1.0, 2), ("Right", -1.0, 3)):
            out.append((f"{side}Shoulder", "Chest", (sign * 0.6, 0, 0), A, part))
            if extra_joint:
                out.append((f"{side}UpperArmRoll", f"{side}Shoulder", (sign * ua / 2, 0, 0), A, part))
                out.append((f"{side}Elbow", f"{side}UpperArmRoll", (sign * ua / 2, 0, 0), A, part))
            else:
                out.append((f"{side}Elbow", f"{side}Shoulder", (sign * ua, 0, 0), A, part))
            out.append((f"{side}Wrist", f"{side}Elbow", (sign * fa, 0, 0), A, part))
            out.append((f"{side}Wrist_end", f"{side}Wrist", (sign * fa, 0, 0), E, part))
        return out

    result = []
    for extra, scale in ((False, 1.0), (True, spec.scale)):
        sk, kinds, parts = _build(rows(extra), scale)
        height = float(np.sum([sk.offsets[sk.index(n)][1]
                               for n in ("Spine", "Chest", "Neck", "Head", "Head_end")]))
        config = SkeletonConfig(
            kinds=kinds, parts=parts,
            end_effectors={"head": "Head_end", "left_hand": "LeftWrist_end",
                           "right_hand": "RightWrist_end"},
            height=height, chest="Chest")
        result.append((bind_config(sk, config), config))
    return tuple(result)


# --- motions ---------------------------------------------------------------------------

def _motion(rng, skeleton: Skeleton, spec: FixtureSpec, name: str) -> MotionClip:
    n = spec.frames
    t = np.arange(n) * FRAME_TIME
    lo, hi = spec.freq_band
    quats = rot.identity((n, len(skeleton)))
    actuated = skeleton.actuated_mask
    height = skeleton.offsets[:, 1].clip(min=0).sum()
    for j in range(len(skeleton)):
        if not actuated[j]:
            continue
        angles = np.zeros((n, 3))
        for axis in range(3):
            for _ in range(spec.harmonics):
                amp = rng.uniform(0.2, 1.0) * spec.amplitude_deg
                freq = rng.uniform(lo, hi)
                phase = rng.uniform(0, 2 * np.pi)
                angles[:, axis] += amp * np.sin(2 * np.pi * freq * t + phase)
        quats[:, j] = rot.quat_canonical(rot.euler_to_quaternion(angles, "ZXY"))
    root = np.zeros((n, 3))
    for axis in range(3):
        amp = rng.uniform(0.0, 0.05) * height
        freq = rng.uniform(lo, hi)
        phase = rng.uniform(0, 2 * np.pi)
        root[:, axis] = amp * np.sin(2 * np.pi * freq * t + phase)
    return MotionClip(skeleton, root, quats, FRAME_TIME, name)


def make_fixture(spec: FixtureSpec | None = None) -> Fixture:
    spec = spec or FixtureSpec()
    spec.validate()
    (hs, hc), (rs, rc) = make_skeletons(spec)
    rng = np.random.default_rng(spec.seed)
    # independent child streams keep each corpus stable when counts change
    streams = rng.spawn(4)
    domains = []
    for (sk, cfg), train_rng, held_rng, prefix in (
            ((hs, hc), streams[0], streams[2], "human"),
            ((rs, rc), streams[1], streams[3], "robot")):
        clips = [_motion(train_rng, sk, spec, f"{prefix}_{i:03d}") for i in range(spec.motions)]
        held = [_motion(held_rng, sk, spec, f"{prefix}_heldout_{i:03d}") for i in range(spec.heldout)]
        domains.append(DomainFixture(sk, cfg, clips, held))
    return Fixture(*domains)


def write_fixture(fixture: Fixture, out_dir, precision: int = 6, spec: FixtureSpec | None = None) -> Path:
    """Write ``{human,robot}/{*.bvh, skeleton_config.json}`` (held-out clips under ``heldout/``)."""
    out = Path(out_dir)
    for name, dom in (("human", fixture.human), ("robot", fixture.robot)):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        save_skeleton_config(dom.config, d / "skeleton_config.json")
        for clip in dom.clips:
            save_bvh(clip_to_document(clip), d / f"{clip.name}.bvh", precision)
        if dom.heldout:
            (d / "heldout").mkdir(exist_ok=True)
            for clip in dom.heldout:
                save_bvh(clip_to_document(clip), d / "heldout" / f"{clip.name}.bvh", precision)
    if spec is not None:
        spec_d = asdict(spec)
        spec_d["freq_band"] = list(spec.freq_band)
        (out / "fixture_spec.json").write_text(json.dumps(spec_d, indent=2) + "\n", encoding="utf-8")
    return out
