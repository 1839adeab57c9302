"""Skeleton topology, joint kinds and the per-domain skeleton config.

A skeleton is an ordered list of joints in which every parent precedes its
children. Each joint carries one of three kinds:

* ``ACTUATED``: a real, rotating joint.
* ``FIXED``: a structural joint (root, chest) whose rotation is ignored.
* ``END_EFFECTOR``: a leaf marker (hand, head tip).

Kinds are not stored in BVH files; they come from a :class:`SkeletonConfig`
bound with :func:`bind_config`.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingChest, SchemaError, SkeletonMismatch, UnknownJoint

ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
AXES = "XYZ"


class JointKind(str, enum.Enum):
    ACTUATED = "Actuated"
    FIXED = "Fixed"
    END_EFFECTOR = "EndEffector"


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: tuple[float, float, float]
    channels: tuple[str, ...] = ()
    kind: JointKind | None = None

    @property
    def rotation_order(self) -> str | None:
        """Axis letters of the rotation channels in declared order, e.g. ``"ZXY"``."""
        axes = "".join(c[0] for c in self.channels if c in ROTATION_CHANNELS)
        return axes or None

    @property
    def position_channels(self) -> tuple[str, ...]:
        return tuple(c for c in self.channels if c in POSITION_CHANNELS)


@dataclass(frozen=True)
class Skeleton:
    joints: tuple[Joint, ...]

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise SkeletonMismatch("skeleton has no joints")
        seen = set()
        for i, j in enumerate(self.joints):
            if j.name in seen:
                raise SkeletonMismatch(f"duplicate joint name {j.name!r}", joint=j.name)
            seen.add(j.name)
            if i == 0:
                if j.parent is not None:
                    raise SkeletonMismatch("first joint must be the root", joint=j.name)
            elif j.parent is None:
                raise SkeletonMismatch(f"second root {j.name!r}", joint=j.name)
            elif not 0 <= j.parent < i:
                raise SkeletonMismatch(
                    f"joint {j.name!r} has parent index {j.parent} not before it", joint=j.name)
        children = [0] * len(self.joints)
        for j in self.joints[1:]:
            children[j.parent] += 1
        for j, n in zip(self.joints, children):
            if j.kind is JointKind.END_EFFECTOR and n:
                raise SkeletonMismatch(f"end effector {j.name!r} is not a leaf", joint=j.name)

    root_index = 0

    def __len__(self):
        return len(self.joints)

    @property
    def names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def parents(self) -> np.ndarray:
        return np.array([-1 if j.parent is None else j.parent for j in self.joints])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([j.offset for j in self.joints], dtype=np.float64)

    @property
    def kinds(self) -> list[JointKind | None]:
        return [j.kind for j in self.joints]

    @property
    def is_bound(self) -> bool:
        return all(k is not None for k in self.kinds)

    @property
    def actuated_mask(self) -> np.ndarray:
        """Boolean mask of joints whose rotation participates in FK.

        Unbound skeletons fall back to "has rotation channels and is not a
        zero-channel leaf"; bound skeletons use their kinds.
        """
        if self.is_bound:
            return np.array([k is JointKind.ACTUATED for k in self.kinds])
        return np.array([j.rotation_order is not None for j in self.joints])

    def index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise UnknownJoint(f"no joint named {name!r}")

    def children(self, i: int) -> list[int]:
        return [k for k, j in enumerate(self.joints) if j.parent == i]

    def is_leaf(self, i: int) -> bool:
        return not self.children(i)

    @property
    def num_channels(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    def with_kinds(self, kinds: Mapping[str, JointKind]) -> "Skeleton":
        return Skeleton(tuple(replace(j, kind=JointKind(kinds[j.name])) for j in self.joints))

    def with_offsets(self, offsets) -> "Skeleton":
        offsets = np.asarray(offsets, dtype=np.float64)
        return Skeleton(tuple(replace(j, offset=tuple(float(v) for v in o))
                              for j, o in zip(self.joints, offsets)))

    def topology_difference(self, other: "Skeleton") -> str | None:
        """Name of the first joint whose name, parent or channels differ, else None."""
        for a, b in zip(self.joints, other.joints):
            if a.name != b.name or a.parent != b.parent or a.channels != b.channels:
                return a.name
        if len(self.joints) != len(other.joints):
            longer = self if len(self.joints) > len(other.joints) else other
            return longer.joints[min(len(self.joints), len(other.joints))].name
        return None

    def check_same_topology(self, other: "Skeleton") -> None:
        name = self.topology_difference(other)
        if name is not None:
            raise SkeletonMismatch(f"skeletons differ at joint {name!r}", joint=name)


# --- config ----------------------------------------------------------------

END_EFFECTOR_KEYS = ("head", "left_hand", "right_hand")


@dataclass(frozen=True)
class SkeletonConfig:
    kinds: dict[str, JointKind]
    parts: dict[str, int]
    end_effectors: dict[str, str]
    height: float
    length_ratio: float = 0.1
    axis_ratio: float = 0.7
    chest: str | None = None
    reference_pairs: dict[str, str] = field(default_factory=dict)

    @property
    def num_parts(self) -> int:
        return max(self.parts.values()) + 1 if self.parts else 0

    def to_dict(self) -> dict:
        d = {
            "kinds": {k: v.value for k, v in self.kinds.items()},
            "parts": dict(self.parts),
            "end_effectors": dict(self.end_effectors),
            "height": self.height,
            "tpose_tolerances": {"length_ratio": self.length_ratio,
                                 "axis_ratio": self.axis_ratio},
        }
        if self.chest is not None:
            d["chest"] = self.chest
        if self.reference_pairs:
            d["reference_pairs"] = dict(self.reference_pairs)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SkeletonConfig":
        if not isinstance(d, Mapping):
            raise SchemaError("config must be a JSON object", path="$")
        for key in ("kinds", "parts", "end_effectors", "height"):
            if key not in d:
                raise SchemaError(f"missing field {key!r}", path=f"$.{key}")

        kinds = {}
        if not isinstance(d["kinds"], Mapping):
            raise SchemaError("expected an object", path="$.kinds")
        for name, kind in d["kinds"].items():
            try:
                kinds[name] = JointKind(kind)
            except ValueError:
                raise SchemaError(f"unknown joint kind {kind!r}", path=f"$.kinds.{name}") from None

        parts = {}
        if not isinstance(d["parts"], Mapping):
            raise SchemaError("expected an object", path="$.parts")
        for name, pid in d["parts"].items():
            if not isinstance(pid, int) or isinstance(pid, bool) or pid < 0:
                raise SchemaError("part id must be a non-negative integer", path=f"$.parts.{name}")
            parts[name] = pid
        ids = sorted(set(parts.values()))
        if ids != list(range(len(ids))):
            raise SchemaError(f"non-contiguous parts {ids}", path="$.parts")

        ee = d["end_effectors"]
        if not isinstance(ee, Mapping):
            raise SchemaError("expected an object", path="$.end_effectors")
        for key in END_EFFECTOR_KEYS:
            if key not in ee:
                raise SchemaError(f"missing field {key!r}", path=f"$.end_effectors.{key}")

        height = d["height"]
        if not isinstance(height, (int, float)) or isinstance(height, bool) or height <= 0:
            raise SchemaError("height must be a positive number", path="$.height")

        tol = d.get("tpose_tolerances", {})
        return cls(
            kinds=kinds,
            parts=parts,
            end_effectors={k: str(v) for k, v in ee.items()},
            height=float(height),
            length_ratio=float(tol.get("length_ratio", 0.1)),
            axis_ratio=float(tol.get("axis_ratio", 0.7)),
            chest=d.get("chest"),
            reference_pairs=dict(d.get("reference_pairs", {})),
        )


def load_skeleton_config(path) -> SkeletonConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", path="$") from None
    return SkeletonConfig.from_dict(data)


def save_skeleton_config(config: SkeletonConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")


def bind_config(skeleton: Skeleton, config: SkeletonConfig) -> Skeleton:
    """Return ``skeleton`` with joint kinds taken from ``config``.

    Every skeleton joint must be named in both ``kinds`` and ``parts``, and
    the config may not name joints the skeleton lacks.
    """
    names = skeleton.names
    for section in ("kinds", "parts"):
        mapping = getattr(config, section)
        for name in names:
            if name not in mapping:
                raise SchemaError(f"joint {name!r} has no assignment", path=f"$.{section}")
        for name in mapping:
            if name not in names:
                raise UnknownJoint(f"{section} names unknown joint {name!r}")
    for key, name in config.end_effectors.items():
        if name not in names:
            raise UnknownJoint(f"end effector {key!r} names unknown joint {name!r}")
    if config.chest is not None and config.chest not in names:
        raise UnknownJoint(f"chest names unknown joint {config.chest!r}")
    return skeleton.with_kinds(config.kinds)


# --- T-pose guideline lint ---------------------------------------------------

@dataclass(frozen=True)
class Finding:
    rule: str
    joint_index: int
    joint: str
    value: float
    message: str

    def __str__(self):
        return f"[{self.rule}] {self.joint}: {self.message}"


def _dominant_axis(v) -> int:
    return int(np.argmax(np.abs(v)))


def check_tpose_guidelines(skeleton: Skeleton, config: SkeletonConfig,
                           reference: Skeleton | None = None) -> list[Finding]:
    """Lint a bound skeleton's T-pose against the alignment guidelines.

    G1: every actuated joint's link should lie mostly along one axis.
    G2: links leaving the chest should point along the same axis as the
        matching reference links (pairs from ``config.reference_pairs``,
        same name when unpaired).
    G3: an end effector should sit one parent-link length from its parent.

    Returns findings sorted by joint index; never raises for violations.
    """
    skeleton = bind_config(skeleton, config) if not skeleton.is_bound else skeleton
    offsets = skeleton.offsets
    findings = []

    for i, joint in enumerate(skeleton.joints):
        norm = float(np.linalg.norm(offsets[i]))
        if joint.kind is JointKind.ACTUATED and i != 0 and norm > 0:
            ratio = float(np.max(np.abs(offsets[i]))) / norm
            if ratio < config.axis_ratio:
                findings.append(Finding(
                    "G1", i, joint.name, ratio,
                    f"dominant-axis share {ratio:.3f} below {config.axis_ratio}"))
        if joint.kind is JointKind.END_EFFECTOR and joint.parent is not None:
            parent_norm = float(np.linalg.norm(offsets[joint.parent]))
            if parent_norm > 0:
                dev = abs(norm - parent_norm) / parent_norm
                if dev > config.length_ratio:
                    findings.append(Finding(
                        "G3", i, joint.name, dev,
                        f"length {norm:.4g} vs parent link {parent_norm:.4g} "
                        f"(deviation {dev:.3f} > {config.length_ratio})"))

    if reference is not None:
        if config.chest is None:
            raise MissingChest("config names no chest joint")
        chest = skeleton.index(config.chest)
        ref_names = reference.names
        ref_offsets = reference.offsets
        for i in skeleton.children(chest):
            name = skeleton.joints[i].name
            ref_name = config.reference_pairs.get(name, name)
            if ref_name not in ref_names:
                continue
            ref_off = ref_offsets[reference.index(ref_name)]
            a, b = _dominant_axis(offsets[i]), _dominant_axis(ref_off)
            if a != b:
                findings.append(Finding(
                    "G2", i, name, float(a),
                    f"chest link points along {AXES[a]}, reference {ref_name!r} along {AXES[b]}"))

    findings.sort(key=lambda f: (f.joint_index, f.rule))
    return findings


def chain_length(skeleton: Skeleton, start: str, end: str) -> float:
    """Sum of link lengths walking from ``end`` up to (excluding) ``start``."""
    offsets = skeleton.offsets
    i = skeleton.index(end)
    stop = skeleton.index(start)
    total = 0.0
    while i != stop:
        if i is None or i == 0 and stop != 0:
            raise UnknownJoint(f"{start!r} is not an ancestor of {end!r}")
        total += float(np.linalg.norm(offsets[i]))
        i = skeleton.joints[i].parent
    return total


def joint_parts(skeleton: Skeleton, config: SkeletonConfig) -> Sequence[int]:
    return [config.parts[n] for n in skeleton.names]
