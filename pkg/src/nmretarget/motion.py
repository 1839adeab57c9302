"""Motion clips: per-frame root translation plus per-joint quaternions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rotations as rot
from .bvh_io import BvhDocument
from .errors import LengthMismatch
from .skeleton_model import Skeleton


@dataclass
class MotionClip:
    skeleton: Skeleton
    root_translation: np.ndarray  # [N, 3]
    rotations: np.ndarray  # [N, J, 4]
    frame_time: float = 0.02
    name: str = ""

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64).reshape(-1, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        n, j = self.root_translation.shape[0], len(self.skeleton)
        if self.rotations.shape != (n, j, 4):
            raise LengthMismatch(
                f"rotations shape {self.rotations.shape} does not match ({n}, {j}, 4)")

    @property
    def num_frames(self) -> int:
        return self.root_translation.shape[0]

    @property
    def duration(self) -> float:
        return self.num_frames * self.frame_time

    def slice(self, start: int, stop: int) -> "MotionClip":
        return MotionClip(self.skeleton, self.root_translation[start:stop],
                          self.rotations[start:stop], self.frame_time, self.name)

    def take(self, frame_indices) -> "MotionClip":
        idx = np.asarray(frame_indices, dtype=int)
        return MotionClip(self.skeleton, self.root_translation[idx], self.rotations[idx],
                          self.frame_time, self.name)


def clip_from_document(doc: BvhDocument, name: str = "", skeleton: Skeleton | None = None) -> MotionClip:
    """Convert Euler channels to quaternions.

    ``skeleton`` substitutes a kind-bound skeleton with the same topology.
    """
    sk = skeleton or doc.skeleton
    n = doc.num_frames
    rotations = rot.identity((n, len(sk)))
    root = np.zeros((n, 3))
    col = 0
    for i, joint in enumerate(doc.skeleton.joints):
        block = doc.frames[:, col:col + len(joint.channels)]
        col += len(joint.channels)
        order = joint.rotation_order
        if order:
            angles = np.stack([block[:, joint.channels.index(a + "rotation")] for a in order], axis=-1)
            rotations[:, i] = rot.euler_to_quaternion(angles, order)
        if i == 0:
            for a, axis in enumerate("XYZ"):
                ch = axis + "position"
                if ch in joint.channels:
                    root[:, a] = block[:, joint.channels.index(ch)]
    return MotionClip(sk, root, rotations, doc.frame_time, name)


def clip_to_document(clip: MotionClip) -> BvhDocument:
    sk = clip.skeleton
    n = clip.num_frames
    cols = []
    for i, joint in enumerate(sk.joints):
        if not joint.channels:
            continue
        block = np.zeros((n, len(joint.channels)))
        order = joint.rotation_order
        if order:
            angles, _ = rot.quaternion_to_euler(clip.rotations[:, i], order)
            for a, axis in enumerate(order):
                block[:, joint.channels.index(axis + "rotation")] = angles[:, a]
        for a, axis in enumerate("XYZ"):
            ch = axis + "position"
            if ch in joint.channels:
                value = clip.root_translation[:, a] if i == 0 else joint.offset[a]
                block[:, joint.channels.index(ch)] = value
        cols.append(block)
    frames = np.concatenate(cols, axis=1) if cols else np.zeros((n, 0))
    return BvhDocument(sk, frames, clip.frame_time)
