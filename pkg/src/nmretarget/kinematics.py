"""Forward kinematics in which only actuated joints rotate.

For every joint ``j`` with parent ``p``::

    pos[j] = pos[p] + rotate(G[p], offset[j])
    G[j]   = G[p] * q[j]   if j is actuated else G[p]

Fixed and end-effector joints therefore pass their parent's global rotation
through unchanged, whatever rotation the pose assigns them.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import rotations as rot
from .autodiff import ops
from .autodiff.tensor import Tensor
from .errors import LengthMismatch
from .skeleton_model import Skeleton


@dataclass
class Pose:
    root_translation: np.ndarray
    rotations: np.ndarray  # [J, 4]

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)

    @classmethod
    def identity(cls, num_joints: int) -> "Pose":
        return cls(np.zeros(3), rot.identity((num_joints,)))

    def to_vector(self) -> np.ndarray:
        """Flat ``[4 * J + 3]`` layout used by :func:`fk_differentiable`."""
        return np.concatenate([self.rotations.reshape(-1), self.root_translation])


def forward_kinematics(skeleton: Skeleton, pose, root_local: bool = True) -> np.ndarray:
    """Joint positions ``[..., J, 3]`` for a :class:`Pose` or ``(root, rotations)`` arrays.

    Leading axes of the inputs are treated as frames.
    """
    if isinstance(pose, Pose):
        root, quats = pose.root_translation, pose.rotations
    else:
        root, quats = pose
    root = np.asarray(root, dtype=np.float64)
    quats = np.asarray(quats, dtype=np.float64)
    n = len(skeleton)
    if quats.shape[-2:] != (n, 4) or root.shape[-1] != 3:
        raise LengthMismatch(f"pose with rotations {quats.shape} does not fit {n} joints")
    lead = np.broadcast_shapes(quats.shape[:-2], root.shape[:-1])
    actuated = skeleton.actuated_mask
    offsets = skeleton.offsets
    pos = np.empty(lead + (n, 3))
    glob = np.empty(lead + (n, 4))
    ident = rot.identity(lead)
    for j, joint in enumerate(skeleton.joints):
        if joint.parent is None:
            pos[..., j, :] = 0.0 if root_local else root
            parent_rot = ident
        else:
            p = joint.parent
            parent_rot = glob[..., p, :]
            pos[..., j, :] = pos[..., p, :] + rot.quat_rotate(parent_rot, offsets[j])
        glob[..., j, :] = rot.quat_mul(parent_rot, quats[..., j, :]) if actuated[j] else parent_rot
    return pos


def fk_differentiable(skeleton: Skeleton, pose: Tensor, root_local: bool = True) -> Tensor:
    """Tape-recorded FK. ``pose`` is ``[..., 4 * J + 3]`` (quaternions then root translation).

    Returns ``[..., J, 3]``. Rotations of non-actuated joints never enter the
    graph, so their gradient is exactly zero.
    """
    n = len(skeleton)
    if pose.shape[-1] != 4 * n + 3:
        raise LengthMismatch(f"pose width {pose.shape[-1]} does not match 4*{n}+3")
    lead = pose.shape[:-1]
    quats = ops.reshape(ops.slice(pose, (Ellipsis, np.s_[:4 * n])), lead + (n, 4))
    root = ops.slice(pose, (Ellipsis, np.s_[4 * n:]))
    actuated = skeleton.actuated_mask
    offsets = skeleton.offsets
    zero = Tensor(np.zeros(lead + (3,)))
    positions: list = [None] * n
    glob: list = [None] * n
    for j, joint in enumerate(skeleton.joints):
        q = ops.slice(quats, (Ellipsis, j, np.s_[:])) if actuated[j] else None
        if joint.parent is None:
            positions[j] = zero if root_local else root
            glob[j] = q
            continue
        p = joint.parent
        if glob[p] is None:
            step = Tensor(np.broadcast_to(offsets[j], lead + (3,)))
        else:
            step = ops.quat_rotate(glob[p], offsets[j])
        positions[j] = ops.add(positions[p], step)
        if q is None:
            glob[j] = glob[p]
        else:
            glob[j] = q if glob[p] is None else ops.quat_mul(glob[p], q)
    return ops.stack(positions, axis=-2)


def motion_fk(skeleton: Skeleton, clip, root_local: bool = True) -> np.ndarray:
    """Per-frame positions ``[N, J, 3]`` for a :class:`~nmretarget.motion.MotionClip`."""
    if clip.num_frames == 0:
        return np.zeros((0, len(skeleton), 3))
    return forward_kinematics(skeleton, (clip.root_translation, clip.rotations), root_local)


def _num(v: float) -> str:
    return f"{float(v) + 0.0:.10g}"


def positions_csv(skeleton: Skeleton, positions, frames) -> str:
    """CSV dump ``frame,joint,x,y,z`` of ``positions[k]`` for each frame number in ``frames``."""
    buf = io.StringIO()
    buf.write("frame,joint,x,y,z\n")
    for frame, frame_pos in zip(frames, positions):
        for name, p in zip(skeleton.names, frame_pos):
            buf.write(f"{frame},{name},{_num(p[0])},{_num(p[1])},{_num(p[2])}\n")
    return buf.getvalue()
