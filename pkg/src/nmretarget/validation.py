"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import EmptyCorpus, SkeletonMismatch
from .motion import MotionClip


def check_clips(clips, name="clips", allow_empty=False) -> list[MotionClip]:
    """Return ``clips`` as a list after checking they share one skeleton topology."""
    if isinstance(clips, MotionClip):
        clips = [clips]
    if not isinstance(clips, Sequence):
        clips = list(clips)
    if not clips and not allow_empty:
        raise EmptyCorpus(f"{name}: no motion clips given")
    for i, clip in enumerate(clips):
        if not isinstance(clip, MotionClip):
            raise TypeError(f"{name}[{i}] is {type(clip).__name__}, expected MotionClip")
        if not np.all(np.isfinite(clip.rotations)) or not np.all(np.isfinite(clip.root_translation)):
            raise ValueError(f"{name}[{i}] ({clip.name!r}) contains non-finite values")
    if clips:
        ref = clips[0].skeleton
        for clip in clips[1:]:
            diff = ref.topology_difference(clip.skeleton)
            if diff is not None:
                raise SkeletonMismatch(f"{name}: clip {clip.name!r} differs at joint {diff!r}", diff)
    return list(clips)


def check_skeleton(clips, skeleton, name="clips"):
    """Raise :class:`SkeletonMismatch` if any clip's topology differs from ``skeleton``."""
    for clip in clips:
        diff = skeleton.topology_difference(clip.skeleton)
        if diff is not None:
            raise SkeletonMismatch(f"{name}: clip {clip.name!r} does not match the model "
                                   f"skeleton at joint {diff!r}", diff)


def check_positive(value, name):
    if not (isinstance(value, (int, float, np.number)) and value > 0):
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return value
