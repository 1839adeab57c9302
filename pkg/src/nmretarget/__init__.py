"""Unsupervised human-to-robot motion retargeting with skeleton-aware networks.

The package covers BVH I/O, kinematic skeletons with actuated/fixed/effector
joints, a numpy reverse-mode autodiff engine, the encoder/decoder GAN, its
training loop, cycle-reconstruction metrics and a command line.
"""
from .bvh_io import BvhDocument, parse_bvh, read_bvh, save_bvh, write_bvh
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import (MetricsReport, cycle_evaluate, end_effector_errors,
                         mean_joint_position_error)
from .estimator import MotionRetargeter
from .synthetic_fixtures import FixtureSpec, make_fixture
from .kinematics import Pose, fk_differentiable, forward_kinematics
from .motion import MotionClip
from .retarget_net import Architecture, DomainSpec, RetargetModel
from .skeleton_model import Joint, JointKind, Skeleton, SkeletonConfig
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Architecture", "BvhDocument", "DomainSpec", "FixtureSpec", "Joint", "JointKind",
    "MetricsReport", "MotionClip", "MotionRetargeter", "Pose", "RetargetModel", "Skeleton",
    "SkeletonConfig", "TrainConfig", "cycle_evaluate", "end_effector_errors",
    "fk_differentiable", "forward_kinematics", "load_checkpoint", "make_fixture",
    "mean_joint_position_error", "parse_bvh", "read_bvh", "save_bvh", "save_checkpoint",
    "train", "write_bvh",
]
