import numpy as np
import pytest

from fk_oracle import oracle_fk
from nmretarget import rotations as rot
from nmretarget.autodiff import Tape
from nmretarget.gradcheck_suite import random_chain
from nmretarget.kinematics import (Pose, fk_differentiable, forward_kinematics, motion_fk,
                                   positions_csv)
from nmretarget.motion import MotionClip
from nmretarget.skeleton_model import Joint, JointKind, Skeleton

A, F, E = JointKind.ACTUATED, JointKind.FIXED, JointKind.END_EFFECTOR
ROOT = ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation")
ROT = ("Zrotation", "Xrotation", "Yrotation")


def chain(kinds=(A, A, E), length=2.0):
    return Skeleton((Joint("root", None, (0, 0, 0), ROOT, kinds[0]),
                     Joint("child", 0, (length, 0, 0), ROT, kinds[1]),
                     Joint("tip", 1, (0, length, 0), (), kinds[2])))


def test_identity_cumulative_offsets(small_fixture):
    sk = small_fixture.robot.skeleton
    pos = forward_kinematics(sk, Pose.identity(len(sk)))
    for j, joint in enumerate(sk.joints):
        expected = np.zeros(3)
        k = j
        while k is not None:
            expected += sk.joints[k].offset
            k = sk.joints[k].parent
        np.testing.assert_allclose(pos[j], expected, atol=1e-12)


def test_root_rotation_about_z():
    sk = chain()
    quats = rot.identity((3,))
    quats[0] = rot.euler_to_quaternion([90, 0, 0], "ZXY")
    pos = forward_kinematics(sk, (np.zeros(3), quats))
    np.testing.assert_allclose(pos[1], [0, 2.0, 0], atol=1e-12)


def test_fixed_joint_rotation_ignored(small_fixture, rng):
    sk = small_fixture.human.skeleton
    chest = sk.index("Chest")
    quats = rot.quat_normalize(rng.standard_normal((len(sk), 4)))
    base = forward_kinematics(sk, (np.zeros(3), quats))
    quats[chest] = rot.euler_to_quaternion([40, -20, 10], "ZXY")
    assert np.array_equal(forward_kinematics(sk, (np.zeros(3), quats)), base)


def test_oracle_agreement(rng):
    worst = 0.0
    for _ in range(1000):
        sk = random_chain(rng, 6)
        root = rng.normal(0, 5, 3)
        quats = rot.quat_normalize(rng.standard_normal((6, 4)))
        for local in (True, False):
            got = forward_kinematics(sk, (root, quats), root_local=local)
            want = oracle_fk(sk.parents, sk.offsets, sk.actuated_mask, root, quats, local)
            worst = max(worst, np.abs(got - want).max())
    assert worst < 1e-9


def test_rigid_links(rng):
    sk = random_chain(rng, 6)
    quats = rot.quat_normalize(rng.standard_normal((50, 6, 4)))
    pos = forward_kinematics(sk, (rng.normal(size=(50, 3)), quats), root_local=False)
    for j in range(1, 6):
        d = np.linalg.norm(pos[:, j] - pos[:, sk.parents[j]], axis=-1)
        np.testing.assert_allclose(d, np.linalg.norm(sk.offsets[j]), atol=1e-9)


def test_root_local_root_at_origin(rng):
    sk = random_chain(rng, 5)
    pos = forward_kinematics(sk, (rng.normal(size=3), rot.identity((5,))))
    assert np.array_equal(pos[0], np.zeros(3))


def test_differentiable_matches_numpy(rng):
    sk = random_chain(rng, 6)
    quats = rot.quat_normalize(rng.standard_normal((4, 6, 4)))
    root = rng.normal(size=(4, 3))
    vec = np.concatenate([quats.reshape(4, -1), root], axis=1)
    tape = Tape()
    got = fk_differentiable(sk, tape.variable(vec), root_local=False).data
    np.testing.assert_allclose(got, forward_kinematics(sk, (root, quats), root_local=False),
                               atol=1e-12)


def test_root_translation_gradient():
    sk = chain()
    tape = Tape()
    pose = tape.variable(Pose.identity(3).to_vector())
    loss = fk_differentiable(sk, pose, root_local=False).sum()
    tape.backward(loss)
    np.testing.assert_allclose(pose.grad[-3:], [3, 3, 3])


def test_fixed_rotation_gradient_zero(rng):
    sk = chain(kinds=(A, F, E))
    tape = Tape()
    vec = np.concatenate([rot.quat_normalize(rng.standard_normal((3, 4))).ravel(), rng.normal(size=3)])
    pose = tape.variable(vec)
    loss = (fk_differentiable(sk, pose) * rng.standard_normal((3, 3))).sum()
    tape.backward(loss)
    assert np.array_equal(pose.grad[4:12], np.zeros(8))
    assert np.abs(pose.grad[:4]).max() > 0


def test_motion_fk_framewise(rng, small_fixture):
    clip = small_fixture.human.clips[0]
    sk = clip.skeleton
    pos = motion_fk(sk, clip)
    for f in (0, 17, clip.num_frames - 1):
        np.testing.assert_allclose(
            pos[f], forward_kinematics(sk, (clip.root_translation[f], clip.rotations[f])),
            atol=1e-12)
    one = clip.slice(3, 4)
    assert motion_fk(sk, one).shape == (1, len(sk), 3)
    assert motion_fk(sk, clip.slice(0, 0)).shape[0] == 0


def test_positions_csv(minimal_bvh):
    from nmretarget.bvh_io import parse_bvh
    sk = parse_bvh(minimal_bvh).skeleton
    pos = forward_kinematics(sk, Pose.identity(len(sk)))
    text = positions_csv(sk, pos[None], [0])
    assert text.splitlines()[:3] == ["frame,joint,x,y,z", "0,root,0,0,0", "0,child,0,10,0"]


def test_pose_vector_layout():
    pose = Pose(np.array([1.0, 2, 3]), rot.identity((2,)))
    np.testing.assert_array_equal(pose.to_vector(), [1, 0, 0, 0, 1, 0, 0, 0, 1, 2, 3])


def test_length_mismatch():
    from nmretarget.errors import LengthMismatch
    with pytest.raises(LengthMismatch):
        forward_kinematics(chain(), (np.zeros(3), rot.identity((2,))))
    with pytest.raises(LengthMismatch):
        MotionClip(chain(), np.zeros((3, 3)), rot.identity((2, 3)))
