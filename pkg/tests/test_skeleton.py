import json

import numpy as np
import pytest

from nmretarget.errors import MissingChest, SchemaError, SkeletonMismatch, UnknownJoint
from nmretarget.synthetic_fixtures import FixtureSpec, make_skeletons
from nmretarget.skeleton_model import (Joint, JointKind, Skeleton, SkeletonConfig, bind_config,
                                 check_tpose_guidelines, load_skeleton_config,
                                 save_skeleton_config)

A, F, E = JointKind.ACTUATED, JointKind.FIXED, JointKind.END_EFFECTOR
ROT = ("Zrotation", "Xrotation", "Yrotation")
ROOT = ("Xposition", "Yposition", "Zposition") + ROT


def four_joint(end_offset=(0.25, 0, 0), shoulder=(0.25, 0, 0)):
    return Skeleton((
        Joint("root", None, (0, 0, 0), ROOT),
        Joint("chest", 0, (0, 1, 0), ROT),
        Joint("shoulder", 1, shoulder, ROT),
        Joint("hand_end", 2, end_offset, ()),
    ))


def config_dict(**changes):
    d = {"kinds": {"root": "Fixed", "chest": "Fixed", "shoulder": "Actuated",
                   "hand_end": "EndEffector"},
         "parts": {"root": 0, "chest": 0, "shoulder": 0, "hand_end": 0},
         "end_effectors": {"head": "chest", "left_hand": "hand_end", "right_hand": "hand_end"},
         "height": 1.0, "chest": "chest"}
    d.update(changes)
    return d


def test_valid_bind():
    cfg = SkeletonConfig.from_dict(config_dict())
    sk = bind_config(four_joint(), cfg)
    assert list(sk.kinds) == [F, F, A, E]
    assert list(sk.actuated_mask) == [False, False, True, False]


def test_rebind_idempotent():
    cfg = SkeletonConfig.from_dict(config_dict())
    once = bind_config(four_joint(), cfg)
    assert bind_config(once, cfg) == once


def test_missing_joint_named():
    d = config_dict()
    del d["kinds"]["shoulder"]
    with pytest.raises(SchemaError, match="shoulder"):
        bind_config(four_joint(), SkeletonConfig.from_dict(d))


def test_extra_joint_rejected():
    d = config_dict()
    d["kinds"]["tail"] = "Fixed"
    d["parts"]["tail"] = 0
    with pytest.raises(UnknownJoint):
        bind_config(four_joint(), SkeletonConfig.from_dict(d))


def test_non_contiguous_parts():
    d = config_dict(parts={"root": 0, "chest": 0, "shoulder": 2, "hand_end": 2})
    with pytest.raises(SchemaError, match="non-contiguous parts"):
        SkeletonConfig.from_dict(d)


@pytest.mark.parametrize("field,value,path", [
    ("height", -1, "$.height"),
    ("kinds", {"root": "Wobbly"}, "$.kinds.root"),
    ("end_effectors", {"head": "chest"}, "$.end_effectors.left_hand"),
])
def test_schema_paths(field, value, path):
    with pytest.raises(SchemaError) as info:
        SkeletonConfig.from_dict(config_dict(**{field: value}))
    assert info.value.path == path


def test_config_json_round_trip(tmp_path):
    cfg = SkeletonConfig.from_dict(config_dict(reference_pairs={"shoulder": "LeftShoulder"}))
    save_skeleton_config(cfg, tmp_path / "c.json")
    assert load_skeleton_config(tmp_path / "c.json") == cfg
    assert json.loads((tmp_path / "c.json").read_text())["chest"] == "chest"


def test_topological_order_enforced():
    with pytest.raises(SkeletonMismatch):
        Skeleton((Joint("a", None, (0, 0, 0), ROOT), Joint("b", 2, (0, 1, 0), ROT),
                  Joint("c", 0, (0, 1, 0), ROT)))


def test_two_roots_rejected():
    with pytest.raises(SkeletonMismatch):
        Skeleton((Joint("a", None, (0, 0, 0), ROOT), Joint("b", None, (0, 1, 0), ROOT)))


def test_end_effector_must_be_leaf():
    with pytest.raises(SkeletonMismatch):
        Skeleton((Joint("a", None, (0, 0, 0), ROOT, F), Joint("b", 0, (0, 1, 0), ROT, E),
                  Joint("c", 1, (0, 1, 0), ROT, A)))


def test_unknown_joint_lookup():
    with pytest.raises(UnknownJoint):
        four_joint().index("nope")


def test_topology_difference():
    a = four_joint()
    b = Skeleton(a.joints[:3] + (Joint("finger", 2, (0.25, 0, 0), ()),))
    assert a.topology_difference(a) is None
    assert a.topology_difference(b) == "hand_end"
    with pytest.raises(SkeletonMismatch):
        a.check_same_topology(b)


# --- guideline lint ---

def test_g3_equal_length_passes():
    cfg = SkeletonConfig.from_dict(config_dict())
    assert check_tpose_guidelines(four_joint((0.25, 0, 0)), cfg) == []


def test_g3_violation_value():
    cfg = SkeletonConfig.from_dict(config_dict())
    findings = check_tpose_guidelines(four_joint((0.10, 0, 0)), cfg)
    assert [f.rule for f in findings] == ["G3"]
    assert findings[0].joint == "hand_end"
    assert findings[0].value == pytest.approx(0.6)


def test_g1_flags_diagonal_link():
    cfg = SkeletonConfig.from_dict(config_dict())
    findings = check_tpose_guidelines(four_joint(shoulder=(0.2, 0.2, 0.2), end_offset=(0.35, 0, 0)), cfg)
    assert [f.rule for f in findings] == ["G1"]


def test_g2_dominant_axis():
    cfg = SkeletonConfig.from_dict(config_dict(reference_pairs={"shoulder": "arm"}))
    ref = Skeleton((Joint("root", None, (0, 0, 0), ROOT), Joint("chest", 0, (0, 1, 0), ROT),
                    Joint("arm", 1, (0, 0.9, 0.1), ROT)))
    sk = four_joint(shoulder=(0, 0.25, 0), end_offset=(0, 0.25, 0))
    assert check_tpose_guidelines(sk, cfg, ref) == []
    sk = four_joint(shoulder=(0.25, 0, 0))
    assert [f.rule for f in check_tpose_guidelines(sk, cfg, ref)] == ["G2"]


def test_g2_requires_chest():
    d = config_dict()
    del d["chest"]
    with pytest.raises(MissingChest):
        check_tpose_guidelines(four_joint(), SkeletonConfig.from_dict(d), four_joint())


def test_fixture_skeletons_conform():
    (hs, hc), (rs, rc) = make_skeletons(FixtureSpec())
    assert check_tpose_guidelines(hs, hc) == []
    assert check_tpose_guidelines(rs, rc) == []
    assert check_tpose_guidelines(rs, rc, hs) == []


def test_findings_sorted_and_deterministic():
    cfg = SkeletonConfig.from_dict(config_dict())
    sk = four_joint(shoulder=(0.2, 0.2, 0.2), end_offset=(0.01, 0, 0))
    first = check_tpose_guidelines(sk, cfg)
    assert first == check_tpose_guidelines(sk, cfg)
    assert [f.joint_index for f in first] == sorted(f.joint_index for f in first)
    assert len(first) == 2
    assert np.all([f.value >= 0 for f in first])
