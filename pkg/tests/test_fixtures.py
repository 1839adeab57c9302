import json

import numpy as np
import pytest

from nmretarget.bvh_io import parse_bvh, write_bvh
from nmretarget.errors import ConfigError
from nmretarget.synthetic_fixtures import FixtureSpec, make_fixture, write_fixture
from nmretarget.motion import clip_from_document, clip_to_document
from nmretarget.skeleton_model import chain_length, check_tpose_guidelines, load_skeleton_config


def test_deterministic():
    spec = FixtureSpec(motions=2, frames=30, heldout=1)
    a, b = make_fixture(spec), make_fixture(spec)
    for da, db in ((a.human, b.human), (a.robot, b.robot)):
        for ca, cb in zip(da.clips + da.heldout, db.clips + db.heldout):
            assert ca.rotations.tobytes() == cb.rotations.tobytes()
            assert ca.root_translation.tobytes() == cb.root_translation.tobytes()


def test_default_sizes():
    fx = make_fixture(FixtureSpec())
    for dom in (fx.human, fx.robot):
        assert len(dom.clips) == 20
        assert sum(c.num_frames for c in dom.clips) == 4000


def test_arm_chain_scaled():
    fx = make_fixture(FixtureSpec(motions=0))
    for side in ("Left", "Right"):
        assert chain_length(fx.human.skeleton, f"{side}Shoulder", f"{side}Elbow") == pytest.approx(1.0)
        assert chain_length(fx.robot.skeleton, f"{side}Shoulder", f"{side}Elbow") == pytest.approx(1.3)
        assert f"{side}UpperArmRoll" in fx.robot.skeleton.names
    assert len(fx.robot.skeleton) == len(fx.human.skeleton) + 2
    assert fx.human.config.num_parts == fx.robot.config.num_parts


def test_fixture_skeletons_follow_guidelines():
    fx = make_fixture(FixtureSpec(motions=0))
    for dom in (fx.human, fx.robot):
        assert check_tpose_guidelines(dom.skeleton, dom.config) == []


def test_quaternions_continuous():
    fx = make_fixture(FixtureSpec(motions=3, frames=200))
    for clip in fx.human.clips + fx.robot.clips:
        dots = np.sum(clip.rotations[1:] * clip.rotations[:-1], axis=-1)
        assert dots.min() > 0


def test_bvh_round_trip():
    fx = make_fixture(FixtureSpec(motions=2, frames=20))
    for clip in fx.human.clips + fx.robot.clips:
        text = write_bvh(clip_to_document(clip))
        back = clip_from_document(parse_bvh(text), skeleton=clip.skeleton)
        np.testing.assert_allclose(np.abs(np.sum(back.rotations * clip.rotations, -1)), 1.0, atol=1e-6)
        np.testing.assert_allclose(back.root_translation, clip.root_translation, atol=1e-6)


def test_write_layout(tmp_path):
    spec = FixtureSpec(motions=2, frames=10, heldout=1)
    write_fixture(make_fixture(spec), tmp_path, spec=spec)
    for dom in ("human", "robot"):
        assert len(list((tmp_path / dom).glob("*.bvh"))) == 2
        assert len(list((tmp_path / dom / "heldout").glob("*.bvh"))) == 1
        load_skeleton_config(tmp_path / dom / "skeleton_config.json")
    assert FixtureSpec.from_dict(json.loads((tmp_path / "fixture_spec.json").read_text())) == spec


@pytest.mark.parametrize("kw", [{"scale": 0.0}, {"freq_band": (0.5, 30.0)}, {"motions": -1}])
def test_invalid_spec(kw):
    with pytest.raises(ConfigError):
        make_fixture(FixtureSpec(**kw))
