import numpy as np
import pytest

from nmretarget.autodiff import Tensor, check_gradients
from nmretarget.errors import ConfigError, ShapeMismatch
from nmretarget.gradcheck_suite import TINY_ARCH, random_features, tiny_domains
from nmretarget.retarget_net import (Architecture, IdentityModel, RetargetModel, apply_windowed,
                                cycle_clip, retarget_clip, window_starts)


@pytest.fixture(scope="module")
def fixture_model(request):
    fx = request.getfixturevalue("small_fixture")
    from nmretarget.retarget_net import DomainSpec
    h = DomainSpec("human", fx.human.skeleton, fx.human.config)
    r = DomainSpec("robot", fx.robot.skeleton, fx.robot.config)
    return RetargetModel(h, r, Architecture(window=16, kernel_size=5), seed=3)


def test_feature_widths(small_fixture, fixture_model):
    h, r = fixture_model.domains["human"], fixture_model.domains["robot"]
    assert h.num_features == 4 * 9 + 3
    assert r.num_features == 4 * 11 + 3
    assert fixture_model.num_parts == 4


def test_shape_contract(fixture_model, rng):
    for d in ("human", "robot"):
        dom = fixture_model.domains[d]
        x = rng.standard_normal((dom.num_features, 16))
        z = fixture_model.encode(d, x)
        assert z.shape == (4 * 16, 8)
        assert fixture_model.decode(d, z).shape == (dom.num_features, 16)
        assert fixture_model.discriminate(d, x).shape == ()


def test_shape_contract_declared_sizes():
    # F=31 (7 actuated joints), P=5, L=16 -> latent [80, 32] at T=64
    from nmretarget.skeleton_model import Joint, JointKind, Skeleton, SkeletonConfig, bind_config
    from nmretarget.retarget_net import DomainSpec
    rot = ("Zrotation", "Xrotation", "Yrotation")
    root = ("Xposition", "Yposition", "Zposition") + rot
    joints = [Joint("root", None, (0, 0, 0), root)]
    joints += [Joint(f"j{i}", 0, (0, 1.0, 0), rot) for i in range(7)]
    sk = Skeleton(tuple(joints))
    kinds = {"root": JointKind.FIXED} | {f"j{i}": JointKind.ACTUATED for i in range(7)}
    parts = {"root": 0} | {f"j{i}": min(i, 4) for i in range(7)}
    cfg = SkeletonConfig(kinds, parts, {"head": "j0", "left_hand": "j1", "right_hand": "j2"}, 1.0)
    dom = DomainSpec("human", bind_config(sk, cfg), cfg)
    assert dom.num_features == 31
    model = RetargetModel(dom, DomainSpec("robot", dom.skeleton, cfg), seed=0)
    assert model.encode("human", np.zeros((31, 64))).shape == (80, 32)


def test_encode_rejects_odd_window(fixture_model):
    with pytest.raises(ShapeMismatch):
        fixture_model.encode("human", np.zeros((39, 15)))
    with pytest.raises(ShapeMismatch):
        fixture_model.encode("human", np.zeros((40, 16)))


def test_constant_input_constant_latent(fixture_model):
    dom = fixture_model.domains["human"]
    x = np.repeat(np.linspace(-1, 1, dom.num_features)[:, None], 16, axis=1)
    z = fixture_model.encode("human", x).data
    assert np.allclose(z, z[:, :1], atol=1e-12)


def test_unit_quaternions(fixture_model, rng):
    for d in ("human", "robot"):
        dom = fixture_model.domains[d]
        out = fixture_model.decode(d, rng.standard_normal((fixture_model.latent_width, 8))).data
        q = out[:4 * len(dom.actuated)].reshape(len(dom.actuated), 4, -1)
        assert np.abs(np.linalg.norm(q, axis=1) - 1).max() < 1e-9


def test_pool_then_unpool(fixture_model, rng):
    d = "robot"
    pool, unpool = fixture_model.pools[d], fixture_model.unpools[d]
    h, l = fixture_model.arch.joint_channels, fixture_model.arch.latent_channels
    assert h == 16 and l == 16
    parts = np.asarray(fixture_model.domains[d].feature_parts)
    # part-constant features survive pool then copy-back
    part_feat = rng.standard_normal((fixture_model.num_parts, h))
    joint_feat = part_feat[parts].reshape(-1)
    pooled = pool @ joint_feat
    np.testing.assert_allclose(pooled.reshape(-1, h), part_feat)
    # copy-back then pool is the identity on part features (latent width)
    latent = rng.standard_normal(fixture_model.num_parts * l)
    pool_l = np.zeros((fixture_model.num_parts * l, len(parts) * l))
    counts = np.bincount(parts)
    for jf, p in enumerate(parts):
        pool_l[p * l:(p + 1) * l, jf * l:(jf + 1) * l] = np.eye(l) / counts[p]
    np.testing.assert_allclose(pool_l @ (unpool @ latent), latent)


def test_pool_two_joint_mean():
    h, r = tiny_domains()
    model = RetargetModel(h, r, Architecture(window=8, kernel_size=3, joint_channels=1,
                                             latent_channels=1, disc_channels=1))
    # robot part 1 holds B2 and B3
    feats = np.zeros(r.num_feature_joints)
    parts = np.asarray(r.feature_parts)
    members = np.flatnonzero(parts == 1)
    feats[members] = [1.0, 3.0]
    assert (model.pools["robot"] @ feats)[1] == pytest.approx(2.0)


def test_zero_discriminator(fixture_model, rng):
    params = {n: np.zeros_like(v) for n, v in fixture_model.params.items()}
    model = RetargetModel(fixture_model.domains["human"], fixture_model.domains["robot"],
                          fixture_model.arch, params=params)
    assert model.discriminate("robot", rng.standard_normal((47, 16))).item() == 0.0


def test_discriminator_input_gradient(rng):
    from nmretarget.gradcheck_suite import tiny_model
    model = tiny_model(rng)
    dom = model.domains["robot"]
    x = random_features(rng, dom, batch=1)[0]

    def fn(t):
        return model.discriminate("robot", t)
    assert check_gradients(fn, [x], tol=1e-4).passed


def test_identity_double_round_trips(rng):
    h, _ = tiny_domains(rng)
    model = IdentityModel(h, h.__class__("robot", h.skeleton, h.config, h.mean, h.std), TINY_ARCH)
    x = random_features(rng, h, batch=1)[0]
    np.testing.assert_allclose(model.retarget_window("human", "robot", x).data, x, atol=1e-12)
    np.testing.assert_allclose(model.cycle_window("human", "robot", x).data, x, atol=1e-12)


def test_cross_domain_width(fixture_model, rng):
    x = rng.standard_normal((39, 16))
    assert fixture_model.retarget_window("human", "robot", x).shape == (47, 16)
    assert fixture_model.cycle_window("human", "robot", x).shape == (39, 16)


def test_inference_determinism(fixture_model, rng):
    x = rng.standard_normal((39, 16))
    a = fixture_model.retarget_window("human", "robot", x).data
    b = fixture_model.retarget_window("human", "robot", x).data
    assert a.tobytes() == b.tobytes()


def test_part_count_mismatch(small_fixture):
    from nmretarget.retarget_net import DomainSpec
    h = DomainSpec("human", small_fixture.human.skeleton, small_fixture.human.config)
    tiny_h, _ = tiny_domains()
    with pytest.raises(ConfigError):
        RetargetModel(h, tiny_h, Architecture(window=16, kernel_size=5))


def test_window_tiling():
    assert window_starts(128, 64) == [0, 64]
    assert window_starts(67, 64) == [0, 3]
    assert window_starts(30, 64) == [0]


def test_apply_windowed_reassembly():
    feats = np.arange(2 * 67, dtype=float).reshape(2, 67)
    calls = []

    def fn(batch):
        calls.append(batch.shape)
        return batch * 2
    out = apply_windowed(fn, feats, 64)
    assert calls == [(2, 2, 64)]
    np.testing.assert_array_equal(out, feats * 2)
    short = apply_windowed(lambda b: b + 1, feats[:, :10], 64)
    np.testing.assert_array_equal(short, feats[:, :10] + 1)


def test_clip_level_retarget(fixture_model, small_fixture):
    clip = small_fixture.human.clips[0]
    out = retarget_clip(fixture_model, "human", "robot", clip)
    assert out.num_frames == clip.num_frames
    assert out.skeleton == fixture_model.domains["robot"].skeleton
    back = cycle_clip(fixture_model, "human", "robot", clip)
    assert back.rotations.shape == clip.rotations.shape
