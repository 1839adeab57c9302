import json
import logging

import numpy as np
import pytest

from nmretarget.autodiff import Tape, Tensor
from nmretarget.errors import ConfigError, EmptyCorpus, ShapeMismatch
from nmretarget.synthetic_fixtures import FixtureSpec, make_fixture
from nmretarget.gradcheck_suite import TINY_ARCH, random_features, tiny_domains, tiny_model
from nmretarget.retarget_net import IdentityModel
from nmretarget.training import (LOSS_COLUMNS, TrainConfig, TrainState, compute_norm_stats,
                                 discriminator_loss, generator_loss, load_train_config,
                                 make_windows, parse_overrides, train, train_step)


def test_window_count_paper_scale():
    assert len(make_windows([6380], 64, 32)) == 198


def test_window_boundaries(caplog):
    assert make_windows([64], 64, 32) == [(0, 0)]
    with caplog.at_level(logging.WARNING):
        assert make_windows([63], 64, 32) == []
    assert "skipped" in caplog.text
    wins = make_windows([100, 200], 64, 32)
    assert all(s + 64 <= [100, 200][c] for c, s in wins)
    assert len(wins) == 2 + 5


def test_norm_stats_examples():
    mean, std = compute_norm_stats([np.full((1, 4), 5.0)])
    assert mean[0] == 5.0 and std[0] == 1e-6
    mean, std = compute_norm_stats([np.array([[0.0, 2.0]])])
    assert mean[0] == 1.0 and std[0] == 1.0


def test_norm_stats_two_pass(rng):
    seqs = [rng.normal(3, 2, (5, n)) for n in (10, 33, 7)]
    mean, std = compute_norm_stats(seqs)
    allf = np.concatenate(seqs, axis=1)
    m = [sum(allf[c]) / allf.shape[1] for c in range(5)]
    v = [sum((allf[c] - m[c]) ** 2) / allf.shape[1] for c in range(5)]
    np.testing.assert_allclose(mean, m, atol=1e-12)
    np.testing.assert_allclose(std, np.sqrt(v), atol=1e-12)


def test_norm_stats_empty():
    with pytest.raises(EmptyCorpus):
        compute_norm_stats([np.zeros((3, 0))])


# --- config ---

def test_config_defaults():
    c = TrainConfig()
    assert (c.window, c.stride, c.batch_size, c.lr_generator, c.lr_discriminator) == (64, 32, 8, 1e-4, 1e-4)
    assert c.weights == {"adv": 1.0, "cycle": 10.0, "fk": 5.0, "latent": 1.0, "ee": 0.0}


@pytest.mark.parametrize("override", [{"epochs": 0}, {"window.T": 7}, {"window.T": 31},
                                      {"window.stride": 0}, {"weights.fk": -1},
                                      {"padding": "circular"}, {"bogus": 1}])
def test_config_rejects(override):
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({}, override)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"window": {"T": 64, "stride": 16}, "lr": {"generator": 3e-4}}))
    cfg = load_train_config(path, parse_overrides(["window.T=32", "weights.cycle=2.5"]))
    assert (cfg.window, cfg.stride, cfg.lr_generator, cfg.w_cycle) == (32, 16, 3e-4, 2.5)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_override_syntax():
    with pytest.raises(ConfigError):
        parse_overrides(["window.T"])


# --- losses ---

def test_discriminator_loss_examples(tiny_doms):
    h, r = tiny_doms
    x = np.zeros((2, h.num_features, 8))

    class Fixed(IdentityModel):
        def __init__(self, real, fake):
            super().__init__(h, r, TINY_ARCH)
            self.real, self.fake = real, fake

        def discriminate(self, domain, window, params=None):
            is_real = float(np.asarray(window.data if isinstance(window, Tensor) else window)[0, 0, 0]) == 0.0
            return Tensor(np.full(2, self.real if is_real else self.fake))

    fake = np.ones_like(x)
    assert discriminator_loss(Fixed(1.0, 0.0), x, fake, h).item() == 0.0
    assert discriminator_loss(Fixed(0.0, 0.0), x, fake, h).item() == 1.0
    assert discriminator_loss(Fixed(0.5, 0.5), x, fake, h).item() == 0.5


def test_discriminator_loss_detaches_fake(tiny, rng):
    dom = tiny.domains["human"]
    tape = Tape()
    fake = tape.variable(dom.normalize(random_features(rng, dom)))
    real = tape.variable(dom.normalize(random_features(rng, dom)))
    loss = discriminator_loss(tiny, real, fake, dom)
    tape.backward(loss)
    assert np.array_equal(fake.grad, np.zeros_like(fake.data))


def test_identity_model_perfect_cycle(rng):
    h, _ = tiny_domains(rng)
    r = h.__class__("robot", h.skeleton, h.config, h.mean, h.std)
    model = IdentityModel(h, r, TINY_ARCH)
    x = random_features(rng, h)
    total, terms = generator_loss(model, x, x, {"adv": 0, "cycle": 1, "fk": 0, "latent": 0})
    assert total.item() == pytest.approx(0.0, abs=1e-20)
    total, terms = generator_loss(model, x, x, {"adv": 1, "cycle": 0, "fk": 0, "latent": 0})
    assert terms["adv"].item() == 0.0


def test_generator_terms_sum(tiny, rng):
    bh = random_features(rng, tiny.domains["human"])
    br = random_features(rng, tiny.domains["robot"])
    total, terms = generator_loss(tiny, bh, br)
    assert total.item() == pytest.approx(sum(t.item() for t in terms.values()), abs=1e-9)
    assert all(t.item() >= 0 for t in terms.values())


def test_generator_loss_shape_check(tiny, rng):
    with pytest.raises(ShapeMismatch):
        generator_loss(tiny, random_features(rng, tiny.domains["robot"]),
                       random_features(rng, tiny.domains["robot"]))


def test_discriminator_step_leaves_generator_untouched(tiny, rng):
    before = {n: tiny.params[n].copy() for n in tiny.group_names("generator")}
    state = TrainState(tiny)
    cfg = TrainConfig(window=8, w_adv=0, w_cycle=0, w_fk=0, w_latent=0)
    # with every generator weight at zero, only the discriminators may move
    bh = random_features(rng, tiny.domains["human"])
    br = random_features(rng, tiny.domains["robot"])
    disc_before = {n: tiny.params[n].copy() for n in tiny.group_names("disc_human")}
    train_step(state, bh, br, cfg)
    for n, v in before.items():
        assert np.array_equal(tiny.params[n], v), n
    assert any(not np.array_equal(tiny.params[n], v) for n, v in disc_before.items())


# --- loop ---

@pytest.fixture(scope="module")
def micro():
    return make_fixture(FixtureSpec(motions=2, frames=40))


def micro_config(**kw):
    base = dict(window=16, stride=8, batch_size=2, steps=6, kernel_size=5, joint_channels=2,
                latent_channels=4, disc_channels=2, checkpoint_interval=3)
    base.update(kw)
    return TrainConfig(**base)


def test_train_outputs(micro, tmp_path):
    res = train(micro_config(), micro.human.clips, micro.robot.clips, tmp_path,
                micro.human.config, micro.robot.config)
    lines = (tmp_path / "losses.csv").read_text().splitlines()
    assert lines[0] == ",".join(LOSS_COLUMNS)
    assert len(lines) == 7
    assert (tmp_path / "ckpt_3.nmrt").exists() and (tmp_path / "ckpt_6.nmrt").exists()
    assert res.checkpoint_path.name == "ckpt_6.nmrt"
    for row in lines[1:]:
        vals = [float(v) for v in row.split(",")]
        assert vals[3] == pytest.approx(sum(vals[4:]), abs=1e-9)
    # stats frozen: stored stats equal a fresh computation over training features
    h = res.model.domains["human"]
    mean, std = compute_norm_stats([h.features_from_clip(c) for c in micro.human.clips])
    assert h.mean.tobytes() == mean.tobytes() and h.std.tobytes() == std.tobytes()


def test_train_determinism(micro, tmp_path):
    for sub in ("a", "b"):
        train(micro_config(seed=7, checkpoint_interval=0), micro.human.clips, micro.robot.clips,
              tmp_path / sub, micro.human.config, micro.robot.config)
    assert (tmp_path / "a/losses.csv").read_bytes() == (tmp_path / "b/losses.csv").read_bytes()
    assert (tmp_path / "a/ckpt_6.nmrt").read_bytes() == (tmp_path / "b/ckpt_6.nmrt").read_bytes()


def test_train_ee_column(micro, tmp_path):
    train(micro_config(w_ee=1.0, steps=2), micro.human.clips, micro.robot.clips, tmp_path,
          micro.human.config, micro.robot.config)
    assert (tmp_path / "losses.csv").read_text().splitlines()[0].endswith(",g_ee")


def test_train_empty_after_windowing(micro, tmp_path):
    with pytest.raises(EmptyCorpus):
        train(micro_config(window=64), micro.human.clips, micro.robot.clips, tmp_path,
              micro.human.config, micro.robot.config)
