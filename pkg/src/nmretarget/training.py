"""Unsupervised adversarial training over unpaired human and robot corpora.

Each step runs one least-squares discriminator update per domain on
detached generator outputs, then one generator update on::

    w_adv    * adversarial (LSGAN, target 1)
  + w_cycle  * cycle reconstruction in feature space (sign-safe for quaternions)
  + w_fk     * squared FK position error of the cycle reconstruction, root-local
  + w_latent * latent consistency  |E_h(x_h) - E_h(x_h->r->h)|^2
  + w_ee     * optional cross-domain end-effector matching (off by default)
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import Tape, adam_step, ops
from .autodiff.optim import AdamState
from .autodiff.tensor import Tensor
from .checkpoint import save_checkpoint
from .errors import ConfigError, EmptyCorpus, ShapeMismatch
from .kinematics import fk_differentiable, forward_kinematics
from .retarget_net import Architecture, DomainSpec, RetargetModel
from .skeleton_model import SkeletonConfig

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["step", "d_h", "d_r", "g_total", "g_adv", "g_cycle", "g_fk", "g_latent"]

# dotted JSON key -> TrainConfig attribute
_CONFIG_KEYS = {
    "seed": "seed",
    "window.T": "window",
    "window.stride": "stride",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "steps": "steps",
    "lr.generator": "lr_generator",
    "lr.discriminator": "lr_discriminator",
    "weights.adv": "w_adv",
    "weights.cycle": "w_cycle",
    "weights.fk": "w_fk",
    "weights.latent": "w_latent",
    "weights.ee": "w_ee",
    "padding": "padding",
    "checkpoint_interval": "checkpoint_interval",
    "model.kernel_size": "kernel_size",
    "model.joint_channels": "joint_channels",
    "model.latent_channels": "latent_channels",
    "model.disc_channels": "disc_channels",
}


@dataclass
class TrainConfig:
    seed: int = 42
    window: int = 64
    stride: int = 32
    batch_size: int = 8
    epochs: int = 100
    steps: int | None = None
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-4
    w_adv: float = 1.0
    w_cycle: float = 10.0
    w_fk: float = 5.0
    w_latent: float = 1.0
    w_ee: float = 0.0
    padding: str = "reflect"
    checkpoint_interval: int = 0
    kernel_size: int = 15
    joint_channels: int = 16
    latent_channels: int = 16
    disc_channels: int = 4

    def validate(self):
        if self.window < 8 or self.window % 2:
            raise ConfigError(f"window.T must be even and >= 8, got {self.window}")
        if self.stride < 1:
            raise ConfigError("window.stride must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1 when set")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        for name in ("w_adv", "w_cycle", "w_fk", "w_latent", "w_ee"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        if self.padding not in ("reflect", "zero", "replicate"):
            raise ConfigError(f"unknown padding {self.padding!r}")
        return self

    @property
    def architecture(self) -> Architecture:
        return Architecture(window=self.window, kernel_size=self.kernel_size,
                            joint_channels=self.joint_channels,
                            latent_channels=self.latent_channels,
                            disc_channels=self.disc_channels, padding=self.padding)

    @property
    def weights(self) -> dict[str, float]:
        return {"adv": self.w_adv, "cycle": self.w_cycle, "fk": self.w_fk,
                "latent": self.w_latent, "ee": self.w_ee}

    def to_dict(self) -> dict:
        out: dict = {}
        for key, attr in _CONFIG_KEYS.items():
            node = out
            *parents, leaf = key.split(".")
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = getattr(self, attr)
        return out

    @classmethod
    def from_dict(cls, d, overrides=None) -> "TrainConfig":
        values = {}
        flat = _flatten(d)
        flat.update(overrides or {})
        for key, value in flat.items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            values[_CONFIG_KEYS[key]] = value
        types = {f.name: f.type for f in fields(cls)}
        for attr, value in values.items():
            if value is None:
                continue
            kind = types[attr]
            try:
                if "int" in kind and not isinstance(value, bool):
                    if float(value) != int(float(value)):
                        raise ValueError
                    values[attr] = int(float(value))
                elif "float" in kind:
                    values[attr] = float(value)
                elif "str" in kind:
                    values[attr] = str(value)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value {value!r} for {attr}") from None
        return cls(**values).validate()


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_overrides(items) -> dict:
    """``["window.T=32", ...]`` -> ``{"window.T": 32}`` (values parsed as JSON when possible)."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def load_train_config(path, overrides=None) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return TrainConfig.from_dict(data, overrides)


# --- data ---------------------------------------------------------------------------------

def make_windows(clips, window: int, stride: int) -> list[tuple[int, int]]:
    """``(clip index, start frame)`` of every full window; short clips are skipped."""
    if window < 1 or stride < 1:
        raise ConfigError("window and stride must be >= 1")
    out = []
    for ci, clip in enumerate(clips):
        n = clip.num_frames if hasattr(clip, "num_frames") else int(clip)
        if n < window:
            logger.warning("clip %s has %d frames < window %d; skipped",
                           getattr(clip, "name", ci), n, window)
            continue
        out.extend((ci, s) for s in range(0, n - window + 1, stride))
    return out


def compute_norm_stats(feature_seqs) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std (population) over every frame of ``[F, N]`` sequences."""
    seqs = [np.asarray(f, dtype=np.float64) for f in feature_seqs]
    total = sum(f.shape[1] for f in seqs)
    if total == 0:
        raise EmptyCorpus("no frames to compute normalization statistics from")
    allf = np.concatenate(seqs, axis=1)
    mean = allf.mean(axis=1)
    std = np.maximum(allf.std(axis=1), 1e-6)
    return mean, std


@dataclass
class DatasetView:
    features: dict[str, list[np.ndarray]]
    windows: dict[str, list[tuple[int, int]]]
    window: int

    def batch(self, domain: str, indices) -> np.ndarray:
        feats = self.features[domain]
        return np.stack([feats[c][:, s:s + self.window]
                         for c, s in (self.windows[domain][i] for i in indices)])


# --- losses ---------------------------------------------------------------------------------

@dataclass
class GeneratorPass:
    fake_r: Tensor
    fake_h: Tensor
    cyc_h: Tensor
    cyc_r: Tensor
    z_h: Tensor


def generator_forward(model: RetargetModel, batch_h, batch_r, params=None) -> GeneratorPass:
    h, r = model.domains["human"], model.domains["robot"]
    z_h = model.encode(h, h.normalize(Tensor(batch_h)), params)
    fake_r = model.decode(r, z_h, params)
    fake_h = model.retarget_window(r, h, batch_r, params)
    cyc_h = model.retarget_window(r, h, fake_r, params)
    cyc_r = model.retarget_window(h, r, fake_h, params)
    return GeneratorPass(fake_r, fake_h, cyc_h, cyc_r, z_h)


def cycle_distance(dom: DomainSpec, recon: Tensor, target: np.ndarray) -> Tensor:
    """Mean per-element reconstruction error in normalized units; quaternions compared up to sign."""
    b, f, t = target.shape
    n = len(dom.actuated)
    inv_std = 1.0 / dom.std
    q_scale = inv_std[:4 * n].reshape(1, n, 4, 1)
    q = ops.reshape(ops.slice(recon, np.s_[:, :4 * n, :]), (b, n, 4, t))
    q0 = target[:, :4 * n, :].reshape(b, n, 4, t)
    d_minus = ops.sum(ops.square(ops.mul(ops.sub(q, q0), q_scale)), axis=2)
    d_plus = ops.sum(ops.square(ops.mul(ops.add(q, q0), q_scale)), axis=2)
    rot_err = ops.sum(ops.minimum(d_minus, d_plus))
    root = ops.slice(recon, np.s_[:, 4 * n:, :])
    root_err = ops.sum(ops.square(ops.mul(ops.sub(root, target[:, 4 * n:, :]), inv_std[4 * n:, None])))
    return ops.mul(ops.add(rot_err, root_err), 1.0 / (b * f * t))


def reference_positions(dom: DomainSpec, batch: np.ndarray) -> np.ndarray:
    """Root-local FK positions ``[B, T, J, 3]`` of raw feature windows, in mean-bone-length units."""
    n = len(dom.actuated)
    quats = np.zeros(batch.shape[:1] + batch.shape[2:] + (len(dom.skeleton), 4))
    quats[..., 0] = 1.0
    quats[..., dom.actuated, :] = batch[:, :4 * n, :].transpose(0, 2, 1).reshape(
        batch.shape[0], batch.shape[2], n, 4)
    return forward_kinematics(dom.skeleton, (np.zeros(3), quats), root_local=True) / dom.link_unit


def fk_distance(dom: DomainSpec, recon: Tensor, target_pos: np.ndarray) -> Tensor:
    pos = fk_differentiable(dom.skeleton, dom.pose_tensor(recon), root_local=True)
    diff = ops.sub(ops.mul(pos, 1.0 / dom.link_unit), target_pos)
    b, t, j, _ = target_pos.shape
    return ops.mul(ops.sum(ops.square(diff)), 1.0 / (b * t * j))


def _ee_indices(dom: DomainSpec):
    return [dom.skeleton.index(dom.config.end_effectors[k])
            for k in ("head", "left_hand", "right_hand")]


def generator_terms(model: RetargetModel, gp: GeneratorPass, batch_h, batch_r, weights,
                    params=None):
    """Weighted loss terms of a generator pass; returns ``(total, {name: tensor})``.

    ``params`` are the generator variables of the pass; discriminator weights
    not in it are read from the model as constants.
    """
    h, r = model.domains["human"], model.domains["robot"]
    terms = {}
    if weights.get("adv", 0):
        adv_r = ops.mean(ops.square(ops.sub(model.discriminate(r, r.normalize(gp.fake_r), params), 1.0)))
        adv_h = ops.mean(ops.square(ops.sub(model.discriminate(h, h.normalize(gp.fake_h), params), 1.0)))
        terms["adv"] = ops.mul(ops.add(adv_r, adv_h), weights["adv"])
    else:
        terms["adv"] = Tensor(0.0)
    if weights.get("cycle", 0):
        cyc = ops.add(cycle_distance(h, gp.cyc_h, batch_h), cycle_distance(r, gp.cyc_r, batch_r))
        terms["cycle"] = ops.mul(cyc, weights["cycle"])
    else:
        terms["cycle"] = Tensor(0.0)
    if weights.get("fk", 0):
        fk = ops.add(fk_distance(h, gp.cyc_h, reference_positions(h, batch_h)),
                     fk_distance(r, gp.cyc_r, reference_positions(r, batch_r)))
        terms["fk"] = ops.mul(fk, weights["fk"])
    else:
        terms["fk"] = Tensor(0.0)
    if weights.get("latent", 0):
        z_cyc = model.encode(h, h.normalize(gp.cyc_h), params)
        terms["latent"] = ops.mul(ops.mean(ops.square(ops.sub(gp.z_h, z_cyc))), weights["latent"])
    else:
        terms["latent"] = Tensor(0.0)
    if weights.get("ee", 0):
        src = reference_positions(h, batch_h)[:, :, _ee_indices(h)] * (h.link_unit / h.height)
        pos = fk_differentiable(r.skeleton, r.pose_tensor(gp.fake_r), root_local=True)
        pos = ops.mul(ops.slice(pos, np.s_[:, :, _ee_indices(r)]), 1.0 / r.height)
        terms["ee"] = ops.mul(ops.mean(ops.square(ops.sub(pos, src))), 3.0 * weights["ee"])
    total = terms["adv"]
    for k in ("cycle", "fk", "latent", "ee"):
        if k in terms:
            total = ops.add(total, terms[k])
    return total, terms


def generator_loss(model: RetargetModel, batch_h, batch_r, weights=None, params=None):
    """``(L_G, term breakdown)`` for raw feature batches ``[B, F, T]`` of each domain.

    ``weights`` maps adv/cycle/fk/latent/ee to scalars (defaults 1, 10, 5, 1, 0).
    """
    weights = weights or TrainConfig().weights
    _check_batch(model, "human", batch_h)
    _check_batch(model, "robot", batch_r)
    gp = generator_forward(model, batch_h, batch_r, params)
    return generator_terms(model, gp, batch_h, batch_r, weights, params)


def discriminator_loss(model: RetargetModel, batch_real, batch_fake, domain, params=None) -> Tensor:
    """LSGAN critic loss on normalized windows; ``batch_fake`` is detached first."""
    fake = Tensor(batch_fake.data if isinstance(batch_fake, Tensor) else batch_fake)
    real = model.discriminate(domain, batch_real, params)
    score_fake = model.discriminate(domain, fake, params)
    return ops.add(ops.mean(ops.square(ops.sub(real, 1.0))), ops.mean(ops.square(score_fake)))


def _check_batch(model, domain, batch):
    f = model.domains[domain].num_features
    if np.ndim(batch) != 3 or np.shape(batch)[1] != f:
        raise ShapeMismatch(f"{domain} batch shape {np.shape(batch)} needs [B, {f}, T]")


# --- loop -----------------------------------------------------------------------------------

@dataclass
class TrainState:
    model: RetargetModel
    opt_g: AdamState = field(default_factory=AdamState)
    opt_dh: AdamState = field(default_factory=AdamState)
    opt_dr: AdamState = field(default_factory=AdamState)
    step: int = 0


def train_step(state: TrainState, batch_h, batch_r, config: TrainConfig) -> dict:
    model = state.model
    h, r = model.domains["human"], model.domains["robot"]
    gen_names = model.group_names("generator")

    tape = Tape()
    params = {n: tape.variable(model.params[n]) for n in gen_names}
    gp = generator_forward(model, batch_h, batch_r, params)

    d_losses = {}
    for dom, real, fake, opt in ((h, batch_h, gp.fake_h, "opt_dh"), (r, batch_r, gp.fake_r, "opt_dr")):
        names = model.group_names(f"disc_{dom.name}")
        dtape = Tape()
        dparams = {n: dtape.variable(model.params[n]) for n in names}
        loss = discriminator_loss(model, dom.normalize(real), dom.normalize(fake.data), dom, dparams)
        dtape.backward(loss)
        new, st = adam_step({n: model.params[n] for n in names},
                            {n: dparams[n].grad for n in names},
                            getattr(state, opt), config.lr_discriminator)
        model.params.update(new)
        setattr(state, opt, st)
        d_losses[dom.name] = float(loss.data)

    total, terms = generator_terms(model, gp, batch_h, batch_r, config.weights, params)
    if total.tape is tape:
        tape.backward(total)
        grads = {n: params[n].grad for n in gen_names}
    else:  # every generator term disabled
        grads = {n: np.zeros_like(model.params[n]) for n in gen_names}
    new, state.opt_g = adam_step({n: model.params[n] for n in gen_names}, grads,
                                 state.opt_g, config.lr_generator)
    model.params.update(new)

    row = {"step": state.step, "d_h": d_losses["human"], "d_r": d_losses["robot"],
           "g_total": float(total.data)}
    for k in ("adv", "cycle", "fk", "latent"):
        row[f"g_{k}"] = float(terms[k].data)
    if "ee" in terms:
        row["g_ee"] = float(terms["ee"].data)
    state.step += 1
    return row


@dataclass
class TrainResult:
    model: RetargetModel
    history: list[dict]
    losses_path: Path
    checkpoint_path: Path
    stats: dict[str, tuple[np.ndarray, np.ndarray]]
    initial_params: dict[str, np.ndarray] = field(default_factory=dict)

    def untrained_model(self) -> RetargetModel:
        """The model as it was before the first step (same stats and architecture)."""
        m = self.model
        return RetargetModel(m.domains["human"], m.domains["robot"], m.arch,
                             params=self.initial_params)


def build_dataset(human: DomainSpec, robot: DomainSpec, human_clips, robot_clips, config: TrainConfig):
    feats = {"human": [human.features_from_clip(c) for c in human_clips],
             "robot": [robot.features_from_clip(c) for c in robot_clips]}
    windows = {d: make_windows([f.shape[1] for f in feats[d]], config.window, config.stride)
               for d in feats}
    for d, w in windows.items():
        if not w:
            raise EmptyCorpus(f"{d} corpus has no window of {config.window} frames")
    return DatasetView(feats, windows, config.window)


def _format(v):
    return repr(v) if isinstance(v, float) else str(v)


def train(config: TrainConfig, human_clips, robot_clips, out_dir,
          human_config: SkeletonConfig, robot_config: SkeletonConfig,
          progress=None) -> TrainResult:
    """Train from scratch and write ``losses.csv`` plus checkpoints into ``out_dir``.

    ``progress(row)`` is called after every step when given.
    """
    config.validate()
    if not human_clips or not robot_clips:
        raise EmptyCorpus("both corpora must contain clips")
    human = DomainSpec("human", human_clips[0].skeleton, human_config)
    robot = DomainSpec("robot", robot_clips[0].skeleton, robot_config)
    data = build_dataset(human, robot, human_clips, robot_clips, config)
    stats = {d: compute_norm_stats(data.features[d]) for d in ("human", "robot")}
    human = human.with_stats(*stats["human"])
    robot = robot.with_stats(*stats["robot"])

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    model = RetargetModel(human, robot, config.architecture,
                          params=None, seed=int(seeds[0].generate_state(1)[0]))
    initial = {k: v.copy() for k, v in model.params.items()}
    rng = np.random.default_rng(seeds[1])
    state = TrainState(model)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_h, n_r = len(data.windows["human"]), len(data.windows["robot"])
    b = config.batch_size
    per_epoch = math.ceil(max(n_h, n_r) / b)
    total_steps = config.steps if config.steps is not None else config.epochs * per_epoch
    columns = LOSS_COLUMNS + (["g_ee"] if config.w_ee else [])
    history = []
    losses_path = out / "losses.csv"
    with open(losses_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        while state.step < total_steps:
            perm_h = rng.permutation(n_h)
            perm_r = rng.permutation(n_r)
            for k in range(per_epoch):
                if state.step >= total_steps:
                    break
                idx = k * b + np.arange(b)
                row = train_step(state, data.batch("human", perm_h[idx % n_h]),
                                 data.batch("robot", perm_r[idx % n_r]), config)
                writer.writerow([_format(row[c]) for c in columns])
                history.append(row)
                if progress is not None:
                    progress(row)
                if config.checkpoint_interval and state.step % config.checkpoint_interval == 0:
                    save_checkpoint(model, out / f"ckpt_{state.step}.nmrt")
            fh.flush()
    final = save_checkpoint(model, out / f"ckpt_{state.step}.nmrt")
    (out / "train_config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n",
                                           encoding="utf-8")
    return TrainResult(model, history, losses_path, final, stats, initial)


def config_as_dict(config: TrainConfig) -> dict:
    return asdict(config)
