"""Skeleton-aware encoder/decoder pair per domain, plus per-domain discriminators.

Network features for a domain are ``F = 4 * J_act + 3`` channels per frame:
the quaternions of its actuated joints followed by the root translation
divided by the character height. Channels are grouped by "feature joint"
(each actuated joint, plus a pseudo-joint for the root translation), and
feature joints are grouped into body parts by the skeleton config. All
convolutions are masked so that outputs only see inputs of the same part.

Encoder::

    conv(F -> J_f*H) -> leaky -> pool joints to parts (P*H)
    conv(P*H -> P*L, stride 2) -> leaky                         latent [P*L, T/2]

Decoder::

    unpool parts to joints (J_f*L) -> conv(-> J_f*H) -> leaky -> upsample x2
    -> conv(-> F) -> denormalize -> unit-normalize each quaternion

Both domains must declare the same number of parts, which is what lets one
latent serve skeletons with different joint counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor
from .errors import ConfigError, ShapeMismatch
from .motion import MotionClip
from .rotations import identity as quat_identity
from .skeleton_model import JointKind, Skeleton, SkeletonConfig

STD_FLOOR = 1e-6
DOMAINS = ("human", "robot")


@dataclass
class DomainSpec:
    name: str
    skeleton: Skeleton
    config: SkeletonConfig
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        if not self.skeleton.is_bound:
            raise ConfigError(f"domain {self.name!r}: skeleton has no joint kinds bound")
        f = self.num_features
        self.mean = np.zeros(f) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        self.std = np.ones(f) if self.std is None else np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (f,) or self.std.shape != (f,):
            raise ShapeMismatch(f"domain {self.name!r}: stats must have shape ({f},)")
        self.std = np.maximum(self.std, STD_FLOOR)
        missing = set(range(self.num_parts)) - set(self.feature_parts)
        if missing:
            raise ConfigError(f"domain {self.name!r}: parts {sorted(missing)} contain no "
                              "actuated joint or root")

    @cached_property
    def actuated(self) -> np.ndarray:
        return np.nonzero([k is JointKind.ACTUATED for k in self.skeleton.kinds])[0]

    @property
    def num_features(self) -> int:
        return 4 * len(self.actuated) + 3

    @property
    def num_feature_joints(self) -> int:
        return len(self.actuated) + 1

    @property
    def num_parts(self) -> int:
        return self.config.num_parts

    @property
    def height(self) -> float:
        return self.config.height

    @cached_property
    def link_unit(self) -> float:
        """Mean non-zero bone length; the length unit of position losses."""
        lengths = np.linalg.norm(self.skeleton.offsets[1:], axis=1)
        lengths = lengths[lengths > 1e-9]
        return float(lengths.mean()) if lengths.size else self.height

    @cached_property
    def feature_parts(self) -> list[int]:
        names = self.skeleton.names
        parts = [self.config.parts[names[j]] for j in self.actuated]
        return parts + [self.config.parts[names[0]]]

    @cached_property
    def channel_joint(self) -> np.ndarray:
        """Feature-joint index of every feature channel."""
        return np.concatenate([np.repeat(np.arange(len(self.actuated)), 4),
                               np.full(3, len(self.actuated))])

    def with_stats(self, mean, std) -> "DomainSpec":
        return DomainSpec(self.name, self.skeleton, self.config, mean, std)

    # --- feature conversion (numpy) ---

    def features_from_clip(self, clip: MotionClip) -> np.ndarray:
        """Raw features ``[F, N]`` of a clip on this domain's skeleton."""
        q = clip.rotations[:, self.actuated].reshape(clip.num_frames, -1)
        root = clip.root_translation / self.height
        return np.concatenate([q, root], axis=1).T.copy()

    def clip_from_features(self, feats, frame_time=0.02, name="") -> MotionClip:
        feats = np.asarray(feats, dtype=np.float64)
        n = feats.shape[1]
        rotations = quat_identity((n, len(self.skeleton)))
        rotations[:, self.actuated] = feats[:-3].T.reshape(n, len(self.actuated), 4)
        return MotionClip(self.skeleton, feats[-3:].T * self.height, rotations, frame_time, name)

    # --- normalization (arrays or tensors, channel axis = -2) ---

    def normalize(self, x):
        mean, inv = self.mean[:, None], (1.0 / self.std)[:, None]
        if isinstance(x, Tensor):
            return ops.mul(ops.sub(x, mean), inv)
        return (x - mean) * inv

    def denormalize(self, x):
        mean, std = self.mean[:, None], self.std[:, None]
        if isinstance(x, Tensor):
            return ops.add(ops.mul(x, std), mean)
        return x * std + mean

    def pose_tensor(self, feats: Tensor) -> Tensor:
        """Map raw features ``[B, F, T]`` to full FK poses ``[B, T, 4 * J + 3]``."""
        n_joints = len(self.skeleton)
        f = self.num_features
        scatter = np.zeros((f, 4 * n_joints + 3))
        for k, j in enumerate(self.actuated):
            scatter[4 * k:4 * k + 4, 4 * j:4 * j + 4] = np.eye(4)
        scatter[f - 3:, 4 * n_joints:] = np.eye(3) * self.height
        base = np.zeros(4 * n_joints + 3)
        for j in range(n_joints):
            if j not in set(self.actuated.tolist()):
                base[4 * j] = 1.0
        return ops.add(ops.matmul(ops.transpose(feats, (0, 2, 1)), scatter), base)


def _part_mask(out_parts, in_parts) -> np.ndarray:
    return (np.asarray(out_parts)[:, None] == np.asarray(in_parts)[None, :]).astype(np.float64)


def _mask_groups(mask) -> list:
    """Split a block mask into ``(out_channels, in_channels)`` index pairs, one per block."""
    by_pattern = {}
    for row, pattern in enumerate(mask > 0):
        cols = tuple(np.nonzero(pattern)[0])
        if cols:
            by_pattern.setdefault(cols, []).append(row)
    return [(np.array(rows), np.array(cols)) for cols, rows in by_pattern.items()]


@dataclass
class Architecture:
    window: int = 64
    kernel_size: int = 15
    joint_channels: int = 16
    latent_channels: int = 16
    disc_channels: int = 4
    slope: float = 0.2
    padding: str = "reflect"

    def validate(self):
        if self.window < 8 or self.window % 2:
            raise ConfigError(f"window length must be even and >= 8, got {self.window}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel size must be odd")


class RetargetModel:
    """Parameters and forward passes of the two-domain retargeting GAN.

    Every forward method takes an optional ``params`` mapping (name -> Tensor)
    so the same code runs detached for inference or on a tape for training.
    """

    VERSION = 1

    def __init__(self, human: DomainSpec, robot: DomainSpec, arch: Architecture | None = None,
                 params: dict | None = None, seed: int = 0):
        self.arch = arch or Architecture()
        self.arch.validate()
        self.domains = {"human": human, "robot": robot}
        if human.num_parts != robot.num_parts:
            raise ConfigError(f"domains declare different part counts "
                              f"({human.num_parts} vs {robot.num_parts})")
        self.masks, self.pools, self.unpools = {}, {}, {}
        for d in DOMAINS:
            self._build_constants(d)
        self.groups = {name: _mask_groups(m) for name, m in self.masks.items()}
        expected = self.param_shapes()
        if params is None:
            params = self.init_params(np.random.default_rng(seed))
        for name, shape in expected.items():
            if name not in params or tuple(np.shape(params[name])) != shape:
                raise ShapeMismatch(f"parameter {name!r} missing or not of shape {shape}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in expected}

    # --- structure ---

    @property
    def num_parts(self) -> int:
        return self.domains["human"].num_parts

    @property
    def latent_width(self) -> int:
        return self.num_parts * self.arch.latent_channels

    def domain(self, d) -> DomainSpec:
        return self.domains[d] if isinstance(d, str) else self.domains[d.name]

    def _build_constants(self, d):
        dom = self.domains[d]
        a = self.arch
        h, l, hd, p = a.joint_channels, a.latent_channels, a.disc_channels, dom.num_parts
        fparts = np.asarray(dom.feature_parts)
        chan_parts = fparts[dom.channel_joint]
        joint_h = np.repeat(fparts, h)  # part of each per-joint hidden channel
        joint_l = np.repeat(fparts, l)
        joint_hd = np.repeat(fparts, hd)
        part_h = np.repeat(np.arange(p), h)
        part_l = np.repeat(np.arange(p), l)
        part_hd = np.repeat(np.arange(p), hd)
        self.masks[f"{d}.enc1.w"] = _part_mask(joint_h, chan_parts)
        self.masks[f"{d}.enc2.w"] = _part_mask(part_l, part_h)
        self.masks[f"{d}.dec1.w"] = _part_mask(joint_h, joint_l)
        self.masks[f"{d}.dec2.w"] = _part_mask(chan_parts, joint_h)
        self.masks[f"{d}.disc1.w"] = _part_mask(joint_hd, chan_parts)
        self.masks[f"{d}.disc2.w"] = _part_mask(part_hd, joint_hd)
        self.masks[f"{d}.disc3.w"] = _part_mask(part_hd, part_hd)
        counts = np.bincount(fparts, minlength=p).astype(np.float64)
        pool = np.zeros((p * h, len(fparts) * h))
        unpool = np.zeros((len(fparts) * l, p * l))
        for jf, part in enumerate(fparts):
            for c in range(h):
                pool[part * h + c, jf * h + c] = 1.0 / counts[part]
            for c in range(l):
                unpool[jf * l + c, part * l + c] = 1.0
        self.pools[d] = pool
        self.unpools[d] = unpool

    def param_shapes(self) -> dict[str, tuple]:
        a = self.arch
        k = a.kernel_size
        shapes = {}
        for d in DOMAINS:
            dom = self.domains[d]
            f, jf, p = dom.num_features, dom.num_feature_joints, dom.num_parts
            h, l, hd = a.joint_channels, a.latent_channels, a.disc_channels
            conv = {
                "enc1": (jf * h, f), "enc2": (p * l, p * h),
                "dec1": (jf * h, jf * l), "dec2": (f, jf * h),
                "disc1": (jf * hd, f), "disc2": (p * hd, jf * hd), "disc3": (p * hd, p * hd),
            }
            for name, (co, ci) in conv.items():
                shapes[f"{d}.{name}.w"] = (co, ci, k)
                shapes[f"{d}.{name}.b"] = (co,)
            shapes[f"{d}.head.w"] = (p * hd, 1)
            shapes[f"{d}.head.b"] = (1,)
        return shapes

    def init_params(self, rng) -> dict[str, np.ndarray]:
        """Center-tap (delta) He-uniform convolutions; zero biases.

        Only the middle kernel tap starts non-zero, scaled by the unmasked
        input-channel fan-in, so an untrained network mixes channels frame by
        frame and temporal filters are grown by training. The last decoder
        layer uses unit gain.
        """
        params = {}
        k = self.arch.kernel_size
        leaky_gain = 2.0 / (1.0 + self.arch.slope ** 2)
        for name, shape in self.param_shapes().items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
            elif name.endswith("head.w"):
                params[name] = rng.uniform(-1, 1, shape) * np.sqrt(3.0 / shape[0])
            else:
                mask = self.masks[name]
                fan_in = np.maximum(mask.sum(axis=1), 1.0)[:, None]
                gain = 1.0 if name.endswith("dec2.w") else leaky_gain
                w = np.zeros(shape)
                w[:, :, k // 2] = rng.uniform(-1, 1, shape[:2]) * np.sqrt(3.0 * gain / fan_in) * mask
                params[name] = w
        return params

    def group_names(self, group: str) -> list[str]:
        """Parameter names of ``"generator"``, ``"disc_human"`` or ``"disc_robot"``."""
        names = self.param_shapes()
        if group == "generator":
            return [n for n in names if n.split(".")[1][:3] in ("enc", "dec")]
        if group.startswith("disc_"):
            d = group[len("disc_"):]
            return [n for n in names if n.startswith(f"{d}.") and n.split(".")[1][:3] in ("dis", "hea")]
        raise KeyError(group)

    # --- layers ---

    def _p(self, params, name):
        return self.params[name] if params is None else params.get(name, self.params[name])

    def _conv(self, params, name, x, stride=1):
        return ops.conv1d(x, self._p(params, f"{name}.w"), self._p(params, f"{name}.b"),
                          stride=stride, padding=self.arch.padding,
                          groups=self.groups[f"{name}.w"])

    @staticmethod
    def _batched(x):
        if x.ndim == 2:
            return ops.reshape(x, (1,) + x.shape), True
        return x, False

    def encode(self, domain, window, params=None) -> Tensor:
        """Normalized window ``[F, T]`` or ``[B, F, T]`` -> latent ``[.., P*L, T/2]``."""
        dom = self.domain(domain)
        d = dom.name
        x, single = self._batched(window if isinstance(window, Tensor) else Tensor(window))
        if x.shape[1] != dom.num_features or x.shape[2] % 2 or x.shape[2] < 8:
            raise ShapeMismatch(f"encode({d}): window shape {x.shape[1:]} needs "
                                f"({dom.num_features}, even T >= 8)")
        slope = self.arch.slope
        hdn = ops.leaky_relu(self._conv(params, f"{d}.enc1", x), slope)
        hdn = ops.matmul(self.pools[d], hdn)
        z = ops.leaky_relu(self._conv(params, f"{d}.enc2", hdn, stride=2), slope)
        return ops.reshape(z, z.shape[1:]) if single else z

    def decode_normalized(self, domain, latent, params=None) -> Tensor:
        """Decoder body: latent -> normalized-space output ``[.., F, T]``."""
        dom = self.domain(domain)
        d = dom.name
        z, single = self._batched(latent if isinstance(latent, Tensor) else Tensor(latent))
        if z.shape[1] != self.latent_width:
            raise ShapeMismatch(f"decode({d}): latent has {z.shape[1]} channels, "
                                f"expected {self.latent_width}")
        slope = self.arch.slope
        hdn = ops.matmul(self.unpools[d], z)
        hdn = ops.leaky_relu(self._conv(params, f"{d}.dec1", hdn), slope)
        hdn = ops.upsample1d(hdn, 2)
        out = self._conv(params, f"{d}.dec2", hdn)
        return ops.reshape(out, out.shape[1:]) if single else out

    def decode(self, domain, latent, params=None) -> Tensor:
        """Latent -> raw features with unit quaternions and denormalized root."""
        dom = self.domain(domain)
        out = dom.denormalize(self.decode_normalized(dom, latent, params))
        return finalize_features(dom, out)

    def retarget_window(self, src, dst, window, params=None) -> Tensor:
        """Raw ``src`` features -> raw ``dst`` features (same number of frames)."""
        src, dst = self.domain(src), self.domain(dst)
        x = window if isinstance(window, Tensor) else Tensor(window)
        return self.decode(dst, self.encode(src, src.normalize(x), params), params)

    def cycle_window(self, home, other, window, params=None) -> Tensor:
        fake = self.retarget_window(home, other, window, params)
        return self.retarget_window(other, home, fake, params)

    def discriminate(self, domain, window, params=None) -> Tensor:
        """Normalized window -> realness score (0-d, or ``[B]`` for a batch)."""
        dom = self.domain(domain)
        d = dom.name
        x, single = self._batched(window if isinstance(window, Tensor) else Tensor(window))
        if x.shape[1] != dom.num_features:
            raise ShapeMismatch(f"discriminate({d}): window has {x.shape[1]} channels, "
                                f"expected {dom.num_features}")
        slope = self.arch.slope
        hdn = x
        for layer in ("disc1", "disc2", "disc3"):
            hdn = ops.leaky_relu(self._conv(params, f"{d}.{layer}", hdn, stride=2), slope)
        pooled = ops.mean(hdn, axis=2)
        score = ops.add(ops.matmul(pooled, self._p(params, f"{d}.head.w")),
                        self._p(params, f"{d}.head.b"))
        score = ops.reshape(score, (score.shape[0],))
        return ops.reshape(score, ()) if single else score


def finalize_features(dom: DomainSpec, raw: Tensor) -> Tensor:
    """Unit-normalize the quaternion block of raw features ``[.., F, T]``."""
    raw, single = RetargetModel._batched(raw)
    b, f, t = raw.shape
    n_act = len(dom.actuated)
    q = ops.slice(raw, np.s_[:, :4 * n_act, :])
    q = ops.normalize_l2(ops.reshape(q, (b, n_act, 4, t)), axis=2)
    out = ops.concat([ops.reshape(q, (b, 4 * n_act, t)), ops.slice(raw, np.s_[:, 4 * n_act:, :])],
                     axis=1)
    return ops.reshape(out, (f, t)) if single else out


class IdentityModel(RetargetModel):
    """Test double whose encoder and decoder are identity maps in normalized space.

    Only meaningful for domains with equal feature widths.
    """

    def __init__(self, human: DomainSpec, robot: DomainSpec, arch: Architecture | None = None):
        self.arch = arch or Architecture()
        self.domains = {"human": human, "robot": robot}
        self.params = {}

    def param_shapes(self):
        return {}

    def group_names(self, group):
        return []

    def encode(self, domain, window, params=None):
        return window if isinstance(window, Tensor) else Tensor(window)

    def decode_normalized(self, domain, latent, params=None):
        return latent if isinstance(latent, Tensor) else Tensor(latent)

    def decode(self, domain, latent, params=None):
        return self.domain(domain).denormalize(self.decode_normalized(domain, latent))

    def discriminate(self, domain, window, params=None):
        x = window if isinstance(window, Tensor) else Tensor(window)
        if x.ndim == 2:
            return Tensor(np.ones(()))
        return Tensor(np.ones(x.shape[0]))


# --- whole-clip application -----------------------------------------------------------

def window_starts(n_frames: int, window: int) -> list[int]:
    """Non-overlapping tiling with an end-aligned final window for the tail."""
    if n_frames <= window:
        return [0]
    starts = list(range(0, n_frames - window + 1, window))
    if starts[-1] + window < n_frames:
        starts.append(n_frames - window)
    return starts


def apply_windowed(fn, feats: np.ndarray, window: int) -> np.ndarray:
    """Run ``fn`` (``[B, F, T] -> [B, F', T]``) over a ``[F, N]`` sequence and reassemble.

    Later windows overwrite the overlap of earlier ones. Sequences shorter
    than ``window`` are edge-padded and cropped back.
    """
    n = feats.shape[1]
    if n == 0:
        probe = fn(np.repeat(feats[:, :1] if feats.shape[1] else np.zeros((feats.shape[0], 1)),
                             window, axis=1)[None])
        return np.zeros((probe.shape[1], 0))
    padded = feats if n >= window else np.pad(feats, ((0, 0), (0, window - n)), mode="edge")
    starts = window_starts(padded.shape[1], window)
    batch = np.stack([padded[:, s:s + window] for s in starts])
    out = fn(batch)
    result = np.zeros((out.shape[1], padded.shape[1]))
    for s, w in zip(starts, out):
        result[:, s:s + window] = w
    return result[:, :n]


def retarget_clip(model: RetargetModel, src, dst, clip: MotionClip) -> MotionClip:
    src, dst = model.domain(src), model.domain(dst)
    feats = src.features_from_clip(clip)
    out = apply_windowed(lambda b: model.retarget_window(src, dst, b).data, feats, model.arch.window)
    return dst.clip_from_features(out, clip.frame_time, clip.name)


def cycle_clip(model: RetargetModel, home, other, clip: MotionClip) -> MotionClip:
    home, other = model.domain(home), model.domain(other)
    feats = home.features_from_clip(clip)
    out = apply_windowed(lambda b: model.cycle_window(home, other, b).data, feats, model.arch.window)
    return home.clip_from_features(out, clip.frame_time, clip.name)
