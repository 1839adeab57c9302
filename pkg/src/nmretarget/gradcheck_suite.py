"""Finite-difference checks over every differentiable path of the package.

Each suite draws fresh random inputs ``draws`` times and reports the worst
relative error seen. Composite paths run on tiny two-domain models
(at most 4 joints, 8 frames) so a full sweep stays well under two minutes.
"""
from __future__ import annotations

import numpy as np

from .autodiff import ops
from .autodiff.gradcheck import GradCheckResult, check_gradients, primitive_cases
from .kinematics import fk_differentiable
from .retarget_net import Architecture, DomainSpec, RetargetModel
from .skeleton_model import Joint, JointKind, Skeleton, SkeletonConfig, bind_config

PRIMITIVE_TOL = 1e-4
COMPOSITE_TOL = 1e-3

_ROOT = ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation")
_ORDERS = ("ZXY", "XYZ", "YZX", "ZYX")


def _merge(name, results, tol):
    worst = max((r.max_rel_error for r in results), default=0.0)
    return GradCheckResult(name, worst, sum(r.checked for r in results), tol)


def random_chain(rng, n_joints=6) -> Skeleton:
    """Random tree of ``n_joints`` joints with mixed kinds (root Fixed, leaves may be effectors)."""
    A, F, E = JointKind.ACTUATED, JointKind.FIXED, JointKind.END_EFFECTOR
    joints = [Joint("j0", None, (0.0, 0.0, 0.0), _ROOT, F)]
    for j in range(1, n_joints):
        parent = int(rng.integers(0, j))
        while joints[parent].kind is E:
            parent = int(rng.integers(0, j))
        kind = A if j == 1 else [A, A, F, E][int(rng.integers(0, 4))]
        order = _ORDERS[int(rng.integers(0, len(_ORDERS)))]
        channels = () if kind is E else tuple(f"{c}rotation" for c in order)
        joints.append(Joint(f"j{j}", parent, tuple(rng.uniform(-1, 1, 3)), channels, kind))
    return Skeleton(tuple(joints))


def tiny_domains(rng=None):
    """Two 4-joint domains with different feature widths and two body parts each."""
    A, F, E = JointKind.ACTUATED, JointKind.FIXED, JointKind.END_EFFECTOR
    rot = ("Zrotation", "Xrotation", "Yrotation")
    specs = []
    for name, rows in (
            ("human", [("Hips", None, (0, 0, 0), F, 0), ("A1", 0, (0, 1.0, 0), A, 0),
                       ("A2", 1, (0.8, 0, 0), A, 1), ("A2_end", 2, (0.6, 0, 0), E, 1)]),
            ("robot", [("Hips", None, (0, 0, 0), F, 0), ("B1", 0, (0, 1.3, 0), A, 0),
                       ("B2", 1, (0.5, 0, 0), A, 1), ("B3", 2, (0.5, 0, 0), A, 1)])):
        sk = Skeleton(tuple(Joint(n, p, tuple(map(float, o)),
                                  _ROOT if p is None else (() if k is E else rot))
                            for n, p, o, k, _ in rows))
        leaf = rows[-1][0]
        cfg = SkeletonConfig({r[0]: r[3] for r in rows}, {r[0]: r[4] for r in rows},
                             {"head": rows[1][0], "left_hand": leaf, "right_hand": leaf},
                             height=float(sum(r[2][1] for r in rows)))
        dom = DomainSpec(name, bind_config(sk, cfg), cfg)
        if rng is not None:
            f = dom.num_features
            dom = dom.with_stats(rng.normal(0, 0.1, f), rng.uniform(0.5, 1.5, f))
        specs.append(dom)
    return tuple(specs)


TINY_ARCH = Architecture(window=8, kernel_size=3, joint_channels=2, latent_channels=2,
                         disc_channels=2)


def tiny_model(rng) -> RetargetModel:
    human, robot = tiny_domains(rng)
    model = RetargetModel(human, robot, TINY_ARCH, seed=int(rng.integers(2 ** 31)))
    # scale up biases so leaky units sit away from their kink
    for n in model.params:
        if n.endswith(".b"):
            model.params[n] = rng.normal(0, 0.3, model.params[n].shape)
    return model


def random_features(rng, dom: DomainSpec, batch=2, frames=8) -> np.ndarray:
    n = len(dom.actuated)
    q = rng.standard_normal((batch, n, 4, frames)) * 0.3
    q[:, :, 0] += 1.0
    q /= np.linalg.norm(q, axis=2, keepdims=True)
    root = rng.normal(0, 0.05, (batch, 3, frames))
    return np.concatenate([q.reshape(batch, 4 * n, frames), root], axis=1)


# --- suites ------------------------------------------------------------------------------

def check_primitives(draws=100, seed=0) -> list[GradCheckResult]:
    rng = np.random.default_rng(seed)
    by_name: dict[str, list] = {}
    for _ in range(draws):
        for name, fn, inputs in primitive_cases(rng):
            by_name.setdefault(name, []).append(
                check_gradients(fn, inputs, tol=PRIMITIVE_TOL, max_coords=6, rng=rng, name=name))
    return [_merge(f"primitive:{n}", rs, PRIMITIVE_TOL) for n, rs in by_name.items()]


def check_fk(draws=100, seed=1) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(draws):
        sk = random_chain(rng, int(rng.integers(3, 7)))
        pose = rng.standard_normal(4 * len(sk) + 3)
        weights = rng.standard_normal((len(sk), 3))

        def fn(p, sk=sk, weights=weights):
            return ops.sum(ops.mul(fk_differentiable(sk, p, root_local=False), weights))
        results.append(check_gradients(fn, [pose], tol=PRIMITIVE_TOL, rng=rng))
    return _merge("fk_differentiable", results, PRIMITIVE_TOL)


def check_generator_path(draws=100, seed=2) -> GradCheckResult:
    """encode -> decode -> denormalize -> fk_differentiable, w.r.t. generator weights and input."""
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(draws):
        model = tiny_model(rng)
        src, dst = (model.domains["human"], model.domains["robot"])
        if rng.random() < 0.5:
            src, dst = dst, src
        x = random_features(rng, src, batch=1)
        names = [n for n in model.group_names("generator")
                 if n.startswith(f"{src.name}.enc") or n.startswith(f"{dst.name}.dec")]
        w = rng.standard_normal((1, 8, len(dst.skeleton), 3))

        def body(params, x_t, src=src, dst=dst, w=w, model=model):
            out = model.retarget_window(src, dst, x_t, params)
            pos = fk_differentiable(dst.skeleton, dst.pose_tensor(out))
            return ops.sum(ops.mul(pos, w))

        def fn(*tensors, names=names, body=body):
            return body(dict(zip(names, tensors[:-1])), tensors[-1])
        results.append(check_gradients(fn, [model.params[n] for n in names] + [x],
                                       tol=COMPOSITE_TOL, max_coords=2, directions=2,
                                       rng=rng))
    return _merge("generator_path", results, COMPOSITE_TOL)


def check_generator_loss(draws=100, seed=3) -> GradCheckResult:
    from .training import generator_loss
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(draws):
        model = tiny_model(rng)
        bh = random_features(rng, model.domains["human"])
        br = random_features(rng, model.domains["robot"])
        weights = {"adv": 1.0, "cycle": 10.0, "fk": 5.0, "latent": 1.0,
                   "ee": float(rng.random() < 0.5)}
        names = model.group_names("generator")

        def fn(*tensors, model=model, bh=bh, br=br, weights=weights, names=names):
            return generator_loss(model, bh, br, weights, dict(zip(names, tensors)))[0]
        results.append(check_gradients(fn, [model.params[n] for n in names], tol=COMPOSITE_TOL,
                                       max_coords=1, directions=2, rng=rng))
    return _merge("generator_loss", results, COMPOSITE_TOL)


def check_discriminator_loss(draws=100, seed=4) -> GradCheckResult:
    from .training import discriminator_loss
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(draws):
        model = tiny_model(rng)
        dom = model.domains["human" if rng.random() < 0.5 else "robot"]
        real = dom.normalize(random_features(rng, dom))
        fake = dom.normalize(random_features(rng, dom))
        names = model.group_names(f"disc_{dom.name}")

        def fn(*tensors, model=model, dom=dom, fake=fake, names=names):
            return discriminator_loss(model, tensors[-1], fake, dom, dict(zip(names, tensors[:-1])))
        results.append(check_gradients(fn, [model.params[n] for n in names] + [real],
                                       tol=COMPOSITE_TOL, max_coords=2, directions=2, rng=rng))
    return _merge("discriminator_loss", results, COMPOSITE_TOL)


def run_suite(draws=100, seed=0) -> list[GradCheckResult]:
    return (check_primitives(draws, seed)
            + [check_fk(draws, seed + 1), check_generator_path(draws, seed + 2),
               check_generator_loss(draws, seed + 3), check_discriminator_loss(draws, seed + 4)])
