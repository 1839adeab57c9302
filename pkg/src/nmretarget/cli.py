"""``nmretarget`` command line.

Exit codes: 0 success, 2 configuration/usage, 3 data or skeleton problems,
4 checkpoint problems, 5 anything unexpected.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bvh_io import read_bvh, load_motion_dir, save_bvh
from .checkpoint import load_checkpoint
from .errors import (BvhError, CheckpointError, ConfigError, EmptyCorpus, FrameCountMismatch,
                     MissingChest, SchemaError, ShapeMismatch, SkeletonMismatch, UnknownEndEffector,
                     UnknownJoint)
from .evaluation import (DEFAULT_UNIT_SCALE_MM, EE_KEYS, MotionMetrics, aggregate, cycle_evaluate,
                         end_effector_errors, position_errors, resample_nearest,
                         write_report)
from .kinematics import motion_fk, positions_csv
from .motion import clip_from_document, clip_to_document
from .skeleton_model import bind_config, check_tpose_guidelines, load_skeleton_config

logger = logging.getLogger("nmretarget")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECKPOINT, EXIT_INTERNAL = 0, 2, 3, 4, 5

_EXIT_MAP = [
    (CheckpointError, EXIT_CHECKPOINT),
    ((ConfigError, SchemaError), EXIT_USAGE),
    ((BvhError, SkeletonMismatch, UnknownJoint, MissingChest, EmptyCorpus, FrameCountMismatch,
      UnknownEndEffector, ShapeMismatch), EXIT_DATA),
]


class UsageError(Exception):
    """Bad flag combination or missing path detected after argument parsing."""


def exit_code_for(exc: BaseException) -> int:
    for types, code in _EXIT_MAP:
        if isinstance(exc, types):
            return code
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    return EXIT_INTERNAL


def _require(path, what, is_dir=False):
    p = Path(path)
    if not (p.is_dir() if is_dir else p.is_file()):
        raise UsageError(f"{what} not found: {p}")
    return p


def _domain_clips(bvh_dir, config_path):
    """Load a domain directory; the skeleton comes from its first BVH file."""
    config = load_skeleton_config(_require(config_path, "skeleton config"))
    directory = _require(bvh_dir, "motion directory", is_dir=True)
    files = sorted(directory.glob("*.bvh"))
    if not files:
        raise EmptyCorpus(f"no .bvh files in {directory}")
    skeleton = bind_config(read_bvh(files[0]).skeleton, config)
    return load_motion_dir(directory, skeleton), config


# --- subcommands -------------------------------------------------------------------------

def cmd_train(args) -> int:
    from .training import TrainConfig, load_train_config, parse_overrides, train

    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        config = load_train_config(_require(args.config, "train config"), overrides)
    else:
        config = TrainConfig.from_dict({}, overrides)
    logger.info("effective config: %s", json.dumps(config.to_dict(), sort_keys=True))
    human, human_cfg = _domain_clips(args.human_dir, args.human_skel)
    robot, robot_cfg = _domain_clips(args.robot_dir, args.robot_skel)

    def progress(row):
        if args.verbose and row["step"] % 50 == 0:
            logger.info("step %d g_total %.6g d_h %.6g d_r %.6g",
                        row["step"], row["g_total"], row["d_h"], row["d_r"])

    result = train(config, human, robot, args.out, human_cfg, robot_cfg, progress=progress)
    last = result.history[-1]
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                   for k, v in last.items()) + f" checkpoint={result.checkpoint_path}")
    return EXIT_OK


def _side(flag):
    return {"h": "human", "r": "robot"}[flag]


def cmd_retarget(args) -> int:
    from .retarget_net import retarget_clip

    _require(args.ckpt, "checkpoint")
    doc = read_bvh(_require(args.input, "input BVH"))
    model = load_checkpoint(args.ckpt)
    src = model.domain(_side(args.from_))
    dst = model.domain("robot" if src.name == "human" else "human")
    diff = src.skeleton.topology_difference(doc.skeleton)
    if diff is not None:
        raise SkeletonMismatch(f"input skeleton does not match the {src.name} domain "
                               f"at joint {diff!r}", diff)
    clip = clip_from_document(doc, Path(args.input).stem, src.skeleton)
    out = retarget_clip(model, src, dst, clip)
    save_bvh(clip_to_document(out), args.output, args.precision)
    print(f"wrote {args.output}: {out.num_frames} frames on the {dst.name} skeleton")
    return EXIT_OK


def cmd_cycle_eval(args) -> int:
    _require(args.ckpt, "checkpoint")
    model = load_checkpoint(args.ckpt)
    home = model.domain(_side(args.home))
    other = "robot" if home.name == "human" else "human"
    clips = load_motion_dir(_require(args.input_dir, "input directory", is_dir=True), home.skeleton)
    if not clips:
        raise EmptyCorpus(f"no .bvh files in {args.input_dir}")
    report = cycle_evaluate(model, home, other, clips, args.unit_scale)
    if args.report:
        write_report(report, args.report)
    print(f"cycle mjpe_mm={report.mjpe_mm:.6f} motions={len(clips)} "
          f"frames={sum(c.num_frames for c in clips)}")
    return EXIT_OK


def _load_ee_map(args, cfg_a, cfg_b):
    if args.ee_map:
        raw = json.loads(_require(args.ee_map, "end-effector map").read_text(encoding="utf-8"))
        return {k: tuple(v) for k, v in raw.items()}
    return {k: (cfg_a.end_effectors[k], cfg_b.end_effectors[k])
            for k in EE_KEYS if k in cfg_a.end_effectors and k in cfg_b.end_effectors}


def cmd_compare(args) -> int:
    a_clips, cfg_a = _domain_clips(args.a_dir, args.skel_a)
    b_clips, cfg_b = _domain_clips(args.b_dir, args.skel_b)
    ee_map = _load_ee_map(args, cfg_a, cfg_b)
    by_name = {c.name: c for c in b_clips}
    if all(c.name in by_name for c in a_clips):
        pairs = [(c, by_name[c.name]) for c in a_clips]
    elif len(a_clips) == len(b_clips):
        pairs = list(zip(a_clips, b_clips))
    else:
        raise FrameCountMismatch(f"cannot pair {len(a_clips)} clips with {len(b_clips)} clips")
    sk_a, sk_b = a_clips[0].skeleton, b_clips[0].skeleton
    same_topology = sk_a.topology_difference(sk_b) is None
    rows = []
    for a, b in pairs:
        n = min(a.num_frames, b.num_frames)
        a, b = resample_nearest(a, n), resample_nearest(b, n)
        mjpe = None
        if same_topology:
            err = position_errors(motion_fk(sk_a, a), motion_fk(sk_b, b))
            mjpe = float(err.mean() * args.unit_scale) if n else 0.0
        ee = end_effector_errors(sk_a, a, sk_b, b, ee_map, args.unit_scale / 10.0)
        rows.append(MotionMetrics(a.name, n, mjpe, ee))
    report = aggregate(rows, args.unit_scale)
    if args.report:
        write_report(report, args.report)
    mj = "n/a" if report.mjpe_mm is None else f"{report.mjpe_mm:.6f}"
    ee = " ".join(f"{k}={v:.6f}" for k, v in report.ee_cm.items())
    print(f"compare mjpe_mm={mj} ee_cm: {ee} motions={len(rows)}")
    return EXIT_OK


def cmd_fk(args) -> int:
    doc = read_bvh(_require(args.input, "input BVH"))
    skeleton = doc.skeleton
    if args.config:
        skeleton = bind_config(skeleton, load_skeleton_config(_require(args.config, "config")))
    if not 0 <= args.frame < doc.num_frames:
        raise FrameCountMismatch(f"frame {args.frame} outside 0..{doc.num_frames - 1}")
    clip = clip_from_document(doc, skeleton=skeleton).slice(args.frame, args.frame + 1)
    sys.stdout.write(positions_csv(skeleton, motion_fk(skeleton, clip), [args.frame]))
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.input:
        doc = read_bvh(_require(args.input, "input BVH"))
        print(f"ok {args.input}: {len(doc.skeleton)} joints, {doc.num_frames} frames, "
              f"frame time {doc.frame_time!r}")
        return EXIT_OK
    if not (args.skel and args.config):
        raise UsageError("validate needs --input, or --skel together with --config")
    skeleton = read_bvh(_require(args.skel, "skeleton BVH")).skeleton
    config = load_skeleton_config(_require(args.config, "skeleton config"))
    skeleton = bind_config(skeleton, config)
    reference = None
    if args.reference:
        reference = read_bvh(_require(args.reference, "reference BVH")).skeleton
    findings = check_tpose_guidelines(skeleton, config, reference)
    for f in findings:
        print(f)
    print(f"{len(findings)} finding(s)")
    return EXIT_OK if not findings else EXIT_DATA


def cmd_gradcheck(args) -> int:
    from .gradcheck_suite import run_suite

    results = run_suite(args.draws, args.seed)
    for r in results:
        print(r)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return EXIT_OK if not failed else EXIT_INTERNAL


def cmd_make_fixture(args) -> int:
    from .synthetic_fixtures import FixtureSpec, make_fixture, write_fixture

    if args.spec:
        try:
            data = json.loads(_require(args.spec, "fixture spec").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {args.spec}: {exc}") from None
        spec = FixtureSpec.from_dict(data)
    else:
        spec = FixtureSpec()
    if args.seed is not None:
        spec.seed = args.seed
    if args.heldout is not None:
        spec.heldout = args.heldout
    try:
        fixture = make_fixture(spec)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    write_fixture(fixture, args.out, args.precision, spec)
    print(f"wrote fixture to {args.out}: {spec.motions} motions x {spec.frames} frames per domain, "
          f"{spec.heldout} held out")
    return EXIT_OK


# --- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmretarget", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on two unpaired motion directories")
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--human-dir", required=True)
    p.add_argument("--robot-dir", required=True)
    p.add_argument("--human-skel", required=True, help="human skeleton_config.json")
    p.add_argument("--robot-skel", required=True, help="robot skeleton_config.json")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="config override such as window.T=32 (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 42)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retarget", help="retarget one BVH file with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--from", dest="from_", choices=("h", "r"), required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--precision", type=int, default=6)
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("cycle-eval", help="cycle-reconstruction error over a directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--home", choices=("h", "r"), default="h")
    p.add_argument("--report")
    p.add_argument("--unit-scale", type=float, default=DEFAULT_UNIT_SCALE_MM,
                   help="millimetres per BVH length unit")
    p.set_defaults(func=cmd_cycle_eval)

    p = sub.add_parser("compare", help="position errors between two motion directories")
    p.add_argument("--a-dir", required=True)
    p.add_argument("--b-dir", required=True)
    p.add_argument("--skel-a", required=True, help="skeleton_config.json for --a-dir")
    p.add_argument("--skel-b", required=True, help="skeleton_config.json for --b-dir")
    p.add_argument("--ee-map", help='JSON {"left_hand": ["A joint", "B joint"], ...}')
    p.add_argument("--report")
    p.add_argument("--unit-scale", type=float, default=DEFAULT_UNIT_SCALE_MM)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fk", help="dump root-local joint positions of one frame as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--config", help="skeleton_config.json (otherwise kinds follow channels)")
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("validate", help="parse a BVH file or lint a skeleton against T-pose guidelines")
    p.add_argument("--input")
    p.add_argument("--skel")
    p.add_argument("--config")
    p.add_argument("--reference", help="reference skeleton BVH for the chest-children check")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-fixture", help="write the synthetic paired-skeleton corpus")
    p.add_argument("--spec", help="fixture spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the spec seed (default 42)")
    p.add_argument("--heldout", type=int, default=None)
    p.add_argument("--precision", type=int, default=6)
    p.set_defaults(func=cmd_make_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = exit_code_for(exc)
        if code == EXIT_USAGE and isinstance(exc, UsageError):
            parser.print_usage(sys.stderr)
        print(f"nmretarget {args.command}: error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL and args.verbose:
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
