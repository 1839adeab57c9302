"""BVH reading and writing.

End Sites become zero-channel leaf joints named ``<parent>_end`` so that
end-effector offsets take part in forward kinematics; the writer emits any
zero-channel leaf back as an ``End Site`` block.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BvhError, BvhSyntaxError, ChannelMismatch, EncodingError, MalformedNumber,
    MissingSection, SkeletonMismatch, UnbalancedBraces,
)
from .skeleton_model import POSITION_CHANNELS, ROTATION_CHANNELS, Joint, Skeleton

logger = logging.getLogger(__name__)

VALID_CHANNELS = POSITION_CHANNELS + ROTATION_CHANNELS
OFFSET_TOLERANCE = 1e-4


@dataclass
class BvhDocument:
    skeleton: Skeleton
    frames: np.ndarray
    frame_time: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64).reshape(-1, self.skeleton.num_channels)
        if not self.frame_time > 0:
            raise ValueError(f"frame_time must be positive, got {self.frame_time}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def channel_columns(self) -> list[tuple[int, str]]:
        """``(joint_index, channel)`` for every frame-table column, in order."""
        return [(i, c) for i, j in enumerate(self.skeleton.joints) for c in j.channels]

    def joint_columns(self, joint_index: int) -> slice:
        start = sum(len(j.channels) for j in self.skeleton.joints[:joint_index])
        return slice(start, start + len(self.skeleton.joints[joint_index].channels))


# --- parsing -------------------------------------------------------------------

def _number(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedNumber(f"malformed number {token!r}", line=line) from None
    if not math.isfinite(value):
        raise MalformedNumber(f"non-finite number {token!r}", line=line)
    return value


def _tokenize(lines):
    tokens = []
    for lineno, text in lines:
        text = text.replace("{", " { ").replace("}", " } ")
        tokens.extend((tok, lineno) for tok in text.split())
    return tokens


class _HierarchyParser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0
        self.joints: list[Joint] = []

    def _last_line(self):
        return self.tokens[-1][1] if self.tokens else None

    def next(self, what):
        if self.pos >= len(self.tokens):
            raise UnbalancedBraces(f"unexpected end of hierarchy, expected {what}",
                                   line=self._last_line())
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, literal):
        tok, line = self.next(repr(literal))
        if tok != literal:
            if literal == "}" or tok == "}":
                raise UnbalancedBraces(f"expected {literal!r}, got {tok!r}", line=line)
            raise BvhSyntaxError(f"expected {literal!r}, got {tok!r}", line=line)
        return line

    def peek(self):
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def parse(self):
        tok, line = self.next("ROOT")
        if tok != "ROOT":
            raise BvhSyntaxError(f"expected ROOT, got {tok!r}", line=line)
        self.joint(None)
        if self.pos != len(self.tokens):
            tok, line = self.tokens[self.pos]
            if tok == "}":
                raise UnbalancedBraces("unmatched '}'", line=line)
            raise BvhSyntaxError(f"unexpected {tok!r} after root joint", line=line)
        return self.joints

    def offset(self):
        self.expect("OFFSET")
        vals = []
        for _ in range(3):
            tok, line = self.next("offset value")
            vals.append(_number(tok, line))
        return tuple(vals)

    def joint(self, parent):
        name, line = self.next("joint name")
        if name in ("{", "}"):
            raise BvhSyntaxError("missing joint name", line=line)
        self.expect("{")
        offset = self.offset()
        channels = ()
        if self.peek() == "CHANNELS":
            _, cline = self.next("CHANNELS")
            tok, nline = self.next("channel count")
            try:
                n = int(tok)
            except ValueError:
                raise MalformedNumber(f"malformed channel count {tok!r}", line=nline) from None
            if n < 0:
                raise BvhSyntaxError(f"negative channel count {n}", line=nline)
            chans = []
            for _ in range(n):
                c, l = self.next("channel name")
                if c not in VALID_CHANNELS:
                    raise BvhSyntaxError(f"unknown channel {c!r}", line=l)
                chans.append(c)
            if len(set(chans)) != len(chans):
                raise BvhSyntaxError(f"duplicate channels in {name!r}", line=cline)
            n_rot = sum(c in ROTATION_CHANNELS for c in chans)
            if n_rot not in (0, 3):
                raise BvhSyntaxError(
                    f"joint {name!r} declares {n_rot} rotation channels; need 0 or 3", line=cline)
            channels = tuple(chans)
        index = len(self.joints)
        self.joints.append(Joint(name, parent, offset, channels))
        while True:
            tok, tline = self.next("'}'")
            if tok == "}":
                return
            if tok == "JOINT":
                self.joint(index)
            elif tok == "End":
                self.expect("Site")
                self.expect("{")
                end_offset = self.offset()
                self.expect("}")
                self.joints.append(Joint(f"{name}_end", index, end_offset, ()))
            else:
                raise BvhSyntaxError(f"unexpected token {tok!r}", line=tline)


def parse_bvh(text) -> BvhDocument:
    """Parse BVH text (``str`` or UTF-8 ``bytes``) into a :class:`BvhDocument`."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"input is not valid UTF-8: {exc.reason}") from None
    text = text.lstrip("﻿")
    lines = list(enumerate(text.splitlines(), start=1))

    hier_at = motion_at = None
    for idx, (lineno, raw) in enumerate(lines):
        word = raw.strip()
        if hier_at is None and word == "HIERARCHY":
            hier_at = idx
        elif hier_at is not None and word == "MOTION":
            motion_at = idx
            break
    if hier_at is None:
        raise MissingSection("no HIERARCHY section")
    if motion_at is None:
        raise MissingSection("no MOTION section")
    for lineno, raw in lines[:hier_at]:
        if raw.strip():
            raise BvhSyntaxError("content before HIERARCHY", line=lineno)

    tokens = _tokenize(lines[hier_at + 1:motion_at])
    opens = sum(t == "{" for t, _ in tokens)
    closes = sum(t == "}" for t, _ in tokens)
    if opens != closes:
        raise UnbalancedBraces(f"{opens} '{{' vs {closes} '}}' in hierarchy",
                               line=lines[motion_at][0])
    joints = _HierarchyParser(tokens).parse()
    try:
        skeleton = Skeleton(tuple(joints))
    except SkeletonMismatch as exc:
        raise BvhSyntaxError(str(exc)) from None

    rest = [(n, l.strip()) for n, l in lines[motion_at + 1:]]
    rest = [(n, l) for n, l in rest if l]
    if len(rest) < 2:
        raise MissingSection("MOTION section lacks Frames/Frame Time",
                             line=lines[motion_at][0])
    (fline, ftext), (tline, ttext) = rest[0], rest[1]
    if not ftext.startswith("Frames:"):
        raise BvhSyntaxError(f"expected 'Frames:', got {ftext!r}", line=fline)
    count_tok = ftext[len("Frames:"):].strip()
    try:
        n_frames = int(count_tok)
    except ValueError:
        raise MalformedNumber(f"malformed frame count {count_tok!r}", line=fline) from None
    if n_frames < 0:
        raise BvhSyntaxError("negative frame count", line=fline)
    if not ttext.startswith("Frame Time:"):
        raise BvhSyntaxError(f"expected 'Frame Time:', got {ttext!r}", line=tline)
    frame_time = _number(ttext[len("Frame Time:"):].strip(), tline)
    if frame_time <= 0:
        raise BvhSyntaxError("frame time must be positive", line=tline)

    width = skeleton.num_channels
    rows = rest[2:]
    for n, l in rows:
        got = len(l.split())
        if got != width:
            raise ChannelMismatch(f"frame row has {got} values, expected {width}", line=n)
    if len(rows) != n_frames:
        raise BvhSyntaxError(f"declared {n_frames} frames, found {len(rows)}",
                             line=rows[-1][0] if rows else fline)
    if rows:
        try:
            data = np.array(" ".join(l for _, l in rows).split(), dtype=np.float64)
        except ValueError:
            data = None
        if data is None or not np.all(np.isfinite(data)):
            for n, l in rows:
                for tok in l.split():
                    _number(tok, n)
        frames = data.reshape(n_frames, width)
    else:
        frames = np.zeros((0, width))
    return BvhDocument(skeleton, frames, frame_time)


def read_bvh(path) -> BvhDocument:
    path = Path(path)
    try:
        return parse_bvh(path.read_bytes())
    except BvhError as exc:
        exc.filename = path.name
        raise


# --- writing -------------------------------------------------------------------

def _fmt_offset(v: float) -> str:
    return repr(float(v))


def write_bvh(doc: BvhDocument, precision: int = 6) -> str:
    sk = doc.skeleton
    children = [[] for _ in sk.joints]
    for i, j in enumerate(sk.joints):
        if j.parent is not None:
            children[j.parent].append(i)
    out = ["HIERARCHY"]

    def emit(i, depth):
        j = sk.joints[i]
        pad = "  " * depth
        off = " ".join(_fmt_offset(v) for v in j.offset)
        if i != 0 and not j.channels and not children[i]:
            out.extend([f"{pad}End Site", f"{pad}{{", f"{pad}  OFFSET {off}", f"{pad}}}"])
            return
        out.append(f"{pad}{'ROOT' if i == 0 else 'JOINT'} {j.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}  OFFSET {off}")
        out.append(f"{pad}  CHANNELS {len(j.channels)}" + "".join(f" {c}" for c in j.channels))
        for c in children[i]:
            emit(c, depth + 1)
        out.append(f"{pad}}}")

    emit(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {doc.num_frames}")
    out.append(f"Frame Time: {float(doc.frame_time)!r}")
    fmt = f"{{:.{int(precision)}f}}"
    for row in doc.frames:
        out.append(" ".join(fmt.format(v) for v in row))
    return "\n".join(out) + "\n"


def save_bvh(doc: BvhDocument, path, precision: int = 6) -> None:
    Path(path).write_text(write_bvh(doc, precision), encoding="utf-8")


# --- directories ---------------------------------------------------------------

@dataclass
class LoadReport:
    warnings: list[str] = field(default_factory=list)


def load_motion_dir(path, expected_skeleton: Skeleton, report: LoadReport | None = None):
    """Load every ``*.bvh`` under ``path`` as a :class:`~nmretarget.motion.MotionClip`.

    All files must share ``expected_skeleton``'s topology; offsets may drift
    by up to 1e-4 (logged and appended to ``report.warnings``). Clips come
    back in filename order and carry ``expected_skeleton`` (with its kinds).
    """
    from .motion import clip_from_document

    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"not a directory: {path}")
    clips = []
    for file in sorted(path.glob("*.bvh")):
        doc = read_bvh(file)
        name = expected_skeleton.topology_difference(doc.skeleton)
        if name is not None:
            raise SkeletonMismatch(f"{file.name}: skeleton differs at joint {name!r}", joint=name)
        drift = np.abs(doc.skeleton.offsets - expected_skeleton.offsets)
        if drift.size and drift.max() > 0:
            worst = int(np.argmax(drift.max(axis=1)))
            jname = expected_skeleton.joints[worst].name
            if drift.max() > OFFSET_TOLERANCE:
                raise SkeletonMismatch(
                    f"{file.name}: offset of joint {jname!r} differs by {drift.max():.3g}",
                    joint=jname)
            msg = f"{file.name}: offset of joint {jname!r} differs by {drift.max():.3g}"
            logger.warning(msg)
            if report is not None:
                report.warnings.append(msg)
        clips.append(clip_from_document(doc, name=file.stem, skeleton=expected_skeleton))
    return clips


def total_frames(clips) -> int:
    return sum(c.num_frames for c in clips)
