"""Binary checkpoint format.

Layout::

    b"NMRT" | version (1 byte) | header length (uint64 LE) | JSON header (UTF-8)
    | float64 LE payload, parameters concatenated in header order

The header records parameter names/shapes, the architecture, and for each
domain its skeleton, skeleton config and normalization stats.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import BadMagic, HeaderShapeMismatch, PayloadTruncated, VersionUnsupported
from .retarget_net import DOMAINS, Architecture, DomainSpec, IdentityModel, RetargetModel
from .skeleton_model import Joint, JointKind, Skeleton, SkeletonConfig

MAGIC = b"NMRT"
VERSION = 1
_LEN = struct.Struct("<Q")


def skeleton_to_dict(sk: Skeleton) -> list[dict]:
    return [{"name": j.name, "parent": j.parent, "offset": list(j.offset),
             "channels": list(j.channels), "kind": None if j.kind is None else j.kind.value}
            for j in sk.joints]


def skeleton_from_dict(rows) -> Skeleton:
    return Skeleton(tuple(
        Joint(r["name"], r["parent"], tuple(float(v) for v in r["offset"]), tuple(r["channels"]),
              None if r["kind"] is None else JointKind(r["kind"]))
        for r in rows))


def _domain_to_dict(dom: DomainSpec) -> dict:
    return {"skeleton": skeleton_to_dict(dom.skeleton), "config": dom.config.to_dict(),
            "mean": dom.mean.tolist(), "std": dom.std.tolist()}


def _domain_from_dict(name, d) -> DomainSpec:
    return DomainSpec(name, skeleton_from_dict(d["skeleton"]), SkeletonConfig.from_dict(d["config"]),
                      np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def checkpoint_bytes(model: RetargetModel) -> bytes:
    names = list(model.param_shapes())
    header = {
        "kind": "identity" if isinstance(model, IdentityModel) else "skeleton_conv",
        "architecture": asdict(model.arch),
        "domains": {d: _domain_to_dict(model.domains[d]) for d in DOMAINS},
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes() for n in names)
    return MAGIC + bytes([VERSION]) + _LEN.pack(len(head)) + head + payload


def save_checkpoint(model: RetargetModel, path) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(model))
    return path


def checkpoint_from_bytes(blob: bytes) -> RetargetModel:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagic("not a checkpoint (bad magic)")
    if len(blob) < 5:
        raise PayloadTruncated("checkpoint ends before version byte")
    if blob[4] != VERSION:
        raise VersionUnsupported(f"checkpoint version {blob[4]} not supported (expected {VERSION})")
    if len(blob) < 5 + _LEN.size:
        raise PayloadTruncated("checkpoint ends inside header length")
    (n_head,) = _LEN.unpack_from(blob, 5)
    start = 5 + _LEN.size
    if len(blob) < start + n_head:
        raise PayloadTruncated("checkpoint ends inside header")
    try:
        header = json.loads(blob[start:start + n_head].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderShapeMismatch(f"unreadable header: {exc}") from None

    try:
        arch = Architecture(**header["architecture"])
        human, robot = (_domain_from_dict(d, header["domains"][d]) for d in DOMAINS)
        entries = [(str(e["name"]), tuple(int(v) for v in e["shape"])) for e in header["params"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderShapeMismatch(f"malformed header: {exc!r}") from None
    offset = start + n_head
    params = {}
    for name, shape in entries:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise PayloadTruncated(f"payload ends inside parameter {name!r}")
        params[name] = np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(blob):
        raise HeaderShapeMismatch(f"{len(blob) - offset} bytes of payload not described by header")

    if header.get("kind") == "identity":
        return IdentityModel(human, robot, arch)
    model_shapes = RetargetModel.__new__(RetargetModel)
    model_shapes.arch = arch
    model_shapes.domains = {"human": human, "robot": robot}
    expected = model_shapes.param_shapes()
    declared = {n: p.shape for n, p in params.items()}
    if declared != expected:
        bad = sorted(set(declared.items()) ^ set(expected.items()))
        raise HeaderShapeMismatch(f"header parameters disagree with architecture: {bad[:3]}")
    return RetargetModel(human, robot, arch, params=params)


def load_checkpoint(path) -> RetargetModel:
    return checkpoint_from_bytes(Path(path).read_bytes())
