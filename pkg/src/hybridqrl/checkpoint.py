"""Checkpoint files.

Layout::

    HYBRIDQRL-CHECKPOINT\\n
    <one line of JSON header>\\n
    <payload: little-endian float64 arrays, concatenated in header order>

The header carries the format version, the ``NetSpec``, the arithmetic mode,
per-array ``(group, name, shape, offset, count)`` entries, per-group
parameter counts and a SHA-256 of the payload. Values are widened to float64
on disk, so float32 networks round-trip bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArchitectureError, CheckpointError
from .model import NetSpec, QNetwork, build_net

MAGIC = b"HYBRIDQRL-CHECKPOINT\n"
FORMAT_VERSION = 1


def encode_checkpoint(net: QNetwork, metadata: Optional[dict] = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for group, name, arr in net.named_params():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "net": net.spec.to_dict(),
        "arithmetic": net.spec.dtype,
        "groups": net.group_sizes(),
        "arrays": entries,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "metadata": metadata or {},
    }
    if net.spec.model_type == "hybrid":
        header["pqc_params"] = net.group_sizes()["pqc"]
    return MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def save_checkpoint(net: QNetwork, path, metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(net, metadata))
    return path


def read_header(path) -> dict:
    header, _ = _split(Path(path).read_bytes())
    return header


def _split(blob: bytes):
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    rest = blob[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupted checkpoint header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')!r}")
    payload = rest[nl + 1 :]
    if len(payload) != header["payload_bytes"] or hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError("checkpoint payload is corrupted")
    return header, payload


def decode_checkpoint(blob: bytes, expected: Optional[NetSpec] = None) -> QNetwork:
    header, payload = _split(blob)
    spec = NetSpec.from_dict(header["net"])
    if expected is not None and spec != expected:
        raise ArchitectureError(f"checkpoint architecture {spec} does not match requested {expected}")
    net = build_net(spec, seed=0)
    params = net.named_params()
    if [(g, n) for g, n, _ in params] != [(e["group"], e["name"]) for e in header["arrays"]]:
        raise ArchitectureError("checkpoint parameter list does not match the architecture")
    for (_, _, arr), e in zip(params, header["arrays"]):
        if list(arr.shape) != e["shape"]:
            raise ArchitectureError(f"shape mismatch for {e['group']}.{e['name']}")
        vals = np.frombuffer(payload, dtype="<f8", count=e["count"], offset=e["offset"])
        arr[...] = vals.reshape(arr.shape).astype(arr.dtype)
    return net


def load_checkpoint(path, expected: Optional[NetSpec] = None) -> QNetwork:
    return decode_checkpoint(Path(path).read_bytes(), expected)


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
