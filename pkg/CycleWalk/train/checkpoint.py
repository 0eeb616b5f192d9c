# This file is a part of CycleWalk

import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from CycleWalk.engine import ParamSet
from CycleWalk.exceptions import CheckpointFormatError
from CycleWalk.utils.files import dump_json, load_json, read_files, write_files
from CycleWalk.utils.run_info import version_string

MAGIC = b"CWCK"
VERSION = 1

_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    params: ParamSet
    train_config: dict = field(default_factory=dict)
    step: int = 0
    rng_state: Dict[str, dict] = field(default_factory=dict)
    run_config: dict = field(default_factory=dict)


def encode_params(params: ParamSet) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(params))]
    for name, tensor in params.items():
        raw = name.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(tensor.ndim)]
        parts += [_U32.pack(d) for d in tensor.shape]
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_params(payload: bytes, path: str = "<memory>", dtype=np.float64) -> ParamSet:
    offset = 0

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(payload):
            raise CheckpointFormatError("Truncated checkpoint", path=path, needed=offset + count, size=len(payload))
        chunk = payload[offset:offset + count]
        offset += count
        return chunk

    def u32() -> int:
        return _U32.unpack(take(4))[0]

    if take(4) != MAGIC:
        raise CheckpointFormatError("Bad magic", path=path)
    version = u32()
    if version != VERSION:
        raise CheckpointFormatError("Unsupported version", path=path, version=version)
    params = ParamSet()
    for _ in range(u32()):
        try:
            name = take(u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError("Parameter name is not UTF-8", path=path)
        dims = tuple(u32() for _ in range(u32()))
        count = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(take(8 * count), dtype="<f8").reshape(dims)
        params.add(name, values.astype(dtype))
    if offset != len(payload):
        raise CheckpointFormatError("Trailing bytes", path=path, extra=len(payload) - offset)
    return params


def sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".json"


def save_checkpoint(path: str, ckpt: Checkpoint) -> str:
    meta = {
        "version": version_string(),
        "step": ckpt.step,
        "train_config": ckpt.train_config,
        "rng_state": ckpt.rng_state,
        "config": ckpt.run_config,
        "params": {n: list(t.shape) for n, t in ckpt.params.items()},
    }
    write_files({path: encode_params(ckpt.params), sidecar_path(path): dump_json(meta)})
    return path


def load_checkpoint(path: str, dtype=np.float64) -> Checkpoint:
    if not os.path.exists(path):
        raise CheckpointFormatError("Checkpoint not found", path=path)
    payload, = read_files([path])
    params = decode_params(payload, path, dtype)
    meta: Optional[dict] = load_json(sidecar_path(path)) if os.path.exists(sidecar_path(path)) else {}
    return Checkpoint(
        params=params,
        train_config=meta.get("train_config", {}),
        step=int(meta.get("step", 0)),
        rng_state=meta.get("rng_state", {}),
        run_config=meta.get("config", {}),
    )
