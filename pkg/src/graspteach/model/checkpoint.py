"""Versioned named-tensor checkpoints.

params.bin layout: magic, format version, header length, JSON header
(tensor names/dtypes/shapes in order), then raw little-endian tensor data.
Writing the same tensors always produces the same bytes, which the
dataset/training determinism guarantees rely on.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .unet import UNet, UNetArch, build_model

MAGIC = b"GTNT"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class ModelParams:
    """Named parameter tensors plus the architecture they belong to."""

    arch: UNetArch
    tensors: dict[str, torch.Tensor]

    def clone(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.detach().clone() for k, v in self.tensors.items()})

    def names(self) -> list[str]:
        return list(self.tensors.keys())


@dataclass
class Checkpoint:
    params: ModelParams
    meta: dict

    @property
    def checkpoint_id(self) -> str:
        return self.meta.get("checkpoint_id", "")


def params_from_model(model: UNet) -> ModelParams:
    return ModelParams(model.arch, {k: v.detach().clone() for k, v in model.state_dict().items()})


def model_from_params(params: ModelParams) -> UNet:
    model = build_model(params.arch)
    model.load_state_dict(params.tensors)
    return model


def params_bytes(params: ModelParams) -> bytes:
    entries = []
    blobs = []
    for name, t in params.tensors.items():
        arr = t.detach().numpy()
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported tensor dtype {dtype}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype], copy=False).tobytes()
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                        "nbytes": len(raw)})
        blobs.append(raw)
    header = json.dumps({"format_version": FORMAT_VERSION, "arch": params.arch.to_dict(),
                         "tensors": entries}, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(blobs)


def params_from_bytes(data: bytes) -> ModelParams:
    if data[:4] != MAGIC:
        raise ValueError("not a named-tensor params file")
    version, header_len = struct.unpack_from("<IQ", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported params format version {version}")
    offset = 4 + 12
    header = json.loads(data[offset:offset + header_len].decode())
    offset += header_len
    tensors: dict[str, torch.Tensor] = {}
    for e in header["tensors"]:
        raw = data[offset:offset + e["nbytes"]]
        offset += e["nbytes"]
        arr = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.astype(e["dtype"], copy=True))
    return ModelParams(UNetArch.from_dict(header["arch"]), tensors)


def params_digest(params: ModelParams) -> str:
    return hashlib.sha256(params_bytes(params)).hexdigest()[:16]


def save_checkpoint(ckpt_dir, params: ModelParams, meta: dict) -> Checkpoint:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    blob = params_bytes(params)
    (ckpt_dir / "params.bin").write_bytes(blob)
    meta = dict(meta)
    meta.setdefault("format_version", FORMAT_VERSION)
    meta["checkpoint_id"] = hashlib.sha256(blob).hexdigest()[:16]
    with open(ckpt_dir / "meta.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")
    return Checkpoint(params=params, meta=meta)


def load_checkpoint(ckpt_dir) -> Checkpoint:
    ckpt_dir = Path(ckpt_dir)
    params = params_from_bytes((ckpt_dir / "params.bin").read_bytes())
    with open(ckpt_dir / "meta.json") as f:
        meta = json.load(f)
    return Checkpoint(params=params, meta=meta)
