"""Single-file checkpoints: JSON manifest plus raw little-endian arrays.

Layout: 8-byte magic, uint64 header length, UTF-8 JSON header, then the
arrays' bytes back to back in header order. The header records dims,
signature, policy, step, dtype, an array index (name, dtype, shape, offset),
and an opaque `extra` dict the training loop uses for optimizer step count,
RNG states, and stream position, so a resumed run continues bit-for-bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ledger import ModelDims
from .model import RecursionPolicy

__all__ = ["CheckpointData", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"RLAB0001"


@dataclass
class CheckpointData:
    dims: ModelDims
    signature: str
    policy: RecursionPolicy
    step: int
    dtype: str
    params: dict[str, np.ndarray]
    adam_m: Optional[dict[str, np.ndarray]] = None
    adam_v: Optional[dict[str, np.ndarray]] = None
    extra: dict = field(default_factory=dict)


def _dtype_tag(arr: np.ndarray) -> str:
    return {"float32": "<f4", "float64": "<f8"}[str(arr.dtype)]


def save_checkpoint(
    path,
    dims: ModelDims,
    signature: str,
    policy: RecursionPolicy,
    params: dict[str, np.ndarray],
    step: int = 0,
    adam_m: Optional[dict[str, np.ndarray]] = None,
    adam_v: Optional[dict[str, np.ndarray]] = None,
    extra: Optional[dict] = None,
):
    arrays: list[tuple[str, np.ndarray]] = [(k, params[k]) for k in sorted(params)]
    if adam_m is not None:
        arrays += [("adam.m." + k, adam_m[k]) for k in sorted(adam_m)]
    if adam_v is not None:
        arrays += [("adam.v." + k, adam_v[k]) for k in sorted(adam_v)]

    index = []
    offset = 0
    for name, arr in arrays:
        nbytes = arr.size * arr.itemsize
        index.append(
            {
                "name": name,
                "dtype": _dtype_tag(arr),
                "shape": list(arr.shape),
                "offset": offset,
            }
        )
        offset += nbytes

    dtype = str(next(iter(params.values())).dtype) if params else "float32"
    header = {
        "dims": dims.to_dict(),
        "signature": signature,
        "policy": policy.to_dict(),
        "step": int(step),
        "dtype": dtype,
        "extra": extra or {},
        "arrays": index,
    }
    blob = json.dumps(header).encode("utf-8")

    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for _, arr in arrays:
            f.write(np.ascontiguousarray(arr).astype(_dtype_tag(arr), copy=False).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen).decode("utf-8"))
        payload = f.read()

    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(
            payload, dtype=dt, count=count, offset=start
        ).reshape(shape).copy()
        name = entry["name"]
        if name.startswith("adam.m."):
            adam_m[name[len("adam.m."):]] = arr
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v."):]] = arr
        else:
            params[name] = arr

    return CheckpointData(
        dims=ModelDims.from_dict(header["dims"]),
        signature=header["signature"],
        policy=RecursionPolicy.from_dict(header["policy"]),
        step=int(header["step"]),
        dtype=header["dtype"],
        params=params,
        adam_m=adam_m or None,
        adam_v=adam_v or None,
        extra=header.get("extra", {}),
    )
