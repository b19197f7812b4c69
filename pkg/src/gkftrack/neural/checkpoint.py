"""Versioned parameter checkpoints.

Layout: one magic line, one JSON header line (architecture, parameter names
and shapes, optimizer scalars, free-form metadata), then the raw row-major
little-endian float64 payload: every parameter in header order, followed by
the optimizer first and second moments when present. The bytes depend only
on the contents, so identical training runs give identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .optim import OptimizerState

MAGIC = b"GKFCKPT\n"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arch: dict, params: dict, opt: OptimizerState | None = None, meta: dict | None = None):
    names = list(params)
    header = {
        "version": VERSION,
        "arch": arch,
        "params": [[n, list(params[n].shape)] for n in names],
        "optimizer": None,
        "meta": meta or {},
    }
    has_moments = opt is not None and set(opt.m) == set(names)
    if opt is not None:
        header["optimizer"] = {
            "max_lr": opt.max_lr, "weight_decay": opt.weight_decay, "beta1": opt.beta1,
            "beta2": opt.beta2, "eps": opt.eps, "t": opt.t, "skipped": opt.skipped,
            "moments": has_moments,
        }
    chunks = [np.ascontiguousarray(params[n], dtype="<f8").tobytes() for n in names]
    if has_moments:
        chunks += [np.ascontiguousarray(opt.m[n], dtype="<f8").tobytes() for n in names]
        chunks += [np.ascontiguousarray(opt.v[n], dtype="<f8").tobytes() for n in names]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for c in chunks:
            fh.write(c)


def load_checkpoint(path, expected_arch: dict | None = None):
    """Returns ``(arch, params, opt_or_None, meta)``; raises CheckpointError on mismatch."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    nl = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC):nl])
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    arch = header["arch"]
    if expected_arch is not None and arch != expected_arch:
        diff = {k: (arch.get(k), expected_arch.get(k)) for k in set(arch) | set(expected_arch)
                if arch.get(k) != expected_arch.get(k)}
        raise CheckpointError(f"{path}: architecture mismatch {diff}")
    payload = memoryview(data)[nl + 1:]
    offset = 0

    def read(shape):
        nonlocal offset
        n = int(np.prod(shape)) if shape else 1
        if offset + 8 * n > len(payload):
            raise CheckpointError(f"{path}: truncated payload")
        arr = np.frombuffer(payload[offset:offset + 8 * n], dtype="<f8").reshape(shape).astype(float)
        offset += 8 * n
        return arr

    spec = [(n, tuple(s)) for n, s in header["params"]]
    params = {n: read(s) for n, s in spec}
    opt = None
    o = header.get("optimizer")
    if o is not None:
        opt = OptimizerState(o["max_lr"], o["weight_decay"], o["beta1"], o["beta2"], o["eps"], o["t"])
        opt.skipped = o.get("skipped", 0)
        if o.get("moments"):
            opt.m = {n: read(s) for n, s in spec}
            opt.v = {n: read(s) for n, s in spec}
    if offset != len(payload):
        raise CheckpointError(f"{path}: trailing bytes in payload")
    return arch, params, opt, header.get("meta", {})
