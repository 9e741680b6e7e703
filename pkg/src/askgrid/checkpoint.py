"""Flat binary checkpoints for the two models, plus parameter hashing.

Layout: 4-byte magic, uint32 version, uint64 JSON-metadata length, the
metadata (kind, model config, extras, and the tensor manifest), then each
tensor's raw C-contiguous bytes in manifest order. Everything is
little-endian and float64/int64 only, so files round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from askgrid.agent.nn import Params
from askgrid.agent.performer import PerformerConfig, PerformerModel
from askgrid.agent.questioner import QuestionerConfig, QuestionerModel
from askgrid.world import AskgridError

MAGIC = b"AGCK"
VERSION = 1


def params_digest(params: Params) -> str:
    """Order-independent sha256 over names, dtypes, shapes, and raw bytes."""
    h = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def save_model(path: str | Path, kind: str, config: dict, params: Params, extra: dict | None = None) -> None:
    names = sorted(params)
    meta = {
        "kind": kind,
        "config": config,
        "extra": extra or {},
        "tensors": [
            {"name": n, "dtype": str(params[n].dtype), "shape": list(params[n].shape)} for n in names
        ],
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n]).tobytes())


def load_model(path: str | Path) -> tuple[str, dict, Params, dict]:
    """Returns (kind, config, params, extra)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise AskgridError(f"{path}: not a model checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise AskgridError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode())
        params: Params = {}
        for spec in meta["tensors"]:
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * dtype.itemsize)
            if len(data) != count * dtype.itemsize:
                raise AskgridError(f"{path}: truncated tensor {spec['name']!r}")
            params[spec["name"]] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise AskgridError(f"{path}: trailing bytes after tensors")
    return meta["kind"], meta["config"], params, meta["extra"]


def save_performer(path: str | Path, model: PerformerModel, extra: dict | None = None) -> None:
    save_model(path, "performer", model.config.to_json(), model.params, extra)


def save_questioner(path: str | Path, model: QuestionerModel, extra: dict | None = None) -> None:
    save_model(path, "questioner", model.config.to_json(), model.params, extra)


def _check_kind(kind: str, expected: str, path) -> None:
    if kind != expected:
        raise AskgridError(f"{path}: checkpoint holds a {kind!r}, expected {expected!r}")


def load_performer(path: str | Path) -> tuple[PerformerModel, dict]:
    kind, config, params, extra = load_model(path)
    _check_kind(kind, "performer", path)
    model = PerformerModel(PerformerConfig.from_json(config))
    if sorted(params) != sorted(model.params):
        raise AskgridError(f"{path}: tensor names do not match the architecture")
    for name, arr in params.items():
        if arr.shape != model.params[name].shape:
            raise AskgridError(f"{path}: shape mismatch for {name!r}")
    model.params = params
    return model, extra


def load_questioner(path: str | Path) -> tuple[QuestionerModel, dict]:
    kind, config, params, extra = load_model(path)
    _check_kind(kind, "questioner", path)
    model = QuestionerModel(QuestionerConfig.from_json(config))
    if sorted(params) != sorted(model.params):
        raise AskgridError(f"{path}: tensor names do not match the architecture")
    for name, arr in params.items():
        if arr.shape != model.params[name].shape:
            raise AskgridError(f"{path}: shape mismatch for {name!r}")
    model.params = params
    return model, extra
