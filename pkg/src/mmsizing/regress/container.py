"""Binary model container.

Layout::

    magic  b"MMSZMODEL"          9 bytes
    version                      uint16 little endian
    header length                uint32 little endian
    header                       UTF-8 JSON (kind, schema, hyperparameters, array table)
    array payload                raw little-endian bytes, in header order
    sha256 of everything above   32 bytes
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from mmsizing import rfmodel
from mmsizing.errors import ModelFormatError, ModelKindError
from mmsizing.regress.model import ESTIMATORS, Regressor
from mmsizing.regress.standardize import Standardizer

MAGIC = b"MMSZMODEL"
VERSION = 1
_PREFIX = struct.Struct("<HI")


def _pack(header, arrays):
    table, chunks, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        data = arr.astype(dtype, copy=False).tobytes()
        table.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape), "offset": offset,
                      "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = dict(header, arrays=table)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + _PREFIX.pack(VERSION, len(head)) + head + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def _unpack(blob, source):
    if not blob.startswith(MAGIC):
        raise ModelFormatError(f"{source}: not a model file (bad magic bytes)")
    if len(blob) < len(MAGIC) + _PREFIX.size + 32:
        raise ModelFormatError(f"{source}: corrupt model file (truncated)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError(f"{source}: corrupt model file (checksum mismatch)")
    version, head_len = _PREFIX.unpack_from(body, len(MAGIC))
    if version != VERSION:
        raise ModelFormatError(f"{source}: unsupported model format version {version} (expected {VERSION})")
    start = len(MAGIC) + _PREFIX.size
    header = json.loads(body[start:start + head_len].decode("utf-8"))
    payload = body[start + head_len:]
    arrays = {}
    for entry in header.pop("arrays"):
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return header, arrays


def dumps(model):
    meta, est_arrays = model.estimator.get_state()
    header = {
        "kind": model.kind,
        "block": model.block,
        "spec_schema": [list(s) for s in rfmodel.spec_schema(model.block)],
        "param_schema": [list(p) for p in rfmodel.param_schema(model.block)],
        "spec_names": list(model.spec_names),
        "param_names": list(model.param_names),
        "seed": model.seed,
        "estimator": meta,
        "history": [float(h) for h in model.history],
        "sim_hash": model.sim_hash,
        "split": model.split,
    }
    arrays = {f"est/{k}": v for k, v in est_arrays.items()}
    arrays.update({f"std/{k}": v for k, v in model.standardizer.arrays().items()})
    arrays["bounds"] = model.bounds
    return _pack(header, arrays)


def loads(blob, kind=None, source="<bytes>"):
    header, arrays = _unpack(blob, source)
    if kind is not None and header["kind"] != kind:
        raise ModelKindError(f"{source}: holds a {header['kind']!r} model, expected {kind!r}")
    if header["kind"] not in ESTIMATORS:
        raise ModelKindError(f"{source}: unknown model kind {header['kind']!r}")
    est_arrays = {k[4:]: v for k, v in arrays.items() if k.startswith("est/")}
    estimator = ESTIMATORS[header["kind"]].from_state(header["estimator"], est_arrays)
    std = Standardizer(arrays["std/x_mean"], arrays["std/x_std"], arrays["std/y_mean"], arrays["std/y_std"])
    return Regressor(header["kind"], header["block"], tuple(header["spec_names"]),
                     tuple(header["param_names"]), header["seed"], std, arrays["bounds"],
                     estimator, header["history"], header["sim_hash"], header["split"])


def save_model(model, path):
    blob = dumps(model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


def load_model(path, kind=None):
    """Load a model; ``kind`` optionally asserts the stored regressor kind."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return loads(blob, kind, str(path))
