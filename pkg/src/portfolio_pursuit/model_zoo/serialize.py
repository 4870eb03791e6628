"""Self-describing text blobs for fitted models.

A blob is the magic line ``PZOO1`` followed by canonical JSON. Arrays are
stored with dtype and shape; floats are written with ``repr`` so a round trip
is bit-exact and equal models give byte-identical blobs.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"PZOO1\n"
_REGISTRY: dict[str, type] = {}


def register(cls):
    _REGISTRY[cls.__name__] = cls
    return cls


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__nd__": obj.dtype.str, "shape": list(obj.shape), "data": obj.ravel().tolist()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if hasattr(obj, "get_state"):
        return {"__obj__": type(obj).__name__, "state": _encode(obj.get_state())}
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__nd__" in obj:
            return np.array(obj["data"], dtype=np.dtype(obj["__nd__"])).reshape(obj["shape"])
        if "__obj__" in obj:
            return _lookup(obj["__obj__"]).from_state(_decode(obj["state"]))
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def _lookup(name):
    if name not in _REGISTRY:
        # value functions live outside the zoo; importing registers them
        from .. import rl_pursuit  # noqa: F401
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model type {name!r} in blob") from None


def dumps(model) -> bytes:
    payload = {"version": 1, "model": _encode(model)}
    return MAGIC + json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def loads(blob: bytes):
    if not blob.startswith(MAGIC):
        raise ValueError("not a PZOO1 model blob")
    payload = json.loads(blob[len(MAGIC):].decode())
    if payload.get("version") != 1:
        raise ValueError(f"unsupported blob version {payload.get('version')!r}")
    return _decode(payload["model"])
