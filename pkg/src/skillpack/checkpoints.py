"""Checkpoint container (.gltc), delta extraction, and pack grafting.

A checkpoint is a model id plus an insertion-ordered name -> array map;
iteration order is the serialized order. Deltas follow the fixed
convention tuned - base, computed in float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import FormatError
from .tensors import ensure_finite

MAGIC = b"GLTC"
VERSION = 1

_DTYPE_TAGS = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}
_TAG_FOR_KIND = {np.dtype(np.float32): "f32", np.dtype(np.float16): "f16"}


@dataclass
class Checkpoint:
    model_id: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class DeltaMap:
    base_id: str
    tuned_id: str
    deltas: dict[str, np.ndarray] = field(default_factory=dict)


def _dtype_tag(arr: np.ndarray, name: str) -> str:
    tag = _TAG_FOR_KIND.get(arr.dtype)
    if tag is None:
        raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}; use float32 or float16")
    return tag


def _write_tensor_container(path, model_id: str, tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    blobs = []
    for name, arr in tensors.items():
        tag = _dtype_tag(arr, name)
        ensure_finite(arr, f"tensor {name!r}")
        blobs.append(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())
    payload, metas = container.layout_blobs(blobs)
    entries = [
        {"name": name, "dtype": _dtype_tag(arr, name), "shape": list(arr.shape), **meta}
        for (name, arr), meta in zip(tensors.items(), metas)
    ]
    header = {"model_id": model_id, **(extra or {}), "tensors": entries}
    container.write_container(path, MAGIC, VERSION, header, payload)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    _write_tensor_container(path, ckpt.model_id, ckpt.tensors)


def _read_tensors(header: dict, payload: bytes) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for meta in header.get("tensors", []):
        name = meta["name"]
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tag = meta["dtype"]
        if tag not in _DTYPE_TAGS:
            raise FormatError(f"tensor {name!r} has unknown dtype tag {tag!r}")
        dtype = _DTYPE_TAGS[tag]
        shape = tuple(int(d) for d in meta["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if count * dtype.itemsize != meta["byte_len"]:
            raise FormatError(f"tensor {name!r}: byte length does not match shape")
        blob = container.fetch_blob(payload, meta, f"tensor {name!r}")
        arr = np.frombuffer(blob, dtype=dtype, count=count).reshape(shape)
        arr = arr.astype(arr.dtype.newbyteorder("="), copy=True)
        ensure_finite(arr, f"tensor {name!r}")
        tensors[name] = arr
    return tensors


def load_checkpoint(path) -> Checkpoint:
    header, payload = container.read_container(path, MAGIC, VERSION)
    return Checkpoint(model_id=header.get("model_id", ""), tensors=_read_tensors(header, payload))


def diff(base: Checkpoint, tuned: Checkpoint) -> DeltaMap:
    """Elementwise tuned - base in float32, requiring identical name sets."""
    base_names = set(base.tensors)
    tuned_names = set(tuned.tensors)
    if base_names != tuned_names:
        only_base = sorted(base_names - tuned_names)
        only_tuned = sorted(tuned_names - base_names)
        raise ValueError(
            f"checkpoints have different parameters; only in base: {only_base}, only in tuned: {only_tuned}"
        )
    deltas: dict[str, np.ndarray] = {}
    for name, base_arr in base.tensors.items():
        tuned_arr = tuned.tensors[name]
        if base_arr.shape != tuned_arr.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: base {base_arr.shape} vs tuned {tuned_arr.shape}"
            )
        deltas[name] = tuned_arr.astype(np.float32) - base_arr.astype(np.float32)
    return DeltaMap(base_id=base.model_id, tuned_id=tuned.model_id, deltas=deltas)


def save_delta(dm: DeltaMap, path) -> None:
    """Deltas ride the checkpoint container with the two ids in extra header keys."""
    extra = {"delta_base_id": dm.base_id, "delta_tuned_id": dm.tuned_id}
    _write_tensor_container(path, dm.tuned_id, dm.deltas, extra)


def load_delta(path) -> DeltaMap:
    header, payload = container.read_container(path, MAGIC, VERSION)
    if "delta_base_id" not in header or "delta_tuned_id" not in header:
        raise FormatError("not a delta container: missing delta_base_id/delta_tuned_id")
    return DeltaMap(
        base_id=header["delta_base_id"],
        tuned_id=header["delta_tuned_id"],
        deltas=_read_tensors(header, payload),
    )


def _apply_updates(base: Checkpoint, updates: dict[str, np.ndarray], model_id: str | None = None) -> Checkpoint:
    """New checkpoint = base + float32 updates; untouched names copied bit-exact.

    Elements whose update is zero keep the base bit pattern (adding 0.0
    would flip -0.0 to +0.0), which is what makes zero-delta grafts and
    empty fusions exact identities.
    """
    out: dict[str, np.ndarray] = {}
    for name, arr in base.tensors.items():
        update = updates.get(name)
        if update is None:
            out[name] = arr.copy()
            continue
        if tuple(update.shape) != tuple(arr.shape):
            raise ValueError(f"shape mismatch for {name!r}: base {arr.shape} vs update {update.shape}")
        shifted = (arr.astype(np.float32) + update).astype(arr.dtype)
        out[name] = np.where(update == 0.0, arr, shifted)
    for name in updates:
        if name not in base.tensors:
            raise ValueError(f"update names tensor {name!r} absent from the base checkpoint")
    return Checkpoint(model_id=base.model_id if model_id is None else model_id, tensors=out)


def apply_pack(base: Checkpoint, pack, scale: float = 1.0, force: bool = False) -> Checkpoint:
    """Graft a pack onto a base: base + scale * reconstructed deltas.

    The base is never mutated; unloading a pack is recomposition from the
    untouched base, never subtraction.
    """
    if pack.base_model_id != base.model_id and not force:
        raise ValueError(
            f"pack was built against {pack.base_model_id!r}, base is {base.model_id!r} (use force to override)"
        )
    updates: dict[str, np.ndarray] = {}
    for name, entry in pack.entries.items():
        if name not in base.tensors:
            raise ValueError(f"pack entry {name!r} has no matching tensor in the base checkpoint")
        if scale == 0.0:
            continue
        updates[name] = np.float32(scale) * entry.reconstruct()
    return _apply_updates(base, updates)
