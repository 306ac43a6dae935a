"""SkillPack container (.skpk): compressed delta entries plus accounting.

Storage ratios are reported against a 16-bit baseline (what the original
parameters would occupy at 16 bits per element). Two ratios are kept:
value-only (codes and singular values) and total (adding index bits and
per-vector scales). Header bytes are not counted; the accounting model is
the closed form in `storage_ratio`, and the stats stored in a pack are
recomputed from its entries on load and must match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import container
from .classify import ModuleClass
from .errors import FormatError, IntegrityError
from .plans import DenseStrategy, PruneStrategy, Strategy, SvdQuantStrategy, clip_groups
from .quantize import BitGroup, check_groups, pack_codes, packed_size, qmax, unpack_codes
from .tensors import retained_count

MAGIC = b"SKPK"
VERSION = 1


# --------------------------------------------------------------------------
# Compressed entries
# --------------------------------------------------------------------------

@dataclass(eq=False)
class DenseEntry:
    shape: tuple[int, ...]
    mclass: ModuleClass
    values: np.ndarray  # float32

    kind = "dense"

    def reconstruct(self) -> np.ndarray:
        return self.values.astype(np.float32)


@dataclass(eq=False)
class PrunedSparseEntry:
    shape: tuple[int, ...]
    mclass: ModuleClass
    alpha: float
    value_bits: int
    indices: np.ndarray  # int64, strictly increasing flat positions
    codes: np.ndarray  # int32, one per retained position
    scales: np.ndarray  # float32, one per matrix row

    kind = "pruned_sparse"

    def reconstruct(self) -> np.ndarray:
        limit = qmax(self.value_bits)
        if self.codes.size and int(np.max(np.abs(self.codes))) > limit:
            raise IntegrityError(f"corrupted codes: out of range for {self.value_bits}-bit values")
        dense = np.zeros(int(np.prod(self.shape)), dtype=np.float32)
        rows = self.indices // self.shape[1]
        dense[self.indices] = self.codes.astype(np.float32) * self.scales[rows]
        return dense.reshape(self.shape)


@dataclass(eq=False)
class QuantizedSvdEntry:
    shape: tuple[int, ...]
    mclass: ModuleClass
    rank: int
    groups: tuple[BitGroup, ...]
    sigma: np.ndarray  # float32, length rank, unquantized
    u_codes: np.ndarray  # int32, (rows x rank)
    u_scales: np.ndarray  # float32, one per left singular vector (rank,)
    v_codes: np.ndarray  # int32, (rank x cols)
    v_scales: np.ndarray  # float32, one per right singular vector (rank,)

    kind = "quantized_svd"

    def __post_init__(self):
        self.groups = tuple(self.groups)
        check_groups(self.groups, self.rank)
        if len(self.sigma) != self.rank or len(self.u_scales) != self.rank or len(self.v_scales) != self.rank:
            raise ValueError("sigma and scale lengths must equal the rank")

    def _check_codes(self) -> None:
        for g in self.groups:
            limit = qmax(g.bits)
            u_block = self.u_codes[:, g.begin : g.end]
            v_block = self.v_codes[g.begin : g.end, :]
            if (u_block.size and int(np.max(np.abs(u_block))) > limit) or (
                v_block.size and int(np.max(np.abs(v_block))) > limit
            ):
                raise IntegrityError(f"corrupted codes: out of range for {g.bits}-bit group [{g.begin}, {g.end})")

    def reconstruct(self) -> np.ndarray:
        self._check_codes()
        u = self.u_codes.astype(np.float32) * self.u_scales[None, :]
        vt = self.v_codes.astype(np.float32) * self.v_scales[:, None]
        return (u * self.sigma[None, :]) @ vt


CompressedEntry = Union[DenseEntry, PrunedSparseEntry, QuantizedSvdEntry]


# --------------------------------------------------------------------------
# Storage accounting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StatLine:
    original_bits: int
    stored_value_bits: int
    stored_overhead_bits: int

    @property
    def ratio_value_only(self) -> float:
        return 0.0 if self.original_bits == 0 else self.stored_value_bits / self.original_bits

    @property
    def ratio_total(self) -> float:
        if self.original_bits == 0:
            return 0.0
        return (self.stored_value_bits + self.stored_overhead_bits) / self.original_bits

    def __add__(self, other: "StatLine") -> "StatLine":
        return StatLine(
            self.original_bits + other.original_bits,
            self.stored_value_bits + other.stored_value_bits,
            self.stored_overhead_bits + other.stored_overhead_bits,
        )

    def to_dict(self) -> dict:
        return {
            "original_bits": self.original_bits,
            "stored_value_bits": self.stored_value_bits,
            "stored_overhead_bits": self.stored_overhead_bits,
            "ratio_value_only": self.ratio_value_only,
            "ratio_total": self.ratio_total,
        }


@dataclass(frozen=True)
class StorageStats:
    per_class: dict[str, StatLine]
    total: StatLine

    def to_dict(self) -> dict:
        return {
            "per_class": {cls: line.to_dict() for cls, line in self.per_class.items()},
            "total": self.total.to_dict(),
        }


_ZERO = StatLine(0, 0, 0)


def _index_bits(n_elements: int) -> int:
    return 0 if n_elements <= 1 else math.ceil(math.log2(n_elements))


def _prune_line(shape, retained: int, value_bits: int) -> StatLine:
    rows = shape[0]
    n = int(np.prod(shape))
    return StatLine(
        original_bits=16 * n,
        stored_value_bits=retained * value_bits,
        stored_overhead_bits=retained * _index_bits(n) + 32 * rows,
    )


def _svd_line(shape, rank: int, groups: tuple[BitGroup, ...]) -> StatLine:
    rows, cols = shape
    value = sum((rows + cols) * g.length * g.bits for g in groups) + 32 * rank
    return StatLine(
        original_bits=16 * rows * cols,
        stored_value_bits=value,
        stored_overhead_bits=32 * 2 * rank,
    )


def _dense_line(shape) -> StatLine:
    n = int(np.prod(shape))
    return StatLine(original_bits=16 * n, stored_value_bits=32 * n, stored_overhead_bits=0)


def storage_ratio(shape: tuple[int, ...], strategy: Strategy) -> StatLine:
    """Closed-form storage line for compressing `shape` with `strategy`.

    Needs no data: pruning keeps ceil(alpha*N) values, SVD ranks clamp to
    min(shape), groups clip accordingly. Pack stats use the same formulas,
    so predictions and realized accounting agree exactly.
    """
    if isinstance(strategy, DenseStrategy):
        return _dense_line(shape)
    if isinstance(strategy, PruneStrategy):
        if len(shape) != 2:
            raise ValueError("prune strategy applies to 2-D shapes")
        n = int(np.prod(shape))
        return _prune_line(shape, retained_count(strategy.alpha, n), strategy.value_bits)
    if isinstance(strategy, SvdQuantStrategy):
        if len(shape) != 2:
            raise ValueError("svd strategy applies to 2-D shapes")
        eff = min(strategy.rank, shape[0], shape[1])
        return _svd_line(shape, eff, clip_groups(strategy.groups, eff))
    raise TypeError(f"unknown strategy {strategy!r}")


def entry_stats(entry: CompressedEntry) -> StatLine:
    if isinstance(entry, DenseEntry):
        return _dense_line(entry.shape)
    if isinstance(entry, PrunedSparseEntry):
        return _prune_line(entry.shape, len(entry.indices), entry.value_bits)
    if isinstance(entry, QuantizedSvdEntry):
        return _svd_line(entry.shape, entry.rank, entry.groups)
    raise TypeError(f"unknown entry {entry!r}")


def pack_stats(entries: dict[str, CompressedEntry]) -> StorageStats:
    per_class = {cls.value: _ZERO for cls in ModuleClass}
    total = _ZERO
    for entry in entries.values():
        line = entry_stats(entry)
        per_class[entry.mclass.value] = per_class[entry.mclass.value] + line
        total = total + line
    return StorageStats(per_class=per_class, total=total)


def predict_stats(shapes: dict[str, tuple[int, ...]], manifest, plan) -> StorageStats:
    """Closed-form stats a plan would produce on the given named shapes.

    Mirrors the compressor's dispatch: names are classified by the
    manifest, non-2-D tensors fall back to dense storage.
    """
    from .classify import classify

    per_class = {cls.value: _ZERO for cls in ModuleClass}
    total = _ZERO
    for name, shape in shapes.items():
        mclass = classify(name, manifest)
        strategy = plan.strategies[mclass]
        if len(shape) != 2:
            strategy = DenseStrategy()
        line = storage_ratio(shape, strategy)
        per_class[mclass.value] = per_class[mclass.value] + line
        total = total + line
    return StorageStats(per_class=per_class, total=total)


# --------------------------------------------------------------------------
# The pack itself
# --------------------------------------------------------------------------

@dataclass(eq=False)
class SkillPack:
    base_model_id: str
    tuned_model_id: str
    task_tag: str
    plan_snapshot: dict
    entries: dict[str, CompressedEntry] = field(default_factory=dict)
    stats: StorageStats = field(default=None)  # recomputed when None
    format_version: int = VERSION

    def __post_init__(self):
        if self.stats is None:
            self.stats = pack_stats(self.entries)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _packed_group_codes(codes: np.ndarray, groups, take) -> bytes:
    """Concatenate per-group packed segments, each padded to a byte boundary."""
    parts = [pack_codes(take(codes, g), g.bits) for g in groups]
    return b"".join(parts)


def _entry_blobs(entry: CompressedEntry) -> list[tuple[str, bytes]]:
    if isinstance(entry, DenseEntry):
        return [("dense", _f32_bytes(entry.values))]
    if isinstance(entry, PrunedSparseEntry):
        n = int(np.prod(entry.shape))
        index_dtype = "<u8" if n >= 2**32 else "<u4"
        return [
            ("indices", entry.indices.astype(index_dtype).tobytes()),
            ("values", pack_codes(entry.codes, entry.value_bits)),
            ("scales", _f32_bytes(entry.scales)),
        ]
    if isinstance(entry, QuantizedSvdEntry):
        codes_u = _packed_group_codes(entry.u_codes, entry.groups, lambda c, g: c[:, g.begin : g.end])
        codes_v = _packed_group_codes(entry.v_codes, entry.groups, lambda c, g: c[g.begin : g.end, :])
        return [
            ("sigma", _f32_bytes(entry.sigma)),
            ("codes_u", codes_u),
            ("scales_u", _f32_bytes(entry.u_scales)),
            ("codes_v", codes_v),
            ("scales_v", _f32_bytes(entry.v_scales)),
        ]
    raise TypeError(f"unknown entry {entry!r}")


def _entry_header(name: str, entry: CompressedEntry, blob_metas: list[dict]) -> dict:
    head = {
        "name": name,
        "kind": entry.kind,
        "class": entry.mclass.value,
        "shape": list(entry.shape),
    }
    if isinstance(entry, PrunedSparseEntry):
        n = int(np.prod(entry.shape))
        head["alpha"] = entry.alpha
        head["value_bits"] = entry.value_bits
        head["index_width"] = 64 if n >= 2**32 else 32
    elif isinstance(entry, QuantizedSvdEntry):
        head["rank"] = entry.rank
        head["groups"] = [[g.begin, g.end, g.bits] for g in entry.groups]
    head["blobs"] = blob_metas
    return head


def save_pack(pack: SkillPack, path) -> None:
    all_blobs: list[bytes] = []
    roles_per_entry: list[list[str]] = []
    for entry in pack.entries.values():
        named = _entry_blobs(entry)
        roles_per_entry.append([role for role, _ in named])
        all_blobs.extend(blob for _, blob in named)
    payload, metas = container.layout_blobs(all_blobs)

    meta_iter = iter(metas)
    entry_headers = []
    for (name, entry), roles in zip(pack.entries.items(), roles_per_entry):
        blob_metas = [{"role": role, **next(meta_iter)} for role in roles]
        entry_headers.append(_entry_header(name, entry, blob_metas))

    header = {
        "format_version": pack.format_version,
        "base_model_id": pack.base_model_id,
        "tuned_model_id": pack.tuned_model_id,
        "task_tag": pack.task_tag,
        "plan": pack.plan_snapshot,
        "stats": pack_stats(pack.entries).to_dict(),
        "entries": entry_headers,
    }
    container.write_container(path, MAGIC, VERSION, header, payload)


def _require_roles(head: dict, roles: tuple[str, ...]) -> dict[str, dict]:
    by_role = {b["role"]: b for b in head.get("blobs", [])}
    for role in roles:
        if role not in by_role:
            raise FormatError(f"entry {head.get('name')!r} is missing blob {role!r}")
    return by_role


def _read_f32(payload, meta, context, expect_len) -> np.ndarray:
    blob = container.fetch_blob(payload, meta, context)
    if len(blob) != 4 * expect_len:
        raise FormatError(f"{context}: expected {expect_len} float32 values")
    return np.frombuffer(blob, dtype="<f4").astype(np.float32)


def _unpack_group_codes(blob: bytes, groups, counts: list[int], context: str) -> list[np.ndarray]:
    out = []
    offset = 0
    for g, count in zip(groups, counts):
        seg = packed_size(count, g.bits)
        if offset + seg > len(blob):
            raise FormatError(f"{context}: packed codes shorter than declared groups")
        out.append(unpack_codes(blob[offset : offset + seg], count, g.bits))
        offset += seg
    return out


def _load_entry(head: dict, payload: bytes) -> tuple[str, CompressedEntry]:
    name = head["name"]
    kind = head["kind"]
    mclass = ModuleClass(head["class"])
    shape = tuple(int(d) for d in head["shape"])
    ctx = f"entry {name!r}"

    if kind == "dense":
        by_role = _require_roles(head, ("dense",))
        n = int(np.prod(shape)) if shape else 1
        values = _read_f32(payload, by_role["dense"], f"{ctx} blob 'dense'", n).reshape(shape)
        return name, DenseEntry(shape=shape, mclass=mclass, values=values)

    if kind == "pruned_sparse":
        by_role = _require_roles(head, ("indices", "values", "scales"))
        n = int(np.prod(shape))
        value_bits = int(head["value_bits"])
        width = int(head.get("index_width", 32))
        if width not in (32, 64):
            raise FormatError(f"{ctx}: bad index width {width}")
        idx_blob = container.fetch_blob(payload, by_role["indices"], f"{ctx} blob 'indices'")
        indices = np.frombuffer(idx_blob, dtype="<u8" if width == 64 else "<u4").astype(np.int64)
        if indices.size and (np.any(np.diff(indices) <= 0) or indices[0] < 0 or indices[-1] >= n):
            raise FormatError(f"{ctx}: indices must be strictly increasing and in range")
        val_blob = container.fetch_blob(payload, by_role["values"], f"{ctx} blob 'values'")
        codes = unpack_codes(val_blob, len(indices), value_bits)
        if codes.size and int(np.max(np.abs(codes))) > qmax(value_bits):
            raise IntegrityError(f"corrupted codes: {ctx} out of range for {value_bits}-bit values")
        scales = _read_f32(payload, by_role["scales"], f"{ctx} blob 'scales'", shape[0])
        return name, PrunedSparseEntry(
            shape=shape,
            mclass=mclass,
            alpha=float(head.get("alpha", 0.0)),
            value_bits=value_bits,
            indices=indices,
            codes=codes,
            scales=scales,
        )

    if kind == "quantized_svd":
        by_role = _require_roles(head, ("sigma", "codes_u", "scales_u", "codes_v", "scales_v"))
        rank = int(head["rank"])
        groups = tuple(BitGroup(int(b), int(e), int(k)) for b, e, k in head["groups"])
        rows, cols = shape
        sigma = _read_f32(payload, by_role["sigma"], f"{ctx} blob 'sigma'", rank)
        u_scales = _read_f32(payload, by_role["scales_u"], f"{ctx} blob 'scales_u'", rank)
        v_scales = _read_f32(payload, by_role["scales_v"], f"{ctx} blob 'scales_v'", rank)

        u_blob = container.fetch_blob(payload, by_role["codes_u"], f"{ctx} blob 'codes_u'")
        v_blob = container.fetch_blob(payload, by_role["codes_v"], f"{ctx} blob 'codes_v'")
        u_parts = _unpack_group_codes(u_blob, groups, [rows * g.length for g in groups], f"{ctx} codes_u")
        v_parts = _unpack_group_codes(v_blob, groups, [g.length * cols for g in groups], f"{ctx} codes_v")
        u_codes = np.concatenate(
            [part.reshape(rows, g.length) for part, g in zip(u_parts, groups)], axis=1
        )
        v_codes = np.concatenate(
            [part.reshape(g.length, cols) for part, g in zip(v_parts, groups)], axis=0
        )
        entry = QuantizedSvdEntry(
            shape=shape,
            mclass=mclass,
            rank=rank,
            groups=groups,
            sigma=sigma,
            u_codes=u_codes,
            u_scales=u_scales,
            v_codes=v_codes,
            v_scales=v_scales,
        )
        entry._check_codes()
        return name, entry

    raise FormatError(f"{ctx}: unknown entry kind {kind!r}")


def load_pack(path) -> SkillPack:
    header, payload = container.read_container(path, MAGIC, VERSION)
    entries: dict[str, CompressedEntry] = {}
    for head in header.get("entries", []):
        name, entry = _load_entry(head, payload)
        if name in entries:
            raise FormatError(f"duplicate entry name {name!r}")
        entries[name] = entry
    stats = pack_stats(entries)
    if stats.to_dict() != header.get("stats"):
        raise IntegrityError("stats mismatch: stored storage stats do not match the entries")
    return SkillPack(
        base_model_id=header.get("base_model_id", ""),
        tuned_model_id=header.get("tuned_model_id", ""),
        task_tag=header.get("task_tag", ""),
        plan_snapshot=header.get("plan", {}),
        entries=entries,
        stats=stats,
        format_version=header.get("format_version", VERSION),
    )


# --------------------------------------------------------------------------
# Inspection
# --------------------------------------------------------------------------

def _fmt_shape(shape) -> str:
    return "x".join(str(d) for d in shape)


def _fmt_groups(groups) -> str:
    return "[" + ", ".join(f"{g.begin}:{g.end}@{g.bits}b" for g in groups) + "]"


def inspect_pack(pack: SkillPack) -> str:
    """Human-readable report; row ordering follows the pack, classes the enum."""
    lines = [
        f"SkillPack  base={pack.base_model_id!r}  tuned={pack.tuned_model_id!r}  tag={pack.task_tag!r}",
        f"entries: {len(pack.entries)}",
    ]
    for name, entry in pack.entries.items():
        line = entry_stats(entry)
        detail = ""
        if isinstance(entry, PrunedSparseEntry):
            detail = f"  alpha={entry.alpha:g}  value_bits={entry.value_bits}  retained={len(entry.indices)}"
        elif isinstance(entry, QuantizedSvdEntry):
            detail = f"  rank={entry.rank}  groups={_fmt_groups(entry.groups)}"
        lines.append(
            f"  {name}  kind={entry.kind}  class={entry.mclass.value}  shape={_fmt_shape(entry.shape)}"
            f"{detail}  ratio_value={100 * line.ratio_value_only:.4f}%  ratio_total={100 * line.ratio_total:.4f}%"
        )
    lines.append("per-class storage:")
    for cls in ModuleClass:
        line = pack.stats.per_class[cls.value]
        lines.append(
            f"  {cls.value}: original_bits={line.original_bits}  value_bits={line.stored_value_bits}"
            f"  overhead_bits={line.stored_overhead_bits}"
            f"  ratio_value={100 * line.ratio_value_only:.4f}%  ratio_total={100 * line.ratio_total:.4f}%"
        )
    total = pack.stats.total
    lines.append(
        f"total: original_bits={total.original_bits}  value_bits={total.stored_value_bits}"
        f"  overhead_bits={total.stored_overhead_bits}"
        f"  ratio_value={100 * total.ratio_value_only:.4f}%  ratio_total={100 * total.ratio_total:.4f}%"
    )
    return "\n".join(lines)
