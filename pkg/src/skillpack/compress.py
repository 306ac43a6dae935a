"""Module-aware adaptive compression of delta maps into SkillPacks.

Dispatch by module class: embedding/head deltas are magnitude-pruned and
their values quantized with per-row scales; MLP and attention deltas are
truncated-SVD factorized and the factors quantized group-wise with
calibrated (GPTQ-style) quantization; everything else, and every 1-D
tensor, is stored dense and exact.

For a factorized delta U diag(sigma) V^T, the V^T rows of each group are
quantized against the calibration activations x, then the U columns of the
group are quantized against sigma_g * V^T_g * x, so the second step sees
the quantization error of the first. Sigma stays unquantized at 32 bits.
"""

from __future__ import annotations

import numpy as np

from .checkpoints import DeltaMap, load_checkpoint
from .classify import ClassificationManifest, ModuleClass, classify
from .packs import (
    CompressedEntry,
    DenseEntry,
    PrunedSparseEntry,
    QuantizedSvdEntry,
    SkillPack,
)
from .plans import (
    CompressionPlan,
    DenseStrategy,
    FileCalibration,
    PruneStrategy,
    SvdQuantStrategy,
    SyntheticCalibration,
    clip_groups,
    plan_to_dict,
)
from .quantize import qmax, quantize_gptq, rtn_scales
from .tensors import magnitude_prune, svd, truncate


def synthetic_calibration(seed: int, width: int, samples: int) -> np.ndarray:
    """Standard-normal activations (width x samples), shared per input width."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, width]))
    return rng.standard_normal((width, samples))


class _Calibration:
    """Resolves per-tensor calibration activations for one compression run."""

    def __init__(self, plan: CompressionPlan):
        self.plan = plan
        self._synthetic_cache: dict[int, np.ndarray] = {}
        self._file_tensors = None
        if isinstance(plan.calibration, FileCalibration):
            self._file_tensors = load_checkpoint(plan.calibration.path).tensors

    def activations(self, name: str, width: int) -> np.ndarray:
        spec = self.plan.calibration
        if isinstance(spec, SyntheticCalibration):
            if width not in self._synthetic_cache:
                self._synthetic_cache[width] = synthetic_calibration(spec.seed, width, spec.samples)
            return self._synthetic_cache[width]
        x = self._file_tensors.get(name)
        if x is None:
            raise KeyError(f"calibration file has no activations for {name!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != width:
            raise ValueError(f"calibration for {name!r} must be ({width} x samples), got {x.shape}")
        return x


def _compress_prune(delta: np.ndarray, mclass: ModuleClass, strategy: PruneStrategy) -> PrunedSparseEntry:
    sparse = magnitude_prune(delta, strategy.alpha)
    scales = rtn_scales(delta, strategy.value_bits, axis="row")
    s64 = scales.astype(np.float64)
    rows = sparse.indices // delta.shape[1]
    row_scales = s64[rows]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(row_scales == 0.0, 0.0, sparse.values.astype(np.float64) / row_scales)
    codes = np.trunc(ratio + np.copysign(0.5, ratio))
    limit = qmax(strategy.value_bits)
    codes = np.clip(codes, -limit, limit).astype(np.int32)
    return PrunedSparseEntry(
        shape=tuple(delta.shape),
        mclass=mclass,
        alpha=strategy.alpha,
        value_bits=strategy.value_bits,
        indices=sparse.indices,
        codes=codes,
        scales=scales,
    )


def _compress_svd(
    delta: np.ndarray,
    mclass: ModuleClass,
    strategy: SvdQuantStrategy,
    x: np.ndarray,
    damping: float,
) -> QuantizedSvdEntry:
    rows, cols = delta.shape
    factors = truncate(svd(delta.astype(np.float64)), strategy.rank)
    rank = factors.rank
    groups = clip_groups(strategy.groups, rank)

    u_codes = np.zeros((rows, rank), dtype=np.int32)
    v_codes = np.zeros((rank, cols), dtype=np.int32)
    u_scales = np.zeros(rank, dtype=np.float32)
    v_scales = np.zeros(rank, dtype=np.float32)

    for g in groups:
        vt_block = factors.vt[g.begin : g.end, :]
        qv = quantize_gptq(vt_block, x, g.bits, damping=damping, scale_axis="row")
        v_codes[g.begin : g.end, :] = qv.codes
        v_scales[g.begin : g.end] = qv.scales

        vt_hat = qv.dequantize(np.float64)
        u_inputs = factors.sigma[g.begin : g.end, None] * (vt_hat @ x)
        qu = quantize_gptq(factors.u[:, g.begin : g.end], u_inputs, g.bits, damping=damping, scale_axis="column")
        u_codes[:, g.begin : g.end] = qu.codes
        u_scales[g.begin : g.end] = qu.scales

    return QuantizedSvdEntry(
        shape=(rows, cols),
        mclass=mclass,
        rank=rank,
        groups=groups,
        sigma=factors.sigma.astype(np.float32),
        u_codes=u_codes,
        u_scales=u_scales,
        v_codes=v_codes,
        v_scales=v_scales,
    )


def compress_entry(
    name: str,
    delta: np.ndarray,
    mclass: ModuleClass,
    plan: CompressionPlan,
    calibration: np.ndarray | None = None,
) -> CompressedEntry:
    """Compress one delta tensor according to its class strategy.

    1-D tensors are stored dense regardless of class. Float16 deltas are
    promoted to float32 before any decomposition.
    """
    delta = np.asarray(delta)
    if delta.dtype == np.float16:
        delta = delta.astype(np.float32)
    strategy = plan.strategies[mclass]
    if delta.ndim != 2 or isinstance(strategy, DenseStrategy):
        return DenseEntry(shape=tuple(delta.shape), mclass=mclass, values=delta.astype(np.float32))
    if isinstance(strategy, PruneStrategy):
        return _compress_prune(delta, mclass, strategy)
    if isinstance(strategy, SvdQuantStrategy):
        if calibration is None:
            raise ValueError(f"entry {name!r} needs calibration activations for SVD quantization")
        return _compress_svd(delta, mclass, strategy, calibration, plan.damping)
    raise TypeError(f"unknown strategy {strategy!r}")


def compress_delta(
    deltas: DeltaMap,
    manifest: ClassificationManifest,
    plan: CompressionPlan,
    task_tag: str = "",
) -> SkillPack:
    """Compress every delta tensor into one SkillPack.

    Deterministic given (deltas, manifest, plan): each entry depends only
    on its own tensor, the plan, and the calibration seed or file.
    """
    calib = _Calibration(plan)
    entries: dict[str, CompressedEntry] = {}
    for name, delta in deltas.deltas.items():
        mclass = classify(name, manifest)
        needs_calibration = (
            isinstance(plan.strategies[mclass], SvdQuantStrategy) and np.asarray(delta).ndim == 2
        )
        x = calib.activations(name, np.asarray(delta).shape[1]) if needs_calibration else None
        entries[name] = compress_entry(name, delta, mclass, plan, x)
    return SkillPack(
        base_model_id=deltas.base_id,
        tuned_model_id=deltas.tuned_id,
        task_tag=task_tag,
        plan_snapshot=plan_to_dict(plan),
        entries=entries,
    )


def reconstruct_entry(entry: CompressedEntry) -> np.ndarray:
    """Dense float32 reconstruction of a compressed entry."""
    return entry.reconstruct()


def reconstruct_pack(pack: SkillPack) -> dict[str, np.ndarray]:
    return {name: entry.reconstruct() for name, entry in pack.entries.items()}
