"""Synthetic toy models and the retention evaluator.

`gen_toy` builds a (base, tuned) checkpoint pair with a known injected
delta: sparse spikes in embedding/head matrices, low-rank bumps in
attention and MLP matrices, optional dense Gaussian noise. Parameter names
follow decoder-transformer conventions so the default manifest classifies
them the way a real model's tensors would be.

`eval_retention` converts weight-space compression error into output-space
deviation with a fixed forward map. The map is not a faithful transformer,
just a deterministic pipeline that touches every parameter:

    h = embed[token]
    per layer:  hn = ln_in * h
                h  = h + Wo @ tanh(Wq hn + Wk hn + Wv hn)
                hm = ln_post * h
                h  = h + Wdown @ (tanh(Wgate hm) * tanh(Wup hm))
    logits = lm_head @ (ln_final * h)

and the probe output is the mean logit vector over a token sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoints import Checkpoint, apply_pack
from .classify import ModuleClass, classify, default_manifest
from .packs import SkillPack, predict_stats
from .plans import (
    CalibrationSpec,
    CompressionPlan,
    DenseStrategy,
    PruneStrategy,
    SvdQuantStrategy,
    SyntheticCalibration,
)
from .quantize import BitGroup

# Every toy value lives on a power-of-two grid: base weights, sparse spikes
# and noise are multiples of 2^-16, low-rank factors are multiples of 2^-8
# so their product is again a 2^-16 multiple. All magnitudes stay below 8,
# so base + delta is exact in float32 and diff(base, tuned) recovers the
# injected delta bit-for-bit; zero-delta elements never move at all.
_GRID = 2.0**-16
_FACTOR_GRID = 2.0**-8
_FACTOR_STD = 0.105  # low-rank factor scale, ~unit Frobenius norm per delta
_SPARSE_STD = 0.2  # magnitude of injected embedding/head spikes


@dataclass(frozen=True)
class DeltaRecipe:
    """What gets injected into the tuned checkpoint."""

    rank: int = 8  # low-rank delta rank per attention/MLP matrix (0 = none)
    sparse_nnz: int = 16  # nonzeros per embedding/head matrix (0 = none)
    noise_std: float = 0.0  # dense Gaussian noise on every delta


@dataclass(frozen=True)
class ToySpec:
    seed: int = 0
    layers: int = 2
    hidden: int = 64
    mlp_width: int = 128
    vocab: int = 256
    recipe: DeltaRecipe = field(default_factory=DeltaRecipe)

    def __post_init__(self):
        if min(self.layers, self.hidden, self.mlp_width, self.vocab) < 1:
            raise ValueError("all toy dimensions must be at least 1")
        if self.recipe.rank > min(self.hidden, self.mlp_width):
            raise ValueError("recipe rank exceeds the smallest matrix dimension")


def toy_param_shapes(spec: ToySpec) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every toy parameter, in checkpoint order."""
    d, m, v = spec.hidden, spec.mlp_width, spec.vocab
    shapes: dict[str, tuple[int, ...]] = {"model.embed_tokens.weight": (v, d)}
    for i in range(spec.layers):
        prefix = f"model.layers.{i}"
        shapes[f"{prefix}.input_layernorm.weight"] = (d,)
        for proj in ("q_proj", "k_proj", "v_proj", "o_proj"):
            shapes[f"{prefix}.self_attn.{proj}.weight"] = (d, d)
        shapes[f"{prefix}.post_attention_layernorm.weight"] = (d,)
        shapes[f"{prefix}.mlp.gate_proj.weight"] = (m, d)
        shapes[f"{prefix}.mlp.up_proj.weight"] = (m, d)
        shapes[f"{prefix}.mlp.down_proj.weight"] = (d, m)
    shapes["model.norm.weight"] = (d,)
    shapes["lm_head.weight"] = (v, d)
    return shapes


def _is_sparse_target(name: str) -> bool:
    return "embed" in name or "lm_head" in name


def _is_lowrank_target(name: str, shape) -> bool:
    return len(shape) == 2 and not _is_sparse_target(name)


def _snap(values: np.ndarray, grid: float) -> np.ndarray:
    return np.round(values / grid) * grid


def gen_toy(spec: ToySpec) -> tuple[Checkpoint, Checkpoint]:
    """Deterministic (base, tuned) pair; tuned = base + the recipe's delta.

    Base 2-D weights are standard normal scaled by 1/sqrt(hidden); norm
    weights start at one. Values are grid-snapped (see module constants) so
    the injected delta is exactly representable: diff(base, tuned) equals
    it bit-for-bit and a dense graft reproduces tuned exactly.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x70F]))
    scale = 1.0 / np.sqrt(spec.hidden)
    recipe = spec.recipe

    base_tensors: dict[str, np.ndarray] = {}
    tuned_tensors: dict[str, np.ndarray] = {}
    for name, shape in toy_param_shapes(spec).items():
        if len(shape) == 1:
            base = np.ones(shape, dtype=np.float64)
        else:
            # + 0.0 flushes -0.0 so zero-delta positions stay bit-identical
            base = _snap(rng.standard_normal(shape) * scale, _GRID) + 0.0

        delta = np.zeros(shape, dtype=np.float64)
        if _is_sparse_target(name) and recipe.sparse_nnz > 0:
            flat = delta.reshape(-1)
            positions = rng.choice(flat.size, size=min(recipe.sparse_nnz, flat.size), replace=False)
            spikes = rng.normal(0.0, _SPARSE_STD, size=len(positions))
            codes = np.round(spikes / _GRID)
            codes = np.where(codes == 0, np.where(spikes >= 0, 1, -1), codes)  # keep every spike nonzero
            flat[positions] = codes * _GRID
        elif _is_lowrank_target(name, shape) and recipe.rank > 0:
            left = _snap(rng.standard_normal((shape[0], recipe.rank)) * _FACTOR_STD, _FACTOR_GRID)
            right = _snap(rng.standard_normal((recipe.rank, shape[1])) * _FACTOR_STD, _FACTOR_GRID)
            delta += left @ right
        if recipe.noise_std > 0:
            delta += _snap(rng.normal(0.0, recipe.noise_std, size=shape), _GRID)

        base_tensors[name] = base.astype(np.float32)
        tuned_tensors[name] = (base + delta).astype(np.float32)

    base_id = f"toy-{spec.seed}-L{spec.layers}-d{spec.hidden}"
    return (
        Checkpoint(model_id=base_id, tensors=base_tensors),
        Checkpoint(model_id=base_id, tensors=tuned_tensors),
    )


def toy_forward(ckpt: Checkpoint, tokens: np.ndarray) -> np.ndarray:
    """Mean logit vector of the fixed forward map over a token sequence."""
    t = ckpt.tensors
    embed = t["model.embed_tokens.weight"].astype(np.float64)
    head = t["lm_head.weight"].astype(np.float64)
    ln_final = t["model.norm.weight"].astype(np.float64)
    n_layers = 0
    while f"model.layers.{n_layers}.input_layernorm.weight" in t:
        n_layers += 1

    total = np.zeros(head.shape[0])
    for token in np.asarray(tokens, dtype=np.int64):
        h = embed[token].copy()
        for i in range(n_layers):
            prefix = f"model.layers.{i}"
            hn = t[f"{prefix}.input_layernorm.weight"].astype(np.float64) * h
            mixed = (
                t[f"{prefix}.self_attn.q_proj.weight"].astype(np.float64) @ hn
                + t[f"{prefix}.self_attn.k_proj.weight"].astype(np.float64) @ hn
                + t[f"{prefix}.self_attn.v_proj.weight"].astype(np.float64) @ hn
            )
            h = h + t[f"{prefix}.self_attn.o_proj.weight"].astype(np.float64) @ np.tanh(mixed)
            hm = t[f"{prefix}.post_attention_layernorm.weight"].astype(np.float64) * h
            gate = np.tanh(t[f"{prefix}.mlp.gate_proj.weight"].astype(np.float64) @ hm)
            up = np.tanh(t[f"{prefix}.mlp.up_proj.weight"].astype(np.float64) @ hm)
            h = h + t[f"{prefix}.mlp.down_proj.weight"].astype(np.float64) @ (gate * up)
        total += head @ (ln_final * h)
    return total / len(tokens)


@dataclass
class RetentionReport:
    deviations: list[float]
    mean_deviation: float
    max_deviation: float
    storage_ratio_total: float

    def to_dict(self) -> dict:
        return {
            "deviations": self.deviations,
            "mean_deviation": self.mean_deviation,
            "max_deviation": self.max_deviation,
            "storage_ratio_total": self.storage_ratio_total,
        }


def eval_retention(
    base: Checkpoint,
    tuned: Checkpoint,
    pack: SkillPack,
    probe_count: int = 64,
    seed: int = 0,
    seq_len: int = 8,
) -> RetentionReport:
    """Relative output deviation of (base + pack) against the tuned model.

    Probes are random token sequences; each deviation is
    ||y_compressed - y_tuned||_2 / ||y_tuned||_2 on the mean logit vector.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be at least 1")
    compressed = apply_pack(base, pack, scale=1.0)
    vocab = base.tensors["model.embed_tokens.weight"].shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A]))
    deviations = []
    for _ in range(probe_count):
        tokens = rng.integers(0, vocab, size=seq_len)
        y_full = toy_forward(tuned, tokens)
        y_comp = toy_forward(compressed, tokens)
        denom = float(np.linalg.norm(y_full))
        num = float(np.linalg.norm(y_comp - y_full))
        deviations.append(0.0 if num == 0.0 else (np.inf if denom == 0.0 else num / denom))
    return RetentionReport(
        deviations=deviations,
        mean_deviation=float(np.mean(deviations)),
        max_deviation=float(np.max(deviations)),
        storage_ratio_total=pack.stats.total.ratio_total,
    )


# --------------------------------------------------------------------------
# Budgeted plans
# --------------------------------------------------------------------------

def _step(t: float, thresholds: tuple[tuple[float, int], ...], top: int) -> int:
    for limit, value in thresholds:
        if t < limit:
            return value
    return top


def _knob_plan(t: float, shapes: dict[str, tuple[int, ...]], calibration, damping) -> CompressionPlan:
    """One member of the budget family.

    Every knob (retention ratio, SVD rank, factor bits, value bits) is
    nondecreasing in t, so a larger budget never compresses harder
    anywhere and retention improves monotonically with spend.
    """
    manifest = default_manifest()
    min_dims = {ModuleClass.ATTENTION: 1, ModuleClass.MLP: 1}
    for name, shape in shapes.items():
        if len(shape) != 2:
            continue
        cls = classify(name, manifest)
        if cls in min_dims:
            min_dims[cls] = max(min_dims[cls], min(shape))

    svd_bits = _step(t, ((0.04, 2), (0.065, 3), (0.09, 4), (0.12, 6), (0.2, 8)), 10)
    value_bits = _step(t, ((0.15, 4), (0.25, 6)), 8)
    alpha = float(min(1.0, max(0.004, 0.5 * t * t)))

    def svd_strategy(limit: int) -> SvdQuantStrategy:
        rank = max(1, min(limit, round(t * limit)))
        return SvdQuantStrategy(rank=rank, groups=(BitGroup(0, rank, svd_bits),))

    return CompressionPlan(
        strategies={
            ModuleClass.EMBEDDING_OR_HEAD: PruneStrategy(alpha=alpha, value_bits=value_bits),
            ModuleClass.MLP: svd_strategy(min_dims[ModuleClass.MLP]),
            ModuleClass.ATTENTION: svd_strategy(min_dims[ModuleClass.ATTENTION]),
            ModuleClass.PASSTHROUGH: DenseStrategy(),
        },
        calibration=calibration,
        damping=damping,
    )


def budget_plan(
    budget: float,
    shapes: dict[str, tuple[int, ...]],
    calibration: CalibrationSpec | None = None,
    damping: float = 0.01,
) -> CompressionPlan:
    """Plan from a one-knob family whose predicted total ratio best matches `budget`.

    The knob scales retention ratio, SVD ranks, and group bit widths
    together, so larger budgets always buy strictly gentler compression.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    calibration = calibration if calibration is not None else SyntheticCalibration()
    manifest = default_manifest()
    best_plan = None
    best_gap = np.inf
    for t in np.linspace(0.004, 1.0, 500):
        plan = _knob_plan(float(t), shapes, calibration, damping)
        predicted = predict_stats(shapes, manifest, plan).total.ratio_total
        gap = abs(predicted - budget)
        if gap < best_gap:
            best_gap = gap
            best_plan = plan
    return best_plan
