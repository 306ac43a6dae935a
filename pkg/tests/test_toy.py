import numpy as np
import pytest

from skillpack.checkpoints import apply_pack, diff
from skillpack.classify import ModuleClass, classify, default_manifest
from skillpack.compress import compress_delta
from skillpack.packs import predict_stats
from skillpack.plans import CompressionPlan, DenseStrategy
from skillpack.toy import (
    DeltaRecipe,
    ToySpec,
    budget_plan,
    eval_retention,
    gen_toy,
    toy_forward,
    toy_param_shapes,
)


def bit_equal(a, b):
    return a.tensors.keys() == b.tensors.keys() and all(
        np.array_equal(a.tensors[k].view(np.uint32), b.tensors[k].view(np.uint32)) for k in a.tensors
    )


def dense_plan():
    return CompressionPlan(strategies={cls: DenseStrategy() for cls in ModuleClass})


def test_gen_toy_deterministic():
    b1, t1 = gen_toy(ToySpec(seed=5))
    b2, t2 = gen_toy(ToySpec(seed=5))
    assert bit_equal(b1, b2) and bit_equal(t1, t2)
    b3, _ = gen_toy(ToySpec(seed=6))
    assert not bit_equal(b1, b3)


def test_gen_toy_names_classify_per_manifest():
    spec = ToySpec()
    manifest = default_manifest()
    shapes = toy_param_shapes(spec)
    classes = {classify(n, manifest) for n in shapes}
    assert classes == set(ModuleClass)
    assert classify("model.embed_tokens.weight", manifest) is ModuleClass.EMBEDDING_OR_HEAD
    base, _ = gen_toy(spec)
    assert list(base.tensors) == list(shapes)
    assert all(base.tensors[n].shape == shapes[n] for n in shapes)


def test_gen_toy_sparse_only_recipe():
    spec = ToySpec(seed=1, recipe=DeltaRecipe(rank=0, sparse_nnz=16, noise_std=0.0))
    base, tuned = gen_toy(spec)
    d = diff(base, tuned)
    assert int(np.count_nonzero(d.deltas["model.embed_tokens.weight"])) == 16
    assert int(np.count_nonzero(d.deltas["lm_head.weight"])) == 16
    for name, delta in d.deltas.items():
        if "embed" not in name and "lm_head" not in name:
            assert np.all(delta == 0)


def test_gen_toy_lowrank_numerical_rank():
    base, tuned = gen_toy(ToySpec(seed=0))
    d = diff(base, tuned)
    for name, delta in d.deltas.items():
        if delta.ndim == 2 and "embed" not in name and "lm_head" not in name:
            sigma = np.linalg.svd(delta.astype(np.float64), compute_uv=False)
            assert int(np.sum(sigma > 1e-6 * sigma[0])) == 8


def test_gen_toy_diff_matches_direct_subtraction_bitwise():
    base, tuned = gen_toy(ToySpec(seed=2))
    d = diff(base, tuned)
    for name in base.tensors:
        direct = tuned.tensors[name].astype(np.float32) - base.tensors[name].astype(np.float32)
        assert np.array_equal(d.deltas[name].view(np.uint32), direct.view(np.uint32))


def test_gen_toy_noise_breaks_low_rank():
    spec = ToySpec(seed=3, recipe=DeltaRecipe(rank=4, sparse_nnz=0, noise_std=0.01))
    base, tuned = gen_toy(spec)
    d = diff(base, tuned)
    delta = d.deltas["model.layers.0.self_attn.q_proj.weight"].astype(np.float64)
    sigma = np.linalg.svd(delta, compute_uv=False)
    assert int(np.sum(sigma > 1e-6 * sigma[0])) > 4


def test_gen_toy_rejects_bad_dims():
    with pytest.raises(ValueError):
        ToySpec(hidden=0)
    with pytest.raises(ValueError):
        ToySpec(hidden=4, mlp_width=4, recipe=DeltaRecipe(rank=8))


def test_toy_forward_deterministic_and_uses_weights():
    base, tuned = gen_toy(ToySpec(seed=0))
    tokens = np.array([1, 2, 3])
    y1 = toy_forward(base, tokens)
    y2 = toy_forward(base, tokens)
    assert np.array_equal(y1, y2)
    assert not np.allclose(toy_forward(tuned, tokens), y1)


def test_eval_retention_dense_pack_is_zero():
    base, tuned = gen_toy(ToySpec(seed=0))
    pack = compress_delta(diff(base, tuned), default_manifest(), dense_plan())
    report = eval_retention(base, tuned, pack, probe_count=8, seed=0)
    assert report.deviations == [0.0] * 8
    assert report.mean_deviation == 0.0 and report.max_deviation == 0.0


def test_eval_retention_zero_delta_is_zero():
    base, _ = gen_toy(ToySpec(seed=1))
    pack = compress_delta(diff(base, base), default_manifest(), dense_plan())
    report = eval_retention(base, base, pack, probe_count=4, seed=3)
    assert report.mean_deviation == 0.0


def test_eval_retention_validates_probe_count():
    base, tuned = gen_toy(ToySpec(seed=0))
    pack = compress_delta(diff(base, tuned), default_manifest(), dense_plan())
    with pytest.raises(ValueError):
        eval_retention(base, tuned, pack, probe_count=0, seed=0)


def test_eval_retention_deterministic():
    spec = ToySpec(seed=0)
    base, tuned = gen_toy(spec)
    plan = budget_plan(0.10, toy_param_shapes(spec))
    pack = compress_delta(diff(base, tuned), default_manifest(), plan)
    r1 = eval_retention(base, tuned, pack, probe_count=16, seed=9)
    r2 = eval_retention(base, tuned, pack, probe_count=16, seed=9)
    assert r1.deviations == r2.deviations


def test_budget_plan_hits_targets():
    spec = ToySpec()
    shapes = toy_param_shapes(spec)
    manifest = default_manifest()
    for budget in (0.02, 0.05, 0.10, 0.20):
        plan = budget_plan(budget, shapes)
        predicted = predict_stats(shapes, manifest, plan).total.ratio_total
        assert abs(predicted - budget) <= 0.2 * budget + 0.002


def test_budget_plan_rejects_nonpositive():
    with pytest.raises(ValueError):
        budget_plan(0.0, toy_param_shapes(ToySpec()))


def test_diff_of_grafted_reproduces_pack_deltas_bitwise():
    base, tuned = gen_toy(ToySpec(seed=6))
    pack = compress_delta(diff(base, tuned), default_manifest(), dense_plan())
    grafted = apply_pack(base, pack, 1.0)
    rederived = diff(base, grafted)
    for name, entry in pack.entries.items():
        assert np.array_equal(
            rederived.deltas[name].view(np.uint32), entry.reconstruct().view(np.uint32)
        )


def test_default_plan_actual_within_predicted_half_point():
    spec = ToySpec(seed=0)
    base, tuned = gen_toy(spec)
    from skillpack.plans import default_plan

    plan = default_plan()
    manifest = default_manifest()
    pack = compress_delta(diff(base, tuned), manifest, plan)
    predicted = predict_stats(toy_param_shapes(spec), manifest, plan)
    assert abs(pack.stats.total.ratio_total - predicted.total.ratio_total) <= 0.005


def test_pipeline_end_to_end_deterministic(tmp_path):
    from skillpack.checkpoints import save_checkpoint
    from skillpack.packs import save_pack

    spec = ToySpec(seed=4)
    shapes = toy_param_shapes(spec)
    plan = budget_plan(0.10, shapes)
    outputs = []
    for run in range(2):
        base, tuned = gen_toy(spec)
        pack = compress_delta(diff(base, tuned), default_manifest(), plan, task_tag="run")
        pack_path = tmp_path / f"p{run}.skpk"
        save_pack(pack, pack_path)
        grafted = apply_pack(base, pack, 1.0)
        ckpt_path = tmp_path / f"g{run}.gltc"
        save_checkpoint(grafted, ckpt_path)
        report = eval_retention(base, tuned, pack, probe_count=8, seed=4)
        outputs.append((open(pack_path, "rb").read(), open(ckpt_path, "rb").read(), report.deviations))
    assert outputs[0] == outputs[1]
