import numpy as np
import pytest

from skillpack.checkpoints import Checkpoint, apply_pack
from skillpack.classify import ModuleClass
from skillpack.packs import DenseEntry, SkillPack
from skillpack.routing import (
    Features,
    FusionRequest,
    LinearClassifier,
    RouterTrainingSet,
    Tag,
    TaskTable,
    fuse,
    instantiate_task,
    load_router,
    overlapping_names,
    route,
    router_from_dict,
    router_to_dict,
    save_router,
    train_router,
)


def make_base(seed=0):
    rng = np.random.default_rng(seed)
    return Checkpoint(
        model_id="base",
        tensors={
            "x.weight": rng.standard_normal((4, 4)).astype(np.float32),
            "y.weight": rng.standard_normal((4, 4)).astype(np.float32),
        },
    )


def dense_pack(name, value, base_id="base"):
    entry = DenseEntry(shape=(4, 4), mclass=ModuleClass.PASSTHROUGH,
                       values=np.full((4, 4), value, np.float32))
    return SkillPack(base_model_id=base_id, tuned_model_id="t", task_tag="", plan_snapshot={},
                     entries={name: entry})


def bit_equal(a, b):
    return a.tensors.keys() == b.tensors.keys() and all(
        np.array_equal(a.tensors[k].view(np.uint32), b.tensors[k].view(np.uint32)) for k in a.tensors
    )


def test_route_task_table():
    router = TaskTable(table={"math": ["pack_m"]})
    assert route(router, Tag("math")) == [("pack_m", 1.0)]
    with pytest.raises(ValueError, match="unknown task tag"):
        route(router, Tag("code"))
    with pytest.raises(ValueError, match="tag"):
        route(router, Features(np.zeros(3)))


def test_route_classifier_tie_breaks_low_index():
    router = LinearClassifier(weights=np.zeros((3, 4)), bias=np.zeros(3), class_to_pack=["a", "b", "c"])
    assert route(router, Features(np.ones(4))) == [("a", 1.0)]


def test_route_classifier_argmax():
    w = np.zeros((2, 3))
    w[0, 0] = 1.0
    w[1, 0] = -1.0
    router = LinearClassifier(weights=w, bias=np.zeros(2), class_to_pack=["a", "b"])
    assert route(router, Features(np.array([1.0, 0, 0]))) == [("a", 1.0)]
    assert route(router, Features(np.array([-1.0, 0, 0]))) == [("b", 1.0)]


def test_route_dimension_mismatch():
    router = LinearClassifier(weights=np.zeros((2, 3)), bias=np.zeros(2), class_to_pack=["a", "b"])
    with pytest.raises(ValueError, match="dimension"):
        route(router, Features(np.zeros(5)))


def test_route_rescaling_invariance():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((4, 6))
        b = rng.standard_normal(4)
        f = rng.standard_normal(6)
        scale = float(rng.uniform(0.01, 100.0))
        ids = list("abcd")
        assert route(LinearClassifier(w, b, ids), Features(f)) == route(
            LinearClassifier(scale * w, scale * b, ids), Features(f)
        )


def test_fuse_empty_is_base_bit_exact():
    base = make_base()
    base.tensors["x.weight"][0, 0] = np.float32(-0.0)
    router = TaskTable(table={"none": []})
    out = fuse(FusionRequest(base=base, packs={}, router=router, selector=Tag("none")))
    assert bit_equal(out, base)


def test_fuse_single_pack_matches_apply():
    base = make_base()
    pack = dense_pack("x.weight", 0.25)
    router = TaskTable(table={"t": ["p"]})
    fused = fuse(FusionRequest(base=base, packs={"p": pack}, router=router, selector=Tag("t")))
    assert bit_equal(fused, apply_pack(base, pack, 1.0))


def test_fuse_disjoint_packs_match_sequential_apply():
    base = make_base()
    pack_a = dense_pack("x.weight", 0.5)
    pack_b = dense_pack("y.weight", -0.75)
    router = TaskTable(table={"both": ["a", "b"]})
    fused = fuse(FusionRequest(base=base, packs={"a": pack_a, "b": pack_b}, router=router, selector=Tag("both")))
    step = apply_pack(apply_pack(base, pack_a, 1.0), pack_b, 1.0, force=True)
    assert bit_equal(fused, step)


def test_fuse_overlapping_packs_sum():
    base = make_base()
    router = TaskTable(table={"t": ["a", "b"]})
    packs = {"a": dense_pack("x.weight", 1.0), "b": dense_pack("x.weight", 2.0)}
    fused = fuse(FusionRequest(base=base, packs=packs, router=router, selector=Tag("t")))
    assert np.allclose(fused.tensors["x.weight"], base.tensors["x.weight"] + 3.0)
    assert overlapping_names(packs) == {"x.weight": ["a", "b"]}


def test_fuse_order_independent_bytes():
    base = make_base()
    router = TaskTable(table={"t": ["b", "a"]})
    packs_fwd = {"a": dense_pack("x.weight", 1.0), "b": dense_pack("x.weight", 2.0)}
    packs_rev = dict(reversed(list(packs_fwd.items())))
    out1 = fuse(FusionRequest(base=base, packs=packs_fwd, router=router, selector=Tag("t")))
    out2 = fuse(FusionRequest(base=base, packs=packs_rev, router=router, selector=Tag("t")))
    assert bit_equal(out1, out2)


def test_fuse_unknown_pack_and_bad_base_id():
    base = make_base()
    router = TaskTable(table={"t": ["missing"]})
    with pytest.raises(ValueError, match="unknown pack"):
        fuse(FusionRequest(base=base, packs={}, router=router, selector=Tag("t")))
    router = TaskTable(table={"t": ["p"]})
    with pytest.raises(ValueError, match="built against"):
        fuse(FusionRequest(base=base, packs={"p": dense_pack("x.weight", 1.0, base_id="other")},
                           router=router, selector=Tag("t")))


def test_instantiate_task_history_independent():
    base = make_base()
    packs = {"code": dense_pack("x.weight", 0.5), "math": dense_pack("y.weight", -0.5)}
    router = TaskTable(table={"code": ["code"], "math": ["math"], "idle": []})
    after_code = instantiate_task(base, packs, "code", router)
    after_math = instantiate_task(base, packs, "math", router)
    fresh_math = instantiate_task(base, packs, "math", router)
    assert bit_equal(after_math, fresh_math)
    assert bit_equal(instantiate_task(base, packs, "idle", router), base)
    # and the base itself never changed
    assert bit_equal(base, make_base())
    assert not bit_equal(after_code, after_math)


def test_train_router_separable_one_hot():
    feats = np.eye(2).repeat(8, axis=0)
    losses = np.where(feats > 0.5, 0.0, 1.0)
    data = RouterTrainingSet(features=feats, losses=losses, pack_ids=["a", "b"])
    clf, acc = train_router(data, epochs=200, learning_rate=1.0)
    assert acc == 1.0


def test_train_router_single_class_errors():
    feats = np.random.default_rng(0).standard_normal((10, 3))
    losses = np.tile([1.0, 1.0, 1.0], (10, 1))  # argmin ties to index 0 everywhere
    data = RouterTrainingSet(features=feats, losses=losses, pack_ids=["a", "b", "c"])
    with pytest.raises(ValueError, match="TaskTable"):
        train_router(data)


def test_train_router_five_blobs():
    rng = np.random.default_rng(0)
    centers = rng.standard_normal((5, 8)) * 5.0
    feats, losses = [], []
    for c in range(5):
        feats.append(centers[c] + rng.standard_normal((200, 8)))
        loss = np.ones((200, 5))
        loss[:, c] = 0.0
        losses.append(loss + 0.01 * rng.standard_normal((200, 5)))
    data = RouterTrainingSet(
        features=np.vstack(feats), losses=np.vstack(losses), pack_ids=[f"p{i}" for i in range(5)]
    )
    clf, acc = train_router(data, epochs=300, learning_rate=0.5)
    assert acc >= 0.95


def test_train_router_deterministic():
    rng = np.random.default_rng(4)
    feats = rng.standard_normal((40, 3))
    losses = rng.standard_normal((40, 3))
    data = RouterTrainingSet(features=feats, losses=losses, pack_ids=["a", "b", "c"])
    c1, a1 = train_router(data, epochs=50, learning_rate=0.3)
    c2, a2 = train_router(data, epochs=50, learning_rate=0.3)
    assert a1 == a2
    assert np.array_equal(c1.weights, c2.weights)
    assert np.array_equal(c1.bias, c2.bias)


def test_router_json_roundtrip(tmp_path):
    table = TaskTable(table={"math": ["a", "b"], "code": []})
    path = tmp_path / "r1.json"
    save_router(table, path)
    loaded = load_router(path)
    assert isinstance(loaded, TaskTable) and loaded.table == table.table

    clf = LinearClassifier(
        weights=np.arange(6.0).reshape(2, 3), bias=np.array([0.5, -0.5]), class_to_pack=["a", "b"]
    )
    path2 = tmp_path / "r2.json"
    save_router(clf, path2)
    loaded2 = load_router(path2)
    assert isinstance(loaded2, LinearClassifier)
    assert np.array_equal(loaded2.weights, clf.weights)
    assert np.array_equal(loaded2.bias, clf.bias)
    assert loaded2.class_to_pack == ["a", "b"]

    with pytest.raises(ValueError, match="unknown router"):
        router_from_dict({"kind": "nope"})
    assert router_to_dict(table)["kind"] == "task_table"
