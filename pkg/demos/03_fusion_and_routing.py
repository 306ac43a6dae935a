"""Skill routing: task-adaptive instantiation and a trained classifier.

Two SkillPacks are built from two differently-tuned variants of one base.
A task table activates one skill at a time; because every instantiation
re-derives from the untouched base, switching tasks is forget-free. A
linear classifier router learns the same assignment from per-pack loss
supervision and routes by feature vector instead of by tag.
"""

import numpy as np

import skillpack as sp
from skillpack.classify import ModuleClass
from skillpack.routing import Features, FusionRequest, RouterTrainingSet, TaskTable

dense = sp.CompressionPlan(strategies={cls: sp.DenseStrategy() for cls in ModuleClass})
base, tuned_code = sp.gen_toy(sp.ToySpec(seed=0))
_, tuned_math = sp.gen_toy(sp.ToySpec(seed=1))

packs = {
    "code": sp.compress_delta(sp.diff(base, tuned_code), sp.default_manifest(), dense, task_tag="code"),
    "math": sp.compress_delta(sp.diff(base, tuned_math), sp.default_manifest(), dense, task_tag="math"),
}
router = TaskTable(table={"code": ["code"], "math": ["math"], "idle": []})

tokens = np.arange(8)
outputs = {}
for tag in ("code", "math", "idle", "code"):
    model = sp.instantiate_task(base, packs, tag, router)
    outputs[tag] = sp.toy_forward(model, tokens)
    print(f"instantiated {tag!r}: first logit {outputs[tag][0]:+.4f}")

again = sp.toy_forward(sp.instantiate_task(base, packs, "code", router), tokens)
print(f"re-instantiating 'code' after 'math' is history-free: {np.array_equal(again, outputs['code'])}")
print(f"'idle' equals the raw base: {np.array_equal(outputs['idle'], sp.toy_forward(base, tokens))}")

# train a two-way classifier from loss supervision: rows preferring pack 0
# cluster at +c, rows preferring pack 1 at -c
rng = np.random.default_rng(0)
center = rng.standard_normal(8) * 4.0
features = np.vstack([center + rng.standard_normal((100, 8)), -center + rng.standard_normal((100, 8))])
losses = np.vstack([np.tile([0.1, 0.9], (100, 1)), np.tile([0.9, 0.1], (100, 1))])
data = RouterTrainingSet(features=features, losses=losses, pack_ids=["code", "math"])
classifier, accuracy = sp.train_router(data, epochs=200, learning_rate=0.5)
print(f"\nclassifier training accuracy: {accuracy:.3f}")

picked = sp.route(classifier, Features(center))
fused = sp.fuse(FusionRequest(base=base, packs=packs, router=classifier, selector=Features(center)))
print(f"features near +center route to {picked[0][0]!r}")
print(
    "classifier-routed fusion equals the task-table instantiation: "
    f"{np.array_equal(sp.toy_forward(fused, tokens), outputs['code'])}"
)
