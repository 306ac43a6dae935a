"""From a checkpoint pair to a SkillPack and back.

Builds a synthetic base/tuned pair, extracts the delta, compresses it under
a ~10% storage budget, prints the storage accounting, grafts the pack back
onto the base, and measures how much of the tuned model's behavior the
compressed delta retains.

Equivalent CLI session:

    skillpack gen-toy --seed 0 --base-out base.gltc --tuned-out tuned.gltc
    skillpack diff base.gltc tuned.gltc -o delta.gltc
    skillpack compress delta.gltc --plan plan.json --tag demo -o demo.skpk
    skillpack inspect demo.skpk
    skillpack graft base.gltc demo.skpk -o grafted.gltc
    skillpack eval --base base.gltc --tuned tuned.gltc --pack demo.skpk --seed 0
"""

import numpy as np

import skillpack as sp
from skillpack.toy import toy_param_shapes

spec = sp.ToySpec(seed=0)
base, tuned = sp.gen_toy(spec)
print(f"toy model: {len(base.tensors)} tensors, id={base.model_id!r}")

delta = sp.diff(base, tuned)
total_params = sum(v.size for v in delta.deltas.values())
nonzero = sum(int(np.count_nonzero(v)) for v in delta.deltas.values())
print(f"delta: {total_params} parameters, {nonzero} touched by the tuning recipe")

plan = sp.budget_plan(0.10, toy_param_shapes(spec))
pack = sp.compress_delta(delta, sp.default_manifest(), plan, task_tag="demo")
print()
print(sp.inspect_pack(pack))

grafted = sp.apply_pack(base, pack, scale=1.0)
report = sp.eval_retention(base, tuned, pack, probe_count=64, seed=0)
print()
print(f"storage ratio (total):  {100 * pack.stats.total.ratio_total:.2f}%")
print(f"mean output deviation:  {100 * report.mean_deviation:.3f}%")
print(f"max output deviation:   {100 * report.max_deviation:.3f}%")

# unloading is recomposition from the untouched base, so it is exact
unloaded_equal = all(
    np.array_equal(base.tensors[name], sp.gen_toy(spec)[0].tensors[name]) for name in base.tensors
)
print(f"base untouched after graft: {unloaded_equal}")
