"""The two reference training losses, evaluated on hand-made numbers.

Both operate on supplied log-probabilities only; there is no model here.
"""

import numpy as np

from skillpack.losses import PreferenceScores, dpo_loss, sft_nll

# supervised fine-tuning loss: mean negative log-likelihood per token
print("sft_nll([-0.5, -1.0])      =", sft_nll([-0.5, -1.0]))
print("sft_nll(perfect sequence)  =", sft_nll([0.0, 0.0, 0.0]))
print("sum variant                =", sft_nll([-0.5, -1.0], aggregate="sum"))

# preference loss: -log sigmoid(beta * margin), margin = policy-vs-reference
# log-ratio gap between the preferred and dispreferred response
print()
print(f"{'margin':>7}  {'beta=0.5':>9}  {'beta=1':>9}  {'beta=5':>9}")
for margin in (-2.0, -0.5, 0.0, 0.5, 2.0):
    row = [
        dpo_loss(PreferenceScores(margin, 0.0, 0.0, 0.0, beta=beta))
        for beta in (0.5, 1.0, 5.0)
    ]
    print(f"{margin:>7.1f}  {row[0]:>9.4f}  {row[1]:>9.4f}  {row[2]:>9.4f}")

print()
print("zero margin gives ln 2 =", dpo_loss(PreferenceScores(0, 0, 0, 0, beta=1.0)))
shift = 3.7  # shifting every log-probability by the same amount keeps the margin
a = dpo_loss(PreferenceScores(-1.0, -2.0, -1.5, -1.8, beta=2.0))
b = dpo_loss(PreferenceScores(-1.0 + shift, -2.0 + shift, -1.5 + shift, -1.8 + shift, beta=2.0))
print("loss depends on the margin only:", np.isclose(a, b))
