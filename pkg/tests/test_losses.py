import math

import numpy as np
import pytest

from skillpack.losses import PreferenceScores, dpo_loss, sft_nll


def test_sft_nll_fixtures():
    assert sft_nll([-0.5, -1.0]) == 0.75
    assert sft_nll([0.0, 0.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        sft_nll([])


def test_sft_nll_sum_variant():
    assert sft_nll([-0.5, -1.0], aggregate="sum") == 1.5
    with pytest.raises(ValueError):
        sft_nll([-1.0], aggregate="median")


def test_sft_nll_rejects_bad_values():
    with pytest.raises(ValueError):
        sft_nll([-1.0, 0.5])
    with pytest.raises(ValueError):
        sft_nll([-1.0, -np.inf])


def test_sft_nll_permutation_invariant_and_mean_scaling():
    rng = np.random.default_rng(0)
    logps = -np.abs(rng.standard_normal(16))
    shuffled = rng.permutation(logps)
    assert sft_nll(logps) == pytest.approx(sft_nll(shuffled))
    doubled = np.concatenate([logps, logps])
    assert sft_nll(doubled) == pytest.approx(sft_nll(logps))
    assert sft_nll(doubled, aggregate="sum") == pytest.approx(2 * sft_nll(logps, aggregate="sum"))


def test_dpo_zero_margin_is_ln2():
    scores = PreferenceScores(-1.0, -1.0, -1.0, -1.0, beta=2.0)
    assert dpo_loss(scores) == pytest.approx(math.log(2), abs=1e-12)


def test_dpo_beta_zero_is_ln2():
    scores = PreferenceScores(-0.1, -9.0, -4.0, -2.0, beta=0.0)
    assert dpo_loss(scores) == pytest.approx(math.log(2), abs=1e-12)


def test_dpo_beta1_margin2():
    scores = PreferenceScores(2.0, 0.0, 0.0, 0.0, beta=1.0)
    assert dpo_loss(scores) == pytest.approx(0.126928, abs=1e-6)


def test_dpo_depends_only_on_beta_times_margin():
    rng = np.random.default_rng(1)
    for _ in range(50):
        margin = float(rng.standard_normal())
        beta = float(np.abs(rng.standard_normal()) + 0.1)
        shift_w, shift_l, base = rng.standard_normal(3)
        a = PreferenceScores(margin + base, base, 0.0 + base - base, 0.0, beta=beta)
        # shift both policy and reference for each response; margin unchanged
        b = PreferenceScores(
            margin + shift_w, shift_l, shift_w, shift_l, beta=beta
        )
        assert dpo_loss(a) == pytest.approx(dpo_loss(b), rel=1e-12, abs=1e-12)


def test_dpo_monotone_decreasing_and_convex_in_margin():
    margins = np.linspace(-5, 5, 41)
    losses = [dpo_loss(PreferenceScores(m, 0.0, 0.0, 0.0, beta=1.0)) for m in margins]
    diffs = np.diff(losses)
    assert np.all(diffs < 0)
    assert np.all(np.diff(diffs) >= -1e-12)  # second differences nonnegative


def test_dpo_finite_for_large_margins():
    assert dpo_loss(PreferenceScores(1e4, 0.0, 0.0, 0.0, beta=1.0)) >= 0.0
    assert math.isfinite(dpo_loss(PreferenceScores(-1e4, 0.0, 0.0, 0.0, beta=1.0)))


def test_preference_scores_validate():
    with pytest.raises(ValueError):
        PreferenceScores(np.nan, 0.0, 0.0, 0.0, beta=1.0)
    with pytest.raises(ValueError):
        PreferenceScores(0.0, 0.0, 0.0, 0.0, beta=-1.0)
