import numpy as np
import pytest

from skillpack.quantize import (
    BitGroup,
    calibration_error,
    check_groups,
    pack_codes,
    packed_size,
    qmax,
    quantize_gptq,
    quantize_rtn,
    unpack_codes,
)


def test_rtn_zero_matrix():
    qm = quantize_rtn(np.zeros((3, 4)), 4)
    assert np.all(qm.codes == 0)
    assert np.all(qm.scales == 0)
    assert np.all(qm.dequantize() == 0)


def test_rtn_row_example():
    qm = quantize_rtn(np.array([[-1.0, 1.0, 0.5]]), 8)
    assert qm.codes.tolist() == [[-127, 127, 64]]
    assert qm.scales[0] == pytest.approx(1.0 / 127.0)
    err = np.max(np.abs(qm.dequantize() - [[-1.0, 1.0, 0.5]]))
    assert err <= 1.0 / 254.0 + 1e-9


def test_rtn_per_element_error_bound():
    rng = np.random.default_rng(0)
    for bits in (2, 4, 8):
        m = rng.standard_normal((16, 16))
        qm = quantize_rtn(m, bits)
        err = np.abs(qm.dequantize() - m)
        bound = qm.scales.astype(np.float64)[:, None] / 2.0
        assert np.all(err <= bound + 1e-12)


def test_rtn_error_nonincreasing_in_bits():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((16, 16))
        errs = [np.linalg.norm(quantize_rtn(m, k).dequantize() - m) for k in (2, 4, 8)]
        assert errs[2] <= errs[1] <= errs[0]


def test_rtn_column_axis():
    m = np.array([[1.0, 10.0], [-2.0, 5.0]])
    qm = quantize_rtn(m, 8, axis="column")
    assert qm.scales.shape == (2,)
    assert qm.scales[0] == pytest.approx(2.0 / 127.0)
    assert np.max(np.abs(qm.dequantize() - m)) <= max(qm.scales) / 2 + 1e-12


def test_rtn_rejects_small_bits():
    with pytest.raises(ValueError):
        quantize_rtn(np.ones((2, 2)), 1)


def test_round_half_away_from_zero():
    # scale = 0.75/3 = 0.25 exactly, so 0.125/scale is an exact half-step
    m = np.array([[0.75, 0.125, -0.125]])
    qm = quantize_rtn(m, 3)
    assert qm.scales[0] == 0.25
    np.testing.assert_array_equal(qm.codes, [[3, 1, -1]])


def test_gptq_identity_calibration_matches_rtn():
    rng = np.random.default_rng(123)
    for _ in range(20):
        m = rng.standard_normal((4, 4))
        rtn = quantize_rtn(m, 4)
        gq = quantize_gptq(m, np.eye(4), 4)
        assert np.array_equal(rtn.codes, gq.codes)
        assert np.array_equal(rtn.scales, gq.scales)


def test_gptq_zero_matrix():
    qm = quantize_gptq(np.zeros((4, 4)), np.eye(4), 3)
    assert np.all(qm.codes == 0)


def test_gptq_beats_rtn_on_calibration_error():
    for k in (2, 3, 4):
        wins = 0
        for seed in range(30):
            rng = np.random.default_rng(seed)
            m = rng.standard_normal((32, 32))
            x = rng.standard_normal((32, 16))
            e_rtn = calibration_error(m, quantize_rtn(m, k).dequantize(), x)
            e_gptq = calibration_error(m, quantize_gptq(m, x, k).dequantize(), x)
            wins += e_gptq <= e_rtn
        assert wins >= 27


def test_gptq_column_scales():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((6, 4))
    x = rng.standard_normal((4, 8))
    qm = quantize_gptq(m, x, 4, scale_axis="column")
    assert qm.scales.shape == (4,)
    assert qm.axis == "column"
    expected = np.max(np.abs(m), axis=0) / qmax(4)
    assert np.allclose(qm.scales, expected.astype(np.float32))


def test_gptq_dimension_mismatch():
    with pytest.raises(ValueError):
        quantize_gptq(np.ones((3, 4)), np.ones((5, 2)), 4)


def test_gptq_zero_calibration_falls_back_to_rtn():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((4, 4))
    qm = quantize_gptq(m, np.zeros((4, 2)), 4)
    assert np.array_equal(qm.codes, quantize_rtn(m, 4).codes)


def test_gptq_singular_hessian_without_damping():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((4, 4))
    x = np.zeros((4, 3))
    x[0, :] = rng.standard_normal(3)  # rank-1 Hessian
    with pytest.raises(ValueError, match="[Ss]ingular|damping"):
        quantize_gptq(m, x, 4, damping=0.0)


def test_gptq_deterministic():
    rng = np.random.default_rng(11)
    m = rng.standard_normal((16, 16))
    x = rng.standard_normal((16, 8))
    a = quantize_gptq(m, x, 3)
    b = quantize_gptq(m.copy(), x.copy(), 3)
    assert np.array_equal(a.codes, b.codes)
    assert np.array_equal(a.scales, b.scales)


@pytest.mark.parametrize("bits", [2, 3, 4, 5, 7, 8, 11, 16])
def test_pack_unpack_roundtrip(bits):
    rng = np.random.default_rng(bits)
    limit = qmax(bits)
    codes = rng.integers(-limit, limit + 1, size=257)
    buf = pack_codes(codes, bits)
    assert len(buf) == packed_size(257, bits)
    back = unpack_codes(buf, 257, bits)
    assert np.array_equal(back, codes)


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack_codes(np.array([8]), 4)  # qmax(4) = 7


def test_unpack_surfaces_reserved_code():
    # -2^(k-1) is encodable at width k but outside the symmetric range;
    # unpack returns it so loaders can flag corruption
    buf = pack_codes(np.array([0, 0]), 4)
    tampered = bytes([0x08])  # low nibble = -8 two's complement
    back = unpack_codes(tampered + buf[1:], 2, 4)
    assert back[0] == -8


def test_bit_groups_validate():
    with pytest.raises(ValueError):
        BitGroup(3, 3, 4)
    with pytest.raises(ValueError):
        BitGroup(0, 4, 1)
    with pytest.raises(ValueError):
        check_groups((BitGroup(0, 2, 4), BitGroup(3, 5, 4)), 5)
    with pytest.raises(ValueError):
        check_groups((BitGroup(0, 2, 4),), 5)
    check_groups((BitGroup(0, 2, 8), BitGroup(2, 5, 2)), 5)
