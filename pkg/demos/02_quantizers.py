"""Round-to-nearest vs calibrated quantization.

Both quantizers share the same symmetric grid; the calibrated one
additionally propagates each column's rounding error into the columns not
yet quantized, weighted by the inverse activation Hessian. The payoff is a
consistently lower calibration error ||m x - m^ x||, especially at very
low bit widths.
"""

import numpy as np

from skillpack.quantize import calibration_error, quantize_gptq, quantize_rtn

rng = np.random.default_rng(0)
matrix = rng.standard_normal((64, 64))
x = rng.standard_normal((64, 32))

print(f"{'bits':>4}  {'rtn error':>12}  {'calibrated':>12}  {'improvement':>11}")
for bits in (2, 3, 4, 6, 8):
    e_rtn = calibration_error(matrix, quantize_rtn(matrix, bits).dequantize(), x)
    e_cal = calibration_error(matrix, quantize_gptq(matrix, x, bits).dequantize(), x)
    print(f"{bits:>4}  {e_rtn:>12.4f}  {e_cal:>12.4f}  {100 * (1 - e_cal / e_rtn):>10.1f}%")

print()
wins = 0
trials = 50
for seed in range(trials):
    r = np.random.default_rng(seed)
    m = r.standard_normal((64, 64))
    xs = r.standard_normal((64, 32))
    e_rtn = calibration_error(m, quantize_rtn(m, 3).dequantize(), xs)
    e_cal = calibration_error(m, quantize_gptq(m, xs, 3).dequantize(), xs)
    wins += e_cal <= e_rtn
print(f"3-bit calibrated quantization matches or beats RTN in {wins}/{trials} random trials")

# with identity activations every column is independent, and the two agree exactly
m = rng.standard_normal((8, 8))
identical = np.array_equal(quantize_gptq(m, np.eye(8), 4).codes, quantize_rtn(m, 4).codes)
print(f"identity calibration reduces to RTN bit-exactly: {identical}")
