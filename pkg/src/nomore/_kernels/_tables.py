"""Constants shared by both kernel backends.

The Gaussian fill is a 128-layer ziggurat driven by a counter-based
SplitMix64 hash: element ``i`` of a fill keyed by ``key`` draws its
``k``-th 64-bit word as ``mix((key + i * GOLDEN) ^ (k * ATTEMPT))``.
Both backends follow the same draw schedule, so they produce the same
stream up to libm rounding in the rare wedge/tail branches.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
ATTEMPT = np.uint64(0xD1B54A32D192ED03)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53

ZIG_LAYERS = 128
ZIG_R = 3.442619855899
ZIG_V = 9.91256303526217e-3


def _build_ziggurat():
    x = np.zeros(ZIG_LAYERS + 1)
    f = np.exp(-0.5 * ZIG_R * ZIG_R)
    x[0] = ZIG_V / f
    x[1] = ZIG_R
    for i in range(2, ZIG_LAYERS):
        x[i] = np.sqrt(-2.0 * np.log(ZIG_V / x[i - 1] + f))
        f = np.exp(-0.5 * x[i] * x[i])
    ratio = x[1:] / x[:-1]
    return x, ratio


ZIG_X, ZIG_RATIO = _build_ziggurat()
