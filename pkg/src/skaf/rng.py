"""Pinned random streams.

All randomness in the library comes from the counter-based Philox4x64-10
generator keyed directly by the user seed (``key = (seed, 0)``, counter
starting at zero), as exposed by :class:`numpy.random.Philox`. Raw 64-bit
words ``w`` are turned into open-interval uniforms

    u = ((w >> 11) + 0.5) * 2**-53        (0 < u < 1)

and standard normal deviates are obtained by the inverse normal CDF,
``ndtri(u)``. No rejection step is involved, so the k-th deviate of a
stream depends only on (seed, k).

Test vectors for seed 0::

    raw words   213000021201967259, 4455796210202625458, 2055444239878205049
    normals     -2.271884148324594, -0.701327920628698, -1.218980191079758

These are checked in the test suite.
"""

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def _bit_generator(seed):
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))


def uniforms(seed, count):
    """First ``count`` open-interval uniforms of the stream for ``seed``."""
    raw = _bit_generator(seed).random_raw(int(count))
    raw = np.asarray(raw, dtype=np.uint64).reshape(-1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed, count):
    """First ``count`` standard normal deviates of the stream for ``seed``."""
    return ndtri(uniforms(seed, count))


def derive_seed(seed, *labels):
    """Deterministically derive a child seed from ``seed`` and integer labels.

    Used where one user-facing seed has to feed several independent streams
    (initial-condition noise, test matrices, per-cell benchmark seeds).
    """
    ss = np.random.SeedSequence([int(seed) & _MASK64, *[int(v) for v in labels]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
