"""Counter-based uniforms: a pure function of (seed, stream, counters...).

Uses the SplitMix64 finalizer chained over the counter words. Random access
by counter is what makes site-indexed environments and per-replica streams
reproducible independently of evaluation order.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def hash64(seed: int, *counters) -> np.ndarray:
    """Hash a seed and broadcastable integer counters to uint64."""
    with np.errstate(over="ignore"):
        h = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        for c in counters:
            c = np.asarray(c).astype(np.int64).view(np.uint64) if np.ndim(c) else np.uint64(int(c) & 0xFFFFFFFFFFFFFFFF)
            h = _mix(h ^ (c + _GOLDEN + (h << np.uint64(6)) + (h >> np.uint64(2))))
    return np.asarray(h, dtype=np.uint64)


def uniforms(seed: int, *counters) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 bits of ``hash64``."""
    h = hash64(seed, *counters)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def categorical(u: np.ndarray, cumulative: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of category indices for uniforms ``u``."""
    idx = np.searchsorted(cumulative, u, side="right")
    return np.minimum(idx, len(cumulative) - 1)
