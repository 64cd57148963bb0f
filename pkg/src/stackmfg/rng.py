"""Counter-based random streams.

Each stream is a Philox4x64-10 generator keyed by ``(seed, tag, path, agent)``
with its counter starting at zero, so draw ``k`` of a stream is a pure
function of ``(seed, tag, path, agent, k)``: no generator state is shared
between streams and any stream can be regenerated in isolation.

Uniforms are ``(2 * (raw >> 12) + 1) / 2**53``: odd multiples of 2**-53, all
exactly representable and strictly inside (0, 1). Normals
are their image under the inverse standard-normal CDF.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# stream tags
COMMON_NOISE = 0
IDIOSYNCRATIC_NOISE = 1
INITIAL_STATE = 2
LEADER_TERMINAL = 3
DIRECTION = 4

_FIELD = 1 << 28


def _key(seed: int, tag: int, path: int, agent: int) -> np.ndarray:
    if not (0 <= path < _FIELD and 0 <= agent < _FIELD and 0 <= tag < 256):
        raise ValueError("stream index out of range")
    return np.array([seed, (tag << 56) | (path << 28) | agent], dtype=np.uint64)


def raw_stream(seed: int, tag: int, path: int, agent: int, n: int) -> np.ndarray:
    return np.random.Philox(key=_key(seed, tag, path, agent)).random_raw(n)


def to_uniform(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(12)).astype(np.float64) * 2.0**-52 + 2.0**-53


def uniforms(seed: int, tag: int, path: int, agent: int, n: int) -> np.ndarray:
    return to_uniform(raw_stream(seed, tag, path, agent, n))


def normals(seed: int, tag: int, path: int, agent: int, n: int) -> np.ndarray:
    return ndtri(uniforms(seed, tag, path, agent, n))


def derive_seed(seed: int, *labels: int) -> int:
    """Independent 64-bit seed for a labelled sub-experiment (e.g. one N of a sweep)."""
    return int(np.random.SeedSequence([seed, *labels]).generate_state(1, np.uint64)[0])
