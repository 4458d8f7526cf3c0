"""
Counter-based random streams.

Every random quantity in the lab is drawn from a Philox generator keyed by
a 64-bit hash of (global seed, stream label, keys...). A given task's
projection or a given training step's batch is therefore addressable
directly, without replaying earlier draws.
"""
from typing import Any

import numpy as np

from gpicl_lab.utils.converters import stable_hash64

_WORDS_PER_BLOCK = 4
_TWO_PI = 2.0 * np.pi


def stream_seed(global_seed: int, label: str, *keys: Any) -> int:
    return stable_hash64(global_seed, label, *keys)


def philox_generator(seed: int, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(counter)))


def stream_generator(global_seed: int, label: str, *keys: Any) -> np.random.Generator:
    return philox_generator(stream_seed(global_seed, label, *keys))


def gaussian_sample(
    seed: int,
    shape: tuple[int, ...] | int,
    mean: float = 0.0,
    std: float = 1.0,
    offset: int = 0,
    dtype: Any = np.float64,
) -> np.ndarray:
    """
    Normal samples where sample k depends only on (seed, k).

    Philox block b yields four 64-bit words; Box-Muller turns them into
    four normals, so sample k sits at block k // 4, lane k % 4.
    offset selects the index of the first returned sample.
    """
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    n = int(np.prod(shape))
    first_block, lane = divmod(int(offset), _WORDS_PER_BLOCK)
    n_blocks = -(-(lane + n) // _WORDS_PER_BLOCK)

    bit_gen = np.random.Philox(key=int(seed), counter=first_block)
    raw = bit_gen.random_raw(n_blocks * _WORDS_PER_BLOCK).reshape(n_blocks, _WORDS_PER_BLOCK)
    u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    z = np.empty_like(u)
    for a, b in ((0, 1), (2, 3)):
        radius = np.sqrt(-2.0 * np.log1p(-u[:, a]))
        angle = _TWO_PI * u[:, b]
        z[:, a] = radius * np.cos(angle)
        z[:, b] = radius * np.sin(angle)

    flat = z.reshape(-1)[lane : lane + n]
    return (mean + std * flat).reshape(shape).astype(dtype)
