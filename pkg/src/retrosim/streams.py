"""Per-trial random substreams derived from a master seed.

Trial ``i`` always reads the same Philox counter blocks, whatever chunk it is
computed in, so results do not depend on chunking or thread scheduling.
"""

from __future__ import annotations

import numpy as np

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter value
_MAX_SEED = 2**64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def trial_uniforms(master_seed: int, start: int, count: int, per_trial: int = 1) -> np.ndarray:
    """Uniforms in [0, 1) for trials ``start .. start+count-1``, shape ``(count, per_trial)``."""
    blocks = -(-per_trial // _WORDS_PER_BLOCK)
    bitgen = np.random.Philox(key=check_seed(master_seed))
    bitgen.advance(start * blocks)
    raw = bitgen.random_raw(count * blocks * _WORDS_PER_BLOCK)
    raw = raw.reshape(count, blocks * _WORDS_PER_BLOCK)[:, :per_trial]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def chunks(trials: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(size, trials - s)) for s in range(0, trials, size)]
