"""Counter-based splittable random streams.

Every stochastic routine in the package draws from a stream keyed by an
explicit tuple (experiment seed, purpose tag, shot index, ...).  Streams with
different keys are statistically independent and reproducible regardless of
evaluation order, so shots can be dispatched to workers in any order.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_word(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    if isinstance(tag, str):
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream key components must be int or str, got {type(tag)!r}")


def stream(seed, *tags) -> np.random.Generator:
    """Return a Philox-backed generator keyed by (seed, *tags)."""
    words = [_key_word(seed)] + [_key_word(t) for t in tags]
    return np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(words)))


def substreams(seed, *tags):
    """Callable i -> stream(seed, *tags, i); one private stream per shot."""

    def make(i: int) -> np.random.Generator:
        return stream(seed, *tags, i)

    return make
