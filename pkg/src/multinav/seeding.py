"""Counter-based seed derivation and RNG state capture.

Every stream is addressed by (master seed, key path), so the streams used
by different worlds or phases never depend on the order in which they are
created.  That is what makes sequential and parallel collection agree.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *keys: int) -> int:
    """A 64-bit seed for the stream addressed by ``keys`` under ``master``."""
    ss = np.random.SeedSequence([int(master) & _MASK64, *[int(k) & _MASK64 for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(master: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master) & _MASK64, *[int(k) & _MASK64 for k in keys]])
    return np.random.Generator(np.random.PCG64(ss))


def rng_to_words(rng: np.random.Generator) -> np.ndarray:
    """Exact PCG64 state as six uint64 words."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise TypeError("only PCG64 generators can be captured")
    s, inc = st["state"]["state"], st["state"]["inc"]
    return np.array([s >> 64, s & _MASK64, inc >> 64, inc & _MASK64,
                     st["has_uint32"], st["uinteger"]], dtype=np.uint64)


def rng_from_words(words) -> np.random.Generator:
    w = [int(x) for x in np.asarray(words, dtype=np.uint64)]
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {"state": (w[0] << 64) | w[1], "inc": (w[2] << 64) | w[3]},
        "has_uint32": w[4],
        "uinteger": w[5],
    }
    return np.random.Generator(bg)


def fork(rng: np.random.Generator) -> np.random.Generator:
    """Independent copy with identical state."""
    return rng_from_words(rng_to_words(rng))
