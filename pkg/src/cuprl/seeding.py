"""Deterministic RNG streams.

Every stochastic component owns a named substream derived from the run seed,
so runs are reproducible bit-for-bit and components never steal draws from
each other.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "generator_state", "restore_generator"]


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    # stable across processes, unlike hash()
    return zlib.crc32(str(tag).encode("utf-8"))


def substream(seed: int, *tags) -> np.random.Generator:
    """Generator for the (seed, *tags) substream. Same arguments, same stream."""
    entropy = [int(seed)] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def generator_state(rng: np.random.Generator) -> dict:
    """JSON-serializable snapshot of a generator's position."""
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": {k: str(v) for k, v in state["state"].items()},
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def restore_generator(snapshot: dict) -> np.random.Generator:
    """Rebuild a generator from :func:`generator_state` output."""
    if snapshot["bit_generator"] != "PCG64":
        raise ValueError(f"unsupported bit generator {snapshot['bit_generator']!r}")
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {k: int(v) for k, v in snapshot["state"].items()},
        "has_uint32": int(snapshot["has_uint32"]),
        "uinteger": int(snapshot["uinteger"]),
    }
    return np.random.Generator(bg)
