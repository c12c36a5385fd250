"""Seeded randomness: named substreams derived deterministically from a master seed.

Every source of randomness in a run flows through a RandomStreams bundle so that
(a) replaying with the same master seed reproduces a run bit-for-bit, and
(b) reseeding one substream (e.g. exploitation sampling) leaves the draws of the
other substreams untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1

#: substreams every policy run may draw from
STREAM_NAMES = (
    "arm_sampling",
    "exploration_query",
    "exploitation_sampling",
    "pool_filtration",
    "model_noise",
)


def splitmix64(x: int) -> int:
    """One splitmix64 step; stable 64-bit mixing across platforms."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _tag64(name: str) -> int:
    """FNV-1a over the stream name, used as a stable per-name tag."""
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def mix_seed(master_seed: int, name: str) -> int:
    """Derive a substream seed: splitmix64(master XOR tag(name))."""
    return splitmix64((master_seed & MASK64) ^ _tag64(name))


def make_generator(master_seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix_seed(master_seed, name)))


@dataclass
class RandomStreams:
    """Named, independently seeded substreams for one policy run."""

    master_seed: int
    arm_sampling: np.random.Generator
    exploration_query: np.random.Generator
    exploitation_sampling: np.random.Generator
    pool_filtration: np.random.Generator
    model_noise: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int, **reseeds: int) -> "RandomStreams":
        """Build the bundle; `reseeds` overrides individual substream seeds.

        Example: from_seed(7, exploitation_sampling=99) reseeds only the
        exploitation substream, used by the decoupling tests.
        """
        gens = {}
        for name in STREAM_NAMES:
            seed = reseeds.get(name)
            src = mix_seed(master_seed, name) if seed is None else splitmix64(seed)
            gens[name] = np.random.Generator(np.random.PCG64(src))
        return cls(master_seed=master_seed, **gens)
