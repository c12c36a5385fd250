"""streamexperts: memory-bounded online learning for streaming and sliding
windows, with a seeded benchmark harness."""

from .meter import MemoryMeter
from .models import (
    Explicit,
    HiddenBest,
    HotStreak,
    IID,
    Instance,
    RandomOrderBest,
    TwoPhase,
    build_instance,
)
from .pool import DESK_PROFILE, PAPER_PROFILE, PROFILES, ConstantsProfile
from .protocol import AlgorithmPolicy, PlayRecord, Trace, run_policy
from .rng import RandomStreams, mix_seed

__all__ = [
    "AlgorithmPolicy",
    "ConstantsProfile",
    "DESK_PROFILE",
    "Explicit",
    "HiddenBest",
    "HotStreak",
    "IID",
    "Instance",
    "MemoryMeter",
    "PAPER_PROFILE",
    "PROFILES",
    "PlayRecord",
    "RandomOrderBest",
    "RandomStreams",
    "Trace",
    "TwoPhase",
    "build_instance",
    "mix_seed",
    "run_policy",
]

__version__ = "0.1.0"
