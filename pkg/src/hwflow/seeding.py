"""Deterministic seed derivation.

Every random stream in the package is a PCG64 generator built from a
``SeedSequence`` whose entropy is the user's master seed and whose spawn
key encodes *what* the stream is for (experiment id, replicate index, role).
Two calls with the same key always produce the same stream, independently of
how work is scheduled across processes.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

GENERATOR_ID = "PCG64"
_MASK64 = (1 << 64) - 1


def _key_part(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"negative key component {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported seed key component {part!r}")


@dataclass(frozen=True)
class SeedRecord:
    """Provenance of a random stream: master seed plus spawn key."""

    seed: int
    key: tuple = ()
    generator: str = GENERATOR_ID

    def to_dict(self):
        return {"seed": self.seed, "key": list(self.key), "generator": self.generator}

    def rng(self) -> np.random.Generator:
        return derive_rng(self.seed, *self.key)


def seed_sequence(seed: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(_key_part(k) for k in key)
    )


def derive_rng(seed: int, *key) -> np.random.Generator:
    """Generator for ``(seed, *key)``; string key parts are hashed with CRC32."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def as_record(seed, *key) -> SeedRecord:
    if isinstance(seed, SeedRecord):
        return SeedRecord(seed.seed, tuple(seed.key) + tuple(key), seed.generator)
    return SeedRecord(int(seed), tuple(key))
