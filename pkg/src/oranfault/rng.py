"""Named, order-independent derivation of random streams from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def _token(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"negative stream index {part}")
    return int(part)


def derive_seed(seed: int, *names: int | str) -> np.random.SeedSequence:
    """Seed sequence for the stream identified by ``names`` under ``seed``.

    Streams with different name paths are statistically independent and do not
    depend on the order in which other streams are created.
    """
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_token(n) for n in names))


def derive(seed: int, *names: int | str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *names)))


def child_seed(seed: int, *names: int | str) -> int:
    """Integer seed for a component that takes a plain integer seed."""
    return int(derive_seed(seed, *names).generate_state(1, np.uint32)[0])
