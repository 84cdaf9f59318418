"""Deterministic random-stream management.

A single 64-bit run seed is fanned out into named substreams so that, e.g.,
terrain generation and policy initialization stay identical across variant
runs that share a seed. Stream names hash through crc32, which is stable
across platforms and Python versions.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ConfigError


def substream(seed: int, name: str) -> np.random.Generator:
    """Child generator for (seed, name); same inputs always give the same stream."""
    if not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {type(seed).__name__}")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(key,)))
