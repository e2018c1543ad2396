"""Deterministic RNG substream derivation.

A single root seed drives every stochastic component of an experiment.
Substreams are derived as ``SeedSequence([root, crc32(tag), index])`` so
independent consumers (source sampling, basis choices, channel vacuum,
eavesdropper choices, sweep points) never share a stream, and any chunk
can be regenerated in isolation from (root, tag, index) alone.
"""
from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, tag: str, index: int = 0) -> np.random.SeedSequence:
    if root < 0 or index < 0:
        raise ValueError("root seed and index must be nonnegative integers")
    return np.random.SeedSequence([root, zlib.crc32(tag.encode("utf-8")), index])


def substream(root: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for the (root, tag, index) substream."""
    return np.random.default_rng(derive_seed(root, tag, index))
