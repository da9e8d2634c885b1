"""Deterministic per-module random streams derived from one master seed."""

import zlib

import numpy as np


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Generator for ``label`` under ``seed``; adding labels never shifts other streams."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode("utf-8"))])
