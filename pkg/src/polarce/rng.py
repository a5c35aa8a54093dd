"""Named, reproducible random substreams.

Every stochastic stage of the pipeline pulls its own generator from a root
seed plus a string label, so adding draws to one stage never shifts another
and per-trial streams are independent of execution order.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "complex_normal"]


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for (seed, labels...); labels may be strings or ints.

    The label count is appended to the key so a trailing zero label never
    aliases the shorter stream (SeedSequence zero-pads its entropy).
    """
    keys = [int(seed)]
    for lab in labels:
        if isinstance(lab, str):
            keys.append(zlib.crc32(lab.encode("utf-8")))
        else:
            keys.append(int(lab))
    keys.append(len(labels))
    return np.random.default_rng(np.random.SeedSequence(keys))


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian with the given per-entry variance."""
    s = np.sqrt(var / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
