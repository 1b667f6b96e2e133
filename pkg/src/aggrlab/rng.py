"""Counter-based random streams keyed by (seed, name, ...).

Every random draw in the package goes through :func:`stream`. A stream is a
Philox generator whose key is derived from the master seed plus a tuple of
labels, so each (trial, purpose) pair gets an independent, reproducible
sequence no matter the order in which cells are executed.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_to_int(label: int | str) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean stream labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        return int(label)
    if isinstance(label, str):
        # crc32 is stable across runs and platforms, unlike hash().
        return zlib.crc32(label.encode("utf-8")) | (1 << 32)
    raise TypeError(f"unsupported stream label {label!r}")


def stream(seed: int, *labels: int | str) -> np.random.Generator:
    """Return the generator for substream ``labels`` under master ``seed``.

    Integer labels map to themselves and string labels to ``crc32 + 2**32``,
    so the two kinds never collide. The resulting integers form the
    SeedSequence spawn key.
    """
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    key = tuple(_label_to_int(lab) for lab in labels)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
