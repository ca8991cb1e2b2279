"""Deterministic stream derivation on top of numpy's counter-based Philox."""
from __future__ import annotations

import hashlib
from typing import Iterable, Union

import numpy as np

Label = Union[str, int]


def _label_words(labels: Iterable[Label]) -> list[int]:
    h = hashlib.blake2b(digest_size=16)
    for lab in labels:
        h.update(type(lab).__name__.encode())
        h.update(b"\x00")
        h.update(str(lab).encode())
        h.update(b"\x01")
    d = h.digest()
    return [int.from_bytes(d[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_stream(master_seed: int, *labels: Label) -> np.random.Generator:
    """Generator for the labelled path below `master_seed`.

    The same (seed, labels) always gives the same stream, independent of
    which worker asks for it.
    """
    if not labels:
        raise ValueError("at least one label is required")
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_label_words(labels))
    return np.random.Generator(np.random.Philox(ss))
