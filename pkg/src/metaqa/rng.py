"""Named, reproducible random streams derived from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np

STREAMS = ("init", "shuffle", "dropout", "simulator")


def derive_seed(master: int, *names: object) -> int:
    text = ":".join([str(int(master))] + [str(n) for n in names])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def stream(master: int, *names: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *names))


def substream_seeds(master: int) -> dict[str, int]:
    return {name: derive_seed(master, name) for name in STREAMS}
