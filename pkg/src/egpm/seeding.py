"""Deterministic RNG streams split from a single 64-bit root seed.

Every consumer of randomness derives its own Philox stream from
(root_seed, label, *indices), so parallel episode generation, shuffling,
and sampling never perturb each other and runs reproduce bit-exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label, indices):
    h = hashlib.blake2b(digest_size=8)
    h.update(label.encode("utf-8"))
    for ix in indices:
        h.update(int(ix).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little")


def stream(root_seed, label, *indices):
    """A numpy Generator unique to (root_seed, label, indices)."""
    key = np.array([np.uint64(root_seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(_label_key(label, indices))], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
