"""Deterministic RNG stream derivation.

Every stochastic routine takes a stream derived from (master_seed, labels...).
Streams depend only on their key, never on execution order, so ensembles can
be run in any order (or in parallel) without changing results.
"""

import hashlib

import numpy as np


def _label_entropy(label) -> int:
    """Map an arbitrary hashable label to a stable 64-bit integer."""
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    h = hashlib.sha256(repr(label).encode()).digest()
    return int.from_bytes(h[:8], "little")


def stream(master_seed: int, *labels) -> np.random.Generator:
    """Generator keyed by (master_seed, labels...)."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [_label_entropy(x) for x in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def kernel_seed(rng: np.random.Generator) -> int:
    """Draw a 32-bit seed for a compiled kernel's internal generator."""
    return int(rng.integers(0, 2**32 - 1))
