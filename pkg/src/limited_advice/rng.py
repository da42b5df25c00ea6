"""Seed derivation and random streams.

Every stream is a numpy ``Generator`` over the counter-based Philox4x64
bit generator, keyed by a 64-bit BLAKE2b digest of
``"{master_seed}/{trial}/{label}"``.  The same key reproduces the same
stream in any implementation of Philox4x64-10 that consumes one 64-bit word
per double (``(word >> 11) * 2**-53``).
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_FAMILY = "Philox4x64-10"
SEED_DERIVATION = "blake2b(digest_size=8, little-endian) of '{master_seed}/{trial}/{label}'"

LEARNER_STREAM = "learner"
ADVERSARY_STREAM = "adversary"


def derive_seed(master_seed, trial, label):
    digest = hashlib.blake2b(f"{master_seed}/{trial}/{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_generator(master_seed, trial=0, label=LEARNER_STREAM):
    return np.random.Generator(np.random.Philox(key=derive_seed(master_seed, trial, label)))


def as_generator(random_state):
    """Coerce ``None``/int/Generator to a Philox-backed ``Generator``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.Generator(np.random.Philox())
    return make_generator(int(random_state))


def generator_metadata():
    return {
        "family": GENERATOR_FAMILY,
        "numpy": np.__version__,
        "seed_derivation": SEED_DERIVATION,
        "streams": [LEARNER_STREAM, ADVERSARY_STREAM],
    }
