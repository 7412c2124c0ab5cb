"""Seed derivation.

Every random stream in the package is keyed by an integer seed.  Child
streams are derived as ``SeedSequence([seed, *keys])`` so that a stream
depends only on its own key path, never on how many siblings were drawn
before it.
"""

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Return a 63-bit integer seed for the child stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def complex_normal(rng: np.random.Generator, shape, power: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with E|z|^2 = power."""
    scale = np.sqrt(power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
