"""Keyed random streams shared by generators that must not depend on worker count."""

from __future__ import annotations

import numpy as np


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))
