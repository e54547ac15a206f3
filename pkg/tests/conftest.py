"""Shared fixtures for drmfpca tests."""

from typing import Sequence

import numpy as np
import pytest

from drmfpca.multisample import MultiSample


def normal_samples(
    means: Sequence[float],
    sds: Sequence[float],
    n: int,
    seed: int = 0,
) -> MultiSample:
    """Draw one normal sample per (mean, sd) pair from a fixed seed."""
    rng = np.random.default_rng(seed)
    return MultiSample.from_arrays(
        [rng.normal(mu, sd, size=n) for mu, sd in zip(means, sds)]
    )


@pytest.fixture
def normal_pair() -> MultiSample:
    """N(0, 1) and N(1, 1) samples of size 400."""
    return normal_samples((0.0, 1.0), (1.0, 1.0), 400, seed=1)


@pytest.fixture
def four_normals() -> MultiSample:
    """Four normal samples differing in mean and spread, size 300 each."""
    return normal_samples((0.0, 0.6, -0.4, 0.3), (1.0, 1.3, 0.8, 1.1), 300, seed=2)
