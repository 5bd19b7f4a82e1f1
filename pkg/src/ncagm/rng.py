"""Replicate-indexed random streams.

Every Monte Carlo replicate owns a Philox stream keyed by ``(replicate, seed)``,
so replicate ``k`` draws the same numbers whatever order (or thread) it runs
in. Gaussians come from the uniform stream by Box-Muller.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

SEED_BITS = 64
# replicate slot reserved for bootstrap resampling
BOOTSTRAP_SLOT = (1 << 64) - 1


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < (1 << SEED_BITS):
        raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def replicate_stream(seed: int, replicate: int) -> np.random.Generator:
    seed = _check_seed(seed)
    if not 0 <= replicate <= BOOTSTRAP_SLOT:
        raise InvalidArgumentError(f"replicate index out of range: {replicate}")
    return np.random.Generator(np.random.Philox(key=(int(replicate) << 64) | seed))


def bootstrap_stream(seed: int) -> np.random.Generator:
    return replicate_stream(seed, BOOTSTRAP_SLOT)


def uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    return gen.random(shape)


def gaussians(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals by Box-Muller, two per pair of uniforms."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    count = int(np.prod(shape, dtype=np.int64))
    pairs = (count + 1) // 2
    u = gen.random((2, pairs))
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1 - u lies in (0, 1]
    angle = 2.0 * np.pi * u[1]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:count].reshape(shape)
