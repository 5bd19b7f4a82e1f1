"""Random operator families used by randomized checks and the CLI.

All constructors take a ``numpy.random.Generator`` so callers control seeding.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .hermitian import OperatorFamily, eig_hermitian


def random_hermitian(rng: np.random.Generator, m: int, scale: float = 1.0, real: bool = False):
    g = rng.standard_normal((m, m))
    if not real:
        g = g + 1j * rng.standard_normal((m, m))
    return scale * 0.5 * (g + g.conj().T)


def random_psd(rng: np.random.Generator, m: int, rank: int | None = None, real: bool = False):
    """``G G* / r`` with ``G`` an ``m x r`` Gaussian matrix; ``r`` random when omitted."""
    r = rank if rank is not None else int(rng.integers(1, m + 2))
    g = rng.standard_normal((m, r))
    if not real:
        g = g + 1j * rng.standard_normal((m, r))
    return g @ g.conj().T / r


def _diag_stack(values: np.ndarray) -> np.ndarray:
    n, m = values.shape
    out = np.zeros((n, m, m), dtype=complex)
    idx = np.arange(m)
    out[:, idx, idx] = values
    return out


def random_family(rng, n: int, m: int, diagonal: bool = False) -> OperatorFamily:
    if diagonal:
        return OperatorFamily(_diag_stack(rng.standard_normal((n, m))))
    return OperatorFamily([random_hermitian(rng, m) for _ in range(n)])


def random_psd_family(rng, n: int, m: int, diagonal: bool = False) -> OperatorFamily:
    if diagonal:
        return OperatorFamily(_diag_stack(rng.exponential(size=(n, m))))
    return OperatorFamily([random_psd(rng, m) for _ in range(n)])


def centered_family(rng, n: int, m: int, scale: float = 1.0, diagonal: bool = False) -> OperatorFamily:
    """Hermitian ``a_i`` with ``sum_i a_i = 0`` exactly up to rounding."""
    stack = random_family(rng, n, m, diagonal=diagonal).stack
    stack = stack - stack.mean(axis=0)
    return OperatorFamily(scale * stack)


def constrained_family(rng, n: int, m: int, scale: float = 1.0, diagonal: bool = False) -> OperatorFamily:
    """Self-adjoint ``x_i = I + a_i`` with ``sum_i x_i = n I``."""
    return centered_family(rng, n, m, scale, diagonal).shifted(1.0)


def normalized_psd_family(rng, n: int, m: int, diagonal: bool = False) -> OperatorFamily:
    """PSD ``x_i`` with ``sum_i x_i = n I``: ``x_i = n S^{-1/2} y_i S^{-1/2}``, ``S = sum y``."""
    if diagonal:
        y = random_psd_family(rng, n, m, diagonal=True).stack
    else:
        y = np.stack([random_psd(rng, m, rank=m) for _ in range(n)])
    w, V = eig_hermitian(y.sum(axis=0))
    if w[0] <= 0:
        raise InvalidArgumentError("degenerate draw: sum of members is singular")
    inv_root = (V / np.sqrt(w)) @ V.conj().T
    return OperatorFamily(n * inv_root @ y @ inv_root)


def order_agm_family(rng, n: int, d: int, m: int, fill: float = 0.9, diagonal: bool = False) -> OperatorFamily:
    """``x_i = I + a_i`` with ``sum x_i = n`` and ``||sum x_i^2||^{1/2} <= n / (3d)``.

    Since ``sum x_i^2 = n + sum a_i^2`` the square-sum condition leaves room
    ``n^2 / (9 d^2) - n`` for ``||sum a_i^2||``; the centred perturbation is
    scaled to use the fraction ``fill`` of it.
    """
    room = n * n / (9.0 * d * d) - n
    if room < 0:
        raise InvalidArgumentError(f"n={n} too small for d={d}: need n >= 9 d^2")
    a = centered_family(rng, n, m, diagonal=diagonal).stack
    sq = np.einsum("nij,njk->ik", a, a)
    norm = float(np.max(np.abs(eig_hermitian(sq)[0])))
    a = a * np.sqrt(fill * room / norm) if norm > 0 else a
    return OperatorFamily(a + np.eye(m))
