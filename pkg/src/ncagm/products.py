"""Average products P_d and the partition sums <sigma>, [sigma].

For index tuples ``(i_1, ..., i_d)`` with entries in ``0..n-1``:

* ``restricted_sum``: tuples whose equality pattern is exactly ``sigma``;
* ``full_sum_direct``: tuples constant on the blocks of ``sigma`` (any pattern
  coarser than ``sigma``), i.e. one free index per block;
* ``full_sum_embedded``: the same full sum obtained as the corner of an
  ordered product of matrix-unit tensor factors;
* ``p_d_bruteforce`` / ``p_d_via_mobius``: the normalised sum over injective
  tuples, directly and through the Möbius expansion in full sums.

Every function takes either one :class:`OperatorFamily` (the same operators at
every position) or a sequence of ``d`` families (position-dependent operators).
Enumerations run in lexicographic tuple order.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError, ResourceLimitError
from .hermitian import OperatorFamily, as_hermitian
from .partitions import MobiusCache, SetPartition, enumerate_partitions, mobius

TERM_CAP = 10**7
EMBED_DIM_CAP = 4096
DRIFT_TOL = 1e-10

Families = OperatorFamily | Sequence[OperatorFamily]


def falling_factorial(n: int, d: int) -> int:
    return math.perm(n, d)


def _stacks(fam: Families, d: int) -> list[np.ndarray]:
    if isinstance(fam, OperatorFamily):
        return [fam.stack] * d
    fams = list(fam)
    if len(fams) != d:
        raise InvalidArgumentError(f"need {d} positional families, got {len(fams)}")
    shapes = {f.stack.shape for f in fams}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"positional families disagree in shape: {sorted(shapes)}")
    return [f.stack for f in fams]


def _n_m(stacks) -> tuple[int, int]:
    return stacks[0].shape[0], stacks[0].shape[1]


def _enumerate_sum(stacks, labels, distinct: bool) -> np.ndarray:
    """Sum of ordered products over index assignments to block labels.

    ``labels[k]`` is the block label of position ``k`` in first-occurrence
    order; each new label picks an index (distinct from earlier labels when
    ``distinct``), repeated labels reuse it.
    """
    n, m = _n_m(stacks)
    d = len(labels)
    total = np.zeros((m, m), dtype=complex)
    chosen: list[int] = []

    def rec(k: int, prefix: np.ndarray | None):
        nonlocal total
        if k == d:
            total = total + prefix
            return
        lab = labels[k]
        if lab < len(chosen):
            i = chosen[lab]
            rec(k + 1, stacks[k][i] if prefix is None else prefix @ stacks[k][i])
            return
        for i in range(n):
            if distinct and i in chosen:
                continue
            chosen.append(i)
            rec(k + 1, stacks[k][i] if prefix is None else prefix @ stacks[k][i])
            chosen.pop()

    rec(0, None)
    return total


def _hermitize_checked(raw: np.ndarray, mass: float) -> np.ndarray:
    drift = np.linalg.norm(raw - raw.conj().T)
    # cancellation can leave |raw| far below the size of the summed terms
    allowed = max(DRIFT_TOL * np.linalg.norm(raw), 1e3 * np.finfo(float).eps * mass)
    if drift > allowed:
        raise NumericFailureError(
            f"symmetrised sum is not Hermitian: drift {drift:.3e} exceeds {allowed:.3e}"
        )
    return as_hermitian(raw)


def _term_mass(stacks, d: int, count: int) -> float:
    big = max(float(np.max(np.linalg.norm(s, axis=(1, 2)))) for s in stacks)
    return count * big**d


def _check_d(n: int, d: int):
    if not 1 <= d <= n:
        raise InvalidArgumentError(f"need 1 <= d <= n, got d={d}, n={n}")


def p_d_bruteforce(fam: OperatorFamily, d: int, cap: int = TERM_CAP) -> np.ndarray:
    """``P_d`` by enumerating every injective length-``d`` index tuple."""
    stacks = _stacks(fam, d)
    n, _ = _n_m(stacks)
    _check_d(n, d)
    count = falling_factorial(n, d)
    if count > cap:
        raise ResourceLimitError(f"{count} injective tuples exceed the cap of {cap}")
    raw = _enumerate_sum(stacks, tuple(range(d)), distinct=True)
    if not isinstance(fam, OperatorFamily):
        return raw / count
    return _hermitize_checked(raw, _term_mass(stacks, d, count)) / count


def restricted_sum(fam: Families, sigma: SetPartition, cap: int = TERM_CAP) -> np.ndarray:
    """``<sigma>``: sum over tuples whose equality pattern is exactly ``sigma``.

    Needs ``num_blocks(sigma)`` distinct indices; when ``n`` is smaller the sum
    is empty and the zero matrix is returned.
    """
    stacks = _stacks(fam, sigma.d)
    n, m = _n_m(stacks)
    if sigma.num_blocks > n:
        return np.zeros((m, m), dtype=complex)
    count = falling_factorial(n, sigma.num_blocks)
    if count > cap:
        raise ResourceLimitError(f"{count} tuples exceed the cap of {cap}")
    return _enumerate_sum(stacks, sigma.rgs, distinct=True)


def _einsum_full_sum(stacks, sigma: SetPartition) -> np.ndarray:
    letters = string.ascii_letters
    d = sigma.d
    chain = letters[: d + 1]
    blocks = letters[d + 1 : d + 1 + sigma.num_blocks]
    sizes = sigma.block_sizes
    terms, operands = [], []
    for k in range(d):
        label = sigma.rgs[k]
        if sizes[label] == 1:
            # a singleton's index is summed on its own; contract it up front
            terms.append(chain[k] + chain[k + 1])
            operands.append(stacks[k].sum(axis=0))
        else:
            terms.append(blocks[label] + chain[k] + chain[k + 1])
            operands.append(stacks[k])
    subscripts = ",".join(terms) + "->" + chain[0] + chain[d]
    path = _contraction_path(subscripts, tuple(s.shape for s in operands))
    return np.einsum(subscripts, *operands, optimize=path)


@lru_cache(maxsize=1024)
def _contraction_path(subscripts: str, shapes: tuple) -> list:
    dummies = [np.empty(shape, dtype=complex) for shape in shapes]
    return np.einsum_path(subscripts, *dummies, optimize="greedy")[0]


def full_sum_direct(
    fam: Families, sigma: SetPartition, method: str = "einsum", cap: int = TERM_CAP
) -> np.ndarray:
    """``[sigma]`` as a sum over all maps blocks -> indices (no lattice sums).

    ``method="loop"`` enumerates the ``n ** num_blocks`` tuples one by one
    (subject to ``cap``); ``method="einsum"`` evaluates the same sum as one
    tensor contraction with a shared summation index per block.
    """
    stacks = _stacks(fam, sigma.d)
    n, _ = _n_m(stacks)
    if sigma.d > len(string.ascii_letters) // 2:
        raise InvalidArgumentError("d too large for the contraction path")
    if method == "einsum":
        return _einsum_full_sum(stacks, sigma)
    if method == "loop":
        count = n**sigma.num_blocks
        if count > cap:
            raise ResourceLimitError(f"{count} tuples exceed the cap of {cap}")
        return _enumerate_sum(stacks, sigma.rgs, distinct=False)
    raise InvalidArgumentError(f"unknown method {method!r}")


@dataclass(frozen=True)
class EmbeddedFactor:
    """How position ``k`` is lifted into ``C^n (x) ... (x) C^n (x) H``.

    ``slot`` is the tensor slot of the position's block (``None`` for a
    singleton). ``role`` fixes the matrix unit placed in that slot for index
    ``j``: ``e_{0j}`` at the block minimum, ``e_{jj}`` in its interior,
    ``e_{j0}`` at its maximum. Slot index 0 plays the role of the fixed
    return coordinate.
    """

    position: int
    role: str
    slot: int | None

    def matrix_unit(self, j: int, n: int) -> np.ndarray:
        e = np.zeros((n, n))
        if self.role == "min":
            e[0, j] = 1.0
        elif self.role == "mid":
            e[j, j] = 1.0
        elif self.role == "max":
            e[j, 0] = 1.0
        else:
            return np.eye(n)
        return e

    def factor_sum(self, stack: np.ndarray, num_slots: int) -> np.ndarray:
        """``sum_j Z_j`` as a dense matrix of size ``n**num_slots * m``."""
        n = stack.shape[0]
        if self.slot is None:
            return np.kron(np.eye(n**num_slots), stack.sum(axis=0))
        pre = np.eye(n**self.slot)
        post = np.eye(n ** (num_slots - self.slot - 1))
        total = 0
        for j in range(n):
            lifted = np.kron(np.kron(pre, self.matrix_unit(j, n)), post)
            total = total + np.kron(lifted, stack[j])
        return total


def embedding_factors(sigma: SetPartition) -> list[EmbeddedFactor]:
    """Per-position lifting data for ``sigma`` (positions are 1-indexed)."""
    slots = {}
    for b in sigma.blocks:
        if len(b) > 1:
            slots[b] = len(slots)
    out = []
    for k in range(1, sigma.d + 1):
        block = sigma.blocks[sigma.rgs[k - 1]]
        if len(block) == 1:
            out.append(EmbeddedFactor(k, "singleton", None))
        elif k == block[0]:
            out.append(EmbeddedFactor(k, "min", slots[block]))
        elif k == block[-1]:
            out.append(EmbeddedFactor(k, "max", slots[block]))
        else:
            out.append(EmbeddedFactor(k, "mid", slots[block]))
    return out


def full_sum_embedded(fam: Families, sigma: SetPartition, dim_cap: int = EMBED_DIM_CAP) -> np.ndarray:
    """``[sigma]`` as the top-left ``m x m`` corner of ``F_1 F_2 ... F_d``.

    ``F_k = sum_j Z_j^k`` are unconstrained sums of the lifted factors; the
    constraint "equal index within a block" is enforced by the matrix units,
    whose ordered product within a slot vanishes unless all indices agree.
    Only the first ``m`` rows of the running product are kept, which is the
    same corner at a fraction of the cost.
    """
    stacks = _stacks(fam, sigma.d)
    n, m = _n_m(stacks)
    factors = embedding_factors(sigma)
    num_slots = sum(1 for b in sigma.blocks if len(b) > 1)
    dim = n**num_slots * m
    if dim > dim_cap:
        raise ResourceLimitError(f"embedding dimension {dim} exceeds the cap of {dim_cap}")
    if num_slots == 0:
        out = np.eye(m, dtype=complex)
        for s in stacks:
            out = out @ s.sum(axis=0)
        return out
    rows = None
    for f, s in zip(factors, stacks):
        F = f.factor_sum(s, num_slots)
        rows = F[:m, :] if rows is None else rows @ F
    return rows[:, :m]


def p_d_via_mobius(
    fam: OperatorFamily, d: int, cache: MobiusCache | None = None, method: str = "einsum"
) -> np.ndarray:
    """``P_d = (n-d)!/n! * sum_nu mu(0, nu) [nu]`` over all partitions of {1..d}."""
    stacks = _stacks(fam, d)
    n, m = _n_m(stacks)
    _check_d(n, d)
    if cache is None:
        cache = MobiusCache(d)
    bottom = SetPartition.finest(d)
    raw = np.zeros((m, m), dtype=complex)
    mass = 0.0
    for nu in enumerate_partitions(d):
        term = mobius(bottom, nu, cache) * full_sum_direct(fam, nu, method=method)
        raw = raw + term
        mass += float(np.linalg.norm(term))
    count = falling_factorial(n, d)
    if not isinstance(fam, OperatorFamily):
        return raw / count
    return _hermitize_checked(raw, mass) / count


_CACHES: dict[int, MobiusCache] = {}


def average_product(fam: OperatorFamily, d: int) -> np.ndarray:
    """``P_d`` through the Möbius route, sharing one cache per ``d``."""
    cache = _CACHES.setdefault(d, MobiusCache(d))
    return p_d_via_mobius(fam, d, cache)
