"""Set partitions of {1..d}, the refinement order and its Möbius function.

Partitions are stored as restricted-growth strings (RGS): ``rgs[k]`` is the
label of the block holding element ``k + 1``, blocks are labelled in order of
their smallest element, so two equal partitions have equal strings.

The order follows the convention ``sigma <= pi`` iff every block of ``sigma``
lies inside a block of ``pi``; the all-singletons partition is the bottom
element and the one-block partition the top.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Mapping

import numpy as np

from .errors import InvalidArgumentError, OrderViolationError

MAX_D = 12


def _canonical(labels) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    out = []
    for lab in labels:
        if lab not in seen:
            seen[lab] = len(seen)
        out.append(seen[lab])
    return tuple(out)


def is_rgs(rgs) -> bool:
    top = -1
    for lab in rgs:
        if not isinstance(lab, (int, np.integer)) or lab < 0 or lab > top + 1:
            return False
        top = max(top, lab)
    return len(rgs) > 0


@dataclass(frozen=True)
class SetPartition:
    """A partition of {1..d} in restricted-growth form."""

    rgs: tuple[int, ...]

    def __post_init__(self):
        rgs = tuple(int(r) for r in self.rgs)
        if not is_rgs(rgs):
            raise InvalidArgumentError(f"not a restricted-growth string: {self.rgs!r}")
        object.__setattr__(self, "rgs", rgs)

    @classmethod
    def from_labels(cls, labels) -> "SetPartition":
        """Build from arbitrary per-element labels (equal label = same block)."""
        return cls(_canonical(labels))

    @classmethod
    def from_blocks(cls, blocks, d: int | None = None) -> "SetPartition":
        """Build from 1-indexed blocks, e.g. ``[[1, 3], [2]]``."""
        blocks = [sorted(int(k) for k in b) for b in blocks]
        elems = sorted(k for b in blocks for k in b)
        if d is None:
            d = len(elems)
        if elems != list(range(1, d + 1)):
            raise InvalidArgumentError(f"blocks {blocks} do not partition 1..{d}")
        labels = [0] * d
        for lab, b in enumerate(blocks):
            for k in b:
                labels[k - 1] = lab
        return cls.from_labels(labels)

    @classmethod
    def parse(cls, text: str) -> "SetPartition":
        """Parse the compact form ``"1,2|3"``."""
        try:
            blocks = [[int(tok) for tok in part.split(",")] for part in text.strip().split("|")]
        except ValueError as exc:
            raise InvalidArgumentError(f"cannot parse partition {text!r}") from exc
        return cls.from_blocks(blocks)

    @classmethod
    def finest(cls, d: int) -> "SetPartition":
        return cls(tuple(range(d)))

    @classmethod
    def coarsest(cls, d: int) -> "SetPartition":
        return cls((0,) * d)

    def __str__(self) -> str:
        return "|".join(",".join(str(k) for k in b) for b in self.blocks)

    def __lt__(self, other: "SetPartition") -> bool:
        # lexicographic on rgs; used for deterministic sorting only
        return (len(self.rgs), self.rgs) < (len(other.rgs), other.rgs)

    @property
    def d(self) -> int:
        return len(self.rgs)

    @cached_property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        """1-indexed blocks ordered by their minimum element."""
        out: list[list[int]] = [[] for _ in range(self.num_blocks)]
        for k, lab in enumerate(self.rgs):
            out[lab].append(k + 1)
        return tuple(tuple(b) for b in out)

    @property
    def num_blocks(self) -> int:
        return max(self.rgs) + 1

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def size_multiplicities(self) -> tuple[int, ...]:
        """``r[i - 1]`` is the number of blocks of size ``i``."""
        r = [0] * self.d
        for s in self.block_sizes:
            r[s - 1] += 1
        return tuple(r)

    @property
    def singletons(self) -> tuple[int, ...]:
        """1-indexed positions forming a block on their own."""
        return tuple(b[0] for b in self.blocks if len(b) == 1)

    def is_finest(self) -> bool:
        return self.num_blocks == self.d

    def is_coarsest(self) -> bool:
        return self.num_blocks == 1

    def reversed(self) -> "SetPartition":
        """The mirror image k -> d + 1 - k."""
        return SetPartition.from_labels(self.rgs[::-1])


def _rgs_iter(d: int) -> Iterator[tuple[int, ...]]:
    rgs = [0] * d

    def rec(k: int, top: int):
        if k == d:
            yield tuple(rgs)
            return
        for lab in range(top + 2):
            rgs[k] = lab
            yield from rec(k + 1, max(top, lab))

    if d == 0:
        return
    yield from rec(1, 0)


def enumerate_partitions(d: int, cap: int = MAX_D) -> list[SetPartition]:
    """All partitions of {1..d}, lexicographic by RGS (finest partition last)."""
    if not isinstance(d, (int, np.integer)) or d < 1 or d > cap:
        raise InvalidArgumentError(f"d must be an integer in [1, {cap}], got {d!r}")
    return [SetPartition(r) for r in _rgs_iter(int(d))]


def bell_number(d: int) -> int:
    """Bell numbers via the Bell triangle."""
    row = [1]
    for _ in range(d):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def _check_same_d(a: SetPartition, b: SetPartition):
    if a.d != b.d:
        raise InvalidArgumentError(f"partitions of different ground sets: {a.d} vs {b.d}")


def refines_leq(sigma: SetPartition, pi: SetPartition) -> bool:
    """True iff every block of ``sigma`` is contained in a block of ``pi``."""
    _check_same_d(sigma, pi)
    image: dict[int, int] = {}
    for s, p in zip(sigma.rgs, pi.rgs):
        if image.setdefault(s, p) != p:
            return False
    return True


def refinements(sigma: SetPartition) -> list[SetPartition]:
    """Every tau with tau <= sigma (sigma included)."""
    per_block = [list(_rgs_iter(len(b))) for b in sigma.blocks]
    out = []
    stack: list[tuple[int, ...]] = []

    def rec(i: int):
        if i == len(per_block):
            labels = [0] * sigma.d
            for bi, (block, sub) in enumerate(zip(sigma.blocks, stack)):
                for k, lab in zip(block, sub):
                    labels[k - 1] = (bi, lab)
            out.append(SetPartition.from_labels(labels))
            return
        for sub in per_block[i]:
            stack.append(sub)
            rec(i + 1)
            stack.pop()

    rec(0)
    return out


def coarsenings(sigma: SetPartition) -> list[SetPartition]:
    """Every tau with sigma <= tau (sigma included)."""
    return [
        SetPartition.from_labels([merge[lab] for lab in sigma.rgs])
        for merge in _rgs_iter(sigma.num_blocks)
    ]


def mobius_zero_to(pi: SetPartition) -> int:
    """Closed form of mu(0, pi) as a product over block sizes."""
    value = 1
    for size, r in enumerate(pi.size_multiplicities, start=1):
        value *= ((-1) ** (size - 1) * math.factorial(size - 1)) ** r
    return value


class MobiusCache:
    """Memoised Möbius values mu(pi, sigma) on the lattice of a fixed d.

    Values come from the defining recursion ``mu(s, s) = 1``,
    ``mu(p, s) = -sum_{p <= t < s} mu(p, t)``, one row ``mu(p, .)`` at a time.
    """

    def __init__(self, d: int):
        if d < 1 or d > MAX_D:
            raise InvalidArgumentError(f"d must be in [1, {MAX_D}], got {d}")
        self.d = d
        self.table: dict[tuple[tuple[int, ...], tuple[int, ...]], int] = {}
        self._rows: set[tuple[int, ...]] = set()

    def _fill_row(self, pi: SetPartition):
        ups = sorted(coarsenings(pi), key=lambda t: (-t.num_blocks, t.rgs))
        row = {pi.rgs: 1}
        for sigma in ups[1:]:
            row[sigma.rgs] = -sum(
                row[tau.rgs] for tau in refinements(sigma) if tau.rgs in row and tau != sigma
            )
        for s, v in row.items():
            self.table[(pi.rgs, s)] = v
        self._rows.add(pi.rgs)

    def row(self, pi: SetPartition) -> dict[tuple[int, ...], int]:
        """All values mu(pi, sigma), keyed by the RGS of sigma."""
        if pi.rgs not in self._rows:
            self._fill_row(pi)
        return {s: v for (p, s), v in self.table.items() if p == pi.rgs}

    def __len__(self):
        return len(self.table)


def mobius(pi: SetPartition, sigma: SetPartition, cache: MobiusCache | None = None) -> int:
    _check_same_d(pi, sigma)
    if not refines_leq(pi, sigma):
        raise OrderViolationError(f"{pi} is not below {sigma}")
    if cache is None:
        cache = MobiusCache(pi.d)
    elif cache.d != pi.d:
        raise InvalidArgumentError(f"cache is for d={cache.d}, partitions have d={pi.d}")
    key = (pi.rgs, sigma.rgs)
    if key not in cache.table:
        cache._fill_row(pi)
    return cache.table[key]


def _total(terms, exact: bool):
    if exact:
        total = 0
        for t in terms:
            total = total + t
        return total
    stacked = np.stack([np.asarray(t, dtype=float) for t in terms])
    flat = stacked.reshape(len(stacked), -1)
    return np.array([math.fsum(col) for col in flat.T]).reshape(stacked.shape[1:])


def mobius_inversion_check(
    d: int,
    phi: Mapping[SetPartition, object] | Callable[[SetPartition], object],
    tol: float = 1e-12,
    cache: MobiusCache | None = None,
) -> bool:
    """Sum ``phi`` up and down the lattice, invert with mu, compare with ``phi``.

    Integer-valued ``phi`` is checked exactly; float values are accumulated
    with ``math.fsum`` and compared to ``tol * max(1, |psi|_max)``.
    """
    parts = enumerate_partitions(d)
    if cache is None:
        cache = MobiusCache(d)
    get = phi.__getitem__ if isinstance(phi, Mapping) else phi
    values = {p: get(p) for p in parts}

    exact = all(np.asarray(v).dtype.kind in "iub" for v in values.values())
    if exact:
        values = {p: np.asarray(v).astype(object) if np.ndim(v) else int(v) for p, v in values.items()}

    downs = {s: [t for t in refinements(s)] for s in parts}
    ups = {s: [t for t in coarsenings(s)] for s in parts}

    psi_down = {s: _total([values[t] for t in downs[s]], exact) for s in parts}
    psi_up = {s: _total([values[t] for t in ups[s]], exact) for s in parts}

    scale = max(
        [1.0]
        + [float(np.max(np.abs(np.asarray(v, dtype=float)))) for v in psi_down.values()]
        + [float(np.max(np.abs(np.asarray(v, dtype=float)))) for v in psi_up.values()]
    )
    for s in parts:
        rec_i = _total([mobius(t, s, cache) * psi_down[t] for t in downs[s]], exact)
        rec_ii = _total([mobius(s, t, cache) * psi_up[t] for t in ups[s]], exact)
        for rec in (rec_i, rec_ii):
            if exact:
                if not np.all(np.asarray(rec) == np.asarray(values[s])):
                    return False
            elif np.max(np.abs(np.asarray(rec) - np.asarray(values[s], dtype=float))) > tol * scale:
                return False
    return True
