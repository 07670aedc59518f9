"""Subshifts of finite type: admissible words, periodic cycles, primitivity.

Symbols are 1-based, ``1..k``.  A word ``(i_0, ..., i_m)`` has cylinder-length
``m``, i.e. one less than its number of symbols.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, ModelError, PrimitivityError, ResourceCapError

DEFAULT_WORD_CAP = 10_000_000

Word = tuple  # tuple[int, ...]


@dataclass(frozen=True, eq=False)
class SubshiftSpec:
    """Transition matrix ``A`` over ``k`` symbols, optionally with a primitivity exponent."""

    A: np.ndarray
    M0: Optional[int] = None
    k: int = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=np.int64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise ModelError(f"transition matrix must be square and non-empty, got shape {A.shape}")
        if not np.isin(A, (0, 1)).all():
            raise ModelError("transition matrix entries must be 0 or 1")
        dead_rows = np.flatnonzero(A.sum(axis=1) == 0)
        dead_cols = np.flatnonzero(A.sum(axis=0) == 0)
        if dead_rows.size or dead_cols.size:
            raise ModelError(
                f"dead symbols: rows {(dead_rows + 1).tolist()}, columns {(dead_cols + 1).tolist()}"
            )
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "k", A.shape[0])
        if self.M0 is not None:
            if self.M0 < 1:
                raise ModelError("M0 must be a positive integer")
            if not (np.linalg.matrix_power(A, self.M0) > 0).all():
                raise ModelError(f"A^{self.M0} is not entrywise positive")

    def allowed(self, i: int, j: int) -> bool:
        return bool(self.A[i - 1, j - 1])

    def __repr__(self):
        return f"SubshiftSpec(A={self.A.tolist()}, M0={self.M0})"


def full_shift(k: int) -> SubshiftSpec:
    return SubshiftSpec(np.ones((k, k), dtype=np.int64), M0=1)


def golden_mean_shift() -> SubshiftSpec:
    return SubshiftSpec(np.array([[1, 1], [1, 0]]), M0=2)


def _check_symbols(spec: SubshiftSpec, w: Sequence[int]) -> None:
    for idx, s in enumerate(w):
        if not (1 <= int(s) <= spec.k):
            raise InputError(f"symbol {s!r} at index {idx} is outside 1..{spec.k}")


def is_admissible(spec: SubshiftSpec, w: Sequence[int]) -> bool:
    _check_symbols(spec, w)
    return all(spec.A[a - 1, b - 1] for a, b in zip(w[:-1], w[1:]))


def count_words(spec: SubshiftSpec, m: int) -> int:
    """Number of admissible words of cylinder-length ``m``: the entry sum of ``A^m``."""
    if m < 0:
        raise InputError("cylinder-length must be >= 0")
    return int(np.linalg.matrix_power(spec.A.astype(object), m).sum())


def word_array(spec: SubshiftSpec, m: int, cap: int = DEFAULT_WORD_CAP) -> np.ndarray:
    """All admissible words of cylinder-length ``m`` as rows of an int array, lexicographic."""
    n = count_words(spec, m)
    if n > cap:
        raise ResourceCapError(f"{n} words of cylinder-length {m} exceed the cap {cap}", n)
    words = np.arange(1, spec.k + 1, dtype=np.int64)[:, None]
    A = spec.A.astype(bool)
    for _ in range(m):
        last = words[:, -1] - 1
        # rows repeated k times, j varying fastest; the mask then keeps lexicographic order
        rep = np.repeat(words, spec.k, axis=0)
        nxt = np.tile(np.arange(1, spec.k + 1, dtype=np.int64), words.shape[0])
        keep = A[np.repeat(last, spec.k), nxt - 1]
        words = np.column_stack([rep[keep], nxt[keep]])
    return words


def enumerate_words(spec: SubshiftSpec, m: int, cap: int = DEFAULT_WORD_CAP) -> list[Word]:
    return [tuple(int(s) for s in row) for row in word_array(spec, m, cap)]


@dataclass(frozen=True)
class CycleClass:
    """A shift-equivalence class of period-``n`` symbol cycles.

    ``word`` is the lexicographically least rotation (``n`` symbols, the
    wraparound transition implied).  ``least_period`` divides ``n``.
    """

    word: Word
    least_period: int

    @property
    def n(self) -> int:
        return len(self.word)

    @property
    def primitive(self) -> bool:
        return self.least_period == self.n

    @property
    def points(self) -> list[Word]:
        p = self.least_period
        return [self.word[r:] + self.word[:r] for r in range(p)]

    @property
    def primitive_word(self) -> Word:
        return self.word[: self.least_period]


def _least_rotation(row: tuple) -> tuple:
    n = len(row)
    return min(row[r:] + row[:r] for r in range(n))


def _least_period(row: tuple) -> int:
    n = len(row)
    for d in range(1, n + 1):
        if n % d == 0 and row[d:] + row[:d] == row:
            return d
    return n


def periodic_cycles(spec: SubshiftSpec, n: int, cap: int = DEFAULT_WORD_CAP) -> list[CycleClass]:
    """Period-``n`` points of the shift grouped into rotation classes, sorted by canonical word."""
    if n < 1:
        raise InputError("period must be >= 1")
    words = word_array(spec, n - 1, cap)
    closing = spec.A[words[:, -1] - 1, words[:, 0] - 1].astype(bool)
    words = words[closing]
    if words.shape[0] == 0:
        return []
    k = spec.k
    if n * np.log2(max(k, 2)) < 62:
        base = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
        w0 = words - 1
        codes = np.stack([np.roll(w0, -r, axis=1) @ base for r in range(n)], axis=1)
        canon = codes.min(axis=1)
        uniq, first = np.unique(canon, return_index=True)
        out = []
        for code, idx in zip(uniq, first):
            row = words[idx]
            r = int(np.argmin(codes[idx]))
            word = tuple(int(s) for s in np.roll(row, -r))
            out.append(CycleClass(word, _least_period(word)))
        return out
    seen = {}
    for row in words:
        canon = _least_rotation(tuple(int(s) for s in row))
        seen.setdefault(canon, None)
    return [CycleClass(w, _least_period(w)) for w in sorted(seen)]


def periodic_points(spec: SubshiftSpec, n: int, cap: int = DEFAULT_WORD_CAP) -> list[Word]:
    """All period-``n`` symbol cycles (``n`` symbols each); their number is ``trace(A^n)``."""
    return [p for c in periodic_cycles(spec, n, cap) for p in c.points]


def primitive_cycle_count(spec: SubshiftSpec, n: int) -> int:
    """Number of primitive period-``n`` orbits, by Moebius inversion of ``trace(A^d)``."""
    total = 0
    for d in range(1, n + 1):
        if n % d == 0:
            total += _moebius(n // d) * int(np.trace(np.linalg.matrix_power(spec.A.astype(object), d)))
    return total // n


def _moebius(n: int) -> int:
    result, p = 1, 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            result = -result
        p += 1
    return -result if n > 1 else result


def _strongly_connected(A: np.ndarray) -> bool:
    k = A.shape[0]
    reach = (A > 0) | np.eye(k, dtype=bool)
    for _ in range(k):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all())


def verify_primitivity(spec: SubshiftSpec) -> int:
    """Least ``M0`` with ``A^M0`` entrywise positive.

    Raises PrimitivityError with ``kind="reducible"`` when the transition graph
    is not strongly connected and ``kind="periodic"`` when it is irreducible
    but has period > 1.
    """
    A = spec.A.astype(bool)
    if not _strongly_connected(spec.A):
        raise PrimitivityError("transition matrix is reducible", "reducible")
    k = spec.k
    P = A.copy()
    for M in range(1, k * k + 1):
        if P.all():
            return M
        P = (P.astype(np.int64) @ A.astype(np.int64)) > 0
    raise PrimitivityError("transition matrix is irreducible but periodic", "periodic")
