"""Multi-index arithmetic and enumeration.

A multi-index is a fixed-length tuple of non-negative integers. It indexes
both mixed partial derivatives (``d^|r| f / dx^r``) and mixed moments
(``E[X^r]``). Enumeration uses graded lexicographic order: indices are sorted
by total order first and, within one total order, lexicographically with the
first entry largest, e.g. for two variables::

    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...

The position of the zero index is therefore always 0.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

INT64_MAX = 2**63 - 1
MAX_ORDER = 10


class MultiIndex(tuple):
    """Immutable vector of non-negative integers."""

    __slots__ = ()

    def __new__(cls, entries: Iterable[int] = ()):
        values = tuple(int(e) for e in entries)
        if any(e < 0 for e in values):
            raise ValueError(f"multi-index entries must be >= 0, got {values}")
        return super().__new__(cls, values)

    @classmethod
    def zero(cls, dim: int) -> "MultiIndex":
        return cls((0,) * dim)

    @classmethod
    def unit(cls, dim: int, k: int) -> "MultiIndex":
        entries = [0] * dim
        entries[k] = 1
        return cls(entries)

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        """Parse the colon-joined form, e.g. ``"2:0:1:0"``."""
        text = text.strip()
        if not text:
            raise ValueError("empty multi-index string")
        return cls(int(part) for part in text.split(":"))

    @property
    def dim(self) -> int:
        return len(self)

    @property
    def order(self) -> int:
        return sum(self)

    def __add__(self, other):  # entrywise, not concatenation
        _check_same_dim(self, other)
        return MultiIndex(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        _check_same_dim(self, other)
        return MultiIndex(a - b for a, b in zip(self, other))

    def dominated_by(self, other: Sequence[int]) -> bool:
        """Entrywise ``self <= other``."""
        _check_same_dim(self, other)
        return all(a <= b for a, b in zip(self, other))

    def __str__(self) -> str:
        return ":".join(str(e) for e in self)

    def __repr__(self) -> str:
        return f"MultiIndex({tuple(self)})"


def _check_same_dim(a: Sequence[int], b: Sequence[int]) -> None:
    if len(a) != len(b):
        raise ValueError(f"multi-index dimension mismatch: {len(a)} vs {len(b)}")


def total_order(r: Sequence[int]) -> int:
    """Return ``|r|``, the sum of the entries."""
    return sum(r)


def _checked(value: int) -> int:
    if value > INT64_MAX:
        raise OverflowError(f"combinatorial factor {value} exceeds the int64 range")
    return value


def factorial(r: Sequence[int]) -> int:
    """Return ``r! = prod_k r_k!`` (with ``0! = 1``)."""
    out = 1
    for e in r:
        out = _checked(out * math.factorial(e))
    return out


def binomial(r: Sequence[int], r_prime: Sequence[int]) -> int:
    """Return the entrywise binomial product ``prod_k C(r_k, r'_k)``.

    Raises
    ------
    ValueError
        If the lengths differ or ``r'`` exceeds ``r`` in some entry.
    """
    _check_same_dim(r, r_prime)
    out = 1
    for a, b in zip(r, r_prime):
        if b > a:
            raise ValueError(f"{tuple(r_prime)} is not <= {tuple(r)} entrywise")
        out = _checked(out * math.comb(a, b))
    return out


def _compositions(total: int, dim: int) -> Iterator[tuple[int, ...]]:
    # lexicographic with the first entry largest
    if dim == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, dim - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def enumerate_up_to(dim: int, max_order: int) -> tuple[MultiIndex, ...]:
    """All multi-indices of length ``dim`` with ``|r| <= max_order``.

    The result is in graded lexicographic order and has
    ``C(max_order + dim, dim)`` elements.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    out = []
    for order in range(max_order + 1):
        out.extend(MultiIndex(c) for c in _compositions(order, dim))
    return tuple(out)


def enumerate_exact(dim: int, order: int) -> tuple[MultiIndex, ...]:
    """Multi-indices with ``|r| == order``, in graded lexicographic order."""
    return tuple(MultiIndex(c) for c in _compositions(order, dim))


@lru_cache(maxsize=None)
def index_map(dim: int, max_order: int) -> dict[MultiIndex, int]:
    """Position of each multi-index within ``enumerate_up_to(dim, max_order)``."""
    return {r: i for i, r in enumerate(enumerate_up_to(dim, max_order))}


def lower_set(r: Sequence[int]) -> Iterator[MultiIndex]:
    """Iterate over every ``r'`` with ``0 <= r' <= r`` entrywise."""
    ranges = [range(e + 1) for e in r]

    def rec(prefix: tuple[int, ...], depth: int):
        if depth == len(ranges):
            yield MultiIndex(prefix)
            return
        for value in ranges[depth]:
            yield from rec(prefix + (value,), depth + 1)

    yield from rec((), 0)


def monomial(x: Sequence[float], r: Sequence[int]) -> float:
    """Evaluate ``x^r = prod_k x_k^{r_k}``."""
    _check_same_dim(x, r)
    out = 1.0
    for value, power in zip(x, r):
        if power:
            out *= value**power
    return out
