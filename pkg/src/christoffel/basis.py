"""Monomial basis of p-variate polynomials of degree <= d in graded lexicographic order.

Within a degree block, exponents are ordered lexicographically with the
larger power of the first variable ranked earlier, so for p=2, d=3 the order
is 1, X1, X2, X1^2, X1X2, X2^2, X1^3, X1^2X2, X1X2^2, X2^3.  Every matrix or
vector in this package is indexed in this order (``graded_lex_v1``).
"""
from __future__ import annotations

import functools
import math
import sys
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

BASIS_ORDER = "graded_lex_v1"


class CapacityError(OverflowError):
    """The basis (or its s(d) x s(d) matrices) would not fit in addressable memory."""


@functools.total_ordering
@dataclass(frozen=True)
class Exponent:
    """Multi-index alpha in N^p with its cached total degree."""

    exponents: tuple[int, ...]
    degree: int = field(init=False, compare=False)

    def __post_init__(self):
        exps = tuple(int(a) for a in self.exponents)
        if any(a < 0 for a in exps):
            raise ValueError(f"negative exponent in {exps}")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "degree", sum(exps))

    def __lt__(self, other: "Exponent") -> bool:
        return compare_gl(self, other) < 0

    def __add__(self, other: "Exponent") -> "Exponent":
        if len(self.exponents) != len(other.exponents):
            raise ValueError("exponents of different dimension")
        return Exponent(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self) -> Iterator[int]:
        return iter(self.exponents)

    def __repr__(self) -> str:
        return f"Exponent{self.exponents}"


def _as_exponent(a) -> Exponent:
    return a if isinstance(a, Exponent) else Exponent(tuple(a))


def gl_key(a) -> tuple:
    """Sort key realising the graded lexicographic order."""
    a = _as_exponent(a)
    return (a.degree, tuple(-e for e in a.exponents))


def compare_gl(a, b) -> int:
    """Three-way comparison under graded lex order: -1, 0 or 1."""
    a, b = _as_exponent(a), _as_exponent(b)
    if len(a) != len(b):
        raise ValueError(f"cannot compare exponents of dimension {len(a)} and {len(b)}")
    ka, kb = gl_key(a), gl_key(b)
    return (ka > kb) - (ka < kb)


def basis_size(p: int, d: int) -> int:
    """s(d) = C(p + d, d)."""
    return math.comb(p + d, d)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # larger leading component first
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    """Ordered exponent list for all monomials of degree <= d in p variables.

    ``parent`` and ``factor`` describe how each monomial is obtained from an
    earlier one by a single multiplication: ``v[i] = v[parent[i]] * x[factor[i]]``.
    """

    p: int
    d: int
    exponents: tuple[Exponent, ...]
    parent: np.ndarray
    factor: np.ndarray
    index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.exponents)

    def __len__(self) -> int:
        return len(self.exponents)

    def __eq__(self, other) -> bool:
        return isinstance(other, MonomialBasis) and (self.p, self.d) == (other.p, other.d)

    def __hash__(self) -> int:
        return hash((self.p, self.d))

    def position(self, alpha) -> int:
        """Index of ``alpha`` in the basis (KeyError if absent)."""
        return self.index[tuple(alpha)]

    def degrees(self) -> np.ndarray:
        return np.array([e.degree for e in self.exponents], dtype=np.int64)

    def as_array(self) -> np.ndarray:
        return np.array([e.exponents for e in self.exponents], dtype=np.int64).reshape(self.size, self.p)

    def eval(self, x) -> np.ndarray:
        return eval_basis(self, x)


@functools.lru_cache(maxsize=64)
def enumerate_basis(p: int, d: int) -> MonomialBasis:
    """All exponents of degree <= d in p variables, sorted by graded lex order."""
    if int(p) != p or p < 1:
        raise ValueError(f"dimension p must be a positive integer, got {p!r}")
    if int(d) != d or d < 0:
        raise ValueError(f"degree d must be a nonnegative integer, got {d!r}")
    p, d = int(p), int(d)
    s = basis_size(p, d)
    if s * s * 8 > sys.maxsize:
        raise CapacityError(
            f"s(d) = C({p}+{d}, {d}) = {s}: an s(d) x s(d) float64 matrix exceeds addressable memory"
        )

    exps: list[Exponent] = []
    for k in range(d + 1):
        exps.extend(Exponent(c) for c in _compositions(k, p))
    index = {e.exponents: i for i, e in enumerate(exps)}

    parent = np.zeros(s, dtype=np.intp)
    factor = np.zeros(s, dtype=np.intp)
    for i, e in enumerate(exps[1:], start=1):
        j = next(k for k, a in enumerate(e.exponents) if a > 0)
        lower = list(e.exponents)
        lower[j] -= 1
        parent[i] = index[tuple(lower)]
        factor[i] = j
    parent.flags.writeable = False
    factor.flags.writeable = False
    return MonomialBasis(p, d, tuple(exps), parent, factor, index)


def eval_basis(basis: MonomialBasis, x) -> np.ndarray:
    """Evaluate v_d at one point (shape ``(p,)``) or a batch (shape ``(n, p)``).

    Each monomial is one multiplication away from an earlier one, so no
    ``pow`` calls are made.  Entry 0 is always exactly 1.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != basis.p:
        raise ValueError(f"expected points of dimension {basis.p}, got shape {x.shape}")
    n = X.shape[0]
    V = np.empty((n, basis.size), dtype=np.float64)
    V[:, 0] = 1.0
    parent, factor = basis.parent, basis.factor
    for i in range(1, basis.size):
        np.multiply(V[:, parent[i]], X[:, factor[i]], out=V[:, i])
    return V[0] if single else V


def sort_gl(exponents: Sequence) -> list[Exponent]:
    return sorted((_as_exponent(a) for a in exponents), key=gl_key)
