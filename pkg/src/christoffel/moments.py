"""Empirical moment matrices accumulated in one streaming pass.

The accumulator keeps the power sums ``sum_i x_i^gamma`` for every monomial
gamma of degree <= 2d.  The moment matrix entry (alpha, beta) is then read
off as the power sum of alpha + beta, which makes the matrix exactly
symmetric and exactly Hankel-structured, and it equals
``sum_i v_d(x_i) v_d(x_i)^T`` entry by entry.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .affine import AffineMap
from .basis import MonomialBasis, enumerate_basis, eval_basis

CHUNK_ROWS = 1 << 15


def _hankel_index(basis: MonomialBasis, basis2: MonomialBasis) -> np.ndarray:
    E = basis.as_array()
    idx = np.empty((basis.size, basis.size), dtype=np.intp)
    for i in range(basis.size):
        for j in range(i + 1):
            idx[i, j] = idx[j, i] = basis2.position(tuple(E[i] + E[j]))
    idx.flags.writeable = False
    return idx


_HANKEL_CACHE: dict = {}


def hankel_index(basis: MonomialBasis) -> np.ndarray:
    """Matrix of positions of alpha + beta in the degree-2d basis."""
    key = (basis.p, basis.d)
    if key not in _HANKEL_CACHE:
        _HANKEL_CACHE[key] = _hankel_index(basis, enumerate_basis(basis.p, 2 * basis.d))
    return _HANKEL_CACHE[key]


def _two_sum(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Neumaier: s + err == a + b exactly
    s = a + b
    big_a = np.abs(a) >= np.abs(b)
    err = np.where(big_a, (a - s) + b, (b - s) + a)
    return s, err


def _check_points(X: np.ndarray, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"expected points of dimension {p}, got shape {np.shape(X)}")
    if not np.isfinite(X).all():
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise ValueError(f"non-finite coordinate in point {bad}: {X[bad].tolist()}")
    return X


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Normalized moment matrix M_d(mu) of an empirical measure.

    ``precondition`` is the affine map that was applied to the raw points
    before their moments were taken.
    """

    basis: MonomialBasis
    matrix: np.ndarray
    n: int
    precondition: AffineMap

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def size(self) -> int:
        return self.basis.size


class MomentAccumulator:
    """Mergeable partial sums of v_d(x) v_d(x)^T plus the point count."""

    def __init__(self, basis: MonomialBasis, precondition: Optional[AffineMap] = None):
        self.basis = basis
        self.basis2 = enumerate_basis(basis.p, 2 * basis.d)
        if precondition is not None and precondition.dim != basis.p:
            raise ValueError("precondition map dimension does not match the basis")
        self.precondition = precondition if precondition is not None else AffineMap.identity(basis.p)
        self._sums = np.zeros(self.basis2.size)
        self._comp = np.zeros(self.basis2.size)
        self.n = 0

    def _absorb(self, partial: np.ndarray, count: int) -> None:
        self._sums, err = _two_sum(self._sums, partial)
        self._comp += err
        self.n += count

    def accumulate(self, x) -> "MomentAccumulator":
        """Absorb one point (shape ``(p,)``) or a batch (shape ``(n, p)``)."""
        X = _check_points(x, self.basis.p)
        X = self.precondition(X)
        for start in range(0, X.shape[0], CHUNK_ROWS):
            chunk = X[start:start + CHUNK_ROWS]
            # rows along the contiguous axis so numpy uses pairwise summation
            V = np.ascontiguousarray(eval_basis(self.basis2, chunk).T)
            self._absorb(V.sum(axis=1), chunk.shape[0])
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """New accumulator holding the union of both point sets."""
        if other.basis != self.basis:
            raise ValueError(
                f"cannot merge accumulators over different bases (p={self.basis.p}, d={self.basis.d}) "
                f"and (p={other.basis.p}, d={other.basis.d})"
            )
        if not (np.array_equal(self.precondition.A, other.precondition.A)
                and np.array_equal(self.precondition.b, other.precondition.b)):
            raise ValueError("cannot merge accumulators with different precondition maps")
        out = MomentAccumulator(self.basis, self.precondition)
        out._sums, err = _two_sum(self._sums, other._sums)
        out._comp = (self._comp + other._comp) + err
        out.n = self.n + other.n
        return out

    def copy(self) -> "MomentAccumulator":
        out = MomentAccumulator(self.basis, self.precondition)
        out._sums = self._sums.copy()
        out._comp = self._comp.copy()
        out.n = self.n
        return out

    @property
    def power_sums(self) -> np.ndarray:
        """sum_i x_i^gamma for gamma in the degree-2d basis."""
        return self._sums + self._comp

    @property
    def sum(self) -> np.ndarray:
        """Unnormalized sum_i v_d(x_i) v_d(x_i)^T (fresh array)."""
        return self.power_sums[hankel_index(self.basis)]

    def finalize(self) -> MomentMatrix:
        if self.n == 0:
            raise ValueError("moment matrix of an empty point set is undefined")
        M = self.power_sums[hankel_index(self.basis)] / self.n
        M.flags.writeable = False
        return MomentMatrix(self.basis, M, self.n, self.precondition)


def moment_matrix(points, d: int, precondition: Optional[AffineMap] = None) -> MomentMatrix:
    """Moment matrix of the empirical measure of ``points`` (shape ``(n, p)``)."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"points must be an (n, p) array, got shape {X.shape}")
    acc = MomentAccumulator(enumerate_basis(X.shape[1], d), precondition)
    return acc.accumulate(X).finalize()
