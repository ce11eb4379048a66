"""Streaming maintenance of the inverse moment sum by rank-1 (Sherman-Morrison) updates.

The state holds S_inv = (sum_i v_d(x_i) v_d(x_i)^T + ridge0 * I)^{-1}, the
inverse of the *unnormalized* sum, so the normalization 1/n never has to be
folded into the matrix; scores are n * v^T S_inv v.  The inverse is rebuilt
from the exact raw moment sums every ``cadence`` inserts to bound the
rounding drift of repeated updates.  While the tiny seed ridge still
dominates, the updates cancel at the scale 1/ridge0, so the first rebuilds
come earlier, at n = s(d), 2 s(d), 4 s(d), ... until the gap reaches the
cadence.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import linalg

from .affine import AffineMap
from .basis import MonomialBasis, eval_basis
from .model import ChristoffelModel, fit
from .moments import MomentAccumulator, MomentMatrix

DEFAULT_RIDGE0 = 1e-10
DEFAULT_CADENCE = 512


class OnlineInverse:
    def __init__(self, basis: MonomialBasis, ridge0: float = DEFAULT_RIDGE0,
                 cadence: int = DEFAULT_CADENCE, precondition: Optional[AffineMap] = None):
        if not ridge0 > 0:
            raise ValueError(f"ridge0 must be positive (the empty moment sum is singular), got {ridge0}")
        if cadence < 1:
            raise ValueError(f"cadence must be >= 1, got {cadence}")
        self.basis = basis
        self.ridge0 = float(ridge0)
        self.cadence = int(cadence)
        self._acc = MomentAccumulator(basis, precondition)
        self.S_inv = np.eye(basis.size) / self.ridge0
        self.n = 0
        self.rebuild_counter = 0
        self._next_rebuild = min(self.cadence, basis.size)

    @property
    def precondition(self) -> AffineMap:
        return self._acc.precondition

    def _vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.basis.p:
            raise ValueError(f"expected a point of dimension {self.basis.p}, got {x.size}")
        if not np.isfinite(x).all():
            raise ValueError(f"non-finite coordinate in {x.tolist()}")
        return eval_basis(self.basis, self.precondition(x))

    def insert(self, x) -> "OnlineInverse":
        v = self._vector(x)
        self._acc.accumulate(x)
        Sv = self.S_inv @ v
        self.S_inv -= np.outer(Sv, Sv) / (1.0 + v @ Sv)
        self.S_inv = (self.S_inv + self.S_inv.T) / 2
        self.n += 1
        self.rebuild_counter += 1
        if self.rebuild_counter >= self.cadence or self.n >= self._next_rebuild:
            self.refactor()
        return self

    def refactor(self) -> None:
        """Recompute S_inv from the accumulated moment sums."""
        S = self._acc.sum
        S[np.diag_indices_from(S)] += self.ridge0
        S_inv = linalg.cho_solve(linalg.cho_factor(S, lower=True), np.eye(self.basis.size))
        self.S_inv = (S_inv + S_inv.T) / 2
        self.rebuild_counter = 0
        self._next_rebuild = self.n + min(self.cadence, max(self.n, self.basis.size))

    def score_online(self, x) -> float:
        if self.n == 0:
            raise ValueError("no points absorbed yet: the score is undefined")
        v = self._vector(x)
        return float(self.n * (v @ self.S_inv @ v))

    def snapshot(self) -> "OnlineInverse":
        """Independent copy; further inserts on either side do not affect the other."""
        out = object.__new__(OnlineInverse)
        out.basis, out.ridge0, out.cadence = self.basis, self.ridge0, self.cadence
        out._acc = self._acc.copy()
        out.S_inv = self.S_inv.copy()
        out.n, out.rebuild_counter, out._next_rebuild = self.n, self.rebuild_counter, self._next_rebuild
        return out

    def to_model(self) -> ChristoffelModel:
        """Batch model of the absorbed points with the seed ridge carried over (ridge0 / n)."""
        mm = self._acc.finalize()
        return fit(MomentMatrix(mm.basis, mm.matrix, mm.n, mm.precondition), ridge=self.ridge0 / self.n)
