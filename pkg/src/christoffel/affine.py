"""Affine maps x -> A x + b, used for preconditioning and invariance checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class AffineMap:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64, ndmin=2)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if A.shape != (b.size, b.size):
            raise ValueError(f"affine map needs a square A matching b, got {A.shape} and {b.shape}")
        A.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.size

    @classmethod
    def identity(cls, p: int) -> "AffineMap":
        return cls(np.eye(p), np.zeros(p))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.A, np.eye(self.dim)) and not self.b.any())

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.is_identity():
            return x
        # explicit column sweep: results do not depend on the batch size
        out = np.broadcast_to(self.b, x.shape).copy()
        for k in range(self.dim):
            out += x[..., k:k + 1] * self.A[:, k]
        return out

    def inverse(self) -> "AffineMap":
        Ainv = np.linalg.inv(self.A)
        return AffineMap(Ainv, -Ainv @ self.b)

    def to_dict(self) -> dict:
        return {"A": self.A.reshape(-1).tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, doc: dict, p: int) -> "AffineMap":
        return cls(np.array(doc["A"], dtype=np.float64).reshape(p, p), np.array(doc["b"], dtype=np.float64))


def standardizing_map(points) -> AffineMap:
    """Whitening map x -> C^{-1} (x - mean) with C C^T the empirical covariance.

    Falls back to per-coordinate scaling (constant coordinates keep unit
    scale) when the covariance is not positive definite.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("standardization needs a non-empty (n, p) array")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / X.shape[0]
    try:
        C = np.linalg.cholesky(cov)
        A = np.linalg.solve(C, np.eye(X.shape[1]))
        if not np.isfinite(A).all():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        std = np.sqrt(np.diag(cov)).copy()
        std[~(std > 0)] = 1.0
        A = np.diag(1.0 / std)
    return AffineMap(A, -A @ mean)


def check_invertible(A, tol: float = 1e-8) -> np.ndarray:
    """Reject (numerically) singular linear parts; scale-free test on |det| over row norms."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    norms = np.linalg.norm(A, axis=1)
    if not np.all(norms > 0):
        raise np.linalg.LinAlgError("affine map is singular (zero row)")
    scaled = abs(np.linalg.det(A / norms[:, None]))
    if not scaled >= tol:
        raise np.linalg.LinAlgError(f"affine map is singular: scaled |det A| = {scaled:.3g} < {tol:g}")
    return A
