"""The inverse moment-matrix SOS polynomial Q(x) = v_d(x)^T M^{-1} v_d(x).

A fitted model keeps the Cholesky factor L of the moment matrix (M = L L^T)
and D = L^{-1}.  Row alpha of D holds the monomial coefficients of the
orthonormal polynomial P_alpha, so that D M D^T = I, M^{-1} = D^T D and

    Q(x) = ||D v_d(x)||^2 = sum_alpha P_alpha(x)^2.

M^{-1} is never formed for scoring.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .affine import AffineMap, check_invertible, standardizing_map
from .basis import BASIS_ORDER, MonomialBasis, enumerate_basis, eval_basis
from .moments import MomentMatrix, moment_matrix

FORMAT_VERSION = 1
PIVOT_RTOL = 1e-12
_SCORE_CHUNK = 1 << 14


class CholeskyFailure(np.linalg.LinAlgError):
    """The moment matrix is (numerically) singular."""

    def __init__(self, p: int, d: int, pivot: float, threshold: float):
        self.p, self.d, self.pivot, self.threshold = p, d, pivot, threshold
        super().__init__(
            f"moment matrix is numerically singular (Cholesky pivot {pivot:.3g} <= {threshold:.3g}): "
            f"the points lie (numerically) on an algebraic set defined by a polynomial of degree <= {d}, "
            f"so Q is undefined. Lower the degree d or set a positive ridge."
        )


@dataclass(frozen=True, eq=False)
class ChristoffelModel:
    basis: MonomialBasis
    moments: MomentMatrix
    matrix: np.ndarray  # the factored matrix, M + ridge * I
    L: np.ndarray
    D: np.ndarray
    precondition: AffineMap
    n: int
    ridge: float = 0.0
    min_pivot: float = field(default=math.nan)

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def gram(self) -> np.ndarray:
        """Gram matrix of Q in the monomial basis, M^{-1} = D^T D (positive definite)."""
        return self.D.T @ self.D

    def _prepare(self, x) -> tuple[np.ndarray, bool]:
        X = np.asarray(x, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ValueError(f"expected points of dimension {self.p}, got shape {np.shape(x)}")
        if not np.isfinite(X).all():
            raise ValueError("non-finite coordinate in input point")
        return self.precondition(X), single

    def _orthonormal(self, Xt: np.ndarray) -> np.ndarray:
        V = eval_basis(self.basis, Xt)
        P = np.zeros_like(V)
        D = self.D
        # column sweep keeps every row's arithmetic independent of the batch size
        for j in range(self.size):
            P[:, j:] += V[:, j:j + 1] * D[j:, j]
        return P

    def orthonormal_batch(self, points) -> np.ndarray:
        """(P_alpha(x))_alpha for each row of ``points``."""
        Xt, _ = self._prepare(points)
        return self._orthonormal(Xt) if Xt.shape[0] else np.empty((0, self.size))

    def orthonormal_eval(self, x) -> np.ndarray:
        Xt, single = self._prepare(x)
        P = self._orthonormal(Xt)
        return P[0] if single else P

    def score_batch(self, points) -> np.ndarray:
        """Q at each row of ``points``; O(s(d)^2) per point."""
        Xt, _ = self._prepare(points)
        out = np.empty(Xt.shape[0])
        for start in range(0, Xt.shape[0], _SCORE_CHUNK):
            P = self._orthonormal(Xt[start:start + _SCORE_CHUNK])
            q = np.zeros(P.shape[0])
            for j in range(self.size):
                q += P[:, j] * P[:, j]
            out[start:start + _SCORE_CHUNK] = q
        return out

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("score takes a single point; use score_batch for arrays")
        return float(self.score_batch(x.reshape(1, -1))[0])

    __call__ = score_batch

    def polynomial(self, coefficients, points) -> np.ndarray:
        """Evaluate a polynomial given by coefficients in the model's (preconditioned) monomial basis."""
        Xt, single = self._prepare(points)
        vals = eval_basis(self.basis, Xt) @ np.asarray(coefficients, dtype=np.float64)
        return vals[0] if single else vals

    def norm_sq(self, coefficients) -> float:
        """Integral of P^2 against the (regularized) empirical measure: q^T M q."""
        q = np.asarray(coefficients, dtype=np.float64)
        return float(q @ self.matrix @ q)

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        rows = [self.D[i, :i + 1] for i in range(self.size)]
        return {
            "format_version": FORMAT_VERSION,
            "basis_order": BASIS_ORDER,
            "p": self.p,
            "d": self.d,
            "n": int(self.n),
            "ridge": float(self.ridge),
            "precondition_map": self.precondition.to_dict(),
            "D": np.concatenate(rows).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ChristoffelModel":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
        if doc.get("basis_order") != BASIS_ORDER:
            raise ValueError(f"unsupported basis_order {doc.get('basis_order')!r}")
        p, d = int(doc["p"]), int(doc["d"])
        basis = enumerate_basis(p, d)
        s = basis.size
        flat = np.asarray(doc["D"], dtype=np.float64)
        if flat.size != s * (s + 1) // 2:
            raise ValueError(f"D has {flat.size} entries, expected {s * (s + 1) // 2}")
        D = np.zeros((s, s))
        D[np.tril_indices(s)] = flat
        L = linalg.solve_triangular(D, np.eye(s), lower=True)
        matrix = L @ L.T
        ridge = float(doc["ridge"])
        pre = AffineMap.from_dict(doc["precondition_map"], p)
        moments = MomentMatrix(basis, matrix - ridge * np.eye(s), int(doc["n"]), pre)
        for a in (D, L, matrix):
            a.flags.writeable = False
        return cls(basis, moments, matrix, L, D, pre, int(doc["n"]), ridge, float(np.min(np.diag(L)) ** 2))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ChristoffelModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit(moments: MomentMatrix, ridge: float = 0.0) -> ChristoffelModel:
    """Factor M + ridge * I and derive the orthonormal-polynomial matrix D."""
    if not ridge >= 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    s = moments.size
    Mr = np.array(moments.matrix, dtype=np.float64)
    if ridge:
        Mr[np.diag_indices(s)] += ridge
    threshold = PIVOT_RTOL * np.trace(Mr) / s
    if ridge == 0 and moments.n < s:
        # rank M <= n < s(d) exactly; rounding can hide the zero pivot
        raise CholeskyFailure(moments.p, moments.d, 0.0, threshold)
    try:
        L = linalg.cholesky(Mr, lower=True)
    except np.linalg.LinAlgError:
        raise CholeskyFailure(moments.p, moments.d, 0.0, threshold) from None
    pivots = np.diag(L) ** 2
    min_pivot = float(pivots.min())
    if ridge == 0 and min_pivot <= threshold:
        raise CholeskyFailure(moments.p, moments.d, min_pivot, threshold)
    D = linalg.solve_triangular(L, np.eye(s), lower=True)
    for a in (Mr, L, D):
        a.flags.writeable = False
    return ChristoffelModel(moments.basis, moments, Mr, L, D, moments.precondition,
                            moments.n, float(ridge), min_pivot)


def fit_points(points, degree: int, ridge: float = 0.0, precondition: bool = True) -> ChristoffelModel:
    """Fit Q_{mu,d} for the empirical measure of ``points`` (shape ``(n, p)``).

    With ``precondition`` the points are centered and scaled per coordinate
    before their moments are taken.  Q itself is unchanged by any invertible
    affine map, so this only improves conditioning.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"points must be a non-empty (n, p) array, got shape {X.shape}")
    pre = standardizing_map(X) if precondition else None
    return fit(moment_matrix(X, degree, pre), ridge=ridge)


def mahalanobis_view(model: ChristoffelModel) -> tuple[np.ndarray, np.ndarray]:
    """Mean and inverse covariance such that Q(x) = 1 + (x - mean)^T V^{-1} (x - mean).

    Only meaningful for d = 1, where M = [[1, m^T], [m, S]] and the Schur
    complement V = S - m m^T is the covariance.  Both are returned in raw
    (un-preconditioned) coordinates.
    """
    if model.d != 1:
        raise ValueError(f"the Mahalanobis form exists only for d = 1, model has d = {model.d}")
    M = model.matrix
    m = M[1:, 0] / M[0, 0]
    V = M[1:, 1:] / M[0, 0] - np.outer(m, m)
    Vinv = np.linalg.inv(V) / M[0, 0]
    A, b = model.precondition.A, model.precondition.b
    mean = np.linalg.solve(A, m - b)
    inv_cov = A.T @ Vinv @ A
    return mean, (inv_cov + inv_cov.T) / 2


@dataclass(frozen=True)
class ChristoffelMinimizer:
    """argmin of the mean of P^2 over polynomials of degree <= d with P(xbar) = 1.

    ``coefficients`` are in the model's monomial basis (preconditioned
    coordinates); evaluate with :meth:`ChristoffelModel.polynomial`.
    """

    coefficients: np.ndarray
    weights: np.ndarray  # a_alpha = P_alpha(xbar) / Q(xbar)
    value: float  # 1 / Q(xbar)
    score: float


def christoffel_minimizer(model: ChristoffelModel, xbar) -> ChristoffelMinimizer:
    P = model.orthonormal_eval(np.asarray(xbar, dtype=np.float64))
    q = model.score(xbar)
    a = P / q
    return ChristoffelMinimizer(model.D.T @ a, a, 1.0 / q, q)


@dataclass(frozen=True)
class MarkovBound:
    bound: float
    empirical_mass: float


def markov_mass_bound(model: ChristoffelModel, xbar, points) -> MarkovBound:
    """Markov lower bound 1 - 1/Q(xbar) on the mass of {P*^2 <= 1}, and that mass on ``points``.

    The bound holds for the measure the model was fitted on, so ``points``
    should be its training points.
    """
    opt = christoffel_minimizer(model, xbar)
    vals = model.polynomial(opt.coefficients, np.asarray(points, dtype=np.float64))
    mass = float(np.mean(vals * vals <= 1.0)) if vals.size else math.nan
    return MarkovBound(max(0.0, 1.0 - opt.value), mass)


@dataclass(frozen=True)
class VariationalCertificate:
    """Closed-form optimal primal/dual point of the constrained SOS problem.

    ``q`` holds q*_alpha = sqrt(lam) p_alpha as rows.  ``objective`` is the
    criterion 1/2 * sum_alpha q_alpha^T M q_alpha at q*, which equals
    1/2 * s(d) * lam.
    """

    lam: float
    lam_alpha: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    objective: float
    theta_sum: float
    leading_gap: float
    stationarity_residual: float


def criterion(matrix: np.ndarray, q: np.ndarray) -> float:
    """1/2 * sum_alpha q_alpha^T M q_alpha for coefficient rows q_alpha."""
    return 0.5 * float(np.einsum("ai,ij,aj->", q, matrix, q))


def is_feasible(q: np.ndarray, theta: np.ndarray, tol: float = 1e-12) -> bool:
    """Lower-triangular pattern, q_aa >= exp(theta_a), sum(theta) = 0."""
    return bool(
        not np.triu(q, 1).any()
        and np.all(np.diag(q) >= np.exp(theta) * (1 - tol))
        and abs(theta.sum()) <= tol * max(1.0, np.abs(theta).sum())
    )


def variational_certificate(model: ChristoffelModel) -> VariationalCertificate:
    s = model.size
    diag = np.diag(model.D)
    log_diag = np.log(diag)
    log_lam = -2.0 * log_diag.sum() / s
    lam = math.exp(log_lam)
    root = math.exp(log_lam / 2)
    lam_alpha = root / diag
    theta = log_lam / 2 + log_diag
    q = root * model.D

    # column alpha of R is M q*_alpha; rows beta > alpha are the free multipliers
    R = model.matrix @ q.T
    resid = np.triu(R, 1)
    resid[np.diag_indices(s)] = np.diag(R) - lam_alpha
    stationarity = float(np.max(np.linalg.norm(resid, axis=0)))
    gap = float(np.max(np.abs(np.diag(q) - np.exp(theta)) / np.exp(theta)))
    return VariationalCertificate(
        lam=lam,
        lam_alpha=lam_alpha,
        theta=theta,
        q=q,
        objective=0.5 * s * lam,
        theta_sum=float(theta.sum()),
        leading_gap=gap,
        stationarity_residual=stationarity,
    )


def affine_pushforward_check(model: ChristoffelModel, points, A, b, test_points,
                             precondition: Optional[bool] = None) -> float:
    """Refit on the image points A x_i + b and compare scores at mapped test points.

    Returns max |Q(x) - Q~(A x + b)| / Q(x) over ``test_points``.  ``points``
    must be the points ``model`` was fitted on.
    """
    A = check_invertible(A)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != model.p or A.shape[0] != model.p:
        raise ValueError("affine map dimension does not match the model")
    if precondition is None:
        precondition = not model.precondition.is_identity()
    X = np.asarray(points, dtype=np.float64)
    T = np.asarray(test_points, dtype=np.float64)
    image = fit_points(X @ A.T + b, model.d, ridge=model.ridge, precondition=precondition)
    q = model.score_batch(T)
    q_img = image.score_batch(T @ A.T + b)
    return float(np.max(np.abs(q - q_img) / q)) if q.size else 0.0


@dataclass(frozen=True)
class LevelSetGrid:
    """Q at the centers of an nx-by-ny grid; ``values[j, i]`` sits at (xs[i], ys[j])."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    threshold: int


def levelset_grid(model: ChristoffelModel, bbox: Sequence[float], resolution: Sequence[int]) -> LevelSetGrid:
    if model.p != 2:
        raise ValueError(f"level-set grids are 2-D only, model has p = {model.p}")
    x0, y0, x1, y1 = (float(v) for v in bbox)
    nx, ny = (int(r) for r in resolution)
    if not (x1 > x0 and y1 > y0) or not all(map(math.isfinite, (x0, y0, x1, y1))):
        raise ValueError(f"degenerate bounding box {tuple(bbox)}")
    if nx < 1 or ny < 1:
        raise ValueError(f"resolution must be positive, got {tuple(resolution)}")
    xs = x0 + (np.arange(nx) + 0.5) * ((x1 - x0) / nx)
    ys = y0 + (np.arange(ny) + 0.5) * ((y1 - y0) / ny)
    gx, gy = np.meshgrid(xs, ys)
    vals = model.score_batch(np.column_stack([gx.ravel(), gy.ravel()])).reshape(ny, nx)
    return LevelSetGrid(xs, ys, vals, model.size)
