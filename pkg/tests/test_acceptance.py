"""Acceptance suite: one test per criterion, each recorded for the end-of-run summary."""
import time

import numpy as np
import pytest

from christoffel.basis import basis_size, enumerate_basis, eval_basis
from christoffel.evaluate import ScoredDataset, aupr, detection_curve, pr_curve, sweep_degree
from christoffel.ingest import KDD_TABLE, kdd_prepare, matches_printed, synth_cloud
from christoffel.model import (christoffel_minimizer, criterion, fit_points, is_feasible, markov_mass_bound,
                               variational_certificate)
from christoffel.online import OnlineInverse

from conftest import ACCEPTANCE_RESULTS, DATA, kdd_raw_path, monomial_oracle, random_cloud

pytestmark = pytest.mark.acceptance

PAIRS = [(p, d) for p in (1, 2, 3, 4) for d in (1, 2, 3, 4, 5)]


def record(key, ok, detail):
    ACCEPTANCE_RESULTS[key] = ("PASS" if ok else "FAIL", detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
    assert ok, detail


def skip(key, reason):
    ACCEPTANCE_RESULTS[key] = ("SKIP", reason)
    print(f"[SKIP] criterion {key}: {reason}")
    pytest.skip(reason)


@pytest.fixture(scope="module")
def clouds():
    rng = np.random.default_rng(1)
    return [random_cloud(rng, p, 4 * basis_size(p, d)) for p, d in PAIRS]


@pytest.fixture(scope="module")
def models(clouds):
    return [fit_points(X, d) for X, (_, d) in zip(clouds, PAIRS)]


@pytest.fixture(scope="module")
def kdd_raw():
    return kdd_raw_path()


def test_1_mean_score_identity(clouds):
    t0 = time.perf_counter()
    worst = 0.0
    for X, (p, d) in zip(clouds, PAIRS):
        m = fit_points(X, d)
        s = basis_size(p, d)
        worst = max(worst, abs(m.score_batch(X).mean() - s) / s)
    elapsed = time.perf_counter() - t0
    record("1", worst <= 1e-8 and elapsed < 5.0,
           f"max relative error {worst:.2e} (tol 1e-8) over {len(PAIRS)} clouds in {elapsed:.2f}s (limit 5s)")


def test_2_lower_bound(clouds, models):
    rng = np.random.default_rng(2)
    per = 10_000 // len(models)
    lowest = np.inf
    for X, m in zip(clouds, models):
        center, spread = X.mean(axis=0), X.std(axis=0)
        probes = center + spread * rng.normal(scale=2.0, size=(per, m.p))
        lowest = min(lowest, m.score_batch(probes).min())
    record("2", lowest >= 1 - 1e-9, f"min Q over {per * len(models)} probes = {lowest:.12f} (need >= 1 - 1e-9)")


def test_3_mahalanobis(clouds, models):
    rng = np.random.default_rng(3)
    worst = 0.0
    for X, m, (p, d) in zip(clouds, models, PAIRS):
        if d != 1:
            continue
        # Schur complement of the raw-data moment matrix [[1, mu^T], [mu, E x x^T]]
        mu = X.mean(axis=0)
        S = X.T @ X / len(X) - np.outer(mu, mu)
        probes = mu + X.std(axis=0) * rng.normal(scale=2.0, size=(100, p))
        diff = probes - mu
        oracle = 1 + np.einsum("ni,ij,nj->n", diff, np.linalg.inv(S), diff)
        worst = max(worst, np.max(np.abs(m.score_batch(probes) - oracle) / oracle))
    record("3", worst <= 1e-9, f"max relative deviation {worst:.2e} (tol 1e-9), p = 1..4, d = 1")


def test_4_decomposition(clouds, models):
    rng = np.random.default_rng(4)
    worst_q, worst_i = 0.0, 0.0
    for X, m in zip(clouds, models):
        probes = np.vstack([X[:50], X.mean(axis=0) + X.std(axis=0) * rng.normal(size=(50, m.p))])
        V = monomial_oracle(m.precondition(probes), [e.exponents for e in m.basis.exponents])
        explicit = np.einsum("ni,ij,nj->n", V, np.linalg.inv(m.matrix), V)
        worst_q = max(worst_q, np.max(np.abs(m.score_batch(probes) - explicit) / explicit))
        worst_i = max(worst_i, np.linalg.norm(m.D @ m.matrix @ m.D.T - np.eye(m.size)))
    record("4", worst_q <= 1e-8 and worst_i <= 1e-8,
           f"max relative route deviation {worst_q:.2e} (tol 1e-8), max ||D M D^T - I||_F {worst_i:.2e} (tol 1e-8)")


def test_5_affine_invariance():
    rng = np.random.default_rng(5)
    X = synth_cloud("gaussians", seed=0).points
    base = fit_points(X, 4)
    probes = np.vstack([X, X.mean(axis=0) + 2 * X.std(axis=0) * rng.normal(size=(200, 2))])
    q = base.score_batch(probes)
    worst = 0.0
    maps = 0
    while maps < 10:
        A = rng.normal(size=(2, 2))
        if np.linalg.cond(A) > 1e3:
            continue
        b = rng.normal(scale=5.0, size=2)
        image = fit_points(X @ A.T + b, 4)
        worst = max(worst, np.max(np.abs(image.score_batch(probes @ A.T + b) - q) / q))
        maps += 1
    record("5", worst <= 1e-6, f"max relative deviation after refit {worst:.2e} (tol 1e-6) over {maps} maps")


def test_6_christoffel_variational(clouds, models):
    rng = np.random.default_rng(6)
    worst_interp = worst_value = 0.0
    worst_beat = -np.inf
    markov_ok = True
    for X, m in zip(clouds, models):
        probes = np.vstack([X[:25], X.mean(axis=0) + X.std(axis=0) * rng.normal(size=(25, m.p))])
        for xbar in probes:
            opt = christoffel_minimizer(m, xbar)
            v = eval_basis(m.basis, m.precondition(xbar))
            worst_interp = max(worst_interp, abs(v @ opt.coefficients - 1.0))
            attained = np.mean((eval_basis(m.basis, m.precondition(X)) @ opt.coefficients) ** 2)
            worst_value = max(worst_value, abs(attained - 1.0 / m.score(xbar)) * m.score(xbar))
            c = rng.normal(size=(100, m.size))
            c /= (c @ v)[:, None]
            competitors = np.einsum("ki,ij,kj->k", c, m.matrix, c)
            worst_beat = max(worst_beat, opt.value - competitors.min())
            mb = markov_mass_bound(m, xbar, X)
            markov_ok &= mb.bound <= mb.empirical_mass
    ok = worst_interp <= 1e-10 and worst_value <= 1e-8 and worst_beat <= 1e-9 and markov_ok
    record("6", ok, f"|P*(x)-1| {worst_interp:.1e} (tol 1e-10), value vs 1/Q rel {worst_value:.1e} (tol 1e-8), "
                    f"largest competitor gain {worst_beat:.1e} (tol 1e-9), Markov bound holds: {markov_ok}")


def test_7_certificate(models):
    rng = np.random.default_rng(7)
    worst_sum = worst_resid = 0.0
    worst_drop = -np.inf
    feasible = True
    for m in models:
        cert = variational_certificate(m)
        s = m.size
        target = 0.5 * s * cert.lam
        worst_sum = max(worst_sum, abs(cert.theta.sum()))
        feasible &= is_feasible(cert.q, cert.theta, tol=1e-10)
        # stationarity: (M q_a)_b = 0 for b < a and (M q_a)_a = lam_a
        R = m.matrix @ cert.q.T
        resid = np.triu(R, 1)
        resid[np.diag_indices(s)] = np.diag(R) - np.sqrt(cert.lam) / np.diag(m.D)
        worst_resid = max(worst_resid, np.abs(resid).max())
        scale = np.abs(cert.q).max()
        for step in np.geomspace(1e-4, 1e-1, 200):
            q = cert.q + step * scale * np.tril(rng.normal(size=(s, s)))
            t = rng.normal(size=s)
            theta = cert.theta + step * (t - t.mean())
            q[np.diag_indices(s)] = np.maximum(np.diag(q), np.exp(theta))
            worst_drop = max(worst_drop, target - criterion(m.matrix, q))
    ok = worst_sum <= 1e-10 and worst_resid <= 1e-7 and feasible and worst_drop <= 1e-9
    record("7", ok, f"|sum theta| {worst_sum:.1e} (tol 1e-10), stationarity residual {worst_resid:.1e} (tol 1e-7), "
                    f"feasible: {feasible}, largest drop below s*lam/2 {worst_drop:.1e} (tol 1e-9)")


def test_8_online_vs_batch():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(1000, 2)) @ np.array([[1.0, 0.3], [0.0, 0.7]]) + [0.5, -1.0]
    t0 = time.perf_counter()
    state = OnlineInverse(enumerate_basis(2, 4))
    for x in X:
        state.insert(x)
    elapsed = time.perf_counter() - t0
    probes = np.vstack([X[:100], X.mean(axis=0) + 2 * rng.normal(size=(100, 2))])
    batch = fit_points(X, 4).score_batch(probes)
    online = np.array([state.score_online(x) for x in probes])
    worst = np.max(np.abs(online - batch) / batch)
    record("8", worst <= 1e-6 and elapsed < 2.0,
           f"max relative deviation {worst:.2e} (tol 1e-6), 1000 inserts in {elapsed:.2f}s (limit 2s)")


def test_9_kdd_table(kdd_raw):
    if kdd_raw is None:
        # the bundled fixture runs the same pipeline in test_ingest
        skip("9", "raw KDD Cup 99 file not available (set CHRISTOFFEL_KDD_RAW); data not vendored")
    ds = kdd_prepare(kdd_raw)
    sizes = {k: v.n for k, v in ds.items()}
    sizes_ok = all(sizes.get(k) == n for k, (n, _) in KDD_TABLE.items())
    props_ok = all(k in ds and matches_printed(ds[k].attack_fraction, prop) for k, (_, prop) in KDD_TABLE.items())
    record("9", sizes_ok and props_ok, f"sizes {sizes}, attack proportions match: {props_ok}")


def test_10a_ring_background():
    ds = synth_cloud("ring", seed=0)
    q = fit_points(ds.points, 8).score_batch(ds.points)
    bg, ring = q[ds.labels].mean(), q[~ds.labels].mean()
    a = aupr(ScoredDataset(q, ds.labels))
    record("10a", bg > ring and a >= 0.9,
           f"mean score background {bg:.4g} vs ring {ring:.4g}, AUPR {a:.4f} (need >= 0.9)")


def test_10b_kdd_others_degree_one(kdd_raw):
    if kdd_raw is None:
        skip("10b", "raw KDD Cup 99 file not available (set CHRISTOFFEL_KDD_RAW); data not vendored")
    t0 = time.perf_counter()
    rows = sweep_degree(kdd_prepare(kdd_raw)["others"], range(1, 7))
    elapsed = time.perf_counter() - t0
    by_d = {r.d: r.aupr for r in rows}
    higher = [v for d, v in by_d.items() if d >= 2 and v is not None]
    ok = by_d[1] is not None and bool(higher) and by_d[1] < max(higher) and elapsed < 120
    record("10b", ok, f"AUPR by d {by_d}, {elapsed:.1f}s (limit 120s)")


def test_11_rank_only_evaluation():
    cases = []
    ring = synth_cloud("ring", seed=0)
    cases.append((fit_points(ring.points, 8).score_batch(ring.points), ring.labels))
    for ds in kdd_prepare(DATA / "kdd_fixture.csv").values():
        cases.append((fit_points(ds.points, 3).score_batch(ds.points), ds.labels))
    same = True
    for q, labels in cases:
        a, b = ScoredDataset(q, labels), ScoredDataset(np.log(q), labels)
        for f in (detection_curve, pr_curve):
            ca, cb = f(a), f(b)
            same &= np.array_equal(ca.x, cb.x) and np.array_equal(ca.y, cb.y)
        same &= aupr(a) == aupr(b)
    record("11", same, f"curves and AUPR bitwise identical under log on {len(cases)} scored datasets: {same}")
