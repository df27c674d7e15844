import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from spike import ConfigurationError, InvalidDataError
from spike import classifiers as clf
from spike.spectra import dual_covariance, eigen_dual, nr_eigenvalues
from spike.transform import modified_directions

from .conftest import spiked_sample


def brute_dbda(X1, X2, x0):
    n1, n2 = X1.shape[1], X2.shape[1]
    m1 = np.array([sum(row) / n1 for row in X1])
    m2 = np.array([sum(row) / n2 for row in X2])
    tr1 = sum(sum((X1[i, j] - m1[i]) ** 2 for j in range(n1)) for i in range(X1.shape[0])) / (n1 - 1)
    tr2 = sum(sum((X2[i, j] - m2[i]) ** 2 for j in range(n2)) for i in range(X2.shape[0])) / (n2 - 1)
    return float((x0 - (m1 + m2) / 2) @ (m2 - m1) - tr1 / (2 * n1) + tr2 / (2 * n2))


def literal_tdbda(X1, X2, x0, k1, k2):
    """The transformed statistic assembled term by term from explicit vectors."""
    parts = []
    for X, k in ((X1, k1), (X2, k2)):
        n = X.shape[1]
        spec = eigen_dual(dual_covariance(X))
        lam = nr_eigenvalues(spec, n)
        H, S = [], []
        for r in range(k):
            M = modified_directions(X, spec, lam, r)
            H.append(M.mean(axis=1))
            S.append(np.array([X[:, j] @ M[:, j] for j in range(n)]))
        parts.append((X.mean(axis=1), n, H, S))
    (m1, n1, H1, S1), (m2, n2, H2, S2) = parts
    w = brute_dbda(X1, X2, x0)
    resid2 = m2 - sum((S2[s].mean() * H2[s] for s in range(k2)), np.zeros_like(m2))
    resid1 = m1 - sum((S1[s].mean() * H1[s] for s in range(k1)), np.zeros_like(m1))
    for r in range(k1):
        w += (x0 @ H1[r]) * (S1[r].mean() - 0.5 * H1[r] @ resid2)
    for r in range(k2):
        w -= (x0 @ H2[r]) * (S2[r].mean() - 0.5 * H2[r] @ resid1)
    for sign, S, n, k in ((-1, S1, n1, k1), (1, S2, n2, k2)):
        for r in range(k):
            acc = sum(S[r][j] * S[r][jj] for j in range(n) for jj in range(j + 1, n))
            w += sign * acc / (n * (n - 1))
    return w


def _pair(rng, p=40, n1=10, n2=12, shift=1.0):
    X1, _ = spiked_sample(rng, p, n1, [150.0, 60.0])
    X2, _ = spiked_sample(rng, p, n2, [200.0, 30.0])
    X2 = X2 + shift
    return X1, X2


# -- DBDA --------------------------------------------------------------------------------


def test_dbda_closed_form():
    X1 = np.zeros((3, 4))
    X2 = np.zeros((3, 4))
    X2[0] = 1.0
    model = clf.fit(X1, X2, k1=0, k2=0)
    d = clf.dbda_score(model, np.zeros(3))
    assert d.score == pytest.approx(-0.5) and d.label == 1 and d.method == "dbda"


def test_dbda_matches_brute_force(rng):
    X1, X2 = rng.standard_normal((6, 5)), rng.standard_normal((6, 5)) + 0.5
    x0 = rng.standard_normal(6)
    model = clf.fit(X1, X2, k1=0, k2=0)
    assert clf.dbda_statistic(model, x0) == pytest.approx(brute_dbda(X1, X2, x0), rel=1e-10)


def test_dbda_antisymmetric(rng):
    X1, X2 = rng.standard_normal((8, 6)), rng.standard_normal((8, 7)) + 0.3
    x0 = rng.standard_normal(8)
    a = clf.dbda_score(clf.fit(X1, X2, 0, 0), x0)
    b = clf.dbda_score(clf.fit(X2, X1, 0, 0), x0)
    assert a.score == pytest.approx(-b.score)
    assert a.label != b.label


@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_dbda_translation_invariant(seed, c):
    rng = np.random.default_rng(seed)
    X1, X2 = rng.standard_normal((7, 5)), rng.standard_normal((7, 6))
    x0 = rng.standard_normal(7)
    shift = c * np.linspace(-1, 1, 7)[:, None]
    a = clf.dbda_statistic(clf.fit(X1, X2, 0, 0), x0)
    b = clf.dbda_statistic(clf.fit(X1 + shift, X2 + shift, 0, 0), x0 + shift[:, 0])
    assert b == pytest.approx(a, abs=1e-8 * max(1.0, abs(c)) ** 2)


def test_vectorized_scoring(rng):
    X1, X2 = _pair(rng)
    model = clf.fit(X1, X2, 2, 2)
    X0 = rng.standard_normal((40, 5))
    for f in (clf.dbda_statistic, clf.tdbda_statistic, clf.tdbda_naive_statistic,
              clf.dlda_statistic, clf.dqda_statistic):
        many = f(model, X0)
        one = [f(model, X0[:, j]) for j in range(5)]
        np.testing.assert_allclose(many, one, rtol=1e-12)


def test_dimension_mismatch(rng):
    model = clf.fit(rng.standard_normal((5, 4)), rng.standard_normal((5, 4)), 0, 0)
    with pytest.raises(InvalidDataError):
        clf.dbda_statistic(model, np.zeros(4))
    with pytest.raises(InvalidDataError):
        clf.fit(rng.standard_normal((5, 4)), rng.standard_normal((6, 4)), 0, 0)
    with pytest.raises(InvalidDataError):
        clf.fit(rng.standard_normal((5, 3)), rng.standard_normal((5, 4)), 0, 0)


def test_tie_goes_to_class_two():
    assert clf.decide(0.0, "dbda").label == 2
    assert clf.decide(-1e-300, "dbda").label == 1


# -- transformed rules -------------------------------------------------------------------


@pytest.mark.parametrize("k1,k2", [(2, 2), (1, 2), (0, 2), (2, 0), (3, 1)])
def test_tdbda_matches_literal_formula(k1, k2):
    rng = np.random.default_rng(100 + 10 * k1 + k2)
    X1, X2 = _pair(rng, p=30, n1=9, n2=11)
    x0 = rng.standard_normal(30) * 3
    model = clf.fit(X1, X2, k1, k2)
    assert model.k == (k1, k2)
    got = clf.tdbda_statistic(model, x0)
    want = literal_tdbda(X1, X2, x0, k1, k2)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


@given(st.integers(0, 2**31))
def test_k_zero_reduces_to_dbda(seed):
    rng = np.random.default_rng(seed)
    X1, X2 = _pair(rng, p=20, n1=6, n2=7)
    X0 = rng.standard_normal((20, 3))
    model = clf.fit(X1, X2, 0, 0)
    ref = clf.dbda_statistic(model, X0)
    for f in (clf.tdbda_statistic, clf.tdbda_naive_statistic):
        np.testing.assert_allclose(f(model, X0), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
    empty = np.zeros((20, 0))
    np.testing.assert_allclose(clf.oracle_statistic(empty, empty, X1, X2, X0), ref,
                               rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_constant_classes_delegate_to_dbda():
    X1 = np.zeros((6, 5))
    X2 = np.ones((6, 5))
    model = clf.fit(X1, X2)
    assert model.k == (0, 0)
    x0 = np.full(6, 0.2)
    assert clf.tdbda_statistic(model, x0) == clf.dbda_statistic(model, x0)


def test_degenerate_k_is_reduced_with_note(rng):
    v = rng.standard_normal(25)
    X1 = np.outer(v, rng.standard_normal(8))
    X2 = rng.standard_normal((25, 8))
    model = clf.fit(X1, X2, 3, 1)
    assert model.k == (1, 1)
    assert any("k reduced 3 -> 1" in n for n in model.notes)


def test_fit_is_deterministic(rng):
    X1, X2 = _pair(rng)
    x0 = rng.standard_normal(40)
    a = clf.tdbda_statistic(clf.fit(X1, X2), x0)
    b = clf.tdbda_statistic(clf.fit(X1.copy(), X2.copy()), x0)
    assert a == b


def test_fit_rejects_bad_k(rng):
    X1, X2 = _pair(rng)
    with pytest.raises(ConfigurationError):
        clf.fit(X1, X2, k1="best")
    with pytest.raises(ConfigurationError):
        clf.fit(X1, X2, k1=9)


def test_centering_uses_pooled_mean(rng):
    X1, X2 = _pair(rng, shift=4.0)
    model = clf.fit(X1, X2, 1, 1, center=True)
    pooled = np.hstack([X1, X2]).mean(axis=1)
    np.testing.assert_allclose(model.centering_offset, pooled)
    np.testing.assert_allclose(model.class1.mean, X1.mean(axis=1) - pooled, atol=1e-12)
    x0 = rng.standard_normal(40)
    # same statistic as fitting on pre-centred data and scoring the centred point
    manual = clf.fit(X1 - pooled[:, None], X2 - pooled[:, None], 1, 1)
    assert clf.tdbda_statistic(model, x0) == pytest.approx(
        clf.tdbda_statistic(manual, x0 - pooled), rel=1e-10)
    # DBDA is translation invariant, so centring leaves it alone
    plain = clf.fit(X1, X2, 1, 1)
    assert clf.dbda_statistic(model, x0) == pytest.approx(clf.dbda_statistic(plain, x0), rel=1e-9)


def test_auto_k_records_cdm(rng):
    X1, X2 = _pair(rng, p=300, n1=30, n2=30)
    X1[:2] *= 10
    model = clf.fit(X1, X2)
    assert model.class1.cdm is not None and model.class1.cdm.k_hat == model.class1.k
    assert model.class1.k_requested == "auto"


# -- naive rule ----------------------------------------------------------------------------


def test_naive_projector_idempotent(rng):
    X1, X2 = _pair(rng)
    model = clf.fit(X1, X2, 2, 2)
    H = model.class1.raw_dirs
    v = rng.standard_normal((40, 3))
    once = clf._project_out(H, v)
    np.testing.assert_allclose(clf._project_out(H, once), once, atol=1e-10)


def test_naive_matches_dense_projectors(rng):
    X1, X2 = _pair(rng, p=25, n1=8, n2=9)
    x0 = rng.standard_normal(25)
    model = clf.fit(X1, X2, 2, 1)
    A1 = np.eye(25) - model.class1.raw_dirs @ model.class1.raw_dirs.T
    A2 = np.eye(25) - model.class2.raw_dirs @ model.class2.raw_dirs.T
    m1, m2 = X1.mean(axis=1), X2.mean(axis=1)
    S1, S2 = np.cov(X1), np.cov(X2)
    want = (-(A1 @ (m1 - x0) + A2 @ (m2 - x0)) @ (A2 @ m2 - A1 @ m1) / 2
            - np.trace(A1 @ S1) / 16 + np.trace(A2 @ S2) / 18)
    assert clf.tdbda_naive_statistic(model, x0) == pytest.approx(want, rel=1e-9)


# -- oracle rule ---------------------------------------------------------------------------


def _orthonormal(rng, p, k):
    q, _ = np.linalg.qr(rng.standard_normal((p, k)))
    return q


def test_oracle_forms_agree():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = int(rng.integers(4, 65))
        n1, n2 = int(rng.integers(4, 12)), int(rng.integers(4, 12))
        k1, k2 = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        H1, H2 = _orthonormal(rng, p, k1), _orthonormal(rng, p, k2)
        X1 = rng.standard_normal((p, n1)) * 2
        X2 = rng.standard_normal((p, n2)) + 1
        x0 = rng.standard_normal(p)
        a = clf.oracle_statistic(H1, H2, X1, X2, x0)
        b = clf.oracle_statistic_projected(H1, H2, X1, X2, x0)
        c = clf.oracle_statistic_expanded(H1, H2, X1, X2, x0)
        scale = max(1.0, abs(a))
        assert abs(a - b) <= 1e-9 * scale and abs(a - c) <= 1e-9 * scale


def test_oracle_dense_projectors(rng):
    p = 12
    H1, H2 = _orthonormal(rng, p, 2), _orthonormal(rng, p, 1)
    X1, X2 = rng.standard_normal((p, 6)), rng.standard_normal((p, 7))
    x0 = rng.standard_normal(p)
    A1, A2 = np.eye(p) - H1 @ H1.T, np.eye(p) - H2 @ H2.T
    As = (A1 + A2) / 2
    Y1, Y2 = A1 @ X1, A2 @ X2
    want = (As @ x0) @ (Y2.mean(axis=1) - Y1.mean(axis=1))
    want += sum(Y1[:, j] @ Y1[:, jj] for j in range(6) for jj in range(j + 1, 6)) / 30
    want -= sum(Y2[:, j] @ Y2[:, jj] for j in range(7) for jj in range(j + 1, 7)) / 42
    assert clf.oracle_statistic(H1, H2, X1, X2, x0) == pytest.approx(want, rel=1e-10)


def test_oracle_translation_invariant_with_shared_projector(rng):
    H = _orthonormal(rng, 15, 2)
    X1, X2 = rng.standard_normal((15, 6)), rng.standard_normal((15, 8))
    x0 = rng.standard_normal(15)
    c = rng.standard_normal(15) * 10
    a = clf.oracle_statistic(H, H, X1, X2, x0)
    b = clf.oracle_statistic(H, H, X1 + c[:, None], X2 + c[:, None], x0 + c)
    assert b == pytest.approx(a, abs=1e-8 * max(1, abs(a)))


def test_oracle_score_uses_truth(rng):
    class Truth:
        H1 = _orthonormal(rng, 10, 1)
        H2 = _orthonormal(rng, 10, 2)

    X1, X2 = rng.standard_normal((10, 5)), rng.standard_normal((10, 5))
    x0 = rng.standard_normal(10)
    d = clf.tdbda_oracle_score(Truth, X1, X2, x0)
    assert d.method == "tdbda_oracle"
    assert d.score == pytest.approx(clf.oracle_statistic(Truth.H1, Truth.H2, X1, X2, x0))


# -- diagonal baselines --------------------------------------------------------------------


def test_diagonal_rules_tie():
    X = np.array([[0.0, 1.0, 2.0, 3.0], [1.0, 0.0, 1.0, 0.0]])
    model = clf.fit(X, X.copy(), 0, 0)
    assert clf.dlda_score(model, np.array([0.5, 0.5])).label == 2
    assert clf.dqda_score(model, np.array([0.5, 0.5])).score == 0.0


def test_diagonal_rules_one_dimension():
    X1 = np.array([[0.0, 1.0, 2.0, 3.0]])
    X2 = np.array([[4.0, 6.0, 8.0, 10.0]])
    model = clf.fit(X1, X2, 0, 0)
    x = 3.5
    v1, v2 = np.var(X1, ddof=1), np.var(X2, ddof=1)
    pooled = (3 * v1 + 3 * v2) / 6
    dlda = (x - 1.5) ** 2 / pooled - (x - 7.0) ** 2 / pooled
    dqda = ((x - 1.5) ** 2 / v1 + math.log(v1)) - ((x - 7.0) ** 2 / v2 + math.log(v2))
    assert clf.dlda_statistic(model, np.array([x])) == pytest.approx(dlda, rel=1e-12)
    assert clf.dqda_statistic(model, np.array([x])) == pytest.approx(dqda, rel=1e-12)


def test_dqda_matches_log_density(rng):
    X1, X2 = rng.standard_normal((5, 7)), rng.standard_normal((5, 9)) * 2 + 1
    x0 = rng.standard_normal(5)
    model = clf.fit(X1, X2, 0, 0)
    lp = []
    for X in (X1, X2):
        m, s = X.mean(axis=1), X.std(axis=1, ddof=1)
        lp.append(norm.logpdf(x0, loc=m, scale=s).sum())
    # minus twice the log-density difference, up to the shared log(2 pi) term
    assert clf.dqda_statistic(model, x0) == pytest.approx(-2 * (lp[0] - lp[1]), rel=1e-10)


def test_dlda_matches_log_density(rng):
    X1, X2 = rng.standard_normal((5, 7)), rng.standard_normal((5, 9)) + 1
    x0 = rng.standard_normal(5)
    model = clf.fit(X1, X2, 0, 0)
    pooled = (6 * X1.var(axis=1, ddof=1) + 8 * X2.var(axis=1, ddof=1)) / 14
    lp = [norm.logpdf(x0, loc=X.mean(axis=1), scale=np.sqrt(pooled)).sum() for X in (X1, X2)]
    assert clf.dlda_statistic(model, x0) == pytest.approx(-2 * (lp[0] - lp[1]), rel=1e-10)


def test_variance_floor(rng):
    X1, X2 = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
    X1[2] = 7.0
    X2[2] = 7.0
    model = clf.fit(X1, X2, 0, 0)
    counts = clf.variance_floor_counts(model)
    assert counts["dqda"] == (1, 1) and counts["dlda"] == 1
    assert np.isfinite(clf.dqda_statistic(model, rng.standard_normal(4)))
    assert np.isfinite(clf.dlda_statistic(model, rng.standard_normal(4)))


# -- memory --------------------------------------------------------------------------------


def test_no_quadratic_allocation():
    rng = np.random.default_rng(8)
    p, n = 100_000, 12
    X1 = rng.standard_normal((p, n))
    X2 = rng.standard_normal((p, n)) + 0.05
    X1[:3] *= 30
    x0 = rng.standard_normal(p)
    tracemalloc.start()
    try:
        model = clf.fit(X1, X2, 2, 2)
        for f in (clf.dbda_statistic, clf.tdbda_statistic, clf.tdbda_naive_statistic,
                  clf.dlda_statistic, clf.dqda_statistic):
            f(model, x0)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    # linear in p: a handful of p x n work arrays at most
    assert peak < 16 * 8 * p * n
