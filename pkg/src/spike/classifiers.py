"""Two-class discriminant rules for high-dimension, low-sample-size data.

The distance-based family (DBDA and the transformed variants) classifies
``x0`` into class 1 when its statistic is negative and into class 2
otherwise. Projections ``I - sum_r h_r h_r^T`` are applied through the stored
p x k direction matrices; no p x p matrix is ever built.

Every scoring function accepts either a single p-vector or a p x m matrix of
observations stored as columns.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from ._validation import ConfigurationError, InvalidDataError, check_sample
from .spectra import (
    CdmSpectrum,
    NrSpectrum,
    cdm_spectrum,
    dual_covariance,
    eigen_dual,
    n_well_defined,
    nr_directions,
    nr_eigenvalues,
    select_k,
)
from .transform import PcScores, score_training

logger = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "ClassFit",
    "TrainedModel",
    "Decision",
    "fit",
    "decide",
    "dbda_statistic",
    "tdbda_statistic",
    "tdbda_naive_statistic",
    "dlda_statistic",
    "dqda_statistic",
    "variance_floor_counts",
    "oracle_statistic",
    "oracle_statistic_projected",
    "oracle_statistic_expanded",
    "dbda_score",
    "tdbda_score",
    "tdbda_naive_score",
    "tdbda_oracle_score",
    "dlda_score",
    "dqda_score",
]

METHODS = ("dbda", "tdbda", "tdbda_naive", "tdbda_oracle", "dlda", "dqda")

VARIANCE_FLOOR_RTOL = 1e-12

KSpec = Union[int, str]


@dataclass(frozen=True)
class ClassFit:
    """Everything retained from one training class."""

    mean: np.ndarray
    n: int
    trace_s: float
    variances: np.ndarray
    k: int
    nr: NrSpectrum
    scores: PcScores
    k_requested: KSpec = 0
    cdm: Optional[CdmSpectrum] = None

    @property
    def nr_dirs(self):
        return self.nr.nr_dirs[:, : self.k]

    @property
    def raw_dirs(self):
        return self.nr.raw_dirs[:, : self.k]


@dataclass(frozen=True)
class TrainedModel:
    """Immutable fitted state for all implemented rules.

    ``centering_offset`` is subtracted from every observation before scoring
    (it is zero unless the model was fitted with ``center=True``).
    """

    class1: ClassFit
    class2: ClassFit
    centering_offset: np.ndarray
    notes: tuple = ()
    # x0-independent pieces of the transformed statistic
    _tdbda_coef1: np.ndarray = field(default=None, repr=False)
    _tdbda_coef2: np.ndarray = field(default=None, repr=False)
    _tdbda_const: float = field(default=0.0, repr=False)

    @property
    def p(self):
        return self.class1.mean.shape[0]

    @property
    def k(self):
        return (self.class1.k, self.class2.k)

    @property
    def classes(self):
        return (self.class1, self.class2)


@dataclass(frozen=True)
class Decision:
    score: float
    label: int
    method: str


def _resolve_k(k, n, cdm, gamma):
    if isinstance(k, str):
        if k != "auto":
            raise ConfigurationError(f"k must be an integer or 'auto', got {k!r}")
        return select_k(cdm, n, gamma)
    k = int(k)
    if not 0 <= k <= n - 2:
        raise ConfigurationError(f"k={k} outside [0, {n - 2}] for a class with n={n}")
    return k


def _fit_class(X, k, gamma, cdm_permutation, label, notes):
    p, n = X.shape
    sd = dual_covariance(X)
    spec = eigen_dual(sd)
    nr_eig = nr_eigenvalues(spec, n)
    cdm = None
    if isinstance(k, str):
        cdm = cdm_spectrum(X, permutation=cdm_permutation)
    k_eff = _resolve_k(k, n, cdm, gamma)
    ok = n_well_defined(spec, nr_eig, k_eff)
    if ok < k_eff:
        msg = f"class {label}: noise-reduced eigenvalue {ok} is degenerate, k reduced {k_eff} -> {ok}"
        logger.info(msg)
        notes.append(msg)
        k_eff = ok
    nr = nr_directions(X, spec, nr_eig, k_eff)
    scores = score_training(X, spec, nr_eig, k_eff, sd=sd)
    mean = X.mean(axis=1)
    variances = np.einsum("ij,ij->i", X - mean[:, None], X - mean[:, None]) / (n - 1)
    if cdm is not None:
        cdm = replace(cdm, k_hat=k_eff)
    return ClassFit(
        mean=mean,
        n=n,
        trace_s=spec.trace_sd,
        variances=variances,
        k=k_eff,
        nr=nr,
        scores=scores,
        k_requested=k,
        cdm=cdm,
    )


def _pair_sum(scores):
    # sum_r sum_{j<j'} s_rj s_rj' / (n (n - 1))
    n = scores.shape[1]
    if scores.shape[0] == 0:
        return 0.0
    tot = scores.sum(axis=1)
    sq = (scores * scores).sum(axis=1)
    return float(np.sum((tot * tot - sq) / 2.0) / (n * (n - 1)))


def fit(train1, train2, k1: KSpec = "auto", k2: KSpec = "auto", center=False, gamma=None,
        cdm_permutations=(None, None)):
    """Fit every rule on two training samples.

    Parameters
    ----------
    train1, train2 : array-like of shape (p, n_i)
        Columns are observations; each class needs ``n_i >= 4``.
    k1, k2 : int or "auto"
        Number of leading eigen-directions to project out per class. ``"auto"``
        selects it with :func:`spike.spectra.select_k`.
    center : bool
        Subtract the pooled mean of all training columns from the training
        data and from every scored observation.
    gamma : callable, optional
        Penalty function for automatic selection.
    cdm_permutations : pair of index arrays or None
        Column orders used for the cross-data-matrix split of each class.

    Notes
    -----
    When a requested component has a zero noise-reduced eigenvalue, ``k`` is
    reduced and a message is appended to ``TrainedModel.notes``.
    """
    X1 = check_sample(train1, min_n=4, name="train1")
    X2 = check_sample(train2, min_n=4, name="train2")
    if X1.shape[0] != X2.shape[0]:
        raise InvalidDataError(f"classes have different dimensions {X1.shape[0]} and {X2.shape[0]}")
    p = X1.shape[0]
    if center:
        offset = (X1.sum(axis=1) + X2.sum(axis=1)) / (X1.shape[1] + X2.shape[1])
        X1 = X1 - offset[:, None]
        X2 = X2 - offset[:, None]
    else:
        offset = np.zeros(p)

    notes = []
    c1 = _fit_class(X1, k1, gamma, cdm_permutations[0], 1, notes)
    c2 = _fit_class(X2, k2, gamma, cdm_permutations[1], 2, notes)

    H1, H2 = c1.nr_dirs, c2.nr_dirs
    m1, m2 = c1.scores.train_means, c2.scores.train_means
    coef1 = m1 - 0.5 * (H1.T @ (c2.mean - H2 @ m2))
    coef2 = m2 - 0.5 * (H2.T @ (c1.mean - H1 @ m1))
    const = -_pair_sum(c1.scores.train_scores) + _pair_sum(c2.scores.train_scores)
    return TrainedModel(
        class1=c1,
        class2=c2,
        centering_offset=offset,
        notes=tuple(notes),
        _tdbda_coef1=coef1,
        _tdbda_coef2=coef2,
        _tdbda_const=const,
    )


def _prepare(model, x0):
    x0 = np.asarray(x0, dtype=np.float64)
    single = x0.ndim == 1
    X0 = x0[:, None] if single else x0
    if X0.ndim != 2 or X0.shape[0] != model.p:
        raise InvalidDataError(f"observations must have {model.p} features, got shape {x0.shape}")
    if not np.all(np.isfinite(X0)):
        raise InvalidDataError("observations contain non-finite values")
    return X0 - model.centering_offset[:, None], single


def _finish(values, single):
    return float(values[0]) if single else values


def _dbda(model, X0):
    c1, c2 = model.class1, model.class2
    diff = c2.mean - c1.mean
    mid = (c1.mean + c2.mean) / 2.0
    return (X0.T @ diff) - mid @ diff - c1.trace_s / (2 * c1.n) + c2.trace_s / (2 * c2.n)


def dbda_statistic(model, x0):
    """Bias-corrected distance statistic.

    ``W = (x0 - (m1 + m2)/2)^T (m2 - m1) - tr(S1)/(2 n1) + tr(S2)/(2 n2)``
    """
    X0, single = _prepare(model, x0)
    return _finish(_dbda(model, X0), single)


def tdbda_statistic(model, x0):
    """Transformed statistic built from noise-reduced eigenstructure.

    Reduces to :func:`dbda_statistic` exactly when both classes have ``k = 0``.
    """
    X0, single = _prepare(model, x0)
    w = _dbda(model, X0)
    if model.class1.k == 0 and model.class2.k == 0:
        return _finish(w, single)
    s1 = X0.T @ model.class1.nr_dirs
    s2 = X0.T @ model.class2.nr_dirs
    w = w + s1 @ model._tdbda_coef1 - s2 @ model._tdbda_coef2 + model._tdbda_const
    return _finish(w, single)


def _project_out(H, V):
    # (I - H H^T) V
    if H.shape[1] == 0:
        return V
    return V - H @ (H.T @ V)


def tdbda_naive_statistic(model, x0):
    """Transformed statistic using the raw unit sample eigenvectors."""
    X0, single = _prepare(model, x0)
    c1, c2 = model.class1, model.class2
    H1, H2 = c1.raw_dirs, c2.raw_dirs
    a1m = _project_out(H1, c1.mean[:, None])[:, 0]
    a2m = _project_out(H2, c2.mean[:, None])[:, 0]
    d = a2m - a1m
    left = (a1m + a2m)[:, None] - _project_out(H1, X0) - _project_out(H2, X0)
    tr1 = c1.trace_s - c1.nr.raw_eigvals[: c1.k].sum()
    tr2 = c2.trace_s - c2.nr.raw_eigvals[: c2.k].sum()
    w = -(left.T @ d) / 2.0 - tr1 / (2 * c1.n) + tr2 / (2 * c2.n)
    return _finish(w, single)


def _floor(v, ref):
    floor = VARIANCE_FLOOR_RTOL * ref
    return np.maximum(v, floor), int(np.count_nonzero(v < floor))


def dlda_statistic(model, x0):
    """Diagonal linear discriminant: ``d1(x) - d2(x)`` with pooled variances.

    ``d_k(x) = sum_f (x_f - m_kf)^2 / v_f``.
    """
    X0, single = _prepare(model, x0)
    c1, c2 = model.class1, model.class2
    pooled = ((c1.n - 1) * c1.variances + (c2.n - 1) * c2.variances) / (c1.n + c2.n - 2)
    v, _ = _floor(pooled, pooled.max(initial=0.0))
    d1 = (((X0 - c1.mean[:, None]) ** 2) / v[:, None]).sum(axis=0)
    d2 = (((X0 - c2.mean[:, None]) ** 2) / v[:, None]).sum(axis=0)
    return _finish(d1 - d2, single)


def dqda_statistic(model, x0):
    """Diagonal quadratic discriminant: ``d1(x) - d2(x)`` with per-class variances.

    ``d_k(x) = sum_f (x_f - m_kf)^2 / v_kf + log v_kf``, i.e. minus twice the
    Gaussian log-density up to a shared constant.
    """
    X0, single = _prepare(model, x0)
    c1, c2 = model.class1, model.class2
    ref = max(c1.variances.max(initial=0.0), c2.variances.max(initial=0.0))
    out = []
    for c in (c1, c2):
        v, _ = _floor(c.variances, ref)
        out.append((((X0 - c.mean[:, None]) ** 2) / v[:, None] + np.log(v)[:, None]).sum(axis=0))
    return _finish(out[0] - out[1], single)


def variance_floor_counts(model):
    """Number of features whose variance was floored, per class, for DQDA and DLDA."""
    c1, c2 = model.class1, model.class2
    ref = max(c1.variances.max(initial=0.0), c2.variances.max(initial=0.0))
    pooled = ((c1.n - 1) * c1.variances + (c2.n - 1) * c2.variances) / (c1.n + c2.n - 2)
    return {
        "dqda": (_floor(c1.variances, ref)[1], _floor(c2.variances, ref)[1]),
        "dlda": _floor(pooled, pooled.max(initial=0.0))[1],
    }


# -- oracle rule with known eigenvectors -------------------------------------------------


def _oracle_inputs(H1, H2, train1, train2, x0):
    X1 = check_sample(train1, min_n=2, name="train1")
    X2 = check_sample(train2, min_n=2, name="train2")
    p = X1.shape[0]
    H1 = np.asarray(H1, dtype=np.float64).reshape(p, -1)
    H2 = np.asarray(H2, dtype=np.float64).reshape(p, -1)
    x0 = np.asarray(x0, dtype=np.float64)
    single = x0.ndim == 1
    X0 = x0[:, None] if single else x0
    if X0.shape[0] != p or X2.shape[0] != p:
        raise InvalidDataError("oracle inputs have inconsistent dimensions")
    return H1, H2, X1, X2, X0, single


def oracle_statistic(H1, H2, train1, train2, x0):
    """Transformed statistic with known leading eigenvectors ``H1`` and ``H2``.

    Uses the inner-product form::

        (A* x0)^T (A2 m2 - A1 m1) + sum_{j<j'} x_1j,A . x_1j',A / (n1 (n1 - 1))
                                  - sum_{j<j'} x_2j,A . x_2j',A / (n2 (n2 - 1))

    with ``A_i = I - H_i H_i^T`` and ``A* = (A1 + A2) / 2``.
    """
    H1, H2, X1, X2, X0, single = _oracle_inputs(H1, H2, train1, train2, x0)
    A1X = _project_out(H1, X1)
    A2X = _project_out(H2, X2)
    d = A2X.mean(axis=1) - A1X.mean(axis=1)
    a_star_x0 = (_project_out(H1, X0) + _project_out(H2, X0)) / 2.0
    out = a_star_x0.T @ d
    for sign, AX in ((1.0, A1X), (-1.0, A2X)):
        n = AX.shape[1]
        tot = AX.sum(axis=1)
        pair = (tot @ tot - np.einsum("ij,ij->", AX, AX)) / 2.0
        out = out + sign * pair / (n * (n - 1))
    return _finish(out, single)


def oracle_statistic_projected(H1, H2, train1, train2, x0):
    """The same statistic in projected-distance form (for cross-checking).

    ``(A* x0 - (A1 m1 + A2 m2)/2)^T (A2 m2 - A1 m1) - tr(A1 S1)/(2 n1) + tr(A2 S2)/(2 n2)``
    """
    H1, H2, X1, X2, X0, single = _oracle_inputs(H1, H2, train1, train2, x0)
    a1m = _project_out(H1, X1.mean(axis=1)[:, None])[:, 0]
    a2m = _project_out(H2, X2.mean(axis=1)[:, None])[:, 0]
    d = a2m - a1m
    a_star_x0 = (_project_out(H1, X0) + _project_out(H2, X0)) / 2.0
    out = (a_star_x0 - ((a1m + a2m) / 2.0)[:, None]).T @ d
    for sign, H, X in ((-1.0, H1, X1), (1.0, H2, X2)):
        n = X.shape[1]
        Xc = X - X.mean(axis=1, keepdims=True)
        tr = (np.einsum("ij,ij->", Xc, Xc) - np.sum((H.T @ Xc) ** 2)) / (n - 1)
        out = out + sign * tr / (2 * n)
    return _finish(out, single)


def oracle_statistic_expanded(H1, H2, train1, train2, x0):
    """The same statistic written as the distance statistic plus score corrections."""
    H1, H2, X1, X2, X0, single = _oracle_inputs(H1, H2, train1, train2, x0)
    n1, n2 = X1.shape[1], X2.shape[1]
    m1, m2 = X1.mean(axis=1), X2.mean(axis=1)
    tr1 = np.einsum("ij,ij->", X1 - m1[:, None], X1 - m1[:, None]) / (n1 - 1)
    tr2 = np.einsum("ij,ij->", X2 - m2[:, None], X2 - m2[:, None]) / (n2 - 1)
    w = (X0.T @ (m2 - m1)) - ((m1 + m2) / 2) @ (m2 - m1) - tr1 / (2 * n1) + tr2 / (2 * n2)
    s1, s2 = H1.T @ X1, H2.T @ X2
    b1, b2 = s1.mean(axis=1), s2.mean(axis=1)
    w = w + (X0.T @ H1) @ (b1 - 0.5 * H1.T @ (m2 - H2 @ b2))
    w = w - (X0.T @ H2) @ (b2 - 0.5 * H2.T @ (m1 - H1 @ b1))
    w = w - _pair_sum(s1) + _pair_sum(s2)
    return _finish(w, single)


# -- decisions ----------------------------------------------------------------------------


def decide(score, method):
    """Class 1 for a strictly negative statistic, class 2 otherwise."""
    return Decision(score=float(score), label=1 if score < 0 else 2, method=method)


def dbda_score(model, x0):
    return decide(dbda_statistic(model, x0), "dbda")


def tdbda_score(model, x0):
    return decide(tdbda_statistic(model, x0), "tdbda")


def tdbda_naive_score(model, x0):
    return decide(tdbda_naive_statistic(model, x0), "tdbda_naive")


def tdbda_oracle_score(truth, train1, train2, x0):
    """Decision of the oracle rule using the true eigenvectors held by ``truth``."""
    return decide(oracle_statistic(truth.H1, truth.H2, train1, train2, x0), "tdbda_oracle")


def dlda_score(model, x0):
    return decide(dlda_statistic(model, x0), "dlda")


def dqda_score(model, x0):
    return decide(dqda_statistic(model, x0), "dqda")
