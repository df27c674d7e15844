"""Spectral estimation for one class sample in the large-p, small-n regime.

Every routine works on the n x n dual (Gram) form of the centered data, so the
cost is O(n^2 p) and no p x p covariance is ever formed.

Component indices in this module are zero-based: component ``r`` is the
``(r + 1)``-th largest eigenvalue.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from ._validation import DegenerateSpikeError, InvalidDataError, NumericError, check_sample

__all__ = [
    "DEGENERACY_RTOL",
    "DualSpectrum",
    "NrSpectrum",
    "CdmSpectrum",
    "default_gamma",
    "center",
    "dual_covariance",
    "eigen_dual",
    "nr_eigenvalues",
    "nr_directions",
    "orient_dual_vectors",
    "n_well_defined",
    "cdm_spectrum",
    "select_k",
    "tau_tilde",
]

#: Relative threshold (against the largest dual eigenvalue) below which an
#: eigenvalue is treated as zero and a noise-reduced eigenvalue as degenerate.
DEGENERACY_RTOL = 1e-12

# Psi values below this fraction of Psi_(1) are rounding residue of an
# exhausted rank.
_PSI_RTOL = 1e-12
_CENTER_RTOL = 4 * np.finfo(np.float64).eps


def default_gamma(n):
    """Penalty used by :func:`select_k`: ``sqrt(log(n) / n)``."""
    return math.sqrt(math.log(n) / n)


@dataclass(frozen=True)
class DualSpectrum:
    """Eigen-decomposition of the dual sample covariance.

    Attributes
    ----------
    eigvals : ndarray of shape (n - 1,)
        Nonincreasing, nonnegative eigenvalues.
    eigvecs : ndarray of shape (n, n - 1)
        Orthonormal eigenvectors as columns, all orthogonal to the ones vector.
    trace_sd : float
        Trace of the dual covariance (equal to the trace of the p x p one).
    """

    eigvals: np.ndarray
    eigvecs: np.ndarray
    trace_sd: float

    @property
    def n(self):
        return self.eigvecs.shape[0]


@dataclass(frozen=True)
class NrSpectrum:
    """Noise-reduced eigenvalues and the leading direction vectors.

    ``nr_dirs[:, r]`` has squared norm ``raw_eigvals[r] / nr_eigvals[r]``;
    ``raw_dirs[:, r]`` is the unit sample eigenvector. ``dual_vecs`` holds the
    dual eigenvectors with the sign convention of the directions applied.
    """

    nr_eigvals: np.ndarray
    raw_eigvals: np.ndarray
    nr_dirs: np.ndarray
    raw_dirs: np.ndarray
    dual_vecs: np.ndarray
    kappa_hat: float

    @property
    def r_max(self):
        return self.nr_dirs.shape[1]


@dataclass(frozen=True)
class CdmSpectrum:
    """Cross-data-matrix estimates for one class sample.

    Attributes
    ----------
    split_sizes : tuple of int
        ``(ceil(n/2), n - ceil(n/2))``.
    acute_eigvals : ndarray of shape (n2 - 1,)
        Singular values of the cross-data matrix, nonincreasing.
    psi_hat : ndarray of shape (n2,)
        ``psi_hat[r]`` estimates the tail sum of squared eigenvalues from
        component ``r`` onwards; ``psi_hat[0]`` estimates ``tr(Sigma^2)``.
    tau_hat : ndarray
        ``psi_hat[r + 1] / psi_hat[r]``, truncated once ``psi_hat`` hits zero.
    eps_hat : ndarray of shape (n - 2,)
        Contribution ratios, noise-reduced eigenvalue over ``tr(S)``.
    eta_hat : ndarray of shape (n2 - 1,)
        Quadratic contribution ratios ``acute_eigvals**2 / psi_hat[0]``.
    k_hat : int or None
        Selected number of spikes, filled in by :func:`select_k` callers.
    """

    split_sizes: tuple
    acute_eigvals: np.ndarray
    psi_hat: np.ndarray
    tau_hat: np.ndarray
    eps_hat: np.ndarray
    eta_hat: np.ndarray
    k_hat: Optional[int] = None


def center(X):
    """Subtract the column mean from every column of a p x n matrix.

    Entries within rounding distance of zero (relative to the row's
    magnitude) are set to exactly zero, so a constant feature contributes
    nothing rather than floating-point residue.
    """
    Xc = X - X.mean(axis=1, keepdims=True)
    tol = _CENTER_RTOL * X.shape[1] * np.abs(X).max(axis=1, keepdims=True)
    Xc[np.abs(Xc) <= tol] = 0.0
    return Xc


def dual_covariance(sample):
    """Dual sample covariance ``(X - Xbar)^T (X - Xbar) / (n - 1)``.

    Parameters
    ----------
    sample : array-like of shape (p, n)
        Columns are observations of one class.

    Returns
    -------
    ndarray of shape (n, n)
        Symmetric positive semi-definite, annihilates the ones vector.
    """
    X = check_sample(sample, min_n=2)
    Xc = center(X)
    sd = (Xc.T @ Xc) / (X.shape[1] - 1)
    return (sd + sd.T) / 2


@lru_cache(maxsize=64)
def _complement_basis(n):
    # Householder reflection swapping e_1 and 1/sqrt(n); its trailing columns
    # are an orthonormal basis of the complement of the ones vector.
    v = np.full(n, 1.0 / math.sqrt(n))
    v[0] -= 1.0
    norm2 = v @ v
    H = np.eye(n)
    if norm2 > 0:
        H -= 2.0 * np.outer(v, v) / norm2
    Q = H[:, 1:].copy()
    Q.flags.writeable = False
    return Q


def eigen_dual(sd):
    """Eigen-decompose a dual covariance matrix.

    The decomposition is restricted to the complement of the ones vector,
    which the dual covariance leaves invariant, so all ``n - 1`` returned
    eigenvectors are orthogonal to it even when eigenvalues are tied at zero.
    Eigenvalues below ``DEGENERACY_RTOL`` times the largest are set to zero.
    Each eigenvector is signed so that its largest-magnitude entry is positive.
    """
    sd = np.asarray(sd, dtype=np.float64)
    if sd.ndim != 2 or sd.shape[0] != sd.shape[1] or sd.shape[0] < 2:
        raise InvalidDataError(f"dual covariance must be square with n >= 2, got {sd.shape}")
    if not np.all(np.isfinite(sd)):
        raise InvalidDataError("dual covariance contains non-finite values")
    scale = max(1.0, float(np.max(np.abs(sd))))
    if np.max(np.abs(sd - sd.T)) > 1e-10 * scale:
        raise InvalidDataError("dual covariance is not symmetric")
    n = sd.shape[0]
    Q = _complement_basis(n)
    reduced = Q.T @ sd @ Q
    reduced = (reduced + reduced.T) / 2
    try:
        w, v = np.linalg.eigh(reduced)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(reduced)
        raise NumericError(
            f"eigensolver failed on {n}x{n} dual covariance "
            f"(condition number {cond:.3e}, max |entry| {scale:.3e})"
        ) from exc
    order = np.argsort(w)[::-1]
    w = w[order]
    U = Q @ v[:, order]
    top = w[0] if w[0] > 0 else 0.0
    w = np.where(w > DEGENERACY_RTOL * top, w, 0.0)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    return DualSpectrum(eigvals=w, eigvecs=U, trace_sd=float(np.trace(sd)))


def nr_eigenvalues(spec, n=None):
    """Noise-reduced eigenvalues for components ``0 .. n - 3``.

    The estimate subtracts from each sample eigenvalue the average of the
    trailing eigenvalues::

        lam_tilde[r] = lam_hat[r] - (tr(S_D) - sum(lam_hat[:r + 1])) / (n - 2 - r)

    Values are clipped to ``[0, lam_hat[r]]``, which they satisfy exactly in
    exact arithmetic.
    """
    n = spec.n if n is None else int(n)
    if spec.eigvals.shape[0] != n - 1:
        raise InvalidDataError(f"expected {n - 1} dual eigenvalues, got {spec.eigvals.shape[0]}")
    if n < 3:
        return np.zeros(0)
    lam = spec.eigvals[: n - 2]
    tail = spec.trace_sd - np.cumsum(lam)
    denom = (n - 2) - np.arange(n - 2)
    nr = lam - tail / denom
    return np.clip(nr, 0.0, lam)


def _degenerate_threshold(spec):
    return DEGENERACY_RTOL * (spec.eigvals[0] if spec.eigvals.size else 0.0)


def n_well_defined(spec, nr_eigvals, k):
    """Largest ``k' <= k`` such that components ``0 .. k'-1`` are non-degenerate."""
    thr = _degenerate_threshold(spec)
    for r in range(min(k, nr_eigvals.shape[0])):
        if not nr_eigvals[r] > thr:
            return r
    return min(k, nr_eigvals.shape[0])


def orient_dual_vectors(Xc, U):
    """Flip dual vectors so each ``Xc @ U[:, r]`` has a positive largest entry.

    Returns the flipped ``U`` and the p x r product ``Xc @ U``. Ties in the
    largest magnitude resolve to the first index.
    """
    M = Xc @ U
    if M.size == 0:
        return U, M
    idx = np.argmax(np.abs(M), axis=0)
    signs = np.sign(M[idx, np.arange(M.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, M * signs


def nr_directions(sample, spec, nr_eigvals, r_max):
    """Noise-reduced and raw principal direction vectors.

    Parameters
    ----------
    sample : array-like of shape (p, n)
    spec : DualSpectrum
        Output of :func:`eigen_dual` for the same sample.
    nr_eigvals : ndarray
        Output of :func:`nr_eigenvalues`.
    r_max : int
        Number of leading components to build, at most ``n - 2``.

    Raises
    ------
    DegenerateSpikeError
        If any of the first ``r_max`` noise-reduced eigenvalues is zero.
    """
    X = check_sample(sample, min_n=3)
    p, n = X.shape
    if spec.n != n:
        raise InvalidDataError(f"spectrum was computed for n={spec.n}, sample has n={n}")
    r_max = int(r_max)
    if not 0 <= r_max <= n - 2:
        raise InvalidDataError(f"r_max must lie in [0, {n - 2}], got {r_max}")
    ok = n_well_defined(spec, nr_eigvals, r_max)
    if ok < r_max:
        raise DegenerateSpikeError(ok)

    lam_hat = spec.eigvals[:r_max]
    lam_nr = nr_eigvals[:r_max]
    U, M = orient_dual_vectors(center(X), spec.eigvecs[:, :r_max])
    nr_dirs = M / np.sqrt((n - 1) * lam_nr)
    raw_dirs = M / np.sqrt((n - 1) * lam_hat)
    kappa = (spec.trace_sd - lam_hat.sum()) / (n - 1 - r_max)
    return NrSpectrum(
        nr_eigvals=np.asarray(nr_eigvals, dtype=np.float64),
        raw_eigvals=lam_hat.copy(),
        nr_dirs=nr_dirs,
        raw_dirs=raw_dirs,
        dual_vecs=U,
        kappa_hat=float(max(kappa, 0.0)),
    )


def cdm_spectrum(sample, permutation=None):
    """Cross-data-matrix estimates for one class sample.

    The columns are split into the first ``ceil(n/2)`` and the rest, in the
    given order unless ``permutation`` (an index array over samples) is
    supplied. The returned spectrum has ``k_hat`` unset.
    """
    X = check_sample(sample, min_n=4)
    p, n = X.shape
    if permutation is not None:
        permutation = np.asarray(permutation)
        if sorted(permutation.tolist()) != list(range(n)):
            raise InvalidDataError("permutation must be a rearrangement of range(n)")
        X = X[:, permutation]
    n1 = -(-n // 2)
    n2 = n - n1
    X1c = center(X[:, :n1])
    X2c = center(X[:, n1:])
    cross = (X1c.T @ X2c) / math.sqrt((n1 - 1) * (n2 - 1))
    sv = np.linalg.svd(cross, compute_uv=False)[: n2 - 1]

    psi1 = float(np.sum(cross * cross))
    psi = np.empty(n2)
    psi[0] = psi1
    psi[1:] = psi1 - np.cumsum(sv**2)
    psi[psi <= _PSI_RTOL * psi1] = 0.0
    psi = np.minimum.accumulate(psi)

    tau = []
    for r in range(n2 - 1):
        if psi[r] <= 0:
            break
        tau.append(psi[r + 1] / psi[r])
    eta = sv**2 / psi1 if psi1 > 0 else np.zeros_like(sv)

    spec = eigen_dual(dual_covariance(X))
    nr = nr_eigenvalues(spec, n)
    eps = nr / spec.trace_sd if spec.trace_sd > 0 else np.zeros_like(nr)
    return CdmSpectrum(
        split_sizes=(n1, n2),
        acute_eigvals=sv,
        psi_hat=psi,
        tau_hat=np.asarray(tau),
        eps_hat=eps,
        eta_hat=eta,
    )


def select_k(cdm, n, gamma: Optional[Callable[[int], float]] = None):
    """Estimate the number of strong spikes.

    Returns the first ``r >= 0`` such that
    ``tau_hat[r] * (1 + (r + 1) * gamma(n)) > 1`` (with ``tau_hat`` zero-based,
    so ``tau_hat[r]`` is the ratio for component ``r + 1``), capped at
    ``n2 - 2``. When the ratios run out before the rule fires, the number of
    available ratios is used.
    """
    gamma = default_gamma if gamma is None else gamma
    g = float(gamma(n))
    n2 = cdm.split_sizes[1]
    if cdm.psi_hat[0] <= 0:
        return 0
    k_o = len(cdm.tau_hat)
    for r, tau in enumerate(cdm.tau_hat):
        if tau * (1.0 + (r + 1) * g) > 1.0:
            k_o = r
            break
    return int(max(0, min(k_o, n2 - 2)))


def tau_tilde(cdm, n, gamma=None):
    """Penalized ratios ``tau_hat[r] * (1 + (r + 1) * gamma(n))``."""
    gamma = default_gamma if gamma is None else gamma
    g = float(gamma(n))
    r = np.arange(1, len(cdm.tau_hat) + 1)
    return cdm.tau_hat * (1.0 + r * g)
