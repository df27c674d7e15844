"""Principal-component score estimates used by the transformed classifier.

New observations are projected on the noise-reduced directions. Training
observations need a leave-one-out style correction: projecting ``x_j`` on a
direction built from ``x_j`` itself picks up ``||x_j - mu||^2``, which is huge
when p is large. The modified dual vectors below remove that self term.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import DegenerateSpikeError, InvalidDataError, check_sample, check_vector
from .spectra import center, dual_covariance, n_well_defined, orient_dual_vectors

__all__ = [
    "PcScores",
    "score_new",
    "modified_dual_vectors",
    "modified_directions",
    "score_training",
]


@dataclass(frozen=True)
class PcScores:
    """Estimated PC scores for one class.

    ``train_scores[r, j]`` is the bias-corrected score of training sample
    ``j`` on component ``r``; ``train_means[r]`` is its row mean.
    """

    train_scores: np.ndarray
    train_means: np.ndarray
    new_scores: Optional[np.ndarray] = None

    @property
    def k(self):
        return self.train_scores.shape[0]


def score_new(x0, nr, k):
    """Scores ``x0 . h_tilde[r]`` of a new observation for ``r < k``."""
    if k > nr.r_max:
        raise InvalidDataError(f"only {nr.r_max} components available, asked for {k}")
    x0 = check_vector(x0, nr.nr_dirs.shape[0])
    return x0 @ nr.nr_dirs[:, :k]


def modified_dual_vectors(spec, r, n=None):
    """Leave-one-out variants of dual eigenvector ``r``.

    Row ``j`` of the result equals ``u = spec.eigvecs[:, r]`` except that
    entry ``j`` is replaced by ``-u[j] / (n - 1)``.
    """
    n = spec.n if n is None else int(n)
    if not 0 <= r <= n - 3:
        raise InvalidDataError(f"component index must lie in [0, {n - 3}], got {r}")
    u = spec.eigvecs[:, r]
    out = np.tile(u, (n, 1))
    out[np.arange(n), np.arange(n)] = -u / (n - 1)
    return out


def _check_components(spec, nr_eigvals, k, n):
    if not 0 <= k <= n - 2:
        raise InvalidDataError(f"k must lie in [0, {n - 2}], got {k}")
    ok = n_well_defined(spec, nr_eigvals, k)
    if ok < k:
        raise DegenerateSpikeError(ok)


def modified_directions(sample, spec, nr_eigvals, r):
    """Explicit p x n matrix whose column ``j`` is the modified direction for sample ``j``.

    Costs O(n^2 p); :func:`score_training` never builds these vectors.
    """
    X = check_sample(sample, min_n=3)
    n = X.shape[1]
    _check_components(spec, nr_eigvals, r + 1, n)
    Xc = center(X)
    U, _ = orient_dual_vectors(Xc, spec.eigvecs[:, : r + 1])
    u = U[:, r]
    U_mod = np.tile(u[:, None], (1, n))
    U_mod[np.arange(n), np.arange(n)] = -u / (n - 1)
    scale = math.sqrt(n - 1) / ((n - 2) * math.sqrt(nr_eigvals[r]))
    return scale * (Xc @ U_mod)


def score_training(sample, spec, nr_eigvals, k, sd=None):
    """Bias-corrected training scores for the first ``k`` components.

    Parameters
    ----------
    sample : array-like of shape (p, n)
    spec : DualSpectrum
    nr_eigvals : ndarray
    k : int
    sd : ndarray of shape (n, n), optional
        Dual covariance of ``sample`` if already computed.

    Returns
    -------
    PcScores
        With ``new_scores`` unset.

    Notes
    -----
    With ``G = Xc^T Xc`` and ``m = Xc^T xbar``, the score of sample ``j`` is::

        c_r * ((G u)_j + m.u - u_j * n / (n - 1) * (G_jj + m_j))

    where ``c_r = sqrt(n - 1) / ((n - 2) sqrt(lam_tilde[r]))``. After the Gram
    matrix is known this is O(n^2) per component.
    """
    X = check_sample(sample, min_n=3)
    p, n = X.shape
    k = int(k)
    _check_components(spec, nr_eigvals, k, n)
    if k == 0:
        return PcScores(train_scores=np.zeros((0, n)), train_means=np.zeros(0))

    Xc = center(X)
    U, _ = orient_dual_vectors(Xc, spec.eigvecs[:, :k])
    G = (n - 1) * (dual_covariance(X) if sd is None else np.asarray(sd))
    m = Xc.T @ X.mean(axis=1)
    self_term = np.diag(G) + m
    numer = G @ U + (m @ U)[None, :] - U * (n / (n - 1)) * self_term[:, None]
    scale = math.sqrt(n - 1) / ((n - 2) * np.sqrt(nr_eigvals[:k]))
    scores = (numer * scale[None, :]).T
    return PcScores(train_scores=scores, train_means=scores.mean(axis=1))
