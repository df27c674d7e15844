"""scikit-learn compatible wrappers.

These follow the usual convention of one sample per row. The functional API
in :mod:`spike.classifiers` uses one sample per column, since that is the
natural layout when ``p`` is in the tens of thousands and ``n`` is tiny.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import classifiers as clf
from ._validation import ConfigurationError
from .spectra import eigen_dual, dual_covariance, nr_directions, nr_eigenvalues, n_well_defined
from .transform import score_training

__all__ = ["DBDA", "TDBDA", "NaiveTDBDA", "DLDA", "DQDA", "NoiseReductionPCA"]


def _split_k(k):
    if isinstance(k, (tuple, list)):
        if len(k) != 2:
            raise ConfigurationError(f"k must be a single value or a pair, got {k!r}")
        return k[0], k[1]
    return k, k


class _TwoClassRule(ClassifierMixin, BaseEstimator):
    """Shared fit/predict for the two-class rules.

    ``classes_[0]`` plays the role of class 1 and ``classes_[1]`` of class 2.
    """

    _statistic = None
    _uses_k = False

    def _k_pair(self):
        return (0, 0)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ConfigurationError(f"exactly two classes are required, got {len(self.classes_)}")
        k1, k2 = self._k_pair()
        self.model_ = clf.fit(
            X[y == self.classes_[0]].T,
            X[y == self.classes_[1]].T,
            k1=k1,
            k2=k2,
            center=self.center,
            gamma=getattr(self, "gamma", None),
        )
        self.n_features_in_ = X.shape[1]
        if self._uses_k:
            self.k_ = self.model_.k
        return self

    def decision_function(self, X):
        """Statistic per row; negative values favour ``classes_[0]``."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return np.atleast_1d(type(self)._statistic(self.model_, X.T))

    def predict(self, X):
        score = self.decision_function(X)
        return np.where(score < 0, self.classes_[0], self.classes_[1])


class DBDA(_TwoClassRule):
    """Bias-corrected distance-based discriminant."""

    _statistic = staticmethod(clf.dbda_statistic)

    def __init__(self, center=False):
        self.center = center


class TDBDA(_TwoClassRule):
    """Distance discriminant after removing leading noise-reduced eigen-directions.

    Parameters
    ----------
    k : int, "auto" or pair
        Components removed per class. A pair sets the two classes separately.
    center : bool
        Subtract the pooled training mean before fitting and scoring.
    gamma : callable, optional
        Penalty ``gamma(n)`` used when ``k="auto"``.
    """

    _statistic = staticmethod(clf.tdbda_statistic)
    _uses_k = True

    def __init__(self, k="auto", center=False, gamma=None):
        self.k = k
        self.center = center
        self.gamma = gamma

    def _k_pair(self):
        return _split_k(self.k)


class NaiveTDBDA(TDBDA):
    """Like :class:`TDBDA`, but projects on the raw sample eigenvectors."""

    _statistic = staticmethod(clf.tdbda_naive_statistic)


class DLDA(_TwoClassRule):
    _statistic = staticmethod(clf.dlda_statistic)

    def __init__(self, center=False):
        self.center = center


class DQDA(_TwoClassRule):
    _statistic = staticmethod(clf.dqda_statistic)

    def __init__(self, center=False):
        self.center = center


class NoiseReductionPCA(TransformerMixin, BaseEstimator):
    """Noise-reduced principal components for one sample.

    ``transform`` projects new rows on the noise-reduced directions.
    ``fit_transform`` instead returns the bias-corrected training scores,
    which differ from ``fit(X).transform(X)`` because a training row's own
    noise inflates its projection.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
    eigenvalues_ : ndarray
        Noise-reduced eigenvalues of the retained components.
    raw_eigenvalues_ : ndarray
        Sample eigenvalues of the retained components.
    """

    def __init__(self, n_components=1):
        self.n_components = n_components

    def _fit(self, X):
        X = check_array(X, dtype=np.float64, ensure_min_samples=3)
        n = X.shape[0]
        k = int(self.n_components)
        if not 1 <= k <= n - 2:
            raise ConfigurationError(f"n_components must lie in [1, {n - 2}], got {k}")
        sample = X.T
        sd = dual_covariance(sample)
        spec = eigen_dual(sd)
        nr_eig = nr_eigenvalues(spec, n)
        k = min(k, n_well_defined(spec, nr_eig, k))
        nr = nr_directions(sample, spec, nr_eig, k)
        self.components_ = nr.nr_dirs.T
        self.eigenvalues_ = nr.nr_eigvals[:k]
        self.raw_eigenvalues_ = nr.raw_eigvals[:k]
        self.n_features_in_ = X.shape[1]
        return sample, spec, nr_eig, sd, k

    def fit(self, X, y=None):
        self._fit(X)
        return self

    def fit_transform(self, X, y=None):
        sample, spec, nr_eig, sd, k = self._fit(X)
        return score_training(sample, spec, nr_eig, k, sd=sd).train_scores.T

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return X @ self.components_.T
