"""Distance-based discriminant analysis for high-dimensional data with strong spikes.

Samples are p x n arrays (one observation per column) throughout the
functional API; the estimators in :mod:`spike.estimators` take the usual
row-per-sample layout.
"""

from ._validation import (
    ConfigurationError,
    DegenerateSpikeError,
    IngestionError,
    InvalidDataError,
    NumericError,
    SpikeError,
)
from .classifiers import METHODS, TrainedModel, fit
from .estimators import DBDA, DLDA, DQDA, TDBDA, NaiveTDBDA, NoiseReductionPCA
from .spectra import cdm_spectrum, dual_covariance, eigen_dual, nr_directions, nr_eigenvalues, select_k

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DBDA",
    "DLDA",
    "DQDA",
    "DegenerateSpikeError",
    "IngestionError",
    "InvalidDataError",
    "METHODS",
    "NaiveTDBDA",
    "NoiseReductionPCA",
    "NumericError",
    "SpikeError",
    "TDBDA",
    "TrainedModel",
    "cdm_spectrum",
    "dual_covariance",
    "eigen_dual",
    "fit",
    "nr_directions",
    "nr_eigenvalues",
    "select_k",
]
