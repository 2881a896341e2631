"""Feature-importance-aware missing value imputation.

Alternates weighted low-rank matrix completion with neighborhood-component
feature weighting, plus five baseline imputers, synthetic data generators
with MCAR/MNAR amputation, and a classification-based benchmark harness.
"""
from .data import (DataError, FeatureWeights, IncompleteMatrix, LabeledDataset,
                   StandardizationParams, compose_xhat, read_csv,
                   standardize_apply, standardize_fit, write_csv)
from .imputer import IwmcConfig, IwmcResult, fit, impute_test
from .mstage import MStageConfig
from .wstage import NcfsConfig

__all__ = [
    "DataError", "FeatureWeights", "IncompleteMatrix", "LabeledDataset",
    "StandardizationParams", "compose_xhat", "read_csv", "standardize_apply",
    "standardize_fit", "write_csv", "IwmcConfig", "IwmcResult", "fit",
    "impute_test", "MStageConfig", "NcfsConfig",
]

__version__ = "0.1.0"
