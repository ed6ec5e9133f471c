"""Autoencoder imputation for incomplete tabular data.

Trains denoising autoencoders and variational autoencoders (plain numpy,
no deep learning framework) and fills missing cells either with a single
deterministic reconstruction or by Monte Carlo dropout: the decoder is run
many times with dropout active and the passes are averaged per cell, which
also yields a per-cell uncertainty.

Typical library use goes through `workflows` (train / impute / reproduce
on config objects) or, lower level, `dataio` + `models` + `imputer`.
The same operations are exposed as a FastAPI app in `mcdimpute.service`
and as the `mcdimpute` command line tool.
"""

from .config import ExperimentConfig, make_config
from .errors import DataError, DivergenceError, UsageError
from .imputer import MODEL_KINDS, ImputationResult, ImputeConfig, impute_dataset
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DivergenceError",
    "ExperimentConfig",
    "ImputationResult",
    "ImputeConfig",
    "MODEL_KINDS",
    "RngStream",
    "UsageError",
    "impute_dataset",
    "make_config",
    "__version__",
]
