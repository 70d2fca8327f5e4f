"""Multi-head attention deep & cross network for tabular regression, with
Shapley attribution and reference baselines."""

from .errors import MadcnError
from .features import FeatureSchema, Dataset, ingest_csv, split
from .metrics import mae, mse, r2
from .network import Hyperparams, MadcnModel, build_model, load_model, model_forward, save_model
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "MadcnError", "FeatureSchema", "Dataset", "ingest_csv", "split", "mae", "mse", "r2",
    "Hyperparams", "MadcnModel", "build_model", "load_model", "model_forward", "save_model",
    "TrainConfig", "train",
]
