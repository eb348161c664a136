"""Decentralized graph-based social recommendation in plain numpy."""
from .config import ConfigError, RunConfig
from .dataset import DataError, Dataset, load_dataset
from .model import ModelDims, ModelParams, init_params, predict_rating
from .trainer import TrainConfig, fit, prepare_data

__all__ = [
    "ConfigError", "DataError", "Dataset", "ModelDims", "ModelParams", "RunConfig", "TrainConfig", "fit",
    "init_params", "load_dataset", "predict_rating", "prepare_data",
]
__version__ = "0.1.0"
