"""Learned answer selection over the outputs of several QA agents."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import AnswerCandidate, Dataset, Example, load_predictions, save_predictions
from .encoder import EncoderConfig
from .errors import (
    AssemblyError,
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DeterminismError,
    MetaQAError,
    NumericError,
)
from .evaluation import RunReport, evaluate, run_baseline
from .model import MetaQAModel
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AnswerCandidate", "AssemblyError", "Checkpoint", "CheckpointError", "ConfigError",
    "ContractError", "DataError", "Dataset", "DeterminismError", "EncoderConfig", "Example",
    "MetaQAError", "MetaQAModel", "NumericError", "RunReport", "TrainConfig", "evaluate",
    "load_checkpoint", "load_predictions", "run_baseline", "save_checkpoint",
    "save_predictions", "train",
]
