"""Twin neural network regression with semi-supervised loop consistency."""
from ._backend import BACKEND
from .data import Dataset, generate, load_csv, make_split
from .harness import SweepSpec, emit_report, load_report, run_sweep
from .inference import ensemble_predict, predict_many
from .tnn import TnnModel, load_model, save_model
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Dataset", "SweepSpec", "TnnModel", "TrainConfig", "emit_report",
    "ensemble_predict", "generate", "load_csv", "load_model", "load_report", "make_split",
    "predict_many", "run_sweep", "save_model", "train",
]
