"""PSO-driven hyperparameter search for federated LSTM models."""

from .data import ClientShard, PartitionedDataset, TimeSeriesDataset, gen_telemetry, gen_traffic, load_csv
from .estimators import LstmClassifier, LstmRegressor, SwarmSearchCV
from .federated import FlConfig, FlOutcome, centralized_train, run_fl
from .harness import GridSpec, PsoParams, SearchReport, compare, confidence_interval_95, grid_search, pso_search
from .lstm import EvalResult, LstmModel, TrainSpec
from .pso import ModelConfig, PsoCoefficients, PsoResult, SearchBounds

__all__ = [
    "ClientShard",
    "EvalResult",
    "FlConfig",
    "FlOutcome",
    "GridSpec",
    "LstmClassifier",
    "LstmModel",
    "LstmRegressor",
    "ModelConfig",
    "PartitionedDataset",
    "PsoCoefficients",
    "PsoParams",
    "PsoResult",
    "SearchBounds",
    "SearchReport",
    "SwarmSearchCV",
    "TimeSeriesDataset",
    "TrainSpec",
    "centralized_train",
    "compare",
    "confidence_interval_95",
    "gen_telemetry",
    "gen_traffic",
    "grid_search",
    "load_csv",
    "pso_search",
    "run_fl",
]

__version__ = "0.1.0"
