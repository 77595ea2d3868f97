"""Adversarial domain adaptation with penalized bridge layers, on a small numpy autodiff."""

from .data import Batch, Dataset, Domain, SyntheticSpec, Task, generate, load_csv, standardize
from .errors import ConfigError, ContractError, DataError, DimensionError, GvbError, TrainingAborted
from .gvb import ABLATION_VARIANTS, GvbModel, Variant, init_model, predict, total_step_losses
from .stats import aggregate_seeds, bridge_stats, export_features
from .trainer import MetricsRecord, TrainConfig, evaluate, grl_alpha, train

__version__ = "0.1.0"
