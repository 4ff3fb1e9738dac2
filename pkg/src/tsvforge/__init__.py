"""Contrastive time-series representations with a two-head ridge forecaster."""

from .data import SeriesDataset, load_csv, normalize, select_target, split_by_months, split_by_ratio
from .encoder import EncoderConfig, EncoderParams, encode, encode_causal_padded, load_checkpoint, save_checkpoint
from .ensemble import DEFAULT_GRID, EnsembleModel, WeightGrid, run_pipeline, select_weights, val_objective
from .errors import (ConfigurationError, ContractViolation, DataError, DimensionError, DivergenceError,
                     EmptyDatasetError, NumericError, TsvForgeError)
from .harness import ExperimentConfig, mae, mse, run_ablation, synth_series
from .heads import ALPHA_GRID, RidgeHead, alpha_search, boosted_residual_fit, ridge_fit
from .objectives import (MsmConfig, ViewPair, combined_loss, dual_loss, hierarchical_loss, instance_loss,
                         msm_loss, temporal_loss)
from .pretrain import PretrainConfig, Pretrainer, pretrain

__version__ = "0.1.0"

__all__ = [
    "ALPHA_GRID", "DEFAULT_GRID", "ConfigurationError", "ContractViolation", "DataError", "DimensionError",
    "DivergenceError", "EmptyDatasetError", "EncoderConfig", "EncoderParams", "EnsembleModel",
    "ExperimentConfig", "MsmConfig", "NumericError", "PretrainConfig", "Pretrainer", "RidgeHead",
    "SeriesDataset", "TsvForgeError", "ViewPair", "WeightGrid", "alpha_search", "boosted_residual_fit",
    "combined_loss", "dual_loss", "encode", "encode_causal_padded", "hierarchical_loss", "instance_loss",
    "load_checkpoint", "load_csv", "mae", "mse", "msm_loss", "normalize", "pretrain", "ridge_fit",
    "run_ablation", "run_pipeline", "save_checkpoint", "select_target", "select_weights", "split_by_months",
    "split_by_ratio", "synth_series", "temporal_loss", "val_objective",
]
