"""Parallel next-generation reservoir computers for the multi-scale Lorenz96 model."""

__version__ = "0.1.0"

from .errors import (DegenerateDataError, FormatError, ForecastDivergenceError, IncompatibilityError,
                     InvalidInputError, InvalidWindowError, NgrcError, NumericalBlowupError,
                     RankDeficiencyError)
from .features import FeatureConfig, design_block, design_matrix, feature_dims
from .forecast import (Horizon, closed_loop_forecast, evaluate, nrmse, one_step_predict,
                       prediction_horizon)
from .harness import PRESETS, Experiment, ExperimentPreset, complexity_report, get_preset
from .lorenz96 import ModelParams, SimState, TrajectoryGrid, derivative, normalize, rk4_step, simulate
from .ridge import INDEPENDENT, SHARED, ReadoutWeights, RidgeConfig, ridge_solve, train

__all__ = [
    "DegenerateDataError", "FormatError", "ForecastDivergenceError", "IncompatibilityError",
    "InvalidInputError", "InvalidWindowError", "NgrcError", "NumericalBlowupError",
    "RankDeficiencyError", "FeatureConfig", "design_block", "design_matrix", "feature_dims",
    "Horizon", "closed_loop_forecast", "evaluate", "nrmse", "one_step_predict",
    "prediction_horizon", "PRESETS", "Experiment", "ExperimentPreset", "complexity_report",
    "get_preset", "ModelParams", "SimState", "TrajectoryGrid", "derivative", "normalize",
    "rk4_step", "simulate", "INDEPENDENT", "SHARED", "ReadoutWeights", "RidgeConfig",
    "ridge_solve", "train",
]
