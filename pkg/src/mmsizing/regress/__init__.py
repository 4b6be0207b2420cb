"""Inverse regressors: random forest, SVR, MLP and transformer encoder."""

from mmsizing.regress.container import load_model, save_model
from mmsizing.regress.model import (KINDS, Regressor, fit, fit_mlp, fit_random_forest,
                                    fit_svr, fit_transformer, predict, predict_with_flags)
from mmsizing.regress.networks import TrainConfig
from mmsizing.regress.standardize import Standardizer

__all__ = [
    "KINDS", "Regressor", "Standardizer", "TrainConfig", "fit", "fit_mlp", "fit_random_forest",
    "fit_svr", "fit_transformer", "load_model", "predict", "predict_with_flags", "save_model",
]
