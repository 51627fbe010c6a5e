from .model import (
    CategoricalLikelihood,
    GaussianLikelihood,
    LogDensityModel,
    logdensity,
    logdensity_and_grad,
)
from .map import MapConfig, train_map
from .hmc import ChainResult, HmcConfig, SampleSet, run_hmc
from .mfvi import MeanFieldGaussian, MfviConfig, train_mfvi
from .laplace import LaplaceConfig, LaplacePosterior, fit_laplace, tune_prior_precision, PRIOR_PRECISION_GRID
from .swag import SwagConfig, SwagPosterior, fit_swag, sample_swag, swag_implied_diag
from .serialize import load_posterior, save_posterior

__all__ = [
    "CategoricalLikelihood",
    "GaussianLikelihood",
    "LogDensityModel",
    "logdensity",
    "logdensity_and_grad",
    "MapConfig",
    "train_map",
    "ChainResult",
    "HmcConfig",
    "SampleSet",
    "run_hmc",
    "MeanFieldGaussian",
    "MfviConfig",
    "train_mfvi",
    "LaplaceConfig",
    "LaplacePosterior",
    "fit_laplace",
    "tune_prior_precision",
    "PRIOR_PRECISION_GRID",
    "SwagConfig",
    "SwagPosterior",
    "fit_swag",
    "sample_swag",
    "swag_implied_diag",
    "load_posterior",
    "save_posterior",
]
