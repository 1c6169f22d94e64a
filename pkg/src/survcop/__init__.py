"""Boosted distributional copula regression for bivariate right-censored data."""
from .boost import BoostConfig, FittedModel, Formula, ModelSpec, fit, predict
from .copulas import CopulaFamily
from .data import BivariateSurvDataset
from .margins import MarginFamily
from .simulate import Scenario, gen_bivariate

__all__ = ["BivariateSurvDataset", "BoostConfig", "CopulaFamily", "FittedModel", "Formula",
           "MarginFamily", "ModelSpec", "Scenario", "fit", "gen_bivariate", "predict"]
__version__ = "0.1.0"
