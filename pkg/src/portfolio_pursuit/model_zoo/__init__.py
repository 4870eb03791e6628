"""From-scratch regressors and the fitting routines for the pricing models."""

from .forest import RandomForest, RegressionTree
from .gp import MaternGP, matern52
from .mlp import MLP
from .models import (
    ACTION_GRID,
    ActionModel,
    ConversionModel,
    InsufficientDataError,
    MarketModel,
    as_market_array,
    encode_customers,
    fit_action_model_k,
    fit_action_model_plain,
    fit_conversion_model,
    fit_market_model,
    isotonic_decreasing,
    optimize_action,
    optimize_actions,
)
from .optimize import maximize_rows
from .serialize import MAGIC, dumps, loads, register
