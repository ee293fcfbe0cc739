"""Consistent price systems from first-exit ladders, with Monte Carlo checks
of the path conditions behind them and simple arbitrage backtests."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ContractError,
    CpsLabError,
    DegenerateEnsembleError,
    NumericalError,
    ParameterError,
    SpecViolation,
)
from .pathgen import Ensemble, ModelSpec, SamplePath, TimeGrid, simulate_ensemble
from .retirement import LadderParams, build_ladder, effective_epsilon, validate_sandwich
from .transforms import UNBOUNDED, TransformSpec, analyze_drop, resolve
