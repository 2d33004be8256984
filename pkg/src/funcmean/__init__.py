"""Means of functionals on high-dimensional path spaces, in closed form and by Monte Carlo."""

__version__ = "0.1.0"

from .analytic import AnalyticResult, atom_mean, exchange_mean, functional_law
from .errors import (
    ArityError,
    BudgetError,
    ConvergenceError,
    DivergentMean,
    DomainError,
    FuncMeanError,
    IllPosedConstraint,
    NonConcentrating,
    ParameterError,
    ParseError,
    UnsupportedQuery,
)
from .exprlang import parse, parse_multi, parse_scalar
from .functionals import composite, eval_functional, parse_atom, parse_functional
from .montecarlo import estimate, exchange_gap, variance_decay
from .numcore import Grid, RngStream
from .spaces import (
    Ball2,
    BoundedUniform,
    CauchySpace,
    Codim1,
    Codim2,
    DerivConstrained,
    IidDensity,
    LayerSimplex,
    WienerSpace,
    coordinate_density,
    sample,
    well_posed,
)

__all__ = [
    "AnalyticResult",
    "ArityError",
    "Ball2",
    "BoundedUniform",
    "BudgetError",
    "CauchySpace",
    "Codim1",
    "Codim2",
    "ConvergenceError",
    "DerivConstrained",
    "DivergentMean",
    "DomainError",
    "FuncMeanError",
    "Grid",
    "IidDensity",
    "IllPosedConstraint",
    "LayerSimplex",
    "NonConcentrating",
    "ParameterError",
    "ParseError",
    "RngStream",
    "UnsupportedQuery",
    "WienerSpace",
    "atom_mean",
    "composite",
    "coordinate_density",
    "estimate",
    "eval_functional",
    "exchange_gap",
    "exchange_mean",
    "functional_law",
    "parse",
    "parse_atom",
    "parse_functional",
    "parse_multi",
    "parse_scalar",
    "sample",
    "variance_decay",
    "well_posed",
]
