"""Infinity(x)-harmonic functions on Grushin-type spaces.

The package is organised in layers: polynomial coefficients and grids, the
Grushin frame with its brackets and control distances, horizontal finite
difference operators, Dirichlet solvers, and numerical verification
harnesses (comparison, Harnack, iterated penalization).
"""
from .config import ConfigError, RunConfig, parse_config, serialize
from .geometry import (GrushinSpace, HormanderProfile, MetricGraphConfig, PolyVectorField, cc_distance_estimate,
                       cc_distance_numeric, hormander_profile, iterated_bracket, lie_bracket, metric_graph)
from .grid import Grid, GridFunction
from .operators import ExponentField
from .polynomial import Polynomial, PolynomialParseError
from .solver import (ConvergenceError, DirichletProblem, DivergenceError, JensenConfig, KSchedule, SolveReport,
                     residual_field, solve_infinity_relaxation, solve_infinity_via_limit, solve_p_dirichlet)
from .verify import (ComparisonReport, HarnackReport, PenalizationRun, check_comparison, check_harnack,
                     lipschitz_check, penalization_iterated)

__version__ = "0.1.0"
