"""Desk-scale numerics for lower deviations of the rightmost particle of a BBM.

Closed-form rate evaluators (`rates`), the variational delayed-branching
optimizer (`varopt`), a log-domain front-equation solver (`fkpp`), exact
event-driven Monte Carlo with a tilted scenario estimator (`mc`), and a CLI
harness (`cli`).
"""

__version__ = "0.1.0"

from .model import RHO, SQRT2, ModelParams, RateQuery, alpha_from_velocity, velocity_from_alpha
from .rates import (
    RateValue,
    Regime,
    ScenarioGeometry,
    bramson_centering,
    chen_lower_bound,
    phi,
    prefactor_exponent,
    psi,
    scenario_geometry,
    upper_rate,
)
from .varopt import ObjectiveSpec, Optimum, log_normal_cdf, maximize, objective, rate_convergence_table

__all__ = [
    "RHO",
    "SQRT2",
    "ModelParams",
    "RateQuery",
    "alpha_from_velocity",
    "velocity_from_alpha",
    "RateValue",
    "Regime",
    "ScenarioGeometry",
    "bramson_centering",
    "chen_lower_bound",
    "phi",
    "prefactor_exponent",
    "psi",
    "scenario_geometry",
    "upper_rate",
    "ObjectiveSpec",
    "Optimum",
    "log_normal_cdf",
    "maximize",
    "objective",
    "rate_convergence_table",
    "__version__",
]
