"""Model parameters and velocity normalization for binary branching Brownian motion.

All internal computation works in raw units (velocity v, variance rate sigma2);
the dimensionless velocity alpha = v / sqrt(2 sigma2) is a presentation-layer
quantity converted at the edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SQRT2 = math.sqrt(2.0)

# Kink location of the lower-deviation rate function, sqrt(2) - 1.
# Computed from the square root at import, never typed as a decimal.
RHO = SQRT2 - 1.0


@dataclass(frozen=True)
class ModelParams:
    """Diffusion variance per unit time, branching intensity, offspring count.

    The closed-form rate formulas assume branch_rate == 1; consumers that
    depend on that reject other values instead of silently rescaling time.
    Offspring count is fixed at 2 (binary splitting).
    """

    sigma2: float = 1.0
    branch_rate: float = 1.0
    offspring_count: int = 2

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0.0):
            raise ValueError(f"sigma2 must be finite and positive, got {self.sigma2!r}")
        if not (math.isfinite(self.branch_rate) and self.branch_rate > 0.0):
            raise ValueError(
                f"branch_rate must be finite and positive, got {self.branch_rate!r}"
            )
        if self.offspring_count != 2:
            raise ValueError("only binary branching is supported (offspring_count == 2)")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def critical_velocity(self) -> float:
        """Asymptotic spreading speed sqrt(2 sigma2) of the rightmost particle."""
        return math.sqrt(2.0 * self.sigma2)


@dataclass(frozen=True)
class RateQuery:
    """A velocity in both normalized (alpha) and raw (v) form."""

    alpha: float
    v: float

    @classmethod
    def from_alpha(cls, alpha: float, params: ModelParams) -> "RateQuery":
        return cls(alpha=alpha, v=velocity_from_alpha(alpha, params))

    @classmethod
    def from_velocity(cls, v: float, params: ModelParams) -> "RateQuery":
        return cls(alpha=alpha_from_velocity(v, params), v=v)

    def consistent_with(self, params: ModelParams, rel_tol: float = 1e-12) -> bool:
        """Whether alpha and v describe the same velocity under params."""
        return math.isclose(
            self.v, self.alpha * params.critical_velocity, rel_tol=rel_tol, abs_tol=1e-300
        )


def alpha_from_velocity(v: float, params: ModelParams) -> float:
    """Normalized velocity alpha = v / sqrt(2 sigma2)."""
    return v / params.critical_velocity


def velocity_from_alpha(alpha: float, params: ModelParams) -> float:
    """Raw velocity alpha * sqrt(2 sigma2); inverse of alpha_from_velocity."""
    return alpha * params.critical_velocity
