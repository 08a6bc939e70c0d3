"""Fluid (mean-field) approximation of the absorbed fraction.

The occupancy fractions of the N-chain system follow, as N grows, the
linear ODE whose drift is the full-space generator P - I. The absorbed
fraction is evaluated through the transient block only:
m0(t) = 1 - alpha exp(Qt) 1, which is algebraically identical to
integrating the full ODE and reuses the uniformized exponential action.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain_model import InitialDistribution, SubGenerator
from .errors import BracketingFailure
from .numerics import expm_action

_DOUBLING_CAP = 1e6


def transient_survival(alpha: InitialDistribution, sub: SubGenerator, t, tol=1e-15):
    """alpha exp(Qt) 1: transient mass remaining at time t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(np.sum(expm_action(sub.Q, alpha.alpha, t, tol=tol)))


def fluid_m0(alpha: InitialDistribution, sub: SubGenerator, t) -> float:
    """Absorbed fraction m0(t) = 1 - alpha exp(Qt) 1 of the fluid ODE."""
    return 1.0 - transient_survival(alpha, sub, t)


@dataclass(frozen=True)
class FluidTrajectory:
    """Fluid curve on a time grid: absorbed fraction and transient mass."""

    time_grid: np.ndarray
    m0_values: np.ndarray
    transient_mass: np.ndarray


def fluid_trajectory(alpha, sub, time_grid) -> FluidTrajectory:
    """Evaluate the fluid curve on an increasing nonnegative grid."""
    grid = np.asarray(time_grid, dtype=float)
    if grid.size and (np.any(np.diff(grid) < 0) or grid[0] < 0):
        raise ValueError("time grid must be nonnegative and nondecreasing")
    survival = np.array([transient_survival(alpha, sub, t) for t in grid])
    return FluidTrajectory(
        time_grid=grid,
        m0_values=1.0 - survival,
        transient_mass=survival,
    )


class CrossingResult(NamedTuple):
    time: float
    already_below: bool

    def __float__(self):
        return self.time


def crossing_time(alpha, sub, epsilon, nu_hint=None) -> CrossingResult:
    """First time the transient mass drops to epsilon (m0 reaches 1 - epsilon).

    Brackets the level by doubling from 1/nu_hint (or 1), then bisects; the
    survival is strictly decreasing on the bracket so the crossing is unique.
    Returns (0, already_below=True) when the mass already starts at or below
    epsilon. For the level of the hitting-time theorems call with
    epsilon = 1/N.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    start_mass = alpha.transient_mass
    if start_mass <= epsilon:
        return CrossingResult(0.0, True)

    t_hi = 1.0 / nu_hint if nu_hint else 1.0
    t_lo = 0.0
    while transient_survival(alpha, sub, t_hi) > epsilon:
        t_lo = t_hi
        t_hi *= 2.0
        if t_hi > _DOUBLING_CAP:
            raise BracketingFailure(
                f"survival still above {epsilon} at t = {t_lo}; doubling cap reached"
            )

    # Bisect to a 1e-13 relative bracket; the survival is strictly
    # decreasing there, so the midpoint meets |survival - epsilon| within
    # 1e-9 * epsilon with orders of magnitude to spare.
    for _ in range(120):
        if (t_hi - t_lo) <= 1e-13 * max(t_hi, 1.0):
            break
        t_mid = 0.5 * (t_lo + t_hi)
        s = transient_survival(alpha, sub, t_mid)
        if s > epsilon:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return CrossingResult(0.5 * (t_lo + t_hi), False)
