"""Closed-form regret bounds for spread-aware temporally-partitioned bandits.

The lower bound scales the classic per-arm KL bound by
``(2 / (alpha + 1)) * E[Y] * alpha * IC``; the upper bound is the regret
guarantee of TP-UCB-FR-G when its spread PMF matches the environment.
Both accept a scalar horizon or an array of horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import EnvironmentConfig
from .spread import (
    InvalidParameterError,
    SpreadPmf,
    expected_index,
    index_of_coincidence,
    tightness_value,
    uniform_spread,
)

__all__ = [
    "DegenerateInstanceError",
    "InstanceSummary",
    "kl_bernoulli",
    "lower_bound_curve",
    "alpha_smooth_lower_bound",
    "tightness_condition",
    "upper_bound_curve",
    "log_grid",
    "bounds_table",
    "BOUNDS_COLUMNS",
]

BOUNDS_COLUMNS = ("T", "lower_bound", "upper_bound", "upper_bound_uniform", "tightness_value")

# below this normalized distance from 1 the KL terms are treated as infinite
DEGENERATE_TOL = 1e-15


class DegenerateInstanceError(ValueError):
    """The best mean reaches the largest max reward, so the KL terms are undefined."""


@dataclass(frozen=True, eq=False)
class InstanceSummary:
    means: np.ndarray
    max_rewards: np.ndarray
    alpha: int
    phi: int
    spread: SpreadPmf

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64).reshape(-1)
        rbar = np.array(self.max_rewards, dtype=np.float64).reshape(-1)
        if means.shape != rbar.shape or means.size == 0:
            raise InvalidParameterError("means and max_rewards must be non-empty and of equal length")
        if not np.all(np.isfinite(means)) or np.any(means < 0):
            raise InvalidParameterError("means must be finite and non-negative")
        if np.any(~(rbar > 0)) or not np.all(np.isfinite(rbar)):
            raise InvalidParameterError("max rewards must be finite and positive")
        if np.any(means > rbar):
            raise InvalidParameterError("every mean must be at most its arm's max reward")
        if self.alpha < 1 or self.phi < 1:
            raise InvalidParameterError("alpha and phi must be positive integers")
        if self.spread.alpha != self.alpha:
            raise InvalidParameterError(f"spread has alpha={self.spread.alpha}, expected {self.alpha}")
        means.setflags(write=False)
        rbar.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "max_rewards", rbar)
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "phi", int(self.phi))

    @classmethod
    def from_arrays(
        cls,
        means: Sequence[float],
        max_rewards: Sequence[float],
        alpha: int,
        tau_max: int,
        spread: SpreadPmf | None = None,
    ) -> "InstanceSummary":
        if tau_max % alpha:
            raise InvalidParameterError(f"alpha={alpha} must divide tau_max={tau_max}")
        return cls(means, max_rewards, alpha, tau_max // alpha, spread or uniform_spread(alpha))

    @classmethod
    def from_environment(cls, config: EnvironmentConfig, spread: SpreadPmf | None = None) -> "InstanceSummary":
        """Summary of an environment; ``spread`` defaults to uniform over its alpha."""
        return cls(config.means, config.max_rewards, config.alpha, config.phi, spread or uniform_spread(config.alpha))

    def with_spread(self, spread: SpreadPmf) -> "InstanceSummary":
        return InstanceSummary(self.means, self.max_rewards, self.alpha, self.phi, spread)

    @property
    def mu_star(self) -> float:
        return float(self.means.max())

    @property
    def gaps(self) -> np.ndarray:
        return self.mu_star - self.means

    @property
    def r_max(self) -> float:
        return float(self.max_rewards.max())


def kl_bernoulli(p: float, q: float) -> float:
    """KL(Bern(p) || Bern(q)) in nats, with 0 * ln 0 = 0."""
    p, q = float(p), float(q)
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p!r}")
    if not 0.0 <= q <= 1.0:
        raise InvalidParameterError(f"q must lie in [0, 1], got {q!r}")
    if p == q:
        return 0.0
    if q in (0.0, 1.0):
        return math.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(out, 0.0)


def _horizon(T):
    arr = np.asarray(T, dtype=np.float64)
    if np.any(~(arr >= 2)):
        raise InvalidParameterError("horizons must be >= 2")
    return arr


def _shape(values: np.ndarray, T):
    return float(values) if np.ndim(T) == 0 else values


def _kl_terms(inst: InstanceSummary) -> float:
    # sum over suboptimal arms of gap / (alpha * KL(mu_i / Rmax, mu* / Rmax))
    r_max = inst.r_max
    if inst.mu_star >= r_max:
        raise DegenerateInstanceError(
            f"best mean {inst.mu_star!r} must be strictly below the largest max reward {r_max!r}"
        )
    gaps = inst.gaps
    if not np.any(gaps > 0):
        return 0.0
    q = inst.mu_star / r_max
    if 1.0 - q < DEGENERATE_TOL:
        return math.inf
    total = 0.0
    for mu, gap in zip(inst.means.tolist(), gaps.tolist()):
        if gap > 0:
            kl = kl_bernoulli(mu / r_max, q)
            # KL shrinks like gap**2, so an underflowed KL means an unbounded term
            total += gap / (inst.alpha * kl) if kl > 0 else math.inf
    return total


def alpha_smooth_lower_bound(inst: InstanceSummary, T):
    """Lower bound under uniform spread: ln T * sum gap / (alpha * KL)."""
    T = _horizon(T)
    return _shape(np.log(T) * _kl_terms(inst), T)


def lower_bound_curve(inst: InstanceSummary, T):
    """Asymptotic lower bound on the regret of any uniformly efficient policy.

    The uniform-spread bound times ``(2 / (alpha + 1)) * E[Y] * alpha * IC``.
    """
    T = _horizon(T)
    factor = tightness_value(inst.spread)
    return _shape(np.log(T) * (factor * _kl_terms(inst)), T)


def tightness_condition(alpha: int, spread: SpreadPmf) -> tuple[float, bool]:
    """(value, value > 1): whether the spread-aware lower bound is the tighter one."""
    if spread.alpha != alpha:
        raise InvalidParameterError(f"spread has alpha={spread.alpha}, expected {alpha}")
    value = tightness_value(spread)
    return value, value > 1.0


def upper_bound_curve(inst: InstanceSummary, T):
    """Regret upper bound of TP-UCB-FR-G run with the instance's true spread.

    Valid only when ``inst.spread`` matches the environment; this is not checked.
    """
    T = _horizon(T)
    log_t = np.log(T)
    mean_index = expected_index(inst.spread)
    ic = index_of_coincidence(inst.spread)
    phi = inst.phi
    out = np.zeros_like(log_t)
    constant = 0.0
    for rbar, gap in zip(inst.max_rewards.tolist(), inst.gaps.tolist()):
        if gap <= 0:
            continue
        spread_sq = rbar * rbar * ic
        out = out + (4.0 * log_t * spread_sq / gap) * (1.0 + np.sqrt(1.0 + gap * phi * mean_index / (rbar * log_t * ic)))
        constant += 2.0 * phi * mean_index * rbar + (1.0 + math.pi**2 / 3.0) * gap
    return _shape(out + constant, T)


def log_grid(t_min: int, t_max: int, points: int = 50) -> np.ndarray:
    """Distinct integer horizons spaced evenly in log between the endpoints."""
    if t_min < 2:
        raise InvalidParameterError(f"t_min must be >= 2, got {t_min}")
    if t_max < t_min:
        raise InvalidParameterError(f"t_max={t_max} is below t_min={t_min}")
    if points < 1:
        raise InvalidParameterError("need at least one grid point")
    grid = np.rint(np.geomspace(t_min, t_max, num=points)).astype(np.int64)
    return np.unique(np.concatenate([[t_min], grid, [t_max]]))


def bounds_table(inst: InstanceSummary, horizons: Sequence[int]) -> list[dict]:
    """Rows of the bounds CSV, one per horizon."""
    horizons = np.asarray(horizons, dtype=np.int64)
    lower = lower_bound_curve(inst, horizons)
    upper = upper_bound_curve(inst, horizons)
    upper_uniform = upper_bound_curve(inst.with_spread(uniform_spread(inst.alpha)), horizons)
    value, _ = tightness_condition(inst.alpha, inst.spread)
    return [
        {"T": int(t), "lower_bound": float(lo), "upper_bound": float(up), "upper_bound_uniform": float(uu), "tightness_value": value}
        for t, lo, up, uu in zip(horizons.tolist(), lower, upper, upper_uniform)
    ]
