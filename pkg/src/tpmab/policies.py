"""UCB-style learners for temporally-partitioned rewards.

All learners share one bookkeeping core: per-arm pull counts, the running
total of every partial reward revealed so far, and a ring of live pulls
(at most ``tau_max - 1`` after an update) whose rewards are still arriving.
A live pull contributes its partial sum so far, which is its fictitious
cumulative reward with the unseen partials counted as zero.
"""

from __future__ import annotations

import math
from typing import Any, Mapping, Sequence

import numpy as np

from .env import ObservationBatch
from .spread import (
    InvalidParameterError,
    SpreadPmf,
    expected_index,
    index_of_coincidence,
    spread_from_spec,
    uniform_spread,
)

__all__ = [
    "ArmNotInitializedError",
    "InvalidRoundError",
    "ConsistencyError",
    "Policy",
    "TPUCBFRG",
    "TPUCBFR",
    "UCB1",
    "DelayedUCB1",
    "UniformRandom",
    "make_tp_ucb_fr_g",
    "make_tp_ucb_fr",
    "make_ucb1",
    "make_delayed_ucb1",
    "policy_from_spec",
    "policy_display_name",
]


class ArmNotInitializedError(RuntimeError):
    pass


class InvalidRoundError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    """An observation does not match the policy's record of live pulls."""


class Policy:
    """Shared state and bookkeeping; subclasses define :meth:`indices`."""

    kind = "base"

    def __init__(self, num_arms: int, tau_max: int, max_rewards: Sequence[float]):
        if num_arms < 1:
            raise InvalidParameterError("a policy needs at least one arm")
        if tau_max < 1:
            raise InvalidParameterError("tau_max must be positive")
        max_rewards = np.asarray(max_rewards, dtype=np.float64)
        if max_rewards.shape != (num_arms,) or np.any(~(max_rewards > 0)):
            raise InvalidParameterError(f"need {num_arms} positive max rewards")
        self.num_arms = int(num_arms)
        self.tau_max = int(tau_max)
        self.max_rewards = max_rewards
        self.counts = np.zeros(num_arms, dtype=np.int64)
        self._nf = np.zeros(num_arms)  # float mirror of counts for index arithmetic
        self.observed = np.zeros(num_arms)
        self.completed_sums = np.zeros(num_arms)
        self.completed_counts = np.zeros(num_arms, dtype=np.int64)
        self.clock = 1
        # live-pull ring, slot (h - 1) % tau_max
        self._win_arm = np.full(tau_max, -1, dtype=np.int64)
        self._win_round = np.zeros(tau_max, dtype=np.int64)
        self._win_partial = np.zeros(tau_max)

    # --- selection -------------------------------------------------------

    def indices(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def select_arm(self, t: int) -> int:
        if t <= self.num_arms:
            return t - 1
        return int(self.indices(t).argmax())

    # --- statistics ------------------------------------------------------

    def estimated_mean(self, arm: int | None = None):
        """Completed rewards plus fictitious rewards of live pulls, over N_i."""
        if arm is None:
            if np.any(self.counts == 0):
                raise ArmNotInitializedError("some arms have not been pulled")
            return self.observed / self.counts
        if self.counts[arm] == 0:
            raise ArmNotInitializedError(f"arm {arm} has not been pulled")
        return float(self.observed[arm] / self.counts[arm])

    @property
    def live_pulls(self) -> list[tuple[int, int, float]]:
        """(pull round, arm, partial sum so far) of every live pull, oldest first."""
        slots = np.flatnonzero(self._win_arm >= 0)
        slots = slots[np.argsort(self._win_round[slots])]
        return [(int(self._win_round[s]), int(self._win_arm[s]), float(self._win_partial[s])) for s in slots]

    @property
    def fictitious_sums(self) -> np.ndarray:
        live = self._win_arm >= 0
        return np.bincount(self._win_arm[live], weights=self._win_partial[live], minlength=self.num_arms)

    # --- updates ---------------------------------------------------------

    def update(self, batch: ObservationBatch) -> None:
        """Absorb one round of partial rewards and advance the clock."""
        t = batch.round
        if t != self.clock:
            raise ConsistencyError(f"batch for round {t} but policy clock is at {self.clock}")
        tau = self.tau_max
        for arm, h in zip(batch.arms.tolist(), batch.pull_rounds.tolist()):
            slot = (h - 1) % tau
            if h == t:
                if self._win_arm[slot] >= 0:
                    raise ConsistencyError(f"round {t} reveals a second pull")
                if not 0 <= arm < self.num_arms:
                    raise ConsistencyError(f"round {t}: pull of unknown arm {arm}")
                self.counts[arm] += 1
                self._nf[arm] += 1.0
                self._win_arm[slot] = arm
                self._win_round[slot] = h
                self._win_partial[slot] = 0.0
            elif not (t - tau < h < t) or self._win_round[slot] != h or self._win_arm[slot] != arm:
                raise ConsistencyError(f"round {t}: observation for unknown live pull (arm {arm}, round {h})")
        slots = (batch.pull_rounds - 1) % tau
        self._win_partial[slots] += batch.values
        increments = np.bincount(batch.arms, weights=batch.values, minlength=self.num_arms)
        self._absorb(increments)
        self._complete(t)
        self.clock += 1

    def _record_pull(self, arm: int, t: int) -> None:
        slot = (t - 1) % self.tau_max
        self.counts[arm] += 1
        self._nf[arm] += 1.0
        self._win_arm[slot] = arm
        self._win_round[slot] = t
        self._win_partial[slot] = 0.0

    def _absorb(self, increments: np.ndarray) -> None:
        self.observed += increments

    def _complete(self, t: int) -> None:
        # the pull from round t - tau_max + 1 received its last partial this round
        h = t - self.tau_max + 1
        if h < 1:
            return
        slot = (h - 1) % self.tau_max
        arm = self._win_arm[slot]
        if arm < 0 or self._win_round[slot] != h:
            return
        self.completed_sums[arm] += self._win_partial[slot]
        self.completed_counts[arm] += 1
        self._win_arm[slot] = -1

    def advance(self, arm: int, t: int, increments: np.ndarray, pull_total: float) -> None:
        """Bulk update for a driver that aggregates reveals per arm itself.

        ``increments`` are the per-arm sums of the partials revealed at round
        ``t`` (accumulated in pull order) and ``pull_total`` the cumulative
        reward of the pull made at ``t``. Live partial sums are not tracked
        on this path; completion uses the pull's total directly.
        """
        self._record_pull(arm, t)
        self._win_partial[(t - 1) % self.tau_max] = pull_total
        self._absorb(increments)
        self._complete(t)
        self.clock += 1


class TPUCBFRG(Policy):
    """Fictitious-reward UCB with a spread-aware confidence term.

    ``c_i = (phi * Rbar_i / N_i) * E[Y] + Rbar_i * sqrt(2 ln(t - 1) * IC / N_i)``
    where E[Y] and IC are the mean index and index of coincidence of ``spread``.
    """

    kind = "tp_ucb_fr_g"

    def __init__(self, num_arms, tau_max, alpha_est, spread: SpreadPmf, max_rewards):
        super().__init__(num_arms, tau_max, max_rewards)
        if alpha_est < 1 or tau_max % alpha_est:
            raise InvalidParameterError(f"alpha_est={alpha_est} must divide tau_max={tau_max}")
        if spread.alpha != alpha_est:
            raise InvalidParameterError(f"spread has alpha={spread.alpha}, expected alpha_est={alpha_est}")
        self.alpha_est = int(alpha_est)
        self.phi = tau_max // alpha_est
        self.spread = spread
        self._mean_index, self._coincidence = self._moments()
        self._bias = self.phi * self.max_rewards * self._mean_index

    def _moments(self) -> tuple[float, float]:
        return expected_index(self.spread), index_of_coincidence(self.spread)

    def confidence_term(self, arm: int | None = None, t: int | None = None):
        """Confidence width of one arm, or of every arm when ``arm`` is None."""
        if t is None:
            t = self.clock
        if t < 2:
            raise InvalidRoundError(f"confidence term needs t >= 2, got {t}")
        if np.any(self.counts == 0):
            raise ArmNotInitializedError("confidence term needs every arm pulled at least once")
        width = self._width(t)
        return width if arm is None else float(width[arm])

    def _width(self, t: int) -> np.ndarray:
        log_term = math.log(max(t - 1, 1))
        n = self._nf
        return self._bias / n + self.max_rewards * np.sqrt(2.0 * log_term * self._coincidence / n)

    def indices(self, t: int) -> np.ndarray:
        return self.observed / self._nf + self._width(t)


class TPUCBFR(TPUCBFRG):
    """The alpha-smooth special case: uniform spread, closed-form moments."""

    kind = "tp_ucb_fr"

    def __init__(self, num_arms, tau_max, alpha_est, max_rewards):
        super().__init__(num_arms, tau_max, alpha_est, uniform_spread(alpha_est), max_rewards)

    def _moments(self) -> tuple[float, float]:
        return (self.alpha_est + 1) / 2, 1 / self.alpha_est


class UCB1(Policy):
    """UCB1 on fictitious cumulative rewards, exploration scaled by max reward."""

    kind = "ucb1"

    def __init__(self, num_arms, tau_max, max_rewards):
        super().__init__(num_arms, tau_max, max_rewards)
        self.scale = float(np.max(self.max_rewards))

    def indices(self, t: int) -> np.ndarray:
        return self.observed / self._nf + self.scale * np.sqrt(2.0 * math.log(t) / self._nf)


class DelayedUCB1(UCB1):
    """UCB1 that only uses pulls whose full reward has arrived.

    Arms without a completed pull get an infinite index.
    """

    kind = "delayed_ucb1"

    def indices(self, t: int) -> np.ndarray:
        m = self.completed_counts
        out = np.full(self.num_arms, np.inf)
        done = m > 0
        out[done] = self.completed_sums[done] / m[done] + self.scale * np.sqrt(2.0 * math.log(t) / m[done])
        return out


class UniformRandom(Policy):
    """Pulls arms uniformly at random after the round-robin start."""

    kind = "uniform_random"

    def __init__(self, num_arms, tau_max, max_rewards, seed: int = 0):
        super().__init__(num_arms, tau_max, max_rewards)
        self._rng = np.random.Generator(np.random.Philox(key=seed).jumped(num_arms + 1))

    def select_arm(self, t: int) -> int:
        if t <= self.num_arms:
            return t - 1
        return int(self._rng.integers(self.num_arms))


def _rewards(K, max_rewards):
    if max_rewards is None:
        return np.ones(K)
    return max_rewards


def make_tp_ucb_fr_g(K: int, tau_max: int, alpha_est: int, B: SpreadPmf, max_rewards=None) -> TPUCBFRG:
    return TPUCBFRG(K, tau_max, alpha_est, B, _rewards(K, max_rewards))


def make_tp_ucb_fr(K: int, tau_max: int, alpha_est: int, max_rewards=None) -> TPUCBFR:
    return TPUCBFR(K, tau_max, alpha_est, _rewards(K, max_rewards))


def make_ucb1(K: int, tau_max: int = 1, max_rewards=None) -> UCB1:
    return UCB1(K, tau_max, _rewards(K, max_rewards))


def make_delayed_ucb1(K: int, tau_max: int, max_rewards=None) -> DelayedUCB1:
    return DelayedUCB1(K, tau_max, _rewards(K, max_rewards))


POLICY_KINDS = ("tp_ucb_fr_g", "tp_ucb_fr", "ucb1", "delayed_ucb1", "uniform_random")


def policy_display_name(spec: Mapping[str, Any]) -> str:
    if spec.get("name"):
        return str(spec["name"])
    kind = spec.get("kind")
    if kind == "tp_ucb_fr_g":
        dist = spec.get("distribution", "uniform")
        if isinstance(dist, Mapping):
            dist = dist.get("name") or dist.get("kind")
        return f"TP-UCB-FR-G({spec.get('alpha_est')}, {dist})"
    if kind == "tp_ucb_fr":
        return f"TP-UCB-FR({spec.get('alpha_est')})"
    return {"ucb1": "UCB1", "delayed_ucb1": "Delayed-UCB1", "uniform_random": "Uniform-Random"}.get(kind, str(kind))


def policy_from_spec(spec: Mapping[str, Any], num_arms: int, tau_max: int, max_rewards, seed: int = 0) -> Policy:
    """Instantiate a policy from a config record."""
    kind = spec.get("kind")
    if kind not in POLICY_KINDS:
        raise InvalidParameterError(f"unknown policy kind {kind!r}; expected one of {', '.join(POLICY_KINDS)}")
    if kind in ("tp_ucb_fr_g", "tp_ucb_fr"):
        if "alpha_est" not in spec:
            raise InvalidParameterError(f"policy {kind!r} needs 'alpha_est'")
        alpha_est = int(spec["alpha_est"])
        if alpha_est < 1 or tau_max % alpha_est:
            raise InvalidParameterError(f"alpha_est={alpha_est} must divide tau_max={tau_max}")
        if kind == "tp_ucb_fr":
            return TPUCBFR(num_arms, tau_max, alpha_est, max_rewards)
        spread = spread_from_spec(spec.get("distribution", {"kind": "uniform"}), alpha=alpha_est)
        return TPUCBFRG(num_arms, tau_max, alpha_est, spread, max_rewards)
    if kind == "ucb1":
        return UCB1(num_arms, tau_max, max_rewards)
    if kind == "delayed_ucb1":
        return DelayedUCB1(num_arms, tau_max, max_rewards)
    return UniformRandom(num_arms, tau_max, max_rewards, seed=seed)
