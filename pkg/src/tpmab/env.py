"""Temporally-partitioned reward environments.

Each pull of arm ``i`` at round ``t`` produces a vector of ``tau_max``
per-round partial rewards. Synthetic arms sample ``alpha`` z-group
aggregates and spread each aggregate evenly over its ``phi = tau_max/alpha``
rounds; trace arms replay recorded per-round vectors.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np

from .spread import InvalidParameterError

__all__ = [
    "UniformScaled",
    "BetaScaled",
    "TraceSampler",
    "ArmSpec",
    "EnvironmentConfig",
    "ObservationBatch",
    "Environment",
    "TraceFormatError",
    "ZETA",
    "SETTING2_CONFIGURATIONS",
    "true_mean",
    "make_setting1",
    "make_setting2",
    "make_trace_env",
    "load_trace",
    "write_trace",
    "environment_from_spec",
]

ZETA = (1, 3, 6, 9, 12, 15, 18, 21, 22, 23)

# configuration -> (tau_max, alpha)
SETTING2_CONFIGURATIONS = {1: (100, 10), 2: (100, 50), 3: (200, 20), 4: (200, 100)}
SCENARIOS = ("uniform", "late", "early")

# pulls drawn per refill of an arm's buffer; part of the stream definition
DRAW_CHUNK = 256

TRACE_HEADER = re.compile(r"^tpmab-trace v1 K=(\d+) tau_max=(\d+)\s*$")


class TraceFormatError(ValueError):
    """A trace file is missing, empty, or contains a malformed record."""


@dataclass(frozen=True)
class UniformScaled:
    """Z_k ~ (max_reward / alpha) * U[0, 1] for every group."""

    kind = "uniform"

    def to_dict(self) -> dict:
        return {"kind": "uniform"}


@dataclass(frozen=True, eq=False)
class BetaScaled:
    """Z_k ~ (max_reward / alpha) * Beta(a[k], b[k])."""

    a: np.ndarray
    b: np.ndarray
    kind = "beta"

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64).reshape(-1)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if a.shape != b.shape:
            raise InvalidParameterError("beta parameter vectors must have equal length")
        if np.any(~(a > 0)) or np.any(~(b > 0)):
            raise InvalidParameterError("beta parameters must be positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __eq__(self, other):
        if not isinstance(other, BetaScaled):
            return NotImplemented
        return bool(np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b))

    def to_dict(self) -> dict:
        return {"kind": "beta", "a": self.a.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class TraceSampler:
    """Uniform resampling (with replacement) of recorded reward vectors."""

    records: np.ndarray  # shape (n_records, tau_max)
    source: str = ""
    kind = "trace"

    def __post_init__(self):
        records = np.array(self.records, dtype=np.float64)
        if records.ndim != 2 or records.shape[0] == 0:
            raise InvalidParameterError("trace sampler needs at least one record")
        records.setflags(write=False)
        object.__setattr__(self, "records", records)

    def __eq__(self, other):
        if not isinstance(other, TraceSampler):
            return NotImplemented
        return bool(np.array_equal(self.records, other.records))

    def to_dict(self) -> dict:
        return {"kind": "trace", "source": self.source, "records": self.records.tolist()}


Sampler = Union[UniformScaled, BetaScaled, TraceSampler]


@dataclass(frozen=True)
class ArmSpec:
    max_reward: float
    sampler: Sampler = field(default_factory=UniformScaled)

    def __post_init__(self):
        if not (self.max_reward > 0 and math.isfinite(self.max_reward)):
            raise InvalidParameterError(f"max_reward must be positive, got {self.max_reward!r}")
        object.__setattr__(self, "max_reward", float(self.max_reward))

    def to_dict(self) -> dict:
        return {"max_reward": self.max_reward, "sampler": self.sampler.to_dict()}


@dataclass(frozen=True)
class EnvironmentConfig:
    num_arms: int
    tau_max: int
    alpha: int
    arms: tuple[ArmSpec, ...]
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        for label, value in (("num_arms", self.num_arms), ("tau_max", self.tau_max), ("alpha", self.alpha)):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidParameterError(f"{label} must be a positive integer, got {value!r}")
        if self.tau_max % self.alpha:
            raise InvalidParameterError(f"alpha={self.alpha} must divide tau_max={self.tau_max}")
        if len(self.arms) != self.num_arms:
            raise InvalidParameterError(f"expected {self.num_arms} arms, got {len(self.arms)}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        for i, arm in enumerate(self.arms):
            s = arm.sampler
            if isinstance(s, BetaScaled) and s.a.shape[0] != self.alpha:
                raise InvalidParameterError(
                    f"arm {i}: beta parameter vectors have length {s.a.shape[0]}, expected alpha={self.alpha}"
                )
            if isinstance(s, TraceSampler) and s.records.shape[1] != self.tau_max:
                raise InvalidParameterError(
                    f"arm {i}: trace records have {s.records.shape[1]} values, expected tau_max={self.tau_max}"
                )

    @property
    def phi(self) -> int:
        return self.tau_max // self.alpha

    @property
    def max_rewards(self) -> np.ndarray:
        return np.array([arm.max_reward for arm in self.arms])

    @property
    def means(self) -> np.ndarray:
        return np.array([true_mean(self, i) for i in range(self.num_arms)])

    @property
    def optimal_arm(self) -> int:
        return int(np.argmax(self.means))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_arms": self.num_arms,
            "tau_max": self.tau_max,
            "alpha": self.alpha,
            "seed": int(self.seed),
            "arms": [arm.to_dict() for arm in self.arms],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EnvironmentConfig":
        arms = []
        for i, raw in enumerate(data["arms"]):
            sampler_spec = dict(raw.get("sampler", {"kind": "uniform"}))
            kind = sampler_spec.get("kind")
            if kind == "uniform":
                sampler: Sampler = UniformScaled()
            elif kind == "beta":
                sampler = BetaScaled(sampler_spec["a"], sampler_spec["b"])
            elif kind == "trace":
                sampler = TraceSampler(np.asarray(sampler_spec["records"]), sampler_spec.get("source", ""))
            else:
                raise InvalidParameterError(f"arms[{i}].sampler.kind: unknown sampler {kind!r}")
            arms.append(ArmSpec(float(raw["max_reward"]), sampler))
        return cls(
            num_arms=int(data.get("num_arms", len(arms))),
            tau_max=int(data["tau_max"]),
            alpha=int(data["alpha"]),
            arms=tuple(arms),
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "")),
        )


@dataclass
class ObservationBatch:
    """Partial rewards revealed at one round, one entry per live pull.

    Entries are ordered by pull round, oldest first.
    """

    round: int
    arms: np.ndarray
    pull_rounds: np.ndarray
    values: np.ndarray

    @classmethod
    def empty(cls, round: int) -> "ObservationBatch":
        return cls(round, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))

    def __len__(self) -> int:
        return int(self.arms.shape[0])

    @property
    def items(self) -> list[tuple[int, int, float]]:
        return list(zip(self.arms.tolist(), self.pull_rounds.tolist(), self.values.tolist()))


def true_mean(config: EnvironmentConfig, arm: int) -> float:
    """Expected cumulative reward of one pull of ``arm``."""
    if not 0 <= arm < config.num_arms:
        raise IndexError(f"arm {arm} out of range for {config.num_arms} arms")
    spec = config.arms[arm]
    s = spec.sampler
    if isinstance(s, UniformScaled):
        return spec.max_reward / 2.0
    if isinstance(s, BetaScaled):
        return spec.max_reward / config.alpha * float(np.sum(s.a / (s.a + s.b)))
    return float(np.mean(s.records.sum(axis=1)))


def sequential_total(x: np.ndarray) -> float:
    """Sum accumulated left to right, as partials are revealed."""
    return float(np.cumsum(x)[-1])


class Environment:
    """Stateful reward generator for one run.

    Every arm owns a Philox stream keyed by the run seed and advanced by a
    fixed jump per arm index, so the n-th pull of an arm gets the same draw
    whatever the pulling policy does.
    """

    def __init__(self, config: EnvironmentConfig, seed: int | None = None):
        self.config = config
        self.seed = int(config.seed if seed is None else seed)
        K, tau = config.num_arms, config.tau_max
        base = np.random.Philox(key=self.seed)
        self._streams = [np.random.Generator(base.jumped(i + 1)) for i in range(K)]
        self._buffers: list[np.ndarray | None] = [None] * K
        self._totals: list[list[float]] = [[] for _ in range(K)]
        self._cursor = [DRAW_CHUNK] * K
        self._scale = np.array([arm.max_reward / config.alpha for arm in config.arms])
        # pending reward vectors, slot (h - 1) % tau holds the pull made at round h
        self._pending = np.zeros((tau, tau))
        self._pending_arm = np.full(tau, -1, dtype=np.int64)
        self._pending_round = np.zeros(tau, dtype=np.int64)
        self._pending_total = np.zeros(tau)

    def _refill(self, arm: int) -> None:
        # Draw the next DRAW_CHUNK pulls of ``arm`` and expand them to
        # per-round vectors plus their left-to-right totals.
        s = self.config.arms[arm].sampler
        rng = self._streams[arm]
        alpha, phi = self.config.alpha, self.config.phi
        if isinstance(s, TraceSampler):
            idx = rng.integers(0, s.records.shape[0], size=DRAW_CHUNK)
            rewards = s.records[idx]
        else:
            if isinstance(s, UniformScaled):
                unit = rng.random((DRAW_CHUNK, alpha))
            else:
                unit = rng.beta(s.a, s.b, size=(DRAW_CHUNK, alpha))
            rewards = np.repeat(unit * self._scale[arm] / phi, phi, axis=1)
        rewards.setflags(write=False)
        self._buffers[arm] = rewards
        self._totals[arm] = np.cumsum(rewards, axis=1)[:, -1].tolist()
        self._cursor[arm] = 0

    def draw(self, arm: int) -> tuple[np.ndarray, float]:
        """Next pull of ``arm``: read-only per-round vector and its cumulative reward."""
        if not 0 <= arm < self.config.num_arms:
            raise IndexError(f"arm {arm} out of range for {self.config.num_arms} arms")
        i = self._cursor[arm]
        if i >= DRAW_CHUNK:
            self._refill(arm)
            i = 0
        self._cursor[arm] = i + 1
        return self._buffers[arm][i], self._totals[arm][i]

    def draw_reward(self, arm: int) -> np.ndarray:
        """Per-round reward vector of the next pull of ``arm`` without scheduling it."""
        return self.draw(arm)[0]

    def draw_groups(self, arm: int) -> np.ndarray:
        """Z-group aggregates of the next pull of ``arm``."""
        x = self.draw(arm)[0]
        return x.reshape(self.config.alpha, self.config.phi).sum(axis=1)

    def sample_pull(self, arm: int, t: int) -> np.ndarray:
        """Draw the reward vector of a pull at round ``t`` and schedule its reveals."""
        x, total = self.draw(arm)
        slot = (t - 1) % self.config.tau_max
        self._pending[slot] = x
        self._pending_arm[slot] = arm
        self._pending_round[slot] = t
        self._pending_total[slot] = total
        return x

    def observe(self, t: int) -> ObservationBatch:
        """Partials revealed at round ``t``: component ``t - h`` of every live pull ``h``."""
        tau = self.config.tau_max
        rounds = self._pending_round
        live = np.flatnonzero((rounds >= 1) & (rounds <= t) & (rounds > t - tau))
        if live.size == 0:
            return ObservationBatch.empty(t)
        live = live[np.argsort(rounds[live], kind="stable")]
        h = rounds[live]
        values = self._pending[live, t - h]
        return ObservationBatch(t, self._pending_arm[live].copy(), h.copy(), values)

    def cumulative_reward(self, h: int) -> float:
        """Cumulative reward of the live pull made at round ``h``."""
        slot = (h - 1) % self.config.tau_max
        if self._pending_round[slot] != h:
            raise KeyError(f"no live pull from round {h}")
        return float(self._pending_total[slot])


def _arms(max_rewards: Sequence[float], samplers: Sequence[Sampler]) -> tuple[ArmSpec, ...]:
    return tuple(ArmSpec(r, s) for r, s in zip(max_rewards, samplers))


def make_setting1(alpha_true: int = 20, tau_max: int = 100, K: int = 10, seed: int = 0) -> EnvironmentConfig:
    """Uniformly spread arms with max rewards 100 * zeta_i."""
    if not 1 <= K <= len(ZETA):
        raise InvalidParameterError(f"setting 1 defines {len(ZETA)} arms, got K={K}")
    rewards = [100.0 * z for z in ZETA[:K]]
    return EnvironmentConfig(
        num_arms=K,
        tau_max=tau_max,
        alpha=alpha_true,
        arms=_arms(rewards, [UniformScaled()] * K),
        seed=seed,
        name=f"setting1(alpha={alpha_true}, tau_max={tau_max})",
    )


def setting2_vectors(configuration: int, scenario: str) -> tuple[np.ndarray, np.ndarray]:
    """(a, b) Beta parameter vectors of a Setting-2 scenario.

    ``late`` ramps a up as 2, 4, ... capped at alpha, with b the mirror
    image; ``early`` swaps the two vectors.
    """
    if configuration not in SETTING2_CONFIGURATIONS:
        raise InvalidParameterError(f"unknown configuration {configuration!r}; expected 1-4")
    if scenario not in SCENARIOS:
        raise InvalidParameterError(f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}")
    _, alpha = SETTING2_CONFIGURATIONS[configuration]
    if scenario == "uniform":
        ones = np.ones(alpha)
        return ones, ones.copy()
    ramp = np.minimum(2.0 * np.arange(1, alpha + 1), alpha)
    mirror = ramp[::-1].copy()
    if scenario == "late":
        return ramp, mirror
    return mirror, ramp


def make_setting2(configuration: int, scenario: str, seed: int = 0) -> EnvironmentConfig:
    """Beta-scaled arms for one configuration/scenario pair."""
    a, b = setting2_vectors(configuration, scenario)
    tau_max, alpha = SETTING2_CONFIGURATIONS[configuration]
    sampler = BetaScaled(a, b)
    return EnvironmentConfig(
        num_arms=len(ZETA),
        tau_max=tau_max,
        alpha=alpha,
        arms=_arms([100.0 * z for z in ZETA], [sampler] * len(ZETA)),
        seed=seed,
        name=f"setting2(configuration={configuration}, scenario={scenario})",
    )


def load_trace(path: str | Path) -> tuple[int, int, list[np.ndarray]]:
    """Parse a trace file into (K, tau_max, per-arm record matrices)."""
    path = Path(path)
    if not path.is_file():
        raise TraceFormatError(f"{path}: trace file not found")
    with path.open(encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header:
            raise TraceFormatError(f"{path}: empty file, 0 records found")
        m = TRACE_HEADER.match(header.strip())
        if not m:
            raise TraceFormatError(
                f"{path}:1: bad header {header.strip()!r}; expected 'tpmab-trace v1 K=<K> tau_max=<tau>'"
            )
        K, tau = int(m.group(1)), int(m.group(2))
        per_arm: list[list[list[float]]] = [[] for _ in range(K)]
        n = 0
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != tau + 1:
                raise TraceFormatError(
                    f"{path}:{lineno}: malformed record with {len(row) - 1} rewards, expected tau_max={tau}"
                )
            try:
                arm = int(row[0])
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: non-numeric field in record") from None
            if not 0 <= arm < K:
                raise TraceFormatError(f"{path}:{lineno}: arm index {arm} out of range for K={K}")
            if any(not math.isfinite(v) or v < 0 for v in values):
                raise TraceFormatError(f"{path}:{lineno}: rewards must be finite and non-negative")
            per_arm[arm].append(values)
            n += 1
    if n == 0:
        raise TraceFormatError(f"{path}: 0 records found")
    missing = [i for i, recs in enumerate(per_arm) if not recs]
    if missing:
        raise TraceFormatError(f"{path}: arms {missing} have zero records")
    return K, tau, [np.array(recs) for recs in per_arm]


def write_trace(path: str | Path, records: Sequence[tuple[int, Sequence[float]]], K: int, tau_max: int) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"tpmab-trace v1 K={K} tau_max={tau_max}\n")
        writer = csv.writer(fh, lineterminator="\n")
        for arm, values in records:
            writer.writerow([arm, *(repr(float(v)) for v in values)])


def make_trace_env(path: str | Path, K: int, tau_max: int, alpha: int = 1, seed: int = 0) -> EnvironmentConfig:
    """Environment replaying recorded per-round reward vectors.

    Each arm's max reward is the largest recorded cumulative reward.
    """
    file_K, file_tau, per_arm = load_trace(path)
    if (file_K, file_tau) != (K, tau_max):
        raise TraceFormatError(
            f"{path}: header declares K={file_K}, tau_max={file_tau} but K={K}, tau_max={tau_max} requested"
        )
    arms = []
    for recs in per_arm:
        top = float(recs.sum(axis=1).max())
        arms.append(ArmSpec(top if top > 0 else 1.0, TraceSampler(recs, str(path))))
    return EnvironmentConfig(K, tau_max, alpha, tuple(arms), seed=seed, name=f"trace({Path(path).name})")


def environment_from_spec(spec: Mapping[str, Any], base_dir: Path | None = None) -> EnvironmentConfig:
    """Resolve the ``environment`` section of an experiment config."""
    spec = dict(spec)
    setting = spec.get("setting")
    if setting in (1, "1", "setting1"):
        return make_setting1(
            alpha_true=int(spec.get("alpha", 20)),
            tau_max=int(spec.get("tau_max", 100)),
            K=int(spec.get("num_arms", 10)),
        )
    if setting in (2, "2", "setting2"):
        if "configuration" not in spec or "scenario" not in spec:
            raise InvalidParameterError("setting 2 needs 'configuration' and 'scenario'")
        return make_setting2(int(spec["configuration"]), str(spec["scenario"]))
    if setting == "trace" or "trace" in spec:
        raw = Path(spec["trace"] if "trace" in spec else spec["path"])
        path = raw if raw.is_absolute() or base_dir is None else base_dir / raw
        if not path.exists():
            from importlib import resources

            bundled = resources.files("tpmab") / "data" / raw.name
            if bundled.is_file():
                path = Path(str(bundled))
        return make_trace_env(path, int(spec["num_arms"]), int(spec["tau_max"]), alpha=int(spec.get("alpha", 1)))
    if setting is not None:
        raise InvalidParameterError(f"unknown setting {setting!r}; expected 1, 2 or 'trace'")
    if "arms" in spec:
        return EnvironmentConfig.from_dict(spec)
    raise InvalidParameterError("environment needs 'setting', 'trace' or an explicit 'arms' list")
