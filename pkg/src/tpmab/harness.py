"""Seeded Monte-Carlo experiments, pseudo-regret tracking and export."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence, Union

import numpy as np

from . import __version__
from .env import Environment, EnvironmentConfig, environment_from_spec
from .policies import Policy, policy_display_name, policy_from_spec
from .spread import InvalidParameterError

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentError",
    "PolicyEntry",
    "ExperimentConfig",
    "RegretTrace",
    "PolicyAggregate",
    "AggregateResult",
    "checkpoint_rounds",
    "run_episode",
    "run_experiment",
    "aggregate_traces",
    "export_results",
    "load_config",
    "summary_table",
]

PolicySpec = Union[Mapping[str, Any], Callable[[EnvironmentConfig, int], Policy]]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicyEntry:
    name: str
    spec: Mapping[str, Any]

    @property
    def kind(self) -> str:
        if callable(self.spec):
            return "custom"
        return str(self.spec.get("kind"))


@dataclass
class ExperimentConfig:
    environment: EnvironmentConfig
    policies: list[PolicyEntry]
    horizon: int
    num_runs: int = 1
    base_seed: int = 0
    checkpoint_stride: int = 100
    out_dir: str | None = None
    name: str = "experiment"
    formats: tuple[str, ...] = ("csv", "json")
    source: Mapping[str, Any] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.horizon < self.environment.num_arms:
            raise ConfigError(
                f"horizon: T={self.horizon} is shorter than the {self.environment.num_arms}-round initialization"
            )
        if self.num_runs < 1:
            raise ConfigError("runs: need at least one run")
        if self.checkpoint_stride < 1:
            raise ConfigError("checkpoint_stride: must be positive")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        if not self.policies:
            raise ConfigError("policies: at least one policy is required")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config root must be an object")
        unknown = set(data) - {"name", "environment", "policies", "horizon", "runs", "seed", "checkpoint_stride", "output"}
        if unknown:
            raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
        for key in ("environment", "policies", "horizon"):
            if key not in data:
                raise ConfigError(f"{key}: missing required section")
        try:
            env = environment_from_spec(data["environment"], base_dir=base_dir)
        except (InvalidParameterError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"environment: {_reason(exc)}") from exc
        if not isinstance(data["policies"], list):
            raise ConfigError("policies: must be a list")
        entries = []
        for i, raw in enumerate(data["policies"]):
            if not isinstance(raw, Mapping):
                raise ConfigError(f"policies[{i}]: must be an object")
            spec = dict(raw)
            name = spec.pop("name", None) or policy_display_name(spec)
            try:
                policy_from_spec(spec, env.num_arms, env.tau_max, env.max_rewards)
            except (InvalidParameterError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"policies[{i}] ({name}): {_reason(exc)}") from exc
            entries.append(PolicyEntry(name, spec))
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ConfigError(f"policies: display names must be unique, got {names}")
        output = data.get("output", {}) or {}
        try:
            return cls(
                environment=env,
                policies=entries,
                horizon=_int_field(data, "horizon"),
                num_runs=_int_field(data, "runs", 1),
                base_seed=_int_field(data, "seed", 0),
                checkpoint_stride=_int_field(data, "checkpoint_stride", 100),
                out_dir=output.get("dir"),
                name=str(data.get("name") or output.get("name") or "experiment"),
                formats=tuple(output.get("formats", ("csv", "json"))),
                source=data,
            )
        except ConfigError:
            raise

    def to_dict(self) -> dict:
        if self.source is not None:
            echo = dict(self.source)
        else:
            echo = {"environment": self.environment.to_dict()}
        echo.update(
            name=self.name,
            policies=[{"name": e.name, **(e.spec if not callable(e.spec) else {"kind": "custom"})} for e in self.policies],
            horizon=self.horizon,
            runs=self.num_runs,
            seed=self.base_seed,
            checkpoint_stride=self.checkpoint_stride,
        )
        return echo


def _reason(exc: BaseException) -> str:
    if isinstance(exc, KeyError):
        return f"missing field {exc.args[0]!r}"
    return str(exc)


def _int_field(data: Mapping[str, Any], key: str, default: int | None = None) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return value


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON experiment config; syntax errors carry line and column."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        config = ExperimentConfig.from_dict(data, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if config.name == "experiment" and not data.get("name"):
        config.name = path.stem
    return config


@dataclass
class RegretTrace:
    """Pseudo-regret at checkpoint rounds for one seeded run."""

    rounds: np.ndarray
    values: np.ndarray
    time_averaged: float
    arms: np.ndarray | None = None

    @property
    def final(self) -> float:
        return float(self.values[-1])


def checkpoint_rounds(horizon: int, stride: int) -> np.ndarray:
    rounds = np.arange(stride, horizon + 1, stride, dtype=np.int64)
    if rounds.size == 0 or rounds[-1] != horizon:
        rounds = np.append(rounds, horizon)
    return rounds


def _build_policy(env_config: EnvironmentConfig, policy_spec: PolicySpec, seed: int) -> Policy:
    if isinstance(policy_spec, Policy):
        raise ConfigError("pass a policy spec or factory, not a live policy instance")
    if callable(policy_spec):
        policy = policy_spec(env_config, seed)
    else:
        spec = dict(policy_spec)
        spec.pop("name", None)
        for key, have in (("tau_max", env_config.tau_max), ("num_arms", env_config.num_arms)):
            if key in spec and int(spec.pop(key)) != have:
                raise ConfigError(f"policy {key} does not match the environment ({have})")
        try:
            policy = policy_from_spec(spec, env_config.num_arms, env_config.tau_max, env_config.max_rewards, seed=seed)
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from exc
    if policy.num_arms != env_config.num_arms or policy.tau_max != env_config.tau_max:
        raise ConfigError(
            f"policy expects K={policy.num_arms}, tau_max={policy.tau_max}; "
            f"environment has K={env_config.num_arms}, tau_max={env_config.tau_max}"
        )
    return policy


def run_episode(
    env_config: EnvironmentConfig,
    policy_spec: PolicySpec,
    horizon: int,
    seed: int,
    checkpoint_stride: int = 100,
    engine: str = "fast",
    record_arms: bool = False,
) -> RegretTrace:
    """Simulate ``horizon`` rounds of one policy and record pseudo-regret.

    ``engine="reference"`` routes every round through
    :meth:`Environment.observe` and :meth:`Policy.update`; ``"fast"`` keeps
    a per-arm schedule of future partials and feeds the policy per-arm
    aggregates. Both produce identical arm sequences.
    """
    if horizon < env_config.num_arms:
        raise ConfigError(f"horizon {horizon} is shorter than the initialization phase ({env_config.num_arms})")
    policy = _build_policy(env_config, policy_spec, seed)
    env = Environment(env_config, seed)
    means = env_config.means
    gaps = means.max() - means
    checkpoints = checkpoint_rounds(horizon, checkpoint_stride)
    values = np.empty(checkpoints.size)
    arms = np.empty(horizon, dtype=np.int64) if record_arms else None
    regret = 0.0
    area = 0.0
    nxt = 0
    K, tau = env_config.num_arms, env_config.tau_max

    if engine == "reference":
        for t in range(1, horizon + 1):
            arm = policy.select_arm(t)
            env.sample_pull(arm, t)
            policy.update(env.observe(t))
            regret += gaps[arm]
            area += regret
            if arms is not None:
                arms[t - 1] = arm
            if t == checkpoints[nxt]:
                values[nxt] = regret
                nxt += 1
    elif engine == "fast":
        # column p of the schedule holds round-(p+1 mod tau) reveals; the
        # upper half is folded down once per tau rounds
        schedule = np.zeros((K, 2 * tau))
        for t in range(1, horizon + 1):
            arm = policy.select_arm(t)
            x, total = env.draw(arm)
            p = (t - 1) % tau
            schedule[arm, p : p + tau] += x
            increments = schedule[:, p].copy()
            policy.advance(arm, t, increments, total)
            if p == tau - 1:
                schedule[:, :tau] = schedule[:, tau:]
                schedule[:, tau:] = 0.0
            regret += gaps[arm]
            area += regret
            if arms is not None:
                arms[t - 1] = arm
            if t == checkpoints[nxt]:
                values[nxt] = regret
                nxt += 1
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return RegretTrace(checkpoints, values, area / horizon, arms)


@dataclass(eq=False)
class PolicyAggregate:
    name: str
    kind: str
    rounds: np.ndarray
    mean: np.ndarray
    ci: np.ndarray
    final_mean: float
    final_ci: float
    time_averaged_mean: float
    time_averaged_ci: float
    num_runs: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "num_runs": self.num_runs,
            "rounds": self.rounds.tolist(),
            "mean_regret": self.mean.tolist(),
            "ci_half_width": self.ci.tolist(),
            "final_regret": self.final_mean,
            "final_ci_half_width": self.final_ci,
            "time_averaged_regret": self.time_averaged_mean,
            "time_averaged_ci_half_width": self.time_averaged_ci,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PolicyAggregate":
        return cls(
            name=d["name"],
            kind=d.get("kind", ""),
            rounds=np.asarray(d["rounds"], dtype=np.int64),
            mean=np.asarray(d["mean_regret"], dtype=np.float64),
            ci=np.asarray(d["ci_half_width"], dtype=np.float64),
            final_mean=float(d["final_regret"]),
            final_ci=float(d["final_ci_half_width"]),
            time_averaged_mean=float(d["time_averaged_regret"]),
            time_averaged_ci=float(d["time_averaged_ci_half_width"]),
            num_runs=int(d["num_runs"]),
        )


@dataclass(eq=False)
class AggregateResult:
    policies: list[PolicyAggregate]
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> PolicyAggregate:
        for p in self.policies:
            if p.name == name:
                return p
        raise KeyError(name)

    def __eq__(self, other):
        if not isinstance(other, AggregateResult):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "policies": [p.to_dict() for p in self.policies]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AggregateResult":
        return cls([PolicyAggregate.from_dict(p) for p in d.get("policies", [])], dict(d.get("metadata", {})))

    @classmethod
    def from_json(cls, path: str | Path) -> "AggregateResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _ci(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1:])
    return 1.96 * samples.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate_traces(name: str, kind: str, traces: Sequence[RegretTrace]) -> PolicyAggregate:
    """Mean and normal-approximation 95% half-width across runs."""
    values = np.stack([tr.values for tr in traces])
    averaged = np.array([tr.time_averaged for tr in traces])
    ci = _ci(values)
    return PolicyAggregate(
        name=name,
        kind=kind,
        rounds=traces[0].rounds.copy(),
        mean=values.mean(axis=0),
        ci=ci,
        final_mean=float(values[:, -1].mean()),
        final_ci=float(ci[-1]),
        time_averaged_mean=float(averaged.mean()),
        time_averaged_ci=float(_ci(averaged[:, None])[0]),
        num_runs=len(traces),
    )


def _episode_task(args):
    env_config, spec, horizon, seed, stride = args
    return run_episode(env_config, spec, horizon, seed, stride)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> AggregateResult:
    """Run every policy for ``num_runs`` seeds ``base_seed + r``.

    Run ``r`` of every policy sees the same environment streams. Results
    are reduced in (policy, run) order, so output does not depend on
    ``workers``.
    """
    seeds = [config.base_seed + r for r in range(config.num_runs)]
    if seeds[-1] >= 2**64:
        raise ConfigError("seed: base_seed + runs overflows 64 bits")
    env = config.environment
    for entry in config.policies:
        _build_policy(env, entry.spec, seeds[0])
    tasks = [
        (env, entry.spec if callable(entry.spec) else dict(entry.spec), config.horizon, seed, config.checkpoint_stride)
        for entry in config.policies
        for seed in seeds
    ]
    labels = [(entry.name, seed) for entry in config.policies for seed in seeds]
    traces: list[RegretTrace] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_episode_task, task) for task in tasks]
            for (name, seed), fut in zip(labels, futures):
                try:
                    traces.append(fut.result())
                except Exception as exc:
                    for f in futures:
                        f.cancel()
                    raise ExperimentError(f"policy {name!r}, seed {seed}: {exc}") from exc
    else:
        for (name, seed), task in zip(labels, tasks):
            try:
                traces.append(_episode_task(task))
            except Exception as exc:
                raise ExperimentError(f"policy {name!r}, seed {seed}: {exc}") from exc
            log.debug("finished %s seed %d", name, seed)
    n = config.num_runs
    aggregates = [
        aggregate_traces(entry.name, entry.kind, traces[i * n : (i + 1) * n])
        for i, entry in enumerate(config.policies)
    ]
    metadata = {
        "version": __version__,
        "config": config.to_dict(),
        "environment": env.name or "custom",
        "seeds": seeds,
        "horizon": config.horizon,
        "checkpoint_stride": config.checkpoint_stride,
    }
    return AggregateResult(aggregates, metadata)


CSV_COLUMNS = ("policy_name", "t", "mean_regret", "ci_half_width")


def export_results(result: AggregateResult, fmt: str, path: str | Path) -> Path:
    """Write ``result`` as CSV (one row per policy and checkpoint) or JSON."""
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for p in result.policies:
                    for t, m, c in zip(p.rounds.tolist(), p.mean.tolist(), p.ci.tolist()):
                        writer.writerow([p.name, t, repr(m), repr(c)])
        elif fmt == "json":
            path.write_text(json.dumps(result.to_dict(), indent=1) + "\n", encoding="utf-8")
        else:
            raise ValueError(f"unknown export format {fmt!r}; expected csv or json")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return path


def summary_table(result: AggregateResult) -> str:
    """Policies sorted by time-averaged regret, with % decrease vs TP-UCB-FR."""
    ref = next((p for p in result.policies if p.kind == "tp_ucb_fr"), None)
    rows = sorted(result.policies, key=lambda p: p.time_averaged_mean)
    width = max([len(p.name) for p in rows] + [6])
    header = f"{'policy':<{width}}  {'avg regret':>12}  {'CI (95%)':>10}  {'final':>12}"
    if ref is not None:
        header += f"  {'decrease vs ' + ref.name:>24}"
    lines = [header, "-" * len(header)]
    for p in rows:
        line = f"{p.name:<{width}}  {p.time_averaged_mean:12.4g}  {p.time_averaged_ci:10.3g}  {p.final_mean:12.4g}"
        if ref is not None:
            dec = 100.0 * (1.0 - p.time_averaged_mean / ref.time_averaged_mean) if ref.time_averaged_mean else 0.0
            line += f"  {dec:23.1f}%"
        lines.append(line)
    return "\n".join(lines)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
