"""Bundled experiment configurations."""

from __future__ import annotations

import copy
from typing import Any

from .env import SCENARIOS, SETTING2_CONFIGURATIONS
from .spread import PRESETS

__all__ = ["PRESET_NAMES", "preset_config", "learner_set"]

DEFAULT_HORIZON = 100_000
DEFAULT_RUNS = 100


def learner_set(alpha_est: int) -> list[dict[str, Any]]:
    """UCB1, Delayed-UCB1, TP-UCB-FR and one TP-UCB-FR-G per named spread."""
    learners: list[dict[str, Any]] = [
        {"name": "UCB1", "kind": "ucb1"},
        {"name": "Delayed-UCB1", "kind": "delayed_ucb1"},
        {"name": f"TP-UCB-FR({alpha_est})", "kind": "tp_ucb_fr", "alpha_est": alpha_est},
    ]
    for name in PRESETS:
        learners.append(
            {
                "name": f"TP-UCB-FR-G({alpha_est}, {name})",
                "kind": "tp_ucb_fr_g",
                "alpha_est": alpha_est,
                "distribution": {"kind": "named", "name": name},
            }
        )
    return learners


def _build() -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for alpha_est in (5, 10, 20, 25, 50):
        name = f"setting1_alpha{alpha_est}"
        out[name] = {
            "name": name,
            "environment": {"setting": 1, "alpha": 20, "tau_max": 100},
            "policies": learner_set(alpha_est),
            "horizon": DEFAULT_HORIZON,
            "runs": DEFAULT_RUNS,
            "seed": 0,
            "checkpoint_stride": 100,
        }
    for c, (_, alpha) in SETTING2_CONFIGURATIONS.items():
        for scenario in SCENARIOS:
            name = f"setting2_c{c}_{scenario}"
            out[name] = {
                "name": name,
                "environment": {"setting": 2, "configuration": c, "scenario": scenario},
                "policies": learner_set(alpha),
                "horizon": DEFAULT_HORIZON,
                "runs": DEFAULT_RUNS,
                "seed": 0,
                "checkpoint_stride": 100,
            }
    out["trace_demo"] = {
        "name": "trace_demo",
        "environment": {"setting": "trace", "trace": "demo_trace.csv", "num_arms": 3, "tau_max": 4, "alpha": 2},
        "policies": [
            {"name": "UCB1", "kind": "ucb1"},
            {"name": "Delayed-UCB1", "kind": "delayed_ucb1"},
            {"name": "TP-UCB-FR(2)", "kind": "tp_ucb_fr", "alpha_est": 2},
            {
                "name": "TP-UCB-FR-G(2, begin)",
                "kind": "tp_ucb_fr_g",
                "alpha_est": 2,
                "distribution": {"kind": "named", "name": "begin"},
            },
        ],
        "horizon": 5_000,
        "runs": 10,
        "seed": 0,
        "checkpoint_stride": 10,
    }
    return out


_PRESETS = _build()
PRESET_NAMES = tuple(_PRESETS)


def preset_config(name: str) -> dict[str, Any]:
    """A fresh copy of a bundled config dict."""
    try:
        return copy.deepcopy(_PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") from None
