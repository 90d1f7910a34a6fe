"""Discrete spread distributions over z-group indices.

A spread PMF assigns to every z-group index k in {1..alpha} the probability
that a partial reward lands in that group. Policies use it to size their
confidence terms and the bounds module uses its first moment and its index
of coincidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

__all__ = [
    "InvalidParameterError",
    "SpreadPmf",
    "PRESETS",
    "uniform_spread",
    "beta_binomial_spread",
    "zipfian_spread",
    "boltzmann_spread",
    "hypergeometric_spread",
    "named_spread",
    "expected_index",
    "index_of_coincidence",
    "spread_from_spec",
]

SUM_TOL = 1e-12

# (a, b) of the shifted Beta-Binomial learners.
PRESETS: dict[str, tuple[float, float]] = {
    "extreme_begin": (1.0, 100.0),
    "very_begin": (1.0, 16.0),
    "begin": (2.0, 8.0),
    "begin_middle": (2.0, 4.0),
    "middle": (5.0, 5.0),
    "middle_end": (4.0, 2.0),
    "end": (8.0, 2.0),
    "very_end": (16.0, 1.0),
}


class InvalidParameterError(ValueError):
    """Raised when a distribution or model parameter is out of its domain."""


@dataclass(frozen=True, eq=False)
class SpreadPmf:
    """PMF over z-group indices; ``probs[k - 1]`` is the mass of group ``k``.

    The probability vector is copied and made read-only on construction.
    """

    alpha: int
    probs: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not isinstance(self.alpha, (int, np.integer)) or self.alpha < 1:
            raise InvalidParameterError(f"alpha must be a positive integer, got {self.alpha!r}")
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if probs.shape[0] != self.alpha:
            raise InvalidParameterError(
                f"expected {self.alpha} probabilities, got {probs.shape[0]}"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidParameterError("probabilities must be finite and non-negative")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > SUM_TOL:
            raise InvalidParameterError(f"probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "probs", probs)

    def __eq__(self, other):
        if not isinstance(other, SpreadPmf):
            return NotImplemented
        return self.alpha == other.alpha and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash((self.alpha, self.probs.tobytes()))

    def __len__(self):
        return self.alpha

    def __iter__(self):
        return iter(self.probs.tolist())

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, self.alpha + 1)

    @property
    def mean(self) -> float:
        return expected_index(self)

    @property
    def coincidence(self) -> float:
        return index_of_coincidence(self)

    def to_dict(self) -> dict:
        return {"kind": "explicit", "alpha": self.alpha, "probs": self.probs.tolist()}


def _normalized(weights: np.ndarray, alpha: int, label: str) -> SpreadPmf:
    weights = np.asarray(weights, dtype=np.float64)
    return SpreadPmf(alpha, weights / weights.sum(), label=label)


def _check_alpha(alpha) -> int:
    if isinstance(alpha, bool) or not isinstance(alpha, (int, np.integer)) or alpha < 1:
        raise InvalidParameterError(f"alpha must be a positive integer, got {alpha!r}")
    return int(alpha)


def uniform_spread(alpha: int) -> SpreadPmf:
    """Uniform spread, i.e. the alpha-smooth case."""
    alpha = _check_alpha(alpha)
    return SpreadPmf(alpha, np.full(alpha, 1.0 / alpha), label=f"uniform({alpha})")


def beta_binomial_spread(alpha: int, a: float, b: float) -> SpreadPmf:
    """Beta-Binomial(alpha - 1, a, b) shifted onto {1..alpha}.

    Evaluated in log space so that alpha in the hundreds does not overflow
    the binomial coefficient or the beta functions.
    """
    alpha = _check_alpha(alpha)
    if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
        raise InvalidParameterError(f"beta-binomial shape parameters must be positive, got a={a!r}, b={b!r}")
    n = alpha - 1
    log_beta_ab = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    logs = np.empty(alpha)
    for x in range(alpha):
        log_choose = math.lgamma(n + 1) - math.lgamma(x + 1) - math.lgamma(n - x + 1)
        log_beta = math.lgamma(x + a) + math.lgamma(n - x + b) - math.lgamma(n + a + b)
        logs[x] = log_choose + log_beta - log_beta_ab
    # renormalize away the lgamma rounding (a few ulps)
    return _normalized(np.exp(logs), alpha, f"beta_binomial({alpha}, {a:g}, {b:g})")


def zipfian_spread(alpha: int, s: float) -> SpreadPmf:
    alpha = _check_alpha(alpha)
    if not (s > 0 and math.isfinite(s)):
        raise InvalidParameterError(f"zipfian exponent must be positive, got {s!r}")
    k = np.arange(1, alpha + 1, dtype=np.float64)
    return _normalized(k ** (-float(s)), alpha, f"zipfian({alpha}, {s:g})")


def boltzmann_spread(alpha: int, lam: float) -> SpreadPmf:
    """Geometric decay ``exp(-lam * (k - 1))``, concentrating at k=1 as lam grows."""
    alpha = _check_alpha(alpha)
    if not (lam > 0 and math.isfinite(lam)):
        raise InvalidParameterError(f"boltzmann lambda must be positive, got {lam!r}")
    k = np.arange(alpha, dtype=np.float64)
    return _normalized(np.exp(-float(lam) * k), alpha, f"boltzmann({alpha}, {lam:g})")


def hypergeometric_spread(alpha: int, n_pop: int) -> SpreadPmf:
    """Hypergeometric(N=n_pop, K=alpha-1, n=alpha-1) shifted onto {1..alpha}."""
    alpha = _check_alpha(alpha)
    if isinstance(n_pop, bool) or not isinstance(n_pop, (int, np.integer)):
        raise InvalidParameterError(f"population size must be an integer, got {n_pop!r}")
    if n_pop < 2 * alpha:
        raise InvalidParameterError(f"population size must be >= 2*alpha = {2 * alpha}, got {n_pop}")
    n_pop = int(n_pop)
    m = alpha - 1
    denom = math.comb(n_pop, m)
    weights = [Fraction(math.comb(m, x) * math.comb(n_pop - m, m - x), denom) for x in range(alpha)]
    return SpreadPmf(alpha, np.array([float(w) for w in weights]), label=f"hypergeometric({alpha}, {n_pop})")


def named_spread(name: str, alpha: int) -> SpreadPmf:
    try:
        a, b = PRESETS[name]
    except KeyError:
        valid = ", ".join(PRESETS)
        raise InvalidParameterError(f"unknown spread preset {name!r}; valid names: {valid}") from None
    pmf = beta_binomial_spread(alpha, a, b)
    return SpreadPmf(pmf.alpha, pmf.probs, label=name)


def _exact_moments(pmf: SpreadPmf) -> tuple[Fraction, Fraction]:
    # Exact rational moments of the normalized PMF: a uniform PMF yields
    # (alpha+1)/2 and 1/alpha exactly even though 1/alpha is not representable.
    probs = [Fraction(p) for p in pmf.probs.tolist()]
    total = sum(probs)
    first = sum(k * p for k, p in enumerate(probs, start=1)) / total
    second = sum(p * p for p in probs) / (total * total)
    return first, second


def expected_index(pmf: SpreadPmf) -> float:
    """Mean z-group index, sum_k k * B(k)."""
    return float(_exact_moments(pmf)[0])


def index_of_coincidence(pmf: SpreadPmf) -> float:
    """sum_k B(k)^2; ranges from 1/alpha (uniform) to 1 (point mass)."""
    return float(_exact_moments(pmf)[1])


def tightness_value(pmf: SpreadPmf) -> float:
    """(2 / (alpha + 1)) * E[Y] * alpha * IC, evaluated exactly then rounded once."""
    first, second = _exact_moments(pmf)
    alpha = pmf.alpha
    return float(Fraction(2, alpha + 1) * first * alpha * second)


def spread_from_spec(spec: Mapping[str, Any] | str, alpha: int | None = None) -> SpreadPmf:
    """Build a PMF from a tagged config record.

    ``alpha`` fills in the record's ``alpha`` when it is absent (a policy's
    distribution inherits the policy's alpha estimate).
    """
    if isinstance(spec, str):
        spec = {"kind": "named", "name": spec} if spec in PRESETS else {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    a = spec.pop("alpha", alpha)
    if a is None:
        raise InvalidParameterError("distribution spec needs an alpha")
    if alpha is not None and a != alpha:
        raise InvalidParameterError(f"distribution alpha {a} does not match expected alpha {alpha}")
    try:
        if kind == "uniform":
            pmf = uniform_spread(a)
        elif kind == "beta_binomial":
            pmf = beta_binomial_spread(a, float(spec.pop("a")), float(spec.pop("b")))
        elif kind == "zipfian":
            pmf = zipfian_spread(a, float(spec.pop("s")))
        elif kind == "boltzmann":
            pmf = boltzmann_spread(a, float(spec.pop("lambda")))
        elif kind == "hypergeometric":
            pmf = hypergeometric_spread(a, int(spec.pop("n_pop")))
        elif kind == "named":
            pmf = named_spread(spec.pop("name"), a)
        elif kind == "explicit":
            pmf = SpreadPmf(a, np.asarray(spec.pop("probs"), dtype=float))
        else:
            raise InvalidParameterError(
                f"unknown distribution kind {kind!r}; expected one of "
                "uniform, beta_binomial, zipfian, boltzmann, hypergeometric, named, explicit"
            )
    except KeyError as exc:
        raise InvalidParameterError(f"distribution {kind!r} is missing parameter {exc.args[0]!r}") from None
    if spec:
        raise InvalidParameterError(f"unexpected distribution fields for {kind!r}: {sorted(spec)}")
    return pmf
