"""Game description, validation, and derived parameters.

A game instance is two payoff matrices (one per hidden state), two
state-switching rates, and a discount rate.  Everything downstream is
expressed in the continuous-time parameterization (lambda1, lambda2, r);
per-stage probabilities for a stage length 1/n are always derived, never
taken as input, so a description cannot be internally inconsistent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class GameSpecError(ValueError):
    """Raised when a game description fails validation."""


_SPEC_KEYS = {"matrix_s1", "matrix_s2", "lambda1", "lambda2", "r", "name"}


@dataclass(frozen=True)
class GameSpec:
    """Validated two-state zero-sum game with one informed player.

    matrix_s1[a, b] is the stage payoff to the maximizer when the hidden
    state is s1 and the players choose actions a (row) and b (column);
    matrix_s2 is the same for state s2.  lambda1 is the rate of leaving s1,
    lambda2 the rate of leaving s2, r the discount rate.
    """

    matrix_s1: np.ndarray
    matrix_s2: np.ndarray
    lambda1: float
    lambda2: float
    r: float
    name: str = ""

    @property
    def payoff_min(self) -> float:
        return float(min(self.matrix_s1.min(), self.matrix_s2.min()))

    @property
    def payoff_max(self) -> float:
        return float(max(self.matrix_s1.max(), self.matrix_s2.max()))

    @property
    def payoff_scale(self) -> float:
        """Payoff range, floored so tolerance products stay positive."""
        return max(self.payoff_max - self.payoff_min, 1e-9)

    def matrix_at(self, p: float) -> np.ndarray:
        """Stage-payoff matrix when s1 has probability p."""
        return p * self.matrix_s1 + (1.0 - p) * self.matrix_s2

    def mirrored(self) -> "GameSpec":
        """Same game with the roles of the two states swapped (p -> 1-p)."""
        return GameSpec(
            matrix_s1=self.matrix_s2,
            matrix_s2=self.matrix_s1,
            lambda1=self.lambda2,
            lambda2=self.lambda1,
            r=self.r,
            name=self.name + ":mirrored" if self.name else "mirrored",
        )


@dataclass(frozen=True)
class DerivedParams:
    """Quantities derived from the rates.

    p_star is the invariant probability of s1, mu the ratio of discounting
    to mixing, lipschitz_u a bound on the slope of the one-shot value curve.
    """

    p_star: float
    mu: float
    lipschitz_u: float

    def mirrored(self) -> "DerivedParams":
        return DerivedParams(1.0 - self.p_star, self.mu, self.lipschitz_u)


@dataclass(frozen=True)
class DiscreteParams:
    """Per-stage probabilities for the game with stage length 1/n."""

    n: float
    delta: float
    pi1: float
    pi2: float


def _as_matrix(value, key: str) -> np.ndarray:
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise GameSpecError(f"{key}: not a numeric matrix") from exc
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise GameSpecError(f"{key}: expected a 2-D matrix with at least one row and column")
    if not np.all(np.isfinite(m)):
        raise GameSpecError(f"{key}: non-finite entries")
    m.setflags(write=False)
    return m


def validate_spec(raw: dict) -> tuple[GameSpec, DerivedParams]:
    """Validate a raw game description and compute derived parameters.

    Rejects malformed input with a distinct diagnostic per failure mode:
    unknown keys, shape mismatch, degenerate chain (lambda1 + lambda2 = 0),
    nonpositive discount rate, non-finite entries.
    """
    if not isinstance(raw, dict):
        raise GameSpecError("game description must be a JSON object")
    unknown = set(raw) - _SPEC_KEYS
    if unknown:
        raise GameSpecError(f"unknown keys: {sorted(unknown)}")
    missing = _SPEC_KEYS - {"name"} - set(raw)
    if missing:
        raise GameSpecError(f"missing keys: {sorted(missing)}")

    m1 = _as_matrix(raw["matrix_s1"], "matrix_s1")
    m2 = _as_matrix(raw["matrix_s2"], "matrix_s2")
    if m1.shape != m2.shape:
        raise GameSpecError(f"dimension mismatch: matrix_s1 is {m1.shape}, matrix_s2 is {m2.shape}")

    def _rate(key: str) -> float:
        v = raw[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise GameSpecError(f"{key}: expected a finite number")
        return float(v)

    lambda1 = _rate("lambda1")
    lambda2 = _rate("lambda2")
    r = _rate("r")
    if lambda1 < 0 or lambda2 < 0:
        raise GameSpecError("transition rates must be nonnegative")
    if lambda1 + lambda2 == 0:
        raise GameSpecError("degenerate chain: lambda1 + lambda2 must be positive")
    if r <= 0:
        raise GameSpecError("discount rate r must be positive")

    name = raw.get("name", "")
    if not isinstance(name, str):
        raise GameSpecError("name: expected a string")

    spec = GameSpec(m1, m2, lambda1, lambda2, r, name)
    params = derive_params(spec)
    return spec, params


def derive_params(spec: GameSpec) -> DerivedParams:
    total = spec.lambda1 + spec.lambda2
    p_star = spec.lambda2 / total
    mu = spec.r / total
    lipschitz = float(np.max(np.abs(spec.matrix_s1 - spec.matrix_s2)))
    return DerivedParams(p_star=p_star, mu=mu, lipschitz_u=lipschitz)


def discrete_step_params(spec: GameSpec, n: float) -> DiscreteParams:
    """Per-stage discount and switching probabilities for stage length 1/n."""
    if n <= 0:
        raise GameSpecError("n must be positive")
    return DiscreteParams(
        n=float(n),
        delta=-math.expm1(-spec.r / n),
        pi1=-math.expm1(-spec.lambda1 / n),
        pi2=-math.expm1(-spec.lambda2 / n),
    )


def load_spec(path: str) -> tuple[GameSpec, DerivedParams]:
    """Read and validate a game-description JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameSpecError(f"invalid JSON: {exc}") from exc
    return validate_spec(raw)
