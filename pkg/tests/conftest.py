import numpy as np
import pytest

from beliefgame import (
    build_policy,
    build_u_oracle,
    derive_params,
    solve_limit_value,
    upper_concave_envelope,
    validate_spec,
)

# Payoff matrices shared by the bundled games.
CONCAVE = ([[1, 0], [0, 0]], [[0, 0], [0, 1]])          # u = p(1-p)
CONVEX = ([[-1, 0], [0, 0]], [[0, 0], [0, -1]])         # u = -p(1-p)
MIXED = ([[1, 0], [0, 2]], [[-2, 0], [0, -1]])          # convex / flat / convex

CASES = {
    "reveal_none": (*CONCAVE, 1.0, 0.0, 1.0),
    "reveal_all": (*CONVEX, 1.0, 0.0, 1.0),
    "reveal_partial": (*MIXED, 1.0, 0.0, 1.0),
    "reveal_partial_interior": (*MIXED, 3.0, 1.0, 1.0),
    "kink_at_stationary": (*MIXED, 4.0 / 3.0, 2.0 / 3.0, 1.0),
}

PBAR = (np.sqrt(13.0) - 1.0) / 6.0


def make_spec(name):
    m1, m2, l1, l2, r = CASES[name]
    return validate_spec(
        {"matrix_s1": m1, "matrix_s2": m2, "lambda1": l1, "lambda2": l2, "r": r, "name": name}
    )


def u_mixed(p):
    """Closed form of the one-shot value for the MIXED payoff matrices."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        core = (9 * p**2 - 9 * p + 2) / (6 * p - 3)
    return np.where((p > 1 / 3) & (p <= 2 / 3), 0.0, core)


def v_reveal_none(p):
    p = np.asarray(p, dtype=float)
    return p / 2 - p**2 / 3


def v_reveal_partial(p):
    p = np.asarray(p, dtype=float)
    return np.where(
        p < 1 / 3,
        p - 2 / 3,
        np.where(p < PBAR, -1 / (9 * np.maximum(p, 1e-12)), -1 / (9 * PBAR) + (p - PBAR) / (9 * PBAR**2)),
    )


def interior_switch_point():
    """Switch point for the interior variation: root of (1-p)(4p-1)^(-5/4) = 3^(1/4)."""
    from scipy.optimize import brentq

    return brentq(lambda p: (1 - p) * (4 * p - 1) ** (-1.25) - 3**0.25, 0.34, 0.6, xtol=1e-14)


class Solved:
    def __init__(self, name):
        self.name = name
        self.spec, self.params = make_spec(name)
        self.oracle = build_u_oracle(self.spec, self.params)
        self.env = upper_concave_envelope(self.oracle)
        self.pv, self.trace = solve_limit_value(self.spec, oracle=self.oracle)

    @property
    def policy(self):
        return build_policy(self.pv, self.params, self.spec.lambda1 + self.spec.lambda2)


@pytest.fixture(scope="session")
def solved():
    """name -> Solved pipeline outputs, computed once per session."""
    return {name: Solved(name) for name in CASES}
