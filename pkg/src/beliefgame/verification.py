"""Independent validation of a candidate value function.

Two checks, both independent of the construction path:

1. The characterization suite: the limit value is the unique continuous
   concave function, differentiable away from p*, satisfying a floor at
   p* (g1), a one-sided drift inequality everywhere (g2), and the same
   relation with equality at every extreme point of its hypograph (g3).

2. A discrete-time belief-grid fixed point: per stage the informed player
   may split the belief (upper concave hull), the belief then drifts one
   step toward p*, and the stage payoff is u.  Its fixed point
   approximates the stage-game values whose limit the solver targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matrix_game import UOracle, eval_u
from .model import DerivedParams, GameSpec
from .solver import KIND_NONLINEAR, PiecewiseValue


@dataclass(frozen=True)
class CharTolerances:
    """Absolute residual tolerances, already scaled by the payoff range."""

    g1: float
    g1_eq: float
    g2: float
    g3: float
    concavity: float
    kink_slope: float

    @staticmethod
    def default(scale: float, lipschitz: float) -> "CharTolerances":
        return CharTolerances(
            g1=1e-5 * scale,
            g1_eq=1e-4 * scale,
            g2=1e-5 * scale,
            g3=1e-4 * scale,
            concavity=1e-7 * scale,
            kink_slope=1e-3 * max(lipschitz, 1.0),
        )


@dataclass
class CharReport:
    concavity_violations: list
    g1_residual: float
    g1_equality_required: bool
    g2_worst: tuple
    g3_worst: tuple
    kink_locations: list
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "concavity_violations": [
                {"triple": list(t), "residual": r} for t, r in self.concavity_violations
            ],
            "g1_residual": self.g1_residual,
            "g1_equality_required": self.g1_equality_required,
            "g2_worst": {"p": self.g2_worst[0], "residual": self.g2_worst[1]},
            "g3_worst": {"p": self.g3_worst[0], "residual": self.g3_worst[1]},
            "kink_locations": list(self.kink_locations),
            "pass": self.passed,
            "details": self.details,
        }


def _joints(pv: PiecewiseValue) -> list[float]:
    return [s.hi for s in pv.segments[:-1]]


def check_characterization(
    pv: PiecewiseValue,
    oracle: UOracle,
    params: DerivedParams,
    tols: CharTolerances | None = None,
    n_samples: int = 2000,
) -> CharReport:
    """Run the characterization suite against exact one-shot values.

    g1: w(p*) >= u(p*), with equality when p* is interior to a nonlinear
    segment or an isolated anchor.  g2: w'(p)(p - p*) + mu (w(p) - u(p))
    >= 0 off p*, with one-sided derivatives at segment joints.  g3: the
    same expression vanishes at extreme points of the hypograph, detected
    as nonlinear-segment interiors, strict-concavity joints, and the two
    endpoint corners.  Kinks anywhere but p* fail the suite.
    """
    if tols is None:
        tols = CharTolerances.default(pv.scale, params.lipschitz_u)
    p_star, mu = params.p_star, params.mu
    bp = pv.breakpoints()
    if bp[0] > 1e-12 or bp[-1] < 1.0 - 1e-12:
        raise ValueError("candidate function must cover [0, 1]")

    # Concavity on a grid refined with the joints.
    grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, n_samples + 1), bp]))
    vals = pv(grid)
    p1, p2, p3 = grid[:-2], grid[1:-1], grid[2:]
    chord = (vals[:-2] * (p3 - p2) + vals[2:] * (p2 - p1)) / (p3 - p1)
    short = vals[1:-1] - chord
    bad = np.nonzero(short < -tols.concavity)[0]
    concavity_violations = [
        ((float(p1[i]), float(p2[i]), float(p3[i])), float(short[i])) for i in bad[:32]
    ]

    # g1 at the invariant belief.
    w_star = float(pv(p_star))
    u_star = oracle.exact(p_star)
    g1_residual = w_star - u_star
    seg_star = pv.segment_at(p_star)
    anchor = any(abs(b - p_star) < 1e-9 for b in bp) and (
        seg_star.kind == KIND_NONLINEAR
        or any(
            abs(s.hi - p_star) < 1e-9 and abs(t.lo - p_star) < 1e-9
            for s, t in zip(pv.segments, pv.segments[1:])
        )
    )
    g1_equality_required = (
        seg_star.kind == KIND_NONLINEAR and seg_star.lo < p_star < seg_star.hi
    ) or anchor
    g1_ok = g1_residual >= -tols.g1
    if g1_equality_required:
        g1_ok = g1_ok and abs(g1_residual) <= tols.g1_eq

    # g2 everywhere off p*.
    def drift_residual(p: float, slope: float, w: float, u: float) -> float:
        return slope * (p - p_star) + mu * (w - u)

    joints = set(_joints(pv))
    g2_worst = (float("nan"), float("inf"))
    for p in grid:
        p = float(p)
        if abs(p - p_star) < 1e-9:
            continue
        u = oracle.exact(p)
        w = float(pv(p))
        sides = ["right"] if p < 1e-12 else ["left"] if p > 1.0 - 1e-12 else ["left", "right"]
        if p not in joints and len(sides) == 2:
            sides = ["right"]
        for side in sides:
            res = drift_residual(p, pv.derivative(p, side), w, u)
            if res < g2_worst[1]:
                g2_worst = (p, res)
    g2_ok = g2_worst[1] >= -tols.g2

    # Kinks: one-sided slope jumps at joints.
    kink_locations = []
    for q in sorted(joints):
        jump = abs(pv.derivative(q, "right") - pv.derivative(q, "left"))
        if jump > tols.kink_slope:
            kink_locations.append(float(q))

    # g3 at extreme points of the hypograph.
    extreme: list[tuple[float, str]] = []
    for seg in pv.segments:
        if seg.kind == KIND_NONLINEAR:
            qs = np.linspace(seg.lo, seg.hi, 52)[1:-1]
            extreme.extend((float(q), "right") for q in qs)
    for q in kink_locations:
        extreme.append((q, "left"))
        extreme.append((q, "right"))
    extreme.append((0.0, "right"))
    extreme.append((1.0, "left"))

    g3_worst = (float("nan"), 0.0)
    for p, side in extreme:
        if abs(p - p_star) < 1e-9:
            continue
        res = drift_residual(p, pv.derivative(p, side), float(pv(p)), oracle.exact(p))
        if abs(res) > abs(g3_worst[1]):
            g3_worst = (p, res)
    g3_ok = abs(g3_worst[1]) <= tols.g3

    kinks_ok = all(abs(q - p_star) < 1e-6 for q in kink_locations)
    passed = bool(
        not concavity_violations and g1_ok and g2_ok and g3_ok and kinks_ok
    )
    return CharReport(
        concavity_violations=concavity_violations,
        g1_residual=g1_residual,
        g1_equality_required=g1_equality_required,
        g2_worst=g2_worst,
        g3_worst=g3_worst,
        kink_locations=kink_locations,
        passed=passed,
        details={
            "tolerances": vars(tols),
            "n_extreme_points": len(extreme),
            "n_grid": int(len(grid)),
        },
    )


# ---------------------------------------------------------------------------
# Discrete-time belief-grid fixed point


class OracleError(RuntimeError):
    """Fixed-point iteration failed to converge; carries the residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class OracleGrid:
    n: float
    grid: np.ndarray
    values: np.ndarray
    iterations: int
    residual: float
    residual_history: np.ndarray
    contraction: float  # e^(-r/n): certified update ratio

    def __call__(self, p):
        return np.interp(p, self.grid, self.values)


def _grid_concave_hull(grid: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Upper concave hull of (grid, vals) evaluated back on the grid."""
    keep = [0]
    for i in range(1, len(grid)):
        while len(keep) >= 2:
            i0, i1 = keep[-2], keep[-1]
            cross = (grid[i1] - grid[i0]) * (vals[i] - vals[i0]) - (
                grid[i] - grid[i0]
            ) * (vals[i1] - vals[i0])
            if cross >= 0.0:
                keep.pop()
            else:
                break
        keep.append(i)
    return np.interp(grid, grid[keep], vals[keep])


def discrete_oracle_value(
    spec: GameSpec,
    n: float,
    grid_size: int = 2001,
    max_iter: int = 40000,
    stop_tol: float | None = None,
) -> OracleGrid:
    """Fixed point of the per-stage split/drift/payoff recursion.

    V <- Hull[(1 - e^(-r/n)) u + e^(-r/n) V(drift(p))] on a uniform belief
    grid, with drift(p) = p e^(-lambda1/n) + (1-p)(1 - e^(-lambda2/n)) and
    V composed with drift by linear interpolation.  Iterates until the
    sup-norm update falls below stop_tol; the update sequence contracts at
    least like e^(-r/n) once past transients.
    """
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    if n <= 0:
        raise ValueError("n must be positive")
    if stop_tol is None:
        stop_tol = 1e-6 * spec.payoff_scale

    grid = np.linspace(0.0, 1.0, grid_size)
    u_grid = np.array([eval_u(spec, float(p)) for p in grid])
    stay = math.exp(-spec.r / n)
    drift = grid * math.exp(-spec.lambda1 / n) + (1.0 - grid) * (-math.expm1(-spec.lambda2 / n))

    V = u_grid.copy()
    history = []
    residual = float("inf")
    for it in range(1, max_iter + 1):
        cont = np.interp(drift, grid, V)
        V_new = _grid_concave_hull(grid, (1.0 - stay) * u_grid + stay * cont)
        residual = float(np.max(np.abs(V_new - V)))
        history.append(residual)
        V = V_new
        if residual < stop_tol:
            break
    else:
        raise OracleError(
            f"no convergence after {max_iter} iterations (residual {residual:.3e})", residual
        )
    return OracleGrid(
        n=float(n),
        grid=grid,
        values=V,
        iterations=it,
        residual=residual,
        residual_history=np.array(history),
        contraction=stay,
    )


def compare_to_oracle(pv: PiecewiseValue, og: OracleGrid) -> float:
    """Sup-norm gap between the candidate function and the grid fixed point."""
    return float(np.max(np.abs(pv(og.grid) - og.values)))
