"""One-shot zero-sum matrix games and the belief-indexed value curve u.

The game value is computed by a dense textbook simplex with Bland's rule
(no external LP solver), on the classic scaled formulation: after shifting
all entries positive, the column player's problem becomes

    maximize 1.y   subject to  M y <= 1,  y >= 0,

whose optimum equals 1/value, with the row player's strategy read off the
reduced costs of the slack columns.  Bland's smallest-index rules make the
visited bases, and hence the returned strategies, a deterministic function
of the input (lexicographically smallest optimal basis).

2x2 games additionally run a closed-form solution as an internal
cross-check of the simplex output.

The curve p -> u(p) is packaged as a UOracle: an adaptively refined sample
cache whose piecewise-linear interpolant is certified to stay within
refine_tol of the true curve, plus exact (LP-backed) evaluation on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DerivedParams, GameSpec

_SIMPLEX_TOL = 1e-11


@dataclass(frozen=True)
class MatrixGameSolution:
    """Value and certifying mixed strategies of a zero-sum matrix game."""

    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray


def _simplex_maximize(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Maximize c.x subject to A x <= b (b >= 0), x >= 0.

    Returns (x, objective, duals).  Bland's rule on both the entering and
    leaving choice; guaranteed to terminate.
    """
    m, n = A.shape
    # Tableau columns: n structural + m slack + rhs; objective row last.
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -c
    basis = list(range(n, n + m))

    while True:
        red = T[-1, :-1]
        candidates = np.nonzero(red < -_SIMPLEX_TOL)[0]
        if candidates.size == 0:
            break
        j = int(candidates[0])  # Bland: smallest entering index
        col = T[:m, j]
        rows = np.nonzero(col > _SIMPLEX_TOL)[0]
        if rows.size == 0:
            raise FloatingPointError("unbounded linear program")
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + _SIMPLEX_TOL]
        i = int(ties[np.argmin([basis[t] for t in ties])])  # Bland: smallest leaving basis index
        piv = T[i, j]
        T[i, :] /= piv
        for k in range(m + 1):
            if k != i and T[k, j] != 0.0:
                T[k, :] -= T[k, j] * T[i, :]
        basis[i] = j

    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    duals = T[-1, n:n + m].copy()
    return x[:n], float(T[-1, -1]), duals


def _solve_2x2(M: np.ndarray) -> float:
    """Closed-form value of a 2x2 zero-sum game."""
    a, b = M[0, 0], M[0, 1]
    c, d = M[1, 0], M[1, 1]
    row_min = min(a, b), min(c, d)
    col_max = max(a, c), max(b, d)
    lower = max(row_min)
    upper = min(col_max)
    if lower >= upper - 1e-14 * (1.0 + abs(lower)):
        return float(lower)  # saddle point in pure strategies
    denom = a - b - c + d
    return float((a * d - b * c) / denom)


def matrix_game_value(M: np.ndarray) -> MatrixGameSolution:
    """Minimax value and optimal mixed strategies of the matrix game M.

    Row player maximizes, column player minimizes.  Deterministic for
    identical input.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("payoff matrix must be 2-D and nonempty")
    if not np.all(np.isfinite(M)):
        raise ValueError("payoff matrix has non-finite entries")
    m, n = M.shape

    shift = 1.0 - float(M.min())
    Mp = M + shift  # all entries >= 1
    y_scaled, obj, duals = _simplex_maximize(Mp, np.ones(m), np.ones(n))
    value_shifted = 1.0 / obj
    value = value_shifted - shift

    col = y_scaled * value_shifted
    row = duals * value_shifted
    # Normalize away simplex roundoff; both sums equal 1/value_shifted exactly
    # at the optimum, so this is a pure cleanup step.
    col = np.maximum(col, 0.0)
    row = np.maximum(row, 0.0)
    col /= col.sum()
    row /= row.sum()

    scale = max(1.0, float(np.abs(M).max()))
    if (m, n) == (2, 2):
        v_cf = _solve_2x2(M)
        if abs(v_cf - value) > 1e-8 * scale:
            raise AssertionError(
                f"2x2 cross-check failed: simplex {value!r} vs closed form {v_cf!r}"
            )
    guarantee_row = float(np.min(row @ M))
    guarantee_col = float(np.max(M @ col))
    if guarantee_row < value - 1e-9 * scale or guarantee_col > value + 1e-9 * scale:
        raise AssertionError("minimax certificate violated")
    return MatrixGameSolution(value=value, row_strategy=row, col_strategy=col)


def eval_u(spec: GameSpec, p: float) -> float:
    """Value of the one-shot game at belief p (probability of state s1)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"belief must lie in [0, 1], got {p!r}")
    return matrix_game_value(spec.matrix_at(p)).value


@dataclass
class UOracle:
    """Evaluable curve p -> u(p) with a certified sample cache.

    nodes/values hold exact (LP-computed) samples; interp() evaluates the
    piecewise-linear interpolant, whose error is kept below refine_tol by
    adaptive bisection.  exact() always solves the matrix game.  The cache
    is append-only after construction; evaluation is pure.
    """

    spec: GameSpec
    params: DerivedParams
    nodes: np.ndarray
    values: np.ndarray
    refine_tol: float
    kink_candidates: np.ndarray
    _exact_cache: dict = field(default_factory=dict, repr=False)

    @property
    def lipschitz(self) -> float:
        return self.params.lipschitz_u

    def exact(self, p: float) -> float:
        p = float(p)
        hit = self._exact_cache.get(p)
        if hit is None:
            hit = eval_u(self.spec, p)
            self._exact_cache[p] = hit
        return hit

    def interp(self, p):
        return np.interp(p, self.nodes, self.values)

    def __call__(self, p):
        return self.interp(p)

    def mirrored(self) -> "UOracle":
        """View of the curve under p -> 1-p."""
        return UOracle(
            spec=self.spec.mirrored(),
            params=self.params.mirrored(),
            nodes=1.0 - self.nodes[::-1],
            values=self.values[::-1].copy(),
            refine_tol=self.refine_tol,
            kink_candidates=np.sort(1.0 - self.kink_candidates),
        )


def _max_interp_error_bound(width: float, dval: float, lipschitz: float) -> float:
    """Worst-case gap between a Lipschitz curve and its chord on an interval."""
    return 0.5 * max(width * lipschitz - abs(dval), 0.0)


def build_u_oracle(
    spec: GameSpec,
    params: DerivedParams | None = None,
    resolution: int = 1025,
    refine_tol: float | None = None,
) -> UOracle:
    """Sample u on a uniform grid and bisect until the interpolant is safe.

    An interval is accepted once the Lipschitz certificate bounds its chord
    error by refine_tol, or once a midpoint probe shows the measured error
    is below refine_tol/4 (a kink anywhere in the interval shows at least
    half of its peak deviation at the midpoint, so the accepted error stays
    below refine_tol/2).  Kink candidates are flagged where the slope jump
    between adjacent chords is large.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    from .model import derive_params

    if params is None:
        params = derive_params(spec)
    if refine_tol is None:
        refine_tol = 1e-6 * spec.payoff_scale

    lipschitz = params.lipschitz_u
    cache: dict[float, float] = {}

    def u(p: float) -> float:
        hit = cache.get(p)
        if hit is None:
            hit = eval_u(spec, p)
            cache[p] = hit
        return hit

    grid = np.linspace(0.0, 1.0, resolution)
    for p in grid:
        u(float(p))

    min_width = max(2.0 * refine_tol / max(lipschitz, 1e-12), 1e-9)
    stack = [(float(grid[i]), float(grid[i + 1])) for i in range(resolution - 1)]
    while stack:
        a, b = stack.pop()
        width = b - a
        if width <= min_width:
            continue
        ua, ub = u(a), u(b)
        if _max_interp_error_bound(width, ub - ua, lipschitz) <= refine_tol:
            continue
        mid = 0.5 * (a + b)
        err = abs(u(mid) - 0.5 * (ua + ub))
        if err <= 0.25 * refine_tol:
            continue
        stack.append((a, mid))
        stack.append((mid, b))

    nodes = np.array(sorted(cache))
    values = np.array([cache[p] for p in nodes])

    # Sanity: values within payoff bounds and Lipschitz between neighbors.
    if values.min() < spec.payoff_min - 1e-9 or values.max() > spec.payoff_max + 1e-9:
        raise AssertionError("one-shot values escaped the payoff range")
    gaps = np.diff(nodes)
    if np.any(np.abs(np.diff(values)) > lipschitz * gaps + 1e-9 * spec.payoff_scale):
        raise AssertionError("cached samples violate the Lipschitz bound")

    kinks = _find_kinks(nodes, values, lipschitz)
    oracle = UOracle(
        spec=spec,
        params=params,
        nodes=nodes,
        values=values,
        refine_tol=refine_tol,
        kink_candidates=kinks,
    )
    oracle._exact_cache.update(cache)
    return oracle


def _find_kinks(nodes: np.ndarray, values: np.ndarray, lipschitz: float) -> np.ndarray:
    if len(nodes) < 3:
        return np.empty(0)
    slopes = np.diff(values) / np.diff(nodes)
    jumps = np.abs(np.diff(slopes))
    thresh = 0.05 * max(lipschitz, 1e-9)
    where = np.nonzero(jumps > thresh)[0]
    if where.size == 0:
        return np.empty(0)
    # Cluster candidates closer than 1e-4 and keep the sharpest of each run.
    locs = nodes[where + 1]
    out = []
    start = 0
    for i in range(1, len(locs) + 1):
        if i == len(locs) or locs[i] - locs[i - 1] > 1e-4:
            run = slice(start, i)
            best = where[run][np.argmax(jumps[where[run]])]
            out.append(nodes[best + 1])
            start = i
    return np.array(out)
