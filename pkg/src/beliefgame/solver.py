"""Finite-step construction of the limit value function.

Starting from the split interval around the invariant belief, the value
function is extended outward one interval at a time.  At each frontier
point the best achievable slope by jumping the belief inward from some
farther point is compared with the slope of the no-revelation flow; the
better regime wins and determines the next interval:

* a "linear" interval, where the value is affine and the belief avoids the
  interior (interior beliefs split to the endpoints, the far endpoint
  holds and jumps inward at a random time), or
* a "nonlinear" interval, where no information is revealed and the value
  follows the one-dimensional flow  w'(p) = mu (u(p) - w(p)) / (p - p*).

The construction below works upward from p* toward 1; the downward side is
obtained by running the same engine on the game with the states swapped
(p -> 1-p), which is an exact symmetry of all the defining quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .envelope import InitialSegment, initial_interval, initial_segment, upper_concave_envelope
from .matrix_game import UOracle, build_u_oracle
from .model import DerivedParams, GameSpec, derive_params

KIND_INITIAL = "initial_split"
KIND_LINEAR = "linear"
KIND_NONLINEAR = "nonlinear"

# Within this distance of p* the curve u is evaluated exactly rather than
# from the cache, because the flow slope divides by (p - p*).
_STAR_GUARD = 0.02


class SolverError(RuntimeError):
    """Solver could not make progress; carries the trace built so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolveOptions:
    resolution: int = 1025
    refine_tol: float | None = None
    ode_step: float = 1e-4
    tol_rho: float = 1e-6
    eps_progress: float = 1e-7
    max_intervals: int = 200

    def scaled(self, spec: GameSpec, params: DerivedParams) -> "ScaledTols":
        s = spec.payoff_scale
        return ScaledTols(
            tol_eq=1e-6 * s,
            tol_join=1e-7 * s,
            tol_slope=max(1e-5 * s * params.lipschitz_u, 1e-10),
            tol_argmax=1e-8 * s,
        )


@dataclass(frozen=True)
class ScaledTols:
    tol_eq: float
    tol_join: float
    tol_slope: float
    tol_argmax: float


# ---------------------------------------------------------------------------
# Best jump slope


def _one_sided_u_slope(oracle: UOracle, p: float, direction: int) -> float:
    """One-sided derivative of u at p by a Richardson difference quotient."""
    h = 1e-6 * direction
    u0 = oracle.exact(p)
    d1 = (oracle.exact(p + h) - u0) / h
    d2 = (oracle.exact(p + 2 * h) - u0) / (2 * h)
    return 2.0 * d1 - d2


def _golden_max(fn, a: float, b: float, tol: float = 1e-12):
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = fn(c), fn(d)
    while d - c > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def slope_sup(
    p: float,
    f_at_p: float,
    oracle: UOracle,
    params: DerivedParams,
    opts: SolveOptions = SolveOptions(),
    polish: bool = True,
) -> tuple[float, float]:
    """Best slope achievable at p by a jump from some p' in (p, 1].

    Returns (a, rho) where a is the supremum of

        mu (u(p') - f_at_p) / (p' - p* + mu (p' - p))

    over p' in (p, 1] (closed-interval maximum; the p' -> p limit is the
    no-revelation slope) and rho is the largest maximizer.  rho == p means
    no jump improves on revealing nothing.

    The scan runs over the oracle's cache nodes, where u is known exactly;
    between nodes the interpolated objective is a ratio of affine functions
    and therefore attains its maximum at the nodes.  With polish=True every
    bracketed local maximum is refined by golden section on the exact
    curve, and the largest abscissa within tol_argmax of the best value is
    returned.
    """
    if p >= 1.0:
        raise ValueError("slope_sup requires p < 1")
    p_star, mu = params.p_star, params.mu
    if p < p_star - 1e-9:
        raise ValueError("slope_sup is defined on the upper side: p >= p*")
    tols = opts.scaled(oracle.spec, params)

    at_star = abs(p - p_star) <= 1e-12

    def objective(pp: float) -> float:
        return mu * (oracle.exact(pp) - f_at_p) / (pp - p_star + mu * (pp - p))

    # Candidate abscissas: the continuous extension at p' = p, all cache
    # nodes above p, and the right endpoint.
    if at_star:
        local = mu / (1.0 + mu) * _one_sided_u_slope(oracle, p_star, +1)
    else:
        u_p = oracle.exact(p) if (polish or p - p_star < _STAR_GUARD) else float(oracle.interp(p))
        local = mu * (u_p - f_at_p) / (p - p_star)

    mask = oracle.nodes > p + 1e-15
    cand_p = oracle.nodes[mask]
    cand_v = mu * (oracle.values[mask] - f_at_p) / (cand_p - p_star + mu * (cand_p - p))
    if cand_p.size == 0 or cand_p[-1] < 1.0 - 1e-15:
        cand_p = np.append(cand_p, 1.0)
        cand_v = np.append(cand_v, objective(1.0))

    abscissas = np.concatenate(([p], cand_p))
    values = np.concatenate(([local], cand_v))

    if polish and len(abscissas) > 2:
        interior = np.arange(1, len(abscissas) - 1)
        is_local = (values[interior] >= values[interior - 1]) & (
            values[interior] >= values[interior + 1]
        )
        locals_idx = list(interior[is_local])
        if values[-1] >= values[-2]:
            locals_idx.append(len(abscissas) - 1)
        best_raw = float(values.max())
        locals_idx = [i for i in locals_idx if values[i] >= best_raw - 1e-3 * oracle.spec.payoff_scale]
        locals_idx = sorted(locals_idx, key=lambda i: -values[i])[:16]
        extra_p, extra_v = [], []
        for i in locals_idx:
            lo = abscissas[i - 1]
            hi = abscissas[i + 1] if i + 1 < len(abscissas) else 1.0
            x, v = _golden_max(objective, float(lo), float(min(hi, 1.0)))
            extra_p.append(x)
            extra_v.append(v)
        if extra_p:
            abscissas = np.concatenate((abscissas, extra_p))
            values = np.concatenate((values, extra_v))

    best = float(values.max())
    tie = abscissas[values >= best - tols.tol_argmax]
    rho = float(tie.max())
    if rho <= p + opts.tol_rho:
        rho = p
    return best, rho


def slope_inf(
    p: float,
    f_at_p: float,
    oracle: UOracle,
    params: DerivedParams,
    opts: SolveOptions = SolveOptions(),
    polish: bool = True,
) -> tuple[float, float]:
    """Mirror of slope_sup over p' in [0, p): the infimum slope and its
    smallest minimizer.  Implemented exactly through the p -> 1-p symmetry."""
    if p <= 0.0:
        raise ValueError("slope_inf requires p > 0")
    if p > params.p_star + 1e-9:
        raise ValueError("slope_inf is defined on the lower side: p <= p*")
    a_m, rho_m = slope_sup(1.0 - p, f_at_p, oracle.mirrored(), params.mirrored(), opts, polish)
    return -a_m, 1.0 - rho_m


# ---------------------------------------------------------------------------
# No-revelation flow


@dataclass
class DenseCurve:
    """Fixed-step samples of the flow with monotone-cubic interpolation."""

    ps: np.ndarray
    vs: np.ndarray
    _interp: PchipInterpolator | None = field(default=None, repr=False)

    def _ensure(self):
        if self._interp is None:
            if len(self.ps) >= 2:
                self._interp = PchipInterpolator(self.ps, self.vs)
            else:
                v = float(self.vs[0])
                self._interp = lambda x: np.full_like(np.asarray(x, dtype=float), v)
        return self._interp

    def __call__(self, p):
        return self._ensure()(p)


def solve_nonrevealing(
    oracle: UOracle,
    params: DerivedParams,
    p_start: float,
    v_start: float,
    p_stop: float,
    ode_step: float = 1e-4,
) -> DenseCurve:
    """Integrate w'(p) = mu (u(p) - w(p)) / (p - p*) from p_start to p_stop.

    Classic fixed-step fourth-order Runge-Kutta; the interval must not
    straddle p*.  When p_start equals p*, the first slope uses the
    regularized limit  mu/(1+mu) u'(p*+-)  of the right-hand side.
    """
    p_star, mu = params.p_star, params.mu
    direction = 1.0 if p_stop >= p_start else -1.0
    lo, hi = min(p_start, p_stop), max(p_start, p_stop)
    if lo < p_star - 1e-12 and hi > p_star + 1e-12:
        raise ValueError("integration interval must not contain p* in its interior")

    start_slope = None
    if abs(p_start - p_star) <= 1e-12:
        start_slope = mu / (1.0 + mu) * _one_sided_u_slope(oracle, p_star, int(direction))

    def u_at(p: float) -> float:
        if abs(p - p_star) < _STAR_GUARD:
            return oracle.exact(p)
        return float(oracle.interp(p))

    def rhs(p: float, v: float) -> float:
        den = p - p_star
        if abs(den) <= 1e-14:
            return start_slope if start_slope is not None else 0.0
        return mu * (u_at(p) - v) / den

    n_steps = max(1, int(math.ceil(abs(p_stop - p_start) / ode_step)))
    h = (p_stop - p_start) / n_steps
    ps = np.empty(n_steps + 1)
    vs = np.empty(n_steps + 1)
    p, v = p_start, v_start
    ps[0], vs[0] = p, v
    for i in range(n_steps):
        k1 = rhs(p, v)
        k2 = rhs(p + 0.5 * h, v + 0.5 * h * k1)
        k3 = rhs(p + 0.5 * h, v + 0.5 * h * k2)
        k4 = rhs(p + h, v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        p = p_start + (i + 1) * h
        ps[i + 1], vs[i + 1] = p, v
    if direction < 0:
        ps, vs = ps[::-1].copy(), vs[::-1].copy()
    return DenseCurve(ps, vs)


def find_regime_switch(
    curve: DenseCurve,
    oracle: UOracle,
    params: DerivedParams,
    p_k: float,
    opts: SolveOptions = SolveOptions(),
) -> float:
    """First p > p_k where jumping beats the no-revelation flow.

    Along the flow the no-revelation slope equals the local limit of the
    jump objective; a switch occurs where some farther jump target exceeds
    it by more than tol_eq.  The samples are scanned (vectorized over the
    cache nodes), then the trigger is bisected to width 1e-9.  Returns 1.0
    when the flow stays optimal to the end.
    """
    p_star, mu = params.p_star, params.mu
    tols = opts.scaled(oracle.spec, params)
    nodes, uvals = oracle.nodes, oracle.values

    def excess_many(ps: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """a(p, curve) - local slope for a batch of points on the curve."""
        out = np.empty(len(ps))
        for i, (p, v) in enumerate(zip(ps, vs)):
            mask = nodes > p + 1e-15
            num = mu * (uvals[mask] - v)
            den = nodes[mask] - p_star + mu * (nodes[mask] - p)
            far = (num / den).max() if mask.any() else -np.inf
            u_p = oracle.exact(p) if (p - p_star) < _STAR_GUARD else float(np.interp(p, nodes, uvals))
            local = mu * (u_p - v) / (p - p_star) if p > p_star + 1e-14 else mu / (1.0 + mu) * _one_sided_u_slope(oracle, p_star, +1)
            out[i] = far - local
        return out

    ps, vs = curve.ps, curve.vs
    scan = np.nonzero(ps > p_k + 1e-15)[0]
    trigger = None
    chunk = 512
    for s in range(0, len(scan), chunk):
        idx = scan[s:s + chunk]
        ex = excess_many(ps[idx], vs[idx])
        hit = np.nonzero(ex > tols.tol_eq)[0]
        if hit.size:
            trigger = int(idx[hit[0]])
            break
    if trigger is None:
        return 1.0

    lo = p_k if trigger == 0 else float(ps[trigger - 1])
    hi = float(ps[trigger])
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        ex = excess_many(np.array([mid]), np.array([float(curve(mid))]))[0]
        if ex > tols.tol_eq:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Piecewise value function


@dataclass
class Segment:
    """One tile of the value function on [lo, hi].

    Affine payload for initial_split/linear kinds; dense flow samples with
    monotone-cubic interpolation for the nonlinear kind.  jump_target on a
    linear segment is the endpoint the belief jumps to; the endpoints of an
    initial_split segment are mutual jump targets.
    """

    lo: float
    hi: float
    kind: str
    slope: float | None = None
    intercept: float | None = None
    samples: np.ndarray | None = None
    jump_target: float | None = None
    _interp: PchipInterpolator | None = field(default=None, repr=False, compare=False)

    @staticmethod
    def affine(lo, hi, kind, slope, intercept, jump_target=None) -> "Segment":
        return Segment(lo=lo, hi=hi, kind=kind, slope=slope, intercept=intercept,
                       jump_target=jump_target)

    @staticmethod
    def nonlinear(lo, hi, samples: np.ndarray) -> "Segment":
        return Segment(lo=lo, hi=hi, kind=KIND_NONLINEAR, samples=samples)

    def _pchip(self) -> PchipInterpolator:
        if self._interp is None:
            self._interp = PchipInterpolator(self.samples[:, 0], self.samples[:, 1])
        return self._interp

    def value(self, p):
        if self.kind == KIND_NONLINEAR:
            return self._pchip()(p)
        return self.slope * np.asarray(p, dtype=float) + self.intercept

    def deriv(self, p):
        if self.kind == KIND_NONLINEAR:
            return self._pchip().derivative()(p)
        return np.full_like(np.asarray(p, dtype=float), self.slope)

    def to_dict(self) -> dict:
        out = {"lo": self.lo, "hi": self.hi, "kind": self.kind}
        if self.kind == KIND_NONLINEAR:
            out["samples"] = self.samples.tolist()
        else:
            out["slope"] = self.slope
            out["intercept"] = self.intercept
        if self.jump_target is not None:
            out["jump_target"] = self.jump_target
        return out

    @staticmethod
    def from_dict(d: dict) -> "Segment":
        if d["kind"] == KIND_NONLINEAR:
            return Segment.nonlinear(d["lo"], d["hi"], np.asarray(d["samples"], dtype=float))
        return Segment.affine(d["lo"], d["hi"], d["kind"], d["slope"], d["intercept"],
                              d.get("jump_target"))


@dataclass
class PiecewiseValue:
    """The assembled value function: ordered segments tiling [0, 1]."""

    segments: list
    params: DerivedParams
    scale: float

    def __post_init__(self):
        self._his = np.array([s.hi for s in self.segments])

    def segment_at(self, p: float) -> Segment:
        i = int(np.searchsorted(self._his, p, side="left"))
        i = min(i, len(self.segments) - 1)
        return self.segments[i]

    def __call__(self, p):
        arr = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.empty_like(arr)
        idx = np.minimum(np.searchsorted(self._his, arr, side="left"), len(self.segments) - 1)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = self.segments[i].value(arr[sel])
        return out if np.ndim(p) else float(out[0])

    def derivative(self, p: float, side: str = "right") -> float:
        """One-sided slope; side is 'left' or 'right'.

        At a joint, 'right' uses the segment above and 'left' the segment
        below, so the two calls expose a kink when there is one.
        """
        mode = "right" if side == "right" else "left"
        idx = int(np.searchsorted(self._his, p, side=mode))
        idx = min(max(idx, 0), len(self.segments) - 1)
        seg = self.segments[idx]
        q = min(max(p, seg.lo), seg.hi)
        return float(seg.deriv(q))

    def breakpoints(self) -> np.ndarray:
        return np.concatenate(([self.segments[0].lo], self._his))

    def validate(self, tol_join: float | None = None, tol_slope: float | None = None) -> None:
        """Raise if the segments fail tiling, continuity, concavity, or
        smoothness away from p*."""
        tol_join = 1e-7 * self.scale if tol_join is None else tol_join
        tol_slope = max(1e-5 * self.scale * self.params.lipschitz_u, 1e-10) if tol_slope is None else tol_slope
        segs = self.segments
        if abs(segs[0].lo) > 1e-12 or abs(segs[-1].hi - 1.0) > 1e-12:
            raise AssertionError("segments do not cover [0, 1]")
        for a, b in zip(segs, segs[1:]):
            if abs(a.hi - b.lo) > 1e-12:
                raise AssertionError(f"segment gap at {a.hi!r}")
            va = float(a.value(a.hi))
            vb = float(b.value(b.lo))
            if abs(va - vb) > tol_join:
                raise AssertionError(f"value jump {va - vb:.3e} at joint {a.hi:.6f}")
            if abs(a.hi - self.params.p_star) > 1e-9:
                sa = float(a.deriv(a.hi))
                sb = float(b.deriv(b.lo))
                if abs(sa - sb) > tol_slope:
                    raise AssertionError(
                        f"slope jump {sa - sb:.3e} at joint {a.hi:.6f} (away from p*)"
                    )
        grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, 801), self.breakpoints()]))
        vals = self(grid)
        p1, p2, p3 = grid[:-2], grid[1:-1], grid[2:]
        chord = (vals[:-2] * (p3 - p2) + vals[2:] * (p2 - p1)) / (p3 - p1)
        short = vals[1:-1] - chord
        if np.any(short < -tol_join):
            i = int(np.argmin(short))
            raise AssertionError(f"concavity violated near p={grid[i + 1]:.6f}")

    def to_dict(self) -> dict:
        return {
            "p_star": self.params.p_star,
            "mu": self.params.mu,
            "lipschitz_u": self.params.lipschitz_u,
            "scale": self.scale,
            "segments": [s.to_dict() for s in self.segments],
        }

    @staticmethod
    def from_dict(d: dict) -> "PiecewiseValue":
        params = DerivedParams(d["p_star"], d["mu"], d["lipschitz_u"])
        segs = [Segment.from_dict(s) for s in d["segments"]]
        return PiecewiseValue(segments=segs, params=params, scale=d["scale"])


@dataclass(frozen=True)
class TraceStep:
    p: float
    kind: str
    slope_bound: float
    rho: float


@dataclass
class AlgorithmTrace:
    p_tilde0: float
    p0: float
    increasing: list
    decreasing: list
    increasing_breakpoints: list
    decreasing_breakpoints: list
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "p_tilde0": self.p_tilde0,
            "p0": self.p0,
            "increasing": [vars(s) for s in self.increasing],
            "decreasing": [vars(s) for s in self.decreasing],
            "increasing_breakpoints": list(self.increasing_breakpoints),
            "decreasing_breakpoints": list(self.decreasing_breakpoints),
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Passes


def _upward_pass(
    oracle: UOracle,
    params: DerivedParams,
    p_begin: float,
    w_begin: float,
    opts: SolveOptions,
    require_first_nonlinear: bool,
):
    """Extend w from (p_begin, w_begin) up to 1; returns (segments, steps, breakpoints)."""
    segments: list[Segment] = []
    steps: list[TraceStep] = []
    breakpoints = [p_begin]
    p_k, w_k = p_begin, w_begin
    prev_kind = None
    while p_k < 1.0 - 1e-12:
        if len(steps) >= opts.max_intervals:
            raise SolverError(f"more than {opts.max_intervals} intervals", steps)
        a_k, rho_k = slope_sup(p_k, w_k, oracle, params, opts, polish=True)
        if rho_k > p_k + opts.tol_rho:
            kind = KIND_LINEAR
            p_next = rho_k
            w_next = w_k + a_k * (p_next - p_k)
            segments.append(
                Segment.affine(p_k, p_next, KIND_LINEAR, slope=a_k,
                               intercept=w_k - a_k * p_k, jump_target=p_k)
            )
        else:
            kind = KIND_NONLINEAR
            curve = solve_nonrevealing(oracle, params, p_k, w_k, 1.0, opts.ode_step)
            p_next = find_regime_switch(curve, oracle, params, p_k, opts)
            keep = curve.ps < p_next - 1e-15
            ps = np.append(curve.ps[keep], p_next)
            vs = np.append(curve.vs[keep], float(curve(p_next)))
            segments.append(Segment.nonlinear(p_k, p_next, np.column_stack((ps, vs))))
            w_next = float(vs[-1])
        steps.append(TraceStep(p=p_k, kind=kind, slope_bound=a_k, rho=rho_k))

        if p_next <= p_k + opts.eps_progress:
            raise SolverError(
                f"no progress at p={p_k:.9f} (next={p_next:.9f}, kind={kind})", steps
            )
        if prev_kind is not None and kind == prev_kind:
            raise SolverError(f"intervals failed to alternate at p={p_k:.9f}", steps)
        if prev_kind is None and require_first_nonlinear and kind != KIND_NONLINEAR:
            raise SolverError(
                f"first interval after a split ending above p* must be nonlinear (p={p_k:.9f})",
                steps,
            )
        prev_kind = kind
        breakpoints.append(p_next)
        p_k, w_k = p_next, w_next
    return segments, steps, breakpoints


def _mirror_segment(seg: Segment) -> Segment:
    lo, hi = 1.0 - seg.hi, 1.0 - seg.lo
    if seg.kind == KIND_NONLINEAR:
        samples = np.column_stack((1.0 - seg.samples[::-1, 0], seg.samples[::-1, 1]))
        return Segment.nonlinear(lo, hi, samples)
    slope = -seg.slope
    intercept = seg.slope + seg.intercept
    jt = None if seg.jump_target is None else 1.0 - seg.jump_target
    return Segment.affine(lo, hi, seg.kind, slope, intercept, jt)


def increasing_pass(
    oracle: UOracle,
    params: DerivedParams,
    p0: float,
    w_at_p0: float,
    opts: SolveOptions = SolveOptions(),
    after_split_above_star: bool = False,
):
    """Build w on [p0, 1]; see _upward_pass."""
    return _upward_pass(oracle, params, p0, w_at_p0, opts, after_split_above_star)


def decreasing_pass(
    oracle: UOracle,
    params: DerivedParams,
    p_tilde0: float,
    w_at_p_tilde0: float,
    opts: SolveOptions = SolveOptions(),
    after_split_below_star: bool = False,
):
    """Build w on [0, p_tilde0] via the p -> 1-p symmetry.

    Returns (segments, steps, breakpoints) in original coordinates, with
    segments ordered by increasing p and breakpoints decreasing from
    p_tilde0 to 0; steps report the inward slope bound (the infimum) and
    its smallest minimizer.
    """
    m_oracle = oracle.mirrored()
    m_params = params.mirrored()
    segments, steps, bps = _upward_pass(
        m_oracle, m_params, 1.0 - p_tilde0, w_at_p_tilde0, opts, after_split_below_star
    )
    out_segments = [_mirror_segment(s) for s in reversed(segments)]
    out_steps = [
        TraceStep(p=1.0 - s.p, kind=s.kind, slope_bound=-s.slope_bound, rho=1.0 - s.rho)
        for s in steps
    ]
    out_bps = [1.0 - b for b in bps]
    return out_segments, out_steps, out_bps


# ---------------------------------------------------------------------------
# Full pipeline


def solve_limit_value(
    spec: GameSpec,
    opts: SolveOptions = SolveOptions(),
    oracle: UOracle | None = None,
):
    """Full solve: oracle -> envelope -> split interval -> both passes.

    Returns (PiecewiseValue, AlgorithmTrace).
    """
    params = derive_params(spec)
    if oracle is None:
        oracle = build_u_oracle(spec, params, opts.resolution, opts.refine_tol)
    env = upper_concave_envelope(oracle)
    p_tilde0, p0 = initial_interval(env, oracle, params)
    seg0 = initial_segment(spec, p_tilde0, p0, oracle, params)

    segments: list[Segment] = []
    if p_tilde0 < p0:
        segments.append(
            Segment.affine(p_tilde0, p0, KIND_INITIAL, slope=seg0.slope, intercept=seg0.intercept)
        )

    inc_segments: list[Segment] = []
    inc_steps: list[TraceStep] = []
    inc_bps: list[float] = [p0]
    if p0 < 1.0 - 1e-12:
        w_p0 = float(seg0(p0)) if p_tilde0 < p0 else seg0.intercept
        inc_segments, inc_steps, inc_bps = increasing_pass(
            oracle, params, p0, w_p0, opts,
            after_split_above_star=(p_tilde0 < p0 and p0 > params.p_star + 1e-9),
        )

    dec_segments: list[Segment] = []
    dec_steps: list[TraceStep] = []
    dec_bps: list[float] = [p_tilde0]
    if p_tilde0 > 1e-12:
        w_pt0 = float(seg0(p_tilde0)) if p_tilde0 < p0 else seg0.intercept
        dec_segments, dec_steps, dec_bps = decreasing_pass(
            oracle, params, p_tilde0, w_pt0, opts,
            after_split_below_star=(p_tilde0 < p0 and p_tilde0 < params.p_star - 1e-9),
        )

    all_segments = dec_segments + segments + inc_segments
    pv = PiecewiseValue(segments=all_segments, params=params, scale=spec.payoff_scale)
    pv.validate()

    trace = AlgorithmTrace(
        p_tilde0=p_tilde0,
        p0=p0,
        increasing=inc_steps,
        decreasing=dec_steps,
        increasing_breakpoints=inc_bps,
        decreasing_breakpoints=dec_bps,
        diagnostics={
            "oracle_nodes": int(len(oracle.nodes)),
            "kink_candidates": [float(k) for k in oracle.kink_candidates],
            "initial_slope": seg0.slope,
            "initial_intercept": seg0.intercept,
        },
    )
    return pv, trace


def audit_identities(
    pv: PiecewiseValue,
    trace: AlgorithmTrace,
    oracle: UOracle,
    opts: SolveOptions = SolveOptions(),
    points_per_segment: int = 50,
) -> dict:
    """Residuals of the defining identities on the assembled function.

    On nonlinear segments the flow identity  w'(p)(p - p*) = mu (u(p) - w(p))
    should hold pointwise; at the far end p'' of every linear segment with
    jump target p' the value should satisfy the smooth-pasting relation
    w(p'') = (w(p')(p'' - p*) + mu (p'' - p') u(p'')) / (p'' - p* + mu (p'' - p')).
    Returns the worst absolute residual of each family.
    """
    params = pv.params
    p_star, mu = params.p_star, params.mu
    worst_flow = 0.0
    worst_paste = 0.0
    for seg in pv.segments:
        if seg.kind == KIND_NONLINEAR:
            qs = np.linspace(seg.lo, seg.hi, points_per_segment + 2)[1:-1]
            for q in qs:
                w = float(seg.value(q))
                dw = float(seg.deriv(q))
                u = oracle.exact(float(q))
                if abs(q - p_star) < 1e-9:
                    continue
                res = dw * (q - p_star) - mu * (u - w)
                worst_flow = max(worst_flow, abs(res))
        elif seg.kind == KIND_LINEAR and seg.jump_target is not None:
            far = seg.hi if seg.jump_target <= seg.lo + 1e-15 else seg.lo
            near = seg.jump_target
            w_far = float(seg.value(far))
            w_near = float(pv(near))
            u_far = oracle.exact(far)
            den = far - p_star + mu * (far - near)
            res = w_far - (w_near * (far - p_star) + mu * (far - near) * u_far) / den
            worst_paste = max(worst_paste, abs(res))
    return {"flow_identity": worst_flow, "smooth_pasting": worst_paste}
