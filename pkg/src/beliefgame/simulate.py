"""Sampling the optimal belief process and Monte-Carlo payoff estimation.

The solved value function induces a belief process: on nonlinear segments
the belief slides deterministically toward the invariant point p* along
dp/dt = lambda2 - (lambda1 + lambda2) p; interior points of linear and
initial-split segments split immediately to the segment endpoints with
mean-preserving weights; the endpoint on the far side of p* holds and
jumps toward p* at an exponential random time whose intensity makes the
conditional expected belief follow the chain's drift exactly:

    eta = (lambda1 + lambda2) |p'' - p*| / |p'' - p'|

for a hold at p'' jumping to p'.  The discounted payoff of a trajectory
integrates r e^(-rt) u(p_t); averaging over trajectories estimates the
value attained by this revelation policy.

Randomness: one root seed; per-trajectory substreams are spawned by
trajectory index, so results do not depend on scheduling or batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matrix_game import UOracle
from .model import DerivedParams, GameSpec
from .solver import KIND_INITIAL, KIND_LINEAR, KIND_NONLINEAR, PiecewiseValue

EVENT_START = "start"
EVENT_SPLIT = "split"
EVENT_SLIDE = "slide-sample"
EVENT_JUMP = "jump"
EVENT_TRUNCATE = "truncate"

_EPS = 1e-12


@dataclass(frozen=True)
class HoldPoint:
    at: float
    target: float
    intensity: float


@dataclass(frozen=True)
class SplitRegion:
    lo: float
    hi: float


@dataclass
class RevelationPolicy:
    """Per-belief regime derived from the segment structure.

    holds: beliefs that wait for an exponential jump inward.
    splits: open intervals whose interior immediately splits to the ends.
    Everything else slides toward p* (or is absorbed at p*).
    """

    params: DerivedParams
    total_rate: float
    holds: list
    splits: list

    def hold_at(self, p: float) -> HoldPoint | None:
        for h in self.holds:
            if abs(p - h.at) <= 1e-9:
                return h
        return None

    def split_at(self, p: float) -> SplitRegion | None:
        for s in self.splits:
            if s.lo + 1e-9 < p < s.hi - 1e-9:
                return s
        return None


def build_policy(pv: PiecewiseValue, params: DerivedParams, total_rate: float) -> RevelationPolicy:
    """Hold points and split regions implied by the solved value function.

    total_rate is lambda1 + lambda2.  A linear segment's far endpoint (away
    from p*) holds with the drift-matching intensity and jumps to the
    segment's jump target; an initial-split segment holds at both endpoints
    with mutual targets, except that an endpoint equal to p* absorbs.
    """
    p_star = params.p_star
    holds: list[HoldPoint] = []
    splits: list[SplitRegion] = []

    def add_hold(at: float, target: float):
        if abs(at - p_star) <= 1e-9:
            return  # absorbed at the invariant belief: zero intensity
        eta = total_rate * abs(at - p_star) / abs(at - target)
        holds.append(HoldPoint(at=at, target=target, intensity=eta))

    for seg in pv.segments:
        if seg.kind == KIND_LINEAR and seg.jump_target is not None:
            far = seg.hi if seg.jump_target <= seg.lo + 1e-12 else seg.lo
            add_hold(far, seg.jump_target)
            splits.append(SplitRegion(seg.lo, seg.hi))
        elif seg.kind == KIND_INITIAL:
            if seg.hi - seg.lo > 1e-12:
                add_hold(seg.hi, seg.lo)
                add_hold(seg.lo, seg.hi)
                splits.append(SplitRegion(seg.lo, seg.hi))
    return RevelationPolicy(params=params, total_rate=total_rate, holds=holds, splits=splits)


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    belief: float
    kind: str


@dataclass
class BeliefTrajectory:
    """Right-continuous belief path, evaluable at any time up to horizon.

    Between events the belief either stays constant (hold, absorbed) or
    follows the exact exponential drift toward p*; each event records the
    post-event belief, so evaluation only needs the last event before t.
    """

    events: list
    horizon: float
    params: DerivedParams
    total_rate: float
    policy: RevelationPolicy = field(repr=False, default=None)

    def value_at(self, t: float) -> float:
        if t < 0 or t > self.horizon + _EPS:
            raise ValueError("time outside [0, horizon]")
        ev = self.events[0]
        for e in self.events[1:]:
            if e.time <= t + _EPS:
                ev = e
            else:
                break
        p = ev.belief
        dt = t - ev.time
        if dt <= _EPS:
            return p
        if self.policy is not None and (
            self.policy.hold_at(p) is not None or abs(p - self.params.p_star) <= 1e-9
        ):
            return p
        p_star = self.params.p_star
        return p_star + (p - p_star) * math.exp(-self.total_rate * dt)


def _slide_time_to(p_from: float, p_to: float, p_star: float, rate: float) -> float:
    """Time for the drift to carry the belief from p_from to p_to."""
    return math.log((p_from - p_star) / (p_to - p_star)) / rate


def sample_trajectory(
    policy: RevelationPolicy,
    params: DerivedParams,
    p_init: float,
    horizon: float,
    seed,
) -> BeliefTrajectory:
    """One realization of the belief process from p_init.

    seed may be an int or a numpy SeedSequence/Generator; trajectories are
    reproducible from it alone.
    """
    if not 0.0 <= p_init <= 1.0:
        raise ValueError("p_init must lie in [0, 1]")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p_star = params.p_star
    rate = policy.total_rate

    events: list[TrajectoryEvent] = []
    t = 0.0
    p = p_init

    region = policy.split_at(p)
    if region is not None:
        weight_hi = (p - region.lo) / (region.hi - region.lo)
        p = region.hi if rng.random() < weight_hi else region.lo
        events.append(TrajectoryEvent(0.0, p, EVENT_SPLIT))
    else:
        events.append(TrajectoryEvent(0.0, p, EVENT_START))

    while t < horizon:
        hold = policy.hold_at(p)
        if hold is not None:
            wait = rng.exponential(1.0 / hold.intensity)
            if t + wait >= horizon:
                events.append(TrajectoryEvent(horizon, p, EVENT_TRUNCATE))
                break
            t += wait
            p = hold.target
            events.append(TrajectoryEvent(t, p, EVENT_JUMP))
            continue
        if abs(p - p_star) <= 1e-9:
            events.append(TrajectoryEvent(horizon, p, EVENT_TRUNCATE))
            break
        # Sliding: find the first hold point between here and p*.
        if p > p_star:
            stops = [h.at for h in policy.holds if p_star < h.at < p - 1e-9]
            stop = max(stops) if stops else None
        else:
            stops = [h.at for h in policy.holds if p + 1e-9 < h.at < p_star]
            stop = min(stops) if stops else None
        t_hit = horizon if stop is None else t + _slide_time_to(p, stop, p_star, rate)
        if t_hit >= horizon:
            p_end = p_star + (p - p_star) * math.exp(-rate * (horizon - t))
            events.append(TrajectoryEvent(horizon, p_end, EVENT_TRUNCATE))
            break
        t = t_hit
        p = stop
        events.append(TrajectoryEvent(t, p, EVENT_SLIDE))

    if events[-1].kind != EVENT_TRUNCATE:
        events.append(TrajectoryEvent(horizon, p, EVENT_TRUNCATE))
    return BeliefTrajectory(
        events=events, horizon=horizon, params=params, total_rate=rate, policy=policy
    )


def _integrate_discounted(
    traj: BeliefTrajectory,
    oracle: UOracle,
    r: float,
    ode_step: float,
) -> float:
    """integral of r e^(-rt) u(p_t) dt over [0, horizon], piecewise.

    Hold intervals integrate exactly; slide intervals use Simpson's rule on
    the exact exponential path with the belief axis resolved to ode_step.
    """
    p_star = traj.params.p_star
    rate = traj.total_rate
    total = 0.0
    events = traj.events
    for ev, nxt in zip(events, events[1:]):
        t1, t2 = ev.time, nxt.time
        if t2 - t1 <= _EPS:
            continue
        p = ev.belief
        holding = traj.policy.hold_at(p) is not None or abs(p - p_star) <= 1e-9
        if holding:
            total += oracle.exact(p) * (math.exp(-r * t1) - math.exp(-r * t2))
            continue
        p_end = p_star + (p - p_star) * math.exp(-rate * (t2 - t1))
        n = int(min(max(16, math.ceil(abs(p - p_end) / ode_step)), 200_000))
        if n % 2 == 1:
            n += 1
        ts = np.linspace(t1, t2, n + 1)
        ps = p_star + (p - p_star) * np.exp(-rate * (ts - t1))
        fs = r * np.exp(-r * ts) * oracle.interp(ps)
        h = (t2 - t1) / n
        total += h / 3.0 * (fs[0] + fs[-1] + 4.0 * fs[1:-1:2].sum() + 2.0 * fs[2:-2:2].sum())
    return total


def estimate_value(
    policy: RevelationPolicy,
    params: DerivedParams,
    oracle: UOracle,
    p_init: float,
    num_traj: int = 10_000,
    horizon: float | None = None,
    seed: int = 0,
    ode_step: float = 1e-4,
) -> dict:
    """Monte-Carlo estimate of the discounted payoff from p_init.

    Returns {"mean", "stderr", "tail_bound", "num_traj", "horizon"}; the
    tail bound e^(-r horizon) max|u| accounts for the truncated integral
    and should be added to any comparison tolerance.
    """
    if num_traj < 1:
        raise ValueError("num_traj must be at least 1")
    spec = oracle.spec
    r = spec.r
    if horizon is None:
        horizon = 12.0 / r
    root = np.random.SeedSequence(seed)
    streams = root.spawn(num_traj)
    payoffs = np.empty(num_traj)
    for i in range(num_traj):
        traj = sample_trajectory(policy, params, p_init, horizon, np.random.default_rng(streams[i]))
        payoffs[i] = _integrate_discounted(traj, oracle, r, ode_step)
    mean = float(payoffs.mean())
    stderr = float(payoffs.std(ddof=1) / math.sqrt(num_traj)) if num_traj > 1 else 0.0
    tail = math.exp(-r * horizon) * max(abs(spec.payoff_min), abs(spec.payoff_max))
    return {
        "p_init": p_init,
        "mean": mean,
        "stderr": stderr,
        "tail_bound": tail,
        "num_traj": num_traj,
        "horizon": horizon,
        "seed": seed,
    }


def empirical_drift(
    policy: RevelationPolicy,
    params: DerivedParams,
    q: float,
    dt: float,
    num_traj: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean and standard error of the belief at time dt started from q."""
    root = np.random.SeedSequence(seed)
    streams = root.spawn(num_traj)
    vals = np.empty(num_traj)
    for i in range(num_traj):
        traj = sample_trajectory(policy, params, q, dt, np.random.default_rng(streams[i]))
        vals[i] = traj.value_at(dt)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(num_traj))


def expected_drift(q: float, dt: float, params: DerivedParams, total_rate: float) -> float:
    """Conditional expected belief after dt under the exact two-state chain."""
    return q * math.exp(-total_rate * dt) + params.p_star * (-math.expm1(-total_rate * dt))
