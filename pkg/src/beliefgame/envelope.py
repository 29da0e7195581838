"""Upper concave envelope of the one-shot value curve and the split interval.

The envelope is the smallest concave function above u.  Where it sits
strictly above u the informed player gains by splitting the belief; the
interval [p_tilde0, p0] around the invariant belief bounded by the nearest
contact points is where the solve starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix_game import UOracle
from .model import DerivedParams, GameSpec

# A vertex this close to the invariant belief is treated as sitting at it.
_STAR_MARGIN = 1e-6
_VERTEX_STABLE = 1e-8


@dataclass(frozen=True)
class ConcaveEnvelope:
    """Breakpoint representation of the upper concave envelope of u.

    vertices are (p, value) contact points with strictly decreasing chord
    slopes; between vertices the envelope is the chord.
    """

    vertices_p: np.ndarray
    vertices_v: np.ndarray
    contact_tol: float

    def __call__(self, p):
        return np.interp(p, self.vertices_p, self.vertices_v)

    def slopes(self) -> np.ndarray:
        return np.diff(self.vertices_v) / np.diff(self.vertices_p)


def _upper_hull(ps: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Indices of the upper concave hull of sorted (ps, vs); monotone chain."""
    keep: list[int] = []
    for i in range(len(ps)):
        while len(keep) >= 2:
            i0, i1 = keep[-2], keep[-1]
            cross = (ps[i1] - ps[i0]) * (vs[i] - vs[i0]) - (ps[i] - ps[i0]) * (vs[i1] - vs[i0])
            if cross >= 0.0:  # middle point at or below the chord: drop it
                keep.pop()
            else:
                break
        keep.append(i)
    return np.array(keep)


def _refine_vertex(oracle: UOracle, lo: float, hi: float, v0: float) -> float:
    """Relocate an isolated hull vertex by zooming local exact-u hulls.

    Samples u exactly on a shrinking window around the current estimate and
    keeps the interior hull vertex nearest to it, until the location is
    stable within _VERTEX_STABLE.
    """
    est = v0
    width = min(hi - est, est - lo)
    width = max(width, 1e-6)
    for _ in range(40):
        a = max(lo, est - width)
        b = min(hi, est + width)
        grid = np.linspace(a, b, 33)
        vals = np.array([oracle.exact(float(g)) for g in grid])
        idx = _upper_hull(grid, vals)
        interior = [i for i in idx if 0 < i < len(grid) - 1]
        if not interior:
            # No interior vertex: the chord supports the whole window, so
            # the contact is at the nearest window edge.
            est_new = a if abs(est - a) < abs(est - b) else b
        else:
            est_new = float(grid[min(interior, key=lambda i: abs(grid[i] - est))])
        moved = abs(est_new - est)
        est = est_new
        if width <= _VERTEX_STABLE:
            break
        width = max(width / 8.0, _VERTEX_STABLE / 2.0)
        if moved > width:
            width = moved * 2.0
    return est


def upper_concave_envelope(oracle: UOracle) -> ConcaveEnvelope:
    """Exact upper concave hull of the sample cache, with refined vertices.

    Hull vertices that are isolated (their hull neighbors are not adjacent
    cache samples) sit near but generally not on a tangency or kink of u;
    those are relocated by local re-sampling.  Vertices inside a region
    where u itself is concave (neighbors adjacent) are already contact
    points and left alone.
    """
    if len(oracle.nodes) < 2:
        raise ValueError("oracle must hold at least 2 samples")
    ps, vs = oracle.nodes, oracle.values
    idx = _upper_hull(ps, vs)

    out_p: list[float] = []
    out_v: list[float] = []
    for k, i in enumerate(idx):
        p = float(ps[i])
        if 0 < k < len(idx) - 1:
            gap_prev = idx[k] - idx[k - 1]
            gap_next = idx[k + 1] - idx[k]
            if gap_prev > 1 or gap_next > 1:
                lo = float(ps[idx[k - 1]])
                hi = float(ps[idx[k + 1]])
                p = _refine_vertex(oracle, lo, hi, p)
        out_p.append(p)
        out_v.append(oracle.exact(p))

    # Refinement can merge neighbors or locally disturb concavity; re-hull.
    op = np.array(out_p)
    ov = np.array(out_v)
    order = np.argsort(op)
    op, ov = op[order], ov[order]
    dedup = np.concatenate(([True], np.diff(op) > 1e-12))
    op, ov = op[dedup], ov[dedup]
    keep = _upper_hull(op, ov)
    env = ConcaveEnvelope(
        vertices_p=op[keep],
        vertices_v=ov[keep],
        contact_tol=1e-7 * oracle.spec.payoff_scale,
    )
    if np.any(np.diff(env.slopes()) > 1e-9):
        raise AssertionError("envelope slopes are not decreasing")
    if np.any(env(ps) < vs - 10.0 * env.contact_tol):
        raise AssertionError("envelope dips below cached samples")
    return env


def _contact_at(env: ConcaveEnvelope, oracle: UOracle, q: float) -> bool:
    """Does the envelope touch u at q?

    u(q) is compared (exactly) against the chord through the hull vertices
    strictly on either side of q; a vertex exactly at q therefore never
    vacuously confirms itself.  All vertices lie on the graph of u, so a
    neighbor near q biases the chord toward u and never fakes a gap.
    """
    ps, vs = env.vertices_p, env.vertices_v
    left = np.nonzero(ps < q)[0]
    right = np.nonzero(ps > q)[0]
    if left.size == 0 or right.size == 0:
        return True  # at the boundary the envelope always touches u
    i, j = left[-1], right[0]
    t = (q - ps[i]) / (ps[j] - ps[i])
    chord = (1.0 - t) * vs[i] + t * vs[j]
    return oracle.exact(q) >= chord - env.contact_tol


def _contact_boundary(
    env: ConcaveEnvelope, oracle: UOracle, p_star: float, first_vertex: float
) -> float:
    """Inner edge of the contact component attached to first_vertex.

    Bisects between p_star (no contact) and first_vertex (contact); when u
    is concave all the way down, the component reaches p_star itself.  The
    contact test has a tolerance band of width ~contact_tol around the
    vertex, so an edge landing within 1e-5 of the vertex is snapped onto
    it (the vertex location itself is refined to ~1e-8).
    """
    if first_vertex > p_star:
        a, b = p_star, first_vertex
        while b - a > _VERTEX_STABLE:
            mid = 0.5 * (a + b)
            if _contact_at(env, oracle, mid):
                b = mid
            else:
                a = mid
        edge = b
    else:
        a, b = first_vertex, p_star
        while b - a > _VERTEX_STABLE:
            mid = 0.5 * (a + b)
            if _contact_at(env, oracle, mid):
                a = mid
            else:
                b = mid
        edge = a
    if abs(edge - first_vertex) <= 1e-5:
        return first_vertex
    return edge


def initial_interval(
    env: ConcaveEnvelope, oracle: UOracle, params: DerivedParams
) -> tuple[float, float]:
    """Contact points of the envelope bracketing the invariant belief.

    Returns (p_tilde0, p0) with p_tilde0 <= p_star <= p0.  When p_star is
    0 (resp. 1) the lower (resp. upper) side is pinned to the boundary by
    convention; when p_star is interior and the envelope already touches u
    there, both collapse to p_star (no splitting helps).
    """
    p_star = params.p_star
    snap = 1e-5

    if 0.0 < p_star < 1.0 and _contact_at(env, oracle, p_star):
        return p_star, p_star

    def _side(above: bool) -> float:
        ps = env.vertices_p
        if above:
            cand = ps[ps > p_star + _STAR_MARGIN]
            if cand.size == 0:
                return 1.0
            first = float(cand[0])
        else:
            cand = ps[ps < p_star - _STAR_MARGIN]
            if cand.size == 0:
                return 0.0
            first = float(cand[-1])
        edge = _contact_boundary(env, oracle, p_star, first)
        if abs(edge - p_star) <= snap:
            return p_star
        return edge

    p0 = 1.0 if p_star == 1.0 else _side(above=True)
    p_tilde0 = 0.0 if p_star == 0.0 else _side(above=False)
    return p_tilde0, p0


@dataclass(frozen=True)
class InitialSegment:
    """Affine start of the value function on [p_tilde0, p0].

    Degenerate when p_tilde0 == p0: a single anchored value u(p_star).
    """

    p_tilde0: float
    p0: float
    slope: float
    intercept: float

    @property
    def degenerate(self) -> bool:
        return self.p_tilde0 == self.p0

    def __call__(self, p):
        return self.slope * np.asarray(p) + self.intercept


def initial_segment(
    spec: GameSpec,
    p_tilde0: float,
    p0: float,
    oracle: UOracle,
    params: DerivedParams,
) -> InitialSegment:
    """Value of the mutual-jump regime on [p_tilde0, p0].

    Holding at either end and jumping to the other at the drift-matching
    random time yields an affine value with slope
    mu*(u(p0)-u(p_tilde0)) / ((p0-p_tilde0)*(mu+1)); at p_star it reduces
    to the two-point barycentric average of u at the endpoints, and when
    p_star is an endpoint it reduces to u(p_star) there.
    """
    if p_tilde0 > p0:
        raise ValueError("p_tilde0 must not exceed p0")
    mu, p_star = params.mu, params.p_star
    if p_tilde0 == p0:
        anchor = oracle.exact(p_star)
        return InitialSegment(p_tilde0, p0, slope=0.0, intercept=anchor)

    u_lo = oracle.exact(p_tilde0)
    u_hi = oracle.exact(p0)
    width = p0 - p_tilde0
    denom = width * (mu + 1.0)
    slope = mu * (u_hi - u_lo) / denom
    const = u_lo * (p0 * (mu + 1.0) - p_star) / denom + u_hi * (p_star - p_tilde0 * (mu + 1.0)) / denom
    seg = InitialSegment(p_tilde0, p0, slope=slope, intercept=const)

    # Consistency: at p_star the affine value equals the barycentric mix of
    # the endpoint values, and collapses to u(p_star) at an endpoint.
    bary = u_lo * (p0 - p_star) / width + u_hi * (p_star - p_tilde0) / width
    if abs(seg(p_star) - bary) > 1e-12 * spec.payoff_scale + 1e-12:
        raise AssertionError("split segment fails the stationary-point identity")
    return seg
