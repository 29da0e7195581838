import numpy as np
import pytest

from beliefgame import (
    build_u_oracle,
    initial_interval,
    initial_segment,
    upper_concave_envelope,
)
from conftest import make_spec, u_mixed


def brute_force_hull(ps, vs, q):
    """Independent envelope oracle: full upper hull of all samples.

    Keeps a stack of hull points by requiring strictly decreasing incoming
    chord slopes (a formulation independent of the package's cross-product
    monotone chain), then interpolates the hull at q.
    """
    hull = [0]
    for i in range(1, len(ps)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            s_in = (vs[i1] - vs[i0]) / (ps[i1] - ps[i0])
            s_out = (vs[i] - vs[i1]) / (ps[i] - ps[i1])
            if s_out >= s_in:
                hull.pop()
            else:
                break
        hull.append(i)
    hp = ps[hull]
    hv = vs[hull]
    return float(np.interp(q, hp, hv))


def test_flat_envelope_for_convex_curve(solved):
    env = solved["reveal_all"].env
    assert env.vertices_p == pytest.approx([0.0, 1.0], abs=1e-12)
    qs = np.linspace(0, 1, 101)
    assert np.abs(env(qs)).max() < 1e-12


def test_envelope_equals_concave_curve(solved):
    s = solved["reveal_none"]
    qs = np.linspace(0, 1, 401)
    err = np.abs(s.env(qs) - (qs * (1 - qs)))
    assert err.max() <= 5e-7  # chord gap between cache nodes only


def test_envelope_chord_value_against_brute_force(solved):
    # Derived check on a 1e5-point grid of the closed-form curve.  The
    # brute grid misses the tangency at 1/3 by up to one spacing, which
    # bounds its own accuracy at ~1e-5 times the slope gap.
    grid = np.linspace(0, 1, 100_001)
    vals = u_mixed(grid)
    expected = brute_force_hull(grid, vals, 1 / 6)
    assert expected == pytest.approx(-1 / 3, abs=1e-5)
    assert float(solved["reveal_partial"].env(1 / 6)) == pytest.approx(expected, abs=2e-5)
    assert float(solved["reveal_partial"].env(1 / 6)) == pytest.approx(-1 / 3, abs=1e-8)


def test_envelope_slopes_strictly_decrease(solved):
    for s in solved.values():
        slopes = s.env.slopes()
        if len(slopes) > 1:
            assert np.all(np.diff(slopes) < 1e-9)


def test_envelope_stable_under_extra_samples():
    spec, params = make_spec("reveal_partial")
    dense = build_u_oracle(spec, params, resolution=2049)
    sparse = build_u_oracle(spec, params, resolution=513)
    qs = np.linspace(0, 1, 257)
    e1 = upper_concave_envelope(dense)(qs)
    e2 = upper_concave_envelope(sparse)(qs)
    assert np.abs(e1 - e2).max() <= 1e-6


@pytest.mark.parametrize(
    "name,expected",
    [
        ("reveal_none", (0.0, 0.0)),
        ("reveal_all", (0.0, 1.0)),
        ("kink_at_stationary", (1 / 3, 1 / 3)),
        ("reveal_partial_interior", (0.0, 1 / 3)),
        ("reveal_partial", (0.0, 1 / 3)),
    ],
)
def test_initial_intervals(solved, name, expected):
    s = solved[name]
    p_tilde0, p0 = initial_interval(s.env, s.oracle, s.params)
    assert p_tilde0 == pytest.approx(expected[0], abs=1e-6)
    assert p0 == pytest.approx(expected[1], abs=1e-6)


def test_initial_segment_flat(solved):
    s = solved["reveal_all"]
    seg = initial_segment(s.spec, 0.0, 1.0, s.oracle, s.params)
    qs = np.linspace(0, 1, 33)
    assert np.abs(seg(qs)).max() == 0.0


def test_initial_segment_interior_variation(solved):
    s = solved["reveal_partial_interior"]
    p_tilde0, p0 = initial_interval(s.env, s.oracle, s.params)
    seg = initial_segment(s.spec, p_tilde0, p0, s.oracle, s.params)
    qs = np.linspace(0.0, 1 / 3, 50)
    assert np.abs(seg(qs) - (2.0 / 15.0) * (3 * qs - 2)).max() <= 1e-8


def test_initial_segment_degenerate_anchor(solved):
    s = solved["kink_at_stationary"]
    seg = initial_segment(s.spec, 1 / 3, 1 / 3, s.oracle, s.params)
    assert seg.degenerate
    assert seg.intercept == pytest.approx(0.0, abs=1e-12)  # u(p*) = 0 here


def test_initial_segment_stationary_identity(solved):
    # At p* the affine split value equals the barycentric endpoint mix.
    s = solved["reveal_partial_interior"]
    seg = initial_segment(s.spec, 0.0, 1 / 3, s.oracle, s.params)
    u0 = s.oracle.exact(0.0)
    u1 = s.oracle.exact(1 / 3)
    p_star = s.params.p_star
    bary = u0 * (1 / 3 - p_star) / (1 / 3) + u1 * p_star / (1 / 3)
    assert float(seg(p_star)) == pytest.approx(bary, abs=1e-12 * s.spec.payoff_scale)


def test_initial_segment_boundary_reduction(solved):
    # When p* is an endpoint of the split interval, the value there is u(p*).
    s = solved["reveal_partial"]
    seg = initial_segment(s.spec, 0.0, 1 / 3, s.oracle, s.params)
    assert float(seg(0.0)) == pytest.approx(s.oracle.exact(0.0), abs=1e-12)


def test_envelope_majorizes_samples(solved):
    for s in solved.values():
        gap = s.env(s.oracle.nodes) - s.oracle.values
        assert gap.min() >= -10 * s.env.contact_tol
