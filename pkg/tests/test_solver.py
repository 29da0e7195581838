import numpy as np
import pytest
from scipy.integrate import quad

from beliefgame import (
    PiecewiseValue,
    SolveOptions,
    audit_identities,
    find_regime_switch,
    slope_inf,
    slope_sup,
    solve_limit_value,
    solve_nonrevealing,
    validate_spec,
)
from beliefgame.solver import KIND_INITIAL, KIND_LINEAR, KIND_NONLINEAR
from conftest import PBAR, interior_switch_point, make_spec, u_mixed, v_reveal_partial


def brute_slope_sup(p, f, params, n=1_000_000):
    """Independent maximization of the jump-slope objective on a huge grid."""
    ps = np.linspace(p, 1.0, n)[1:]
    vals = params.mu * (u_mixed(ps) - f) / (ps - params.p_star + params.mu * (ps - p))
    i = int(np.argmax(vals))
    return float(vals[i]), float(ps[i])


# -- slope_sup / slope_inf ---------------------------------------------------


def test_slope_sup_at_split_edge(solved):
    s = solved["reveal_partial"]
    a, rho = slope_sup(1 / 3, -1 / 3, s.oracle, s.params)
    assert a == pytest.approx(1.0, abs=1e-7)
    assert rho == pytest.approx(1 / 3, abs=1e-9)  # no jump improves: flow regime


def test_slope_sup_interior_point(solved):
    s = solved["reveal_partial"]
    f = -1.0 / (9.0 * 0.5)
    a, rho = slope_sup(0.5, f, s.oracle, s.params)
    expected = (6 * 0.5 + 1) / (9 * 0.5 * (2 - 0.5))
    assert a == pytest.approx(expected, abs=1e-9)
    assert rho == pytest.approx(1.0, abs=1e-9)
    # brute-force cross-check on a 1e6 grid of the closed-form curve
    a_b, rho_b = brute_slope_sup(0.5, f, s.params)
    assert a == pytest.approx(a_b, abs=1e-6)
    assert rho_b == pytest.approx(1.0, abs=1e-5)


def test_slope_sup_from_anchor_kink(solved):
    s = solved["kink_at_stationary"]
    a, rho = slope_sup(1 / 3, 0.0, s.oracle, s.params)
    assert a == pytest.approx(1 / 3, abs=1e-9)
    assert rho == pytest.approx(1.0, abs=1e-9)


def test_slope_sup_rejects_bad_p(solved):
    s = solved["reveal_partial"]
    with pytest.raises(ValueError):
        slope_sup(1.0, 0.0, s.oracle, s.params)


def test_slope_inf_from_anchor_kink(solved):
    s = solved["kink_at_stationary"]
    a, rho = slope_inf(1 / 3, 0.0, s.oracle, s.params)
    assert a == pytest.approx(2 / 3, abs=1e-9)
    assert rho == pytest.approx(0.0, abs=1e-9)


def test_slope_inf_constant_curve():
    spec, params = validate_spec(
        {"matrix_s1": [[1.0, 1.0], [1.0, 1.0]], "matrix_s2": [[1.0, 1.0], [1.0, 1.0]],
         "lambda1": 1.0, "lambda2": 1.0, "r": 2.0}
    )
    from beliefgame import build_u_oracle

    oracle = build_u_oracle(spec, params, resolution=65)
    a, rho = slope_inf(params.p_star, 1.0, oracle, params)
    assert a == pytest.approx(0.0, abs=1e-12)
    assert rho == 0.0  # every target ties; the smallest is reported


def test_decreasing_side_idle_when_pinned(solved):
    assert solved["reveal_partial"].trace.decreasing == []


# -- no-revelation flow ------------------------------------------------------


def test_flow_closed_form_inverse_p(solved):
    s = solved["reveal_partial"]
    curve = solve_nonrevealing(s.oracle, s.params, 1 / 3, -1 / 3, 2 / 3)
    qs = np.linspace(1 / 3, 2 / 3, 31)
    assert np.abs(curve(qs) - (-1 / (9 * qs))).max() <= 1e-8
    assert float(curve(0.5)) == pytest.approx(-2 / 9, abs=1e-8)


def test_flow_closed_form_quarter_power(solved):
    s = solved["reveal_partial_interior"]
    curve = solve_nonrevealing(s.oracle, s.params, 1 / 3, -2 / 15, 2 / 3)
    qs = np.linspace(1 / 3 + 1e-6, 2 / 3, 29)
    expected = -(2 / 15) * 3 ** (-0.25) * (4 * qs - 1) ** (-0.25)
    assert np.abs(curve(qs) - expected).max() <= 1e-7


def test_flow_stationary_for_constant_curve():
    spec, params = validate_spec(
        {"matrix_s1": [[3.0]], "matrix_s2": [[3.0]], "lambda1": 0.5, "lambda2": 0.5, "r": 1.0}
    )
    from beliefgame import build_u_oracle

    oracle = build_u_oracle(spec, params, resolution=33)
    curve = solve_nonrevealing(oracle, params, 0.5, 3.0, 1.0)
    assert np.abs(curve(np.linspace(0.5, 1, 11)) - 3.0).max() <= 1e-12


def test_flow_rejects_straddling_interval(solved):
    s = solved["reveal_partial_interior"]  # p* = 1/4
    with pytest.raises(ValueError):
        solve_nonrevealing(s.oracle, s.params, 0.1, 0.0, 0.9)


def test_flow_explicit_integral_crosscheck(solved):
    # With the invariant belief at 0 and mu = 1 the flow has the explicit
    # solution (p_k/p) w_k + (1/p) * integral of u over [p_k, p];
    # quadrature on the exact curve is an independent route.
    for name, p_k, w_k, p_hi in [
        ("reveal_none", 0.25, None, 0.75),
        ("reveal_partial", 1 / 3, -1 / 3, 2 / 3),
    ]:
        s = solved[name]
        if w_k is None:
            w_k = float(s.pv(p_k))
        curve = solve_nonrevealing(s.oracle, s.params, p_k, w_k, p_hi)
        for p in np.linspace(p_k + 0.05, p_hi, 7):
            integral, _ = quad(lambda t: s.oracle.exact(t), p_k, p, limit=200)
            explicit = (p_k / p) * w_k + integral / p
            assert float(curve(p)) == pytest.approx(explicit, abs=1e-6 * s.spec.payoff_scale)


# -- regime switching --------------------------------------------------------


def test_switch_point_partial_reveal(solved):
    s = solved["reveal_partial"]
    curve = solve_nonrevealing(s.oracle, s.params, 1 / 3, -1 / 3, 1.0)
    p1 = find_regime_switch(curve, s.oracle, s.params, 1 / 3)
    assert p1 == pytest.approx(PBAR, abs=1e-5)


def test_switch_point_absent_for_concave_curve(solved):
    s = solved["reveal_none"]
    curve = solve_nonrevealing(s.oracle, s.params, 0.0, 0.0, 1.0)
    assert find_regime_switch(curve, s.oracle, s.params, 0.0) == 1.0


def test_switch_point_interior_variation(solved):
    s = solved["reveal_partial_interior"]
    curve = solve_nonrevealing(s.oracle, s.params, 1 / 3, -2 / 15, 1.0)
    p1 = find_regime_switch(curve, s.oracle, s.params, 1 / 3)
    assert p1 == pytest.approx(interior_switch_point(), abs=1e-4)


# -- full solves -------------------------------------------------------------


def test_segments_partial_reveal(solved):
    s = solved["reveal_partial"]
    kinds = [(seg.kind, seg.lo, seg.hi) for seg in s.pv.segments]
    assert kinds[0][0] == KIND_INITIAL
    assert kinds[1][0] == KIND_NONLINEAR and kinds[1][1] == pytest.approx(1 / 3, abs=1e-6)
    assert kinds[2][0] == KIND_LINEAR and kinds[2][1] == pytest.approx(PBAR, abs=1e-3)
    final = s.pv.segments[-1]
    assert final.slope == pytest.approx(1 / (9 * PBAR**2), abs=1e-4)
    assert final.jump_target == pytest.approx(PBAR, abs=1e-3)


def test_segments_interior_variation(solved):
    s = solved["reveal_partial_interior"]
    p1 = interior_switch_point()
    final = s.pv.segments[-1]
    assert final.kind == KIND_LINEAR
    assert final.lo == pytest.approx(p1, abs=1e-4)
    w_p1 = -(2 / 15) * 3 ** (-0.25) * (4 * p1 - 1) ** (-0.25)
    a1 = (2 / 3 - w_p1) / (4 - p1)
    assert final.slope == pytest.approx(a1, abs=1e-5)
    assert final.intercept == pytest.approx(w_p1 - p1 * a1, abs=1e-5)


def test_segments_kink_at_stationary(solved):
    s = solved["kink_at_stationary"]
    assert len(s.pv.segments) == 2
    below, above = s.pv.segments
    assert below.kind == KIND_LINEAR and above.kind == KIND_LINEAR
    assert below.slope == pytest.approx(2 / 3, abs=1e-9)
    assert above.slope == pytest.approx(1 / 3, abs=1e-9)
    assert float(s.pv(1 / 3)) == pytest.approx(0.0, abs=1e-10)
    assert below.jump_target == pytest.approx(1 / 3, abs=1e-12)
    assert above.jump_target == pytest.approx(1 / 3, abs=1e-12)


def test_full_value_curves(solved):
    grid = np.linspace(0, 1, 501)
    assert np.abs(solved["reveal_none"].pv(grid) - (grid / 2 - grid**2 / 3)).max() <= 1e-5
    assert np.abs(solved["reveal_all"].pv(grid)).max() <= 1e-9
    assert np.abs(solved["reveal_partial"].pv(grid) - v_reveal_partial(grid)).max() <= 1e-4


def test_mirrored_game_reflects(solved):
    spec_m, _ = validate_spec(
        {"matrix_s1": [[-2, 0], [0, -1]], "matrix_s2": [[1, 0], [0, 2]],
         "lambda1": 0.0, "lambda2": 1.0, "r": 1.0}
    )
    pv_m, trace_m = solve_limit_value(spec_m)
    s = solved["reveal_partial"]
    grid = np.linspace(0, 1, 401)
    assert np.abs(pv_m(grid) - s.pv(1 - grid)).max() <= 1e-9
    inc = s.trace.increasing_breakpoints
    dec = trace_m.decreasing_breakpoints
    assert dec == pytest.approx([1 - b for b in inc], abs=1e-9)
    assert [st.kind for st in trace_m.decreasing] == [st.kind for st in s.trace.increasing]


def test_trace_monotone_and_alternating(solved):
    for s in solved.values():
        inc = s.trace.increasing_breakpoints
        assert all(b2 > b1 for b1, b2 in zip(inc, inc[1:]))
        dec = s.trace.decreasing_breakpoints
        assert all(b2 < b1 for b1, b2 in zip(dec, dec[1:]))
        kinds = [st.kind for st in s.trace.increasing]
        assert all(k1 != k2 for k1, k2 in zip(kinds, kinds[1:]))


def test_flow_identity_on_nonlinear_segments(solved):
    # Along every nonlinear segment the jump bound, the local slope, and
    # the flow derivative agree.
    for s in solved.values():
        res = audit_identities(s.pv, s.trace, s.oracle)
        tol = 1e-6 * s.spec.payoff_scale
        assert res["flow_identity"] <= tol
        assert res["smooth_pasting"] <= tol


def test_jump_bound_matches_flow_slope_pointwise(solved):
    s = solved["reveal_partial"]
    seg = s.pv.segments[1]
    assert seg.kind == KIND_NONLINEAR
    for q in np.linspace(seg.lo + 1e-3, seg.hi - 1e-3, 50):
        a, _ = slope_sup(float(q), float(seg.value(q)), s.oracle, s.params)
        local = s.params.mu * (s.oracle.exact(float(q)) - float(seg.value(q))) / (q - s.params.p_star)
        assert a == pytest.approx(local, abs=2e-6 * s.spec.payoff_scale)


def test_linear_segment_endpoint_consistency(solved):
    for s in solved.values():
        for seg in s.pv.segments:
            if seg.kind == KIND_LINEAR:
                dv = float(seg.value(seg.hi)) - float(seg.value(seg.lo))
                assert dv == pytest.approx(seg.slope * (seg.hi - seg.lo),
                                           abs=1e-10 * s.spec.payoff_scale)


def test_one_sided_slopes_match_off_star(solved):
    for s in solved.values():
        tol = max(1e-5 * s.spec.payoff_scale * s.params.lipschitz_u, 1e-10)
        for seg_a, seg_b in zip(s.pv.segments, s.pv.segments[1:]):
            q = seg_a.hi
            if abs(q - s.params.p_star) < 1e-9:
                continue
            assert float(seg_a.deriv(q)) == pytest.approx(float(seg_b.deriv(q)), abs=tol)


def test_concavity_of_solution(solved):
    for s in solved.values():
        grid = np.sort(np.concatenate([np.linspace(0, 1, 601), s.pv.breakpoints()]))
        vals = s.pv(grid)
        p1, p2, p3 = grid[:-2], grid[1:-1], grid[2:]
        chord = (vals[:-2] * (p3 - p2) + vals[2:] * (p2 - p1)) / (p3 - p1)
        assert (vals[1:-1] - chord).min() >= -1e-7 * s.spec.payoff_scale


def test_solution_roundtrip(solved):
    s = solved["reveal_partial"]
    clone = PiecewiseValue.from_dict(s.pv.to_dict())
    grid = np.linspace(0, 1, 257)
    assert np.array_equal(clone(grid), s.pv(grid))


def test_progress_guard():
    from beliefgame import SolverError

    spec, _ = make_spec("reveal_partial")
    with pytest.raises(SolverError):
        solve_limit_value(spec, SolveOptions(max_intervals=1))
