"""Command-line surface.

Subcommands:
  solve     solution JSON + curve CSV (p, u, cav_u, v)
  check     characterization report JSON; exit 0 iff the suite passes
  oracle    discrete fixed-point CSV + summary JSON (with sup-gap vs a solve)
  simulate  trajectory CSV for a single run, estimate JSON for ensembles
  curve     u / cav_u CSV only
  report    solve + curve CSV + rendered figures

Identical inputs and seeds produce byte-identical CSV/JSON artifacts: all
floats are written with 17 significant digits, JSON keys are sorted, and
no timestamps are embedded.

Exit codes: 0 success (check passed), 1 check failed (report still
written), 2 I/O failure, 3 invalid input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .envelope import initial_interval, initial_segment, upper_concave_envelope
from .matrix_game import build_u_oracle
from .model import GameSpecError, derive_params, load_spec
from .simulate import build_policy, estimate_value, sample_trajectory
from .solver import PiecewiseValue, SolveOptions, SolverError, solve_limit_value
from .verification import OracleError, check_characterization, compare_to_oracle, discrete_oracle_value

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_IO = 2
EXIT_INVALID = 3
EXIT_NUMERIC = 4


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _json_ready(obj):
    """Recursively convert numpy scalars/arrays and scrub non-finite floats."""
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_ready(payload), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) if not isinstance(x, str) else x for x in row) + "\n")


def _solve_options(args) -> SolveOptions:
    kw = {}
    if args.resolution is not None:
        if args.resolution < 2:
            raise GameSpecError("--resolution must be at least 2")
        kw["resolution"] = args.resolution
    if args.ode_step is not None:
        if not 0.0 < args.ode_step <= 0.1:
            raise GameSpecError("--ode-step must lie in (0, 0.1]")
        kw["ode_step"] = args.ode_step
    return SolveOptions(**kw)


def _pipeline(spec, opts):
    params = derive_params(spec)
    oracle = build_u_oracle(spec, params, opts.resolution, opts.refine_tol)
    env = upper_concave_envelope(oracle)
    pv, trace = solve_limit_value(spec, opts, oracle=oracle)
    return params, oracle, env, pv, trace


def _solution_payload(spec, pv, trace) -> dict:
    payload = pv.to_dict()
    payload["name"] = spec.name
    payload["initialization"] = {
        "p_tilde0": trace.p_tilde0,
        "p0": trace.p0,
        "slope": trace.diagnostics.get("initial_slope"),
        "intercept": trace.diagnostics.get("initial_intercept"),
    }
    payload["trace"] = trace.to_dict()
    return payload


def _curve_rows(oracle, env, pv, points: int):
    grid = np.linspace(0.0, 1.0, points)
    u = np.array([oracle.exact(float(p)) for p in grid])
    cav = env(grid)
    v = pv(grid) if pv is not None else [None] * len(grid)
    for i, p in enumerate(grid):
        yield (p, u[i], cav[i], v[i])


def _load_solution(path: str) -> PiecewiseValue:
    with open(path, "r", encoding="utf-8") as fh:
        return PiecewiseValue.from_dict(json.load(fh))


def _cmd_solve(args) -> int:
    spec, _ = load_spec(args.input)
    opts = _solve_options(args)
    params, oracle, env, pv, trace = _pipeline(spec, opts)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "solution.json"), _solution_payload(spec, pv, trace))
    _write_csv(
        os.path.join(args.out, "curve.csv"),
        ["p", "u", "cav_u", "v"],
        _curve_rows(oracle, env, pv, args.points),
    )
    print(f"solved: {len(pv.segments)} segments, "
          f"breakpoints {[round(b, 6) for b in pv.breakpoints()]}")
    return EXIT_OK


def _cmd_curve(args) -> int:
    spec, params = load_spec(args.input)
    opts = _solve_options(args)
    oracle = build_u_oracle(spec, params, opts.resolution, opts.refine_tol)
    env = upper_concave_envelope(oracle)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "curve.csv"),
        ["p", "u", "cav_u", "v"],
        _curve_rows(oracle, env, None, args.points),
    )
    print(f"curve written ({args.points} points, {len(oracle.nodes)} cache nodes)")
    return EXIT_OK


def _cmd_check(args) -> int:
    spec, params = load_spec(args.input)
    opts = _solve_options(args)
    oracle = build_u_oracle(spec, params, opts.resolution, opts.refine_tol)
    if args.solution:
        pv = _load_solution(args.solution)
    else:
        pv, _ = solve_limit_value(spec, opts, oracle=oracle)
    report = check_characterization(pv, oracle, params)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "check_report.json"), report.to_dict())
    print(f"characterization: {'PASS' if report.passed else 'FAIL'} "
          f"(g1={report.g1_residual:.3e}, g2={report.g2_worst[1]:.3e}, "
          f"g3={report.g3_worst[1]:.3e}, kinks={report.kink_locations})")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_oracle(args) -> int:
    spec, _ = load_spec(args.input)
    if args.grid < 3:
        raise GameSpecError("--grid must be at least 3")
    if args.n <= 0:
        raise GameSpecError("--n must be positive")
    og = discrete_oracle_value(spec, args.n, grid_size=args.grid)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, f"oracle_n{args.n:g}.csv"),
        ["p", "v_n"],
        zip(og.grid, og.values),
    )
    summary = {
        "n": og.n,
        "grid_size": int(len(og.grid)),
        "iterations": og.iterations,
        "residual": og.residual,
        "contraction": og.contraction,
    }
    if args.solution:
        pv = _load_solution(args.solution)
        summary["sup_diff"] = compare_to_oracle(pv, og)
    _write_json(os.path.join(args.out, "oracle_summary.json"), summary)
    msg = f"oracle n={args.n:g}: {og.iterations} iterations, residual {og.residual:.3e}"
    if "sup_diff" in summary:
        msg += f", sup-diff {summary['sup_diff']:.4f}"
    print(msg)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    spec, params = load_spec(args.input)
    opts = _solve_options(args)
    if not 0.0 <= args.p_init <= 1.0:
        raise GameSpecError("--p-init must lie in [0, 1]")
    if args.trajectories < 1:
        raise GameSpecError("--trajectories must be at least 1")
    if args.horizon is not None and args.horizon <= 0:
        raise GameSpecError("--horizon must be positive")
    params2, oracle, env, pv, trace = _pipeline(spec, opts)
    policy = build_policy(pv, params2, spec.lambda1 + spec.lambda2)
    horizon = args.horizon if args.horizon is not None else 12.0 / spec.r
    os.makedirs(args.out, exist_ok=True)
    as_csv = args.format == "csv" or (args.format is None and args.trajectories == 1)
    if as_csv:
        traj = sample_trajectory(policy, params2, args.p_init, horizon, args.seed)
        _write_csv(
            os.path.join(args.out, "trajectory.csv"),
            ["t", "p", "event"],
            ((e.time, e.belief, e.kind) for e in traj.events),
        )
        print(f"trajectory: {len(traj.events)} events over horizon {horizon:g}")
    else:
        est = estimate_value(
            policy, params2, oracle, args.p_init,
            num_traj=args.trajectories, horizon=horizon, seed=args.seed,
        )
        est["value_function_at_p"] = float(pv(args.p_init))
        _write_json(os.path.join(args.out, "estimate.json"), est)
        print(f"estimate at p={args.p_init:g}: {est['mean']:.6f} +- {est['stderr']:.6f} "
              f"(solver value {est['value_function_at_p']:.6f})")
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import plots

    spec, _ = load_spec(args.input)
    opts = _solve_options(args)
    params, oracle, env, pv, trace = _pipeline(spec, opts)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "solution.json"), _solution_payload(spec, pv, trace))
    _write_csv(
        os.path.join(args.out, "curve.csv"),
        ["p", "u", "cav_u", "v"],
        _curve_rows(oracle, env, pv, args.points),
    )
    title = spec.name or os.path.basename(args.input)
    plots.render_value_function(
        os.path.join(args.out, "value_function.png"), oracle, env, pv, trace, title=title
    )
    made = ["solution.json", "curve.csv", "value_function.png"]
    if args.n is not None:
        og = discrete_oracle_value(spec, args.n, grid_size=args.grid)
        plots.render_oracle_comparison(
            os.path.join(args.out, "oracle_comparison.png"), pv, og, title=title
        )
        made.append("oracle_comparison.png")
    print("report written: " + ", ".join(made))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefgame",
        description="Limit values of two-state zero-sum Markov games with a single informed player.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_out=True):
        p.add_argument("--input", required=True, help="game description JSON")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--resolution", type=int, default=None, help="base grid for the u cache")
        p.add_argument("--ode-step", type=float, default=None, help="flow integration step")
        p.add_argument("--points", type=int, default=1001, help="rows in curve CSV output")

    p_solve = sub.add_parser("solve", help="solve and write solution.json + curve.csv")
    common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_curve = sub.add_parser("curve", help="write the u / cav_u curve CSV only")
    common(p_curve)
    p_curve.set_defaults(func=_cmd_curve)

    p_check = sub.add_parser("check", help="run the characterization suite")
    common(p_check)
    p_check.add_argument("--solution", default=None, help="solution.json to check (default: solve)")
    p_check.set_defaults(func=_cmd_check)

    p_oracle = sub.add_parser("oracle", help="discrete fixed-point comparison")
    common(p_oracle)
    p_oracle.add_argument("--n", type=float, default=256.0, help="stages per unit time")
    p_oracle.add_argument("--grid", type=int, default=2001, help="belief grid size")
    p_oracle.add_argument("--solution", default=None, help="solution.json for the sup-diff")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_sim = sub.add_parser("simulate", help="sample the optimal belief process")
    common(p_sim)
    p_sim.add_argument("--p-init", type=float, default=0.5)
    p_sim.add_argument("--trajectories", type=int, default=1)
    p_sim.add_argument("--horizon", type=float, default=None)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--format", choices=["json", "csv"], default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_rep = sub.add_parser("report", help="solve and render figures next to the CSV")
    common(p_rep)
    p_rep.add_argument("--n", type=float, default=None, help="also compare against the fixed point")
    p_rep.add_argument("--grid", type=int, default=2001)
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GameSpecError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, OracleError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
