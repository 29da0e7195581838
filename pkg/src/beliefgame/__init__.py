"""Limit values of two-state zero-sum Markov games with one informed player.

Pipeline: a game description (two payoff matrices, switching rates, a
discount rate) is turned into the one-shot value curve u, concavified, and
extended outward from the invariant belief by the alternating jump/slide
construction into the full limit value function.  Independent validation
comes from a characterization checker, a discrete-time belief-grid fixed
point, and Monte-Carlo simulation of the induced belief process.
"""

from .envelope import (
    ConcaveEnvelope,
    InitialSegment,
    initial_interval,
    initial_segment,
    upper_concave_envelope,
)
from .matrix_game import (
    MatrixGameSolution,
    UOracle,
    build_u_oracle,
    eval_u,
    matrix_game_value,
)
from .model import (
    DerivedParams,
    DiscreteParams,
    GameSpec,
    GameSpecError,
    derive_params,
    discrete_step_params,
    load_spec,
    validate_spec,
)
from .simulate import (
    BeliefTrajectory,
    RevelationPolicy,
    build_policy,
    empirical_drift,
    estimate_value,
    expected_drift,
    sample_trajectory,
)
from .solver import (
    AlgorithmTrace,
    PiecewiseValue,
    Segment,
    SolveOptions,
    SolverError,
    audit_identities,
    decreasing_pass,
    find_regime_switch,
    increasing_pass,
    slope_inf,
    slope_sup,
    solve_limit_value,
    solve_nonrevealing,
)
from .verification import (
    CharReport,
    CharTolerances,
    OracleError,
    OracleGrid,
    check_characterization,
    compare_to_oracle,
    discrete_oracle_value,
)

__version__ = "0.1.0"
