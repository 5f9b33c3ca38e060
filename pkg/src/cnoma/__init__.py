"""Max-min fair power allocation for two-user uplink cooperative NOMA.

Library layout:

  channel      Rayleigh fading model, reproducible per-trial streams
  rates        SINR/rate formulas for both decoding orders and baselines
  conic        SOCP container + exponential-cone chain rows
  ipm          internal interior-point SOCP solver
  sca          successive-convex-approximation max-min solver
  oracle       brute-force grid and baseline bisection references
  experiments  Monte-Carlo sweeps, CSV output, presets
  cli          command-line entry point (solve / oracle / sweep / validate)
"""

from .channel import (
    DEFAULT_DISTRIBUTION,
    DEFAULT_SEED,
    ChannelDistribution,
    ChannelGains,
    db_to_linear,
    linear_to_db,
    sample_gains,
    trial_stream,
)
from .batch import ScaBatchOutcome, sca_solve_batch
from .conic import ConicProgram, exp_chain_min, exp_cone_rows, format_program, max_violation
from .experiments import (
    ALL_SCHEMES,
    PointAggregate,
    SweepParam,
    SweepResult,
    SweepSpec,
    TrialRecord,
    ValidationSummary,
    aggregate_records,
    preset_sweeps,
    run_sweep,
    run_trial,
    validate_against_oracle,
    write_aggregate_csv,
    write_raw_csv,
)
from .ipm import SolveResult, SolveStatus, SolverSettings, solve_socp
from .oracle import BaselineResult, OracleResult, baseline_maxmin, grid_maxmin
from .sca import (
    FeasibilityReport,
    ScaConfig,
    ScaOutcome,
    ScaState,
    ScaTermination,
    build_subproblem,
    initialize_state,
    sca_solve,
    update_state,
    verify_feasibility,
)
from .rates import (
    Allocation,
    BaselinePowers,
    DecodingOrder,
    PowerBudgets,
    RatePair,
    achievable_rates,
    baseline_rates,
    bs_sinrs_fudf,
    bs_sinrs_nudf,
    min_rate,
    project_allocation,
    relay_sinr,
)

__all__ = [name for name in dir() if not name.startswith("_")]
