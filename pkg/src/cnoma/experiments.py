"""Monte-Carlo sweep engine for the four transmission schemes.

Each trial draws one channel realization that every scheme shares (paired
comparisons), solves the two cooperative schemes with the successive-convex-
approximation solver and the two non-cooperative baselines with the
closed-form bisection oracle, and records min-rates in nats and bits.

Sweeps run one point at a time: all trials of a point are drawn from
independent per-trial streams keyed (master seed, point index, trial index)
and solved as a single lockstep batch, so the numbers a point produces do
not depend on how many worker processes the sweep is spread over.  Results
stream out as raw per-trial CSV rows plus a per-point aggregate CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .batch import sca_solve_batch
from .channel import (
    DEFAULT_DISTRIBUTION,
    DEFAULT_SEED,
    ChannelDistribution,
    ChannelGains,
    db_to_linear,
    sample_gains,
    trial_stream,
)
from .oracle import baseline_maxmin, grid_maxmin
from .rates import NATS_PER_BIT, DecodingOrder, PowerBudgets
from .sca import ScaConfig, ScaTermination, sca_solve

SCHEME_CNOMA_FUDF = "CNOMA-FUDF"
SCHEME_CNOMA_NUDF = "CNOMA-NUDF"
SCHEME_NOMA_FUDF = "NOMA-FUDF"
SCHEME_NOMA_NUDF = "NOMA-NUDF"
ALL_SCHEMES = (
    SCHEME_CNOMA_FUDF,
    SCHEME_CNOMA_NUDF,
    SCHEME_NOMA_FUDF,
    SCHEME_NOMA_NUDF,
)

# z-value of the two-sided 95% normal interval.
CI95_FACTOR = 1.959963984540054

RAW_HEADER = (
    "sweep_param",
    "sweep_value_db",
    "trial",
    "scheme",
    "min_rate_nats",
    "min_rate_bits",
    "iterations",
    "termination",
    "wall_ms",
)
AGGREGATE_HEADER = (
    "sweep_param",
    "sweep_value_db",
    "scheme",
    "mean_bits",
    "stderr_bits",
    "ci95_bits",
    "n",
)


class SweepParam(Enum):
    """Which scenario knob a sweep varies; values name the CSV column."""

    PN_MAX_DB = "pn_max_db"
    PF_MAX_DB = "pf_max_db"
    LAMBDA_SI_DB = "lambda_si_db"
    LAMBDA_NF_DB = "lambda_nf_db"


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a swept knob, its dB values, and the fixed scenario.

    budgets_db holds (near budget, far budget) in dB; the entry matching a
    swept budget parameter is overridden point by point, as are the
    distribution means for swept channel parameters.
    """

    name: str
    param: SweepParam
    values_db: tuple
    distribution: ChannelDistribution = DEFAULT_DISTRIBUTION
    budgets_db: tuple = (15.0, 15.0)
    trials: int = 1000
    master_seed: int = DEFAULT_SEED
    schemes: tuple = ALL_SCHEMES
    sca: ScaConfig = field(default_factory=ScaConfig)

    def __post_init__(self):
        if len(self.values_db) == 0 or not all(
            np.isfinite(v) for v in self.values_db
        ):
            raise ValueError("values_db must be nonempty and finite")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = [s for s in self.schemes if s not in ALL_SCHEMES]
        if unknown or not self.schemes:
            raise ValueError(
                f"schemes must be a nonempty subset of {ALL_SCHEMES}, "
                f"got {self.schemes}"
            )

    def point_scenario(self, index):
        """Distribution and linear budgets at sweep point `index`."""
        value = float(self.values_db[index])
        dist = self.distribution
        pn_db, pf_db = self.budgets_db
        if self.param is SweepParam.PN_MAX_DB:
            pn_db = value
        elif self.param is SweepParam.PF_MAX_DB:
            pf_db = value
        elif self.param is SweepParam.LAMBDA_SI_DB:
            dist = dataclasses.replace(dist, mean_si_db=value)
        else:
            dist = dataclasses.replace(dist, mean_nf_db=value)
        budgets = PowerBudgets(db_to_linear(pn_db), db_to_linear(pf_db))
        return value, dist, budgets


@dataclass(frozen=True)
class TrialRecord:
    """One scheme's outcome on one trial; one raw CSV row."""

    sweep_param: str
    sweep_value_db: float
    trial: int
    scheme: str
    min_rate_nats: float
    min_rate_bits: float
    iterations: int
    termination: str
    wall_ms: float


@dataclass(frozen=True)
class PointAggregate:
    """Mean/CI summary of one (sweep point, scheme) cell; one aggregate row."""

    sweep_param: str
    sweep_value_db: float
    scheme: str
    mean_bits: float
    stderr_bits: float
    ci95_bits: float
    n: int


@dataclass(frozen=True)
class SweepResult:
    name: str
    records: list
    aggregates: list


def _order_of(scheme):
    return DecodingOrder.FUDF if scheme.endswith("FUDF") else DecodingOrder.NUDF


def run_trial(
    dist,
    budgets,
    master_seed,
    point_index,
    trial_index,
    schemes=ALL_SCHEMES,
    config=None,
    sweep_param="pn_max_db",
    sweep_value_db=0.0,
):
    """Solve every requested scheme on one shared channel draw.

    All schemes see the gains drawn from the (master seed, point index,
    trial index) stream, so cross-scheme comparisons are paired.  A failed
    cooperative run keeps the best verified iterate, or records a zero rate
    when no iterate passed verification.
    """
    rng = trial_stream(master_seed, point_index, trial_index)
    gains = sample_gains(dist, rng)
    records = []
    for scheme in schemes:
        order = _order_of(scheme)
        start = time.perf_counter()
        if scheme in (SCHEME_CNOMA_FUDF, SCHEME_CNOMA_NUDF):
            outcome = sca_solve(gains, budgets, order, config)
            nats = outcome.min_rate if outcome.feasibility.passed else 0.0
            iterations = outcome.iterations
            termination = outcome.termination.value
        else:
            result = baseline_maxmin(gains, budgets, order)
            nats = result.min_rate
            iterations = 0
            termination = ScaTermination.CONVERGED.value
        wall_ms = (time.perf_counter() - start) * 1e3
        records.append(
            TrialRecord(
                sweep_param=sweep_param,
                sweep_value_db=float(sweep_value_db),
                trial=trial_index,
                scheme=scheme,
                min_rate_nats=float(nats),
                min_rate_bits=float(nats) / NATS_PER_BIT,
                iterations=int(iterations),
                termination=termination,
                wall_ms=wall_ms,
            )
        )
    return records


def _run_point_task(task):
    """Worker body: all trials of one sweep point, cooperative runs batched."""
    (param_label, value_db, dist, budgets, trials, master_seed, point_index,
     schemes, config) = task
    draws = [
        sample_gains(dist, trial_stream(master_seed, point_index, t))
        for t in range(trials)
    ]
    stacked = ChannelGains(
        gamma_n=np.array([g.gamma_n for g in draws]),
        gamma_f=np.array([g.gamma_f for g in draws]),
        gamma_nf=np.array([g.gamma_nf for g in draws]),
        gamma_si=np.array([g.gamma_si for g in draws]),
    )
    per_scheme = {}
    for scheme in schemes:
        order = _order_of(scheme)
        start = time.perf_counter()
        if scheme in (SCHEME_CNOMA_FUDF, SCHEME_CNOMA_NUDF):
            out = sca_solve_batch(stacked, budgets, order, config)
            nats = np.where(out.feasible, out.min_rate, 0.0)
            iters = out.iterations
            terms = [t.value for t in out.termination]
        else:
            nats = np.empty(trials)
            for t in range(trials):
                nats[t] = baseline_maxmin(draws[t], budgets, order).min_rate
            iters = np.zeros(trials, dtype=int)
            terms = [ScaTermination.CONVERGED.value] * trials
        wall_ms = (time.perf_counter() - start) * 1e3 / trials
        per_scheme[scheme] = (nats, iters, terms, wall_ms)
    records = []
    for t in range(trials):
        for scheme in schemes:
            nats, iters, terms, wall_ms = per_scheme[scheme]
            rate = float(nats[t])
            records.append(
                TrialRecord(
                    sweep_param=param_label,
                    sweep_value_db=float(value_db),
                    trial=t,
                    scheme=scheme,
                    min_rate_nats=rate,
                    min_rate_bits=rate / NATS_PER_BIT,
                    iterations=int(iters[t]),
                    termination=terms[t],
                    wall_ms=wall_ms,
                )
            )
    return records


def aggregate_records(records):
    """Per (sweep point, scheme) mean/stderr/CI of the bit rates.

    Cells appear in first-seen record order, so aggregates line up with the
    raw stream regardless of how the sweep was parallelized.
    """
    cells = {}
    order = []
    for rec in records:
        key = (rec.sweep_value_db, rec.scheme)
        if key not in cells:
            cells[key] = (rec.sweep_param, [])
            order.append(key)
        cells[key][1].append(rec.min_rate_bits)
    aggregates = []
    for value_db, scheme in order:
        param_label, bits = cells[(value_db, scheme)]
        arr = np.asarray(bits)
        n = arr.size
        stderr = float(np.std(arr, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        aggregates.append(
            PointAggregate(
                sweep_param=param_label,
                sweep_value_db=value_db,
                scheme=scheme,
                mean_bits=float(np.mean(arr)),
                stderr_bits=stderr,
                ci95_bits=CI95_FACTOR * stderr,
                n=int(n),
            )
        )
    return aggregates


def run_sweep(spec, workers=1):
    """Run every (point, trial, scheme) cell of a sweep.

    Workers parallelize across sweep points; each point's trial batch is
    solved whole, so the result is identical for any worker count.  A trial
    whose cooperative solve fails is recorded (zero rate, termination flag)
    rather than aborting the sweep.
    """
    tasks = []
    for i in range(len(spec.values_db)):
        value_db, dist, budgets = spec.point_scenario(i)
        tasks.append(
            (spec.param.value, value_db, dist, budgets, spec.trials,
             spec.master_seed, i, spec.schemes, spec.sca)
        )
    if workers <= 1:
        per_point = [_run_point_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(_run_point_task, tasks))
    records = [rec for point in per_point for rec in point]
    return SweepResult(
        name=spec.name, records=records, aggregates=aggregate_records(records)
    )


def solve_failures(records, threshold=0.99):
    """Cells whose solved-trial fraction falls below `threshold`.

    A trial counts as solved unless its cooperative run ended in a
    subproblem failure.  Returns (table rows, all-clear flag); rows are
    (param, value_db, scheme, solved, total).
    """
    counts = {}
    order = []
    failure = ScaTermination.SUBPROBLEM_FAILURE.value
    for rec in records:
        key = (rec.sweep_value_db, rec.scheme)
        if key not in counts:
            counts[key] = [rec.sweep_param, 0, 0]
            order.append(key)
        counts[key][2] += 1
        if rec.termination != failure:
            counts[key][1] += 1
    rows = []
    for value_db, scheme in order:
        param_label, solved, total = counts[(value_db, scheme)]
        if solved < threshold * total:
            rows.append((param_label, value_db, scheme, solved, total))
    return rows, not rows


def write_raw_csv(records, path):
    """Raw per-trial rows; the wall_ms column is zeroed so output bytes
    depend only on the seed (timings stay on the in-memory records)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for r in records:
            writer.writerow(
                (
                    r.sweep_param,
                    repr(float(r.sweep_value_db)),
                    r.trial,
                    r.scheme,
                    repr(float(r.min_rate_nats)),
                    repr(float(r.min_rate_bits)),
                    int(r.iterations),
                    r.termination,
                    0,
                )
            )


def write_aggregate_csv(aggregates, path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for a in aggregates:
            writer.writerow(
                (
                    a.sweep_param,
                    repr(float(a.sweep_value_db)),
                    a.scheme,
                    repr(float(a.mean_bits)),
                    repr(float(a.stderr_bits)),
                    repr(float(a.ci95_bits)),
                    int(a.n),
                )
            )


def preset_sweeps():
    """The four bundled sweeps: near/far budget sweeps at a fixed partner
    budget, and loop-interference / cooperative-link mean sweeps at equal
    15 dB budgets."""
    steps5 = tuple(float(v) for v in range(0, 31, 5))
    return {
        "fig2a": SweepSpec(
            name="fig2a",
            param=SweepParam.PN_MAX_DB,
            values_db=steps5,
            budgets_db=(steps5[0], 25.0),
        ),
        "fig2b": SweepSpec(
            name="fig2b",
            param=SweepParam.PF_MAX_DB,
            values_db=steps5,
            budgets_db=(5.0, steps5[0]),
        ),
        "fig2c": SweepSpec(
            name="fig2c",
            param=SweepParam.LAMBDA_SI_DB,
            values_db=tuple(float(v) for v in range(-10, 16, 5)),
            budgets_db=(15.0, 15.0),
        ),
        "fig2d": SweepSpec(
            name="fig2d",
            param=SweepParam.LAMBDA_NF_DB,
            values_db=tuple(float(v) for v in range(0, 21, 4)),
            budgets_db=(15.0, 15.0),
        ),
    }


def preset(name):
    presets = preset_sweeps()
    if name not in presets:
        raise ValueError(
            f"unknown sweep preset {name!r}; valid names: "
            + ", ".join(sorted(presets))
        )
    return presets[name]


@dataclass(frozen=True)
class ValidationRow:
    """One instance/order comparison between the SCA solver and the grid."""

    instance: int
    order: str
    sca_nats: float
    grid_nats: float
    ratio: float
    rel_gap: float
    iterations: int
    termination: str
    zeta_nats: float
    feasible: bool
    trace: tuple


@dataclass(frozen=True)
class ValidationSummary:
    rows: list
    instances: int
    ratio_pass_fraction: float  # instances whose every order hits >= 0.90x
    median_rel_gap: float
    runtime_s: float
    passed: bool


def validate_against_oracle(
    instances=100,
    pn_max_db=20.0,
    pf_max_db=20.0,
    distribution=DEFAULT_DISTRIBUTION,
    master_seed=DEFAULT_SEED,
    resolution=101,
    refine_depth=1,
    config=None,
    ratio_floor=0.90,
    ratio_fraction=0.90,
    gap_ceiling=0.05,
):
    """Compare the SCA solver against the brute-force grid on random draws.

    Each instance is solved for both decoding orders; an instance passes
    when every order reaches `ratio_floor` of the grid optimum.  The batch
    passes when at least `ratio_fraction` of instances pass and the median
    relative gap over all runs is at most `gap_ceiling`.
    """
    budgets = PowerBudgets(db_to_linear(pn_max_db), db_to_linear(pf_max_db))
    start = time.perf_counter()
    rows = []
    instance_pass = []
    for i in range(instances):
        gains = sample_gains(distribution, trial_stream(master_seed, i))
        orders_ok = True
        for order in (DecodingOrder.FUDF, DecodingOrder.NUDF):
            outcome = sca_solve(gains, budgets, order, config)
            sca_nats = outcome.min_rate if outcome.feasibility.passed else 0.0
            grid = grid_maxmin(
                gains, budgets, order,
                resolution=resolution, refine_depth=refine_depth,
            )
            grid_nats = grid.min_rate
            if grid_nats > 0.0:
                ratio = sca_nats / grid_nats
                rel_gap = max(0.0, (grid_nats - sca_nats) / grid_nats)
            else:
                ratio = 1.0
                rel_gap = 0.0
            orders_ok = orders_ok and ratio >= ratio_floor
            rows.append(
                ValidationRow(
                    instance=i,
                    order=order.value,
                    sca_nats=float(sca_nats),
                    grid_nats=float(grid_nats),
                    ratio=float(ratio),
                    rel_gap=float(rel_gap),
                    iterations=outcome.iterations,
                    termination=outcome.termination.value,
                    zeta_nats=float(outcome.zeta),
                    feasible=bool(outcome.feasibility.passed),
                    trace=tuple(outcome.trace),
                )
            )
        instance_pass.append(orders_ok)
    runtime_s = time.perf_counter() - start
    pass_fraction = float(np.mean(instance_pass))
    median_gap = float(np.median([r.rel_gap for r in rows]))
    return ValidationSummary(
        rows=rows,
        instances=instances,
        ratio_pass_fraction=pass_fraction,
        median_rel_gap=median_gap,
        runtime_s=runtime_s,
        passed=pass_fraction >= ratio_fraction and median_gap <= gap_ceiling,
    )
