"""Command-line front end: solve / oracle / sweep / validate.

Scenario files are flat JSON objects.  A scenario names its channel either
explicitly (gamma_n, gamma_f, gamma_nf, gamma_si — linear power gains) or
statistically (lambda_n_db, lambda_f_db, lambda_nf_db, lambda_si_db —
exponential means in dB, drawn once with the scenario seed); exactly one
of the two families must be present, together with pn_max_db, pf_max_db
(transmit-SNR budgets in dB) and the decoding order.  Optional keys:
seed, sca.{max_iters,epsilon,q} (nested object or dotted flat keys), and —
for verify-only runs — allocation {alpha_n, alpha_f, beta_f} plus
zeta_nats.

Exit codes: 0 success; 2 malformed scenario/spec; 3 solve ended in a
subproblem failure with no feasible iterate; 4 a sweep point fell below
99% solved trials; 1 validation thresholds missed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .channel import (
    DEFAULT_SEED,
    ChannelDistribution,
    ChannelGains,
    sample_gains,
    trial_stream,
)
from .conic import format_program
from .experiments import (
    ALL_SCHEMES,
    SweepParam,
    SweepSpec,
    preset,
    preset_sweeps,
    run_sweep,
    solve_failures,
    validate_against_oracle,
    write_aggregate_csv,
    write_raw_csv,
)
from .oracle import baseline_maxmin, grid_maxmin
from .rates import NATS_PER_BIT, Allocation, DecodingOrder, PowerBudgets
from .sca import (
    ScaConfig,
    ScaTermination,
    build_subproblem,
    initialize_state,
    sca_solve,
    verify_feasibility,
)
from .channel import db_to_linear

GAIN_KEYS = ("gamma_n", "gamma_f", "gamma_nf", "gamma_si")
DIST_KEYS = ("lambda_n_db", "lambda_f_db", "lambda_nf_db", "lambda_si_db")
SCA_KEYS = ("max_iters", "epsilon", "q")
_SCENARIO_KEYS = (
    GAIN_KEYS
    + DIST_KEYS
    + ("pn_max_db", "pf_max_db", "order", "seed", "sca", "allocation",
       "zeta_nats")
    + tuple(f"sca.{k}" for k in SCA_KEYS)
)


class ScenarioError(Exception):
    """Malformed scenario or sweep spec; maps to exit code 2."""


@dataclasses.dataclass(frozen=True)
class Scenario:
    gains: ChannelGains
    budgets: PowerBudgets
    pn_max_db: float
    pf_max_db: float
    order: DecodingOrder
    config: ScaConfig
    allocation: Allocation | None
    zeta_nats: float | None


def _env_seed():
    raw = os.environ.get("CNOMA_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ScenarioError(f"CNOMA_SEED must be an integer, got {raw!r}") from exc


def _require_number(data, key):
    if key not in data:
        raise ScenarioError(f"missing required key {key!r}")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"key {key!r} must be a number, got {value!r}")
    return float(value)


def _parse_order(text):
    try:
        return DecodingOrder(str(text).lower())
    except ValueError as exc:
        raise ScenarioError(
            f"order must be one of {[o.value for o in DecodingOrder]}, "
            f"got {text!r}"
        ) from exc


def _sca_overrides(data):
    """Collect sca.* overrides from a nested object or dotted flat keys."""
    overrides = {}
    nested = data.get("sca", {})
    if not isinstance(nested, dict):
        raise ScenarioError("key 'sca' must be an object")
    for key, value in nested.items():
        if key not in SCA_KEYS:
            raise ScenarioError(f"unknown sca key {key!r}; valid: {SCA_KEYS}")
        overrides[key] = value
    for key in SCA_KEYS:
        dotted = f"sca.{key}"
        if dotted in data:
            overrides[key] = data[dotted]
    config = ScaConfig()
    if "max_iters" in overrides:
        config = dataclasses.replace(config, max_iters=int(overrides["max_iters"]))
    if "epsilon" in overrides:
        config = dataclasses.replace(config, epsilon=float(overrides["epsilon"]))
    if "q" in overrides:
        config = dataclasses.replace(config, q=int(overrides["q"]))
    return config


def load_scenario(path, order_override=None):
    """Parse and fully resolve a scenario file to a concrete instance."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = [k for k in data if k not in _SCENARIO_KEYS]
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")

    has_gains = [k for k in GAIN_KEYS if k in data]
    has_dist = [k for k in DIST_KEYS if k in data]
    if has_gains and has_dist:
        raise ScenarioError(
            "scenario must use either explicit gamma_* gains or lambda_*_db "
            f"means, not both (found {has_gains + has_dist})"
        )
    if has_gains:
        try:
            gains = ChannelGains(*(_require_number(data, k) for k in GAIN_KEYS))
        except ValueError as exc:
            raise ScenarioError(f"invalid gains: {exc}") from exc
    elif has_dist:
        try:
            dist = ChannelDistribution(
                *(_require_number(data, k) for k in DIST_KEYS)
            )
        except ValueError as exc:
            raise ScenarioError(f"invalid distribution: {exc}") from exc
        seed = data.get("seed")
        if seed is None:
            env = _env_seed()
            seed = DEFAULT_SEED if env is None else env
        gains = sample_gains(dist, trial_stream(int(seed)))
    else:
        raise ScenarioError(
            f"missing channel keys: provide {GAIN_KEYS[0]!r}.. or {DIST_KEYS[0]!r}.."
        )

    pn_db = _require_number(data, "pn_max_db")
    pf_db = _require_number(data, "pf_max_db")
    if order_override is not None:
        order = _parse_order(order_override)
    elif "order" in data:
        order = _parse_order(data["order"])
    else:
        raise ScenarioError("missing required key 'order'")

    allocation = None
    if "allocation" in data:
        raw = data["allocation"]
        if not isinstance(raw, dict):
            raise ScenarioError("key 'allocation' must be an object")
        for key in ("alpha_n", "alpha_f", "beta_f"):
            _require_number(raw, key)
        extra = [k for k in raw if k not in ("alpha_n", "alpha_f", "beta_f")]
        if extra:
            raise ScenarioError(f"unknown allocation keys: {sorted(extra)}")
        try:
            allocation = Allocation(
                float(raw["alpha_n"]), float(raw["alpha_f"]), float(raw["beta_f"])
            )
        except ValueError as exc:
            raise ScenarioError(f"invalid allocation: {exc}") from exc
    zeta = float(data["zeta_nats"]) if "zeta_nats" in data else None

    try:
        budgets = PowerBudgets(db_to_linear(pn_db), db_to_linear(pf_db))
    except ValueError as exc:
        raise ScenarioError(f"invalid budgets: {exc}") from exc
    return Scenario(
        gains=gains,
        budgets=budgets,
        pn_max_db=pn_db,
        pf_max_db=pf_db,
        order=order,
        config=_sca_overrides(data),
        allocation=allocation,
        zeta_nats=zeta,
    )


def _emit(report, as_json, human_lines):
    if as_json:
        print(json.dumps(report, indent=2))
    else:
        for line in human_lines:
            print(line)


def cmd_solve(args):
    scenario = load_scenario(args.scenario, args.order)
    gains, budgets, order = scenario.gains, scenario.budgets, scenario.order

    if args.dump_subproblem:
        state = initialize_state(gains, budgets, order, scenario.config)
        prog = build_subproblem(state, gains, budgets, order, scenario.config)
        with open(args.dump_subproblem, "w", encoding="utf-8") as handle:
            handle.write(format_program(prog) + "\n")

    if args.verify_only:
        if scenario.allocation is None:
            raise ScenarioError("verify-only mode needs key 'allocation'")
        if scenario.zeta_nats is None:
            raise ScenarioError("verify-only mode needs key 'zeta_nats'")
        report_obj = verify_feasibility(
            scenario.allocation, scenario.zeta_nats, gains, budgets, order
        )
        margins = {k: float(v) for k, v in report_obj.margins.items()}
        report = {
            "mode": "verify",
            "order": order.value,
            "zeta_nats": scenario.zeta_nats,
            "margins": margins,
            "feasible": bool(report_obj.passed),
        }
        _emit(
            report,
            args.json,
            [f"order: {order.value}", f"zeta: {scenario.zeta_nats} nats"]
            + [f"margin {k}: {v}" for k, v in margins.items()]
            + [f"feasible: {report_obj.passed}"],
        )
        return 0

    outcome = sca_solve(gains, budgets, order, scenario.config)
    alloc = outcome.allocation
    margins = {k: float(v) for k, v in outcome.feasibility.margins.items()}
    report = {
        "mode": "solve",
        "order": order.value,
        "gains": {
            "gamma_n": float(gains.gamma_n),
            "gamma_f": float(gains.gamma_f),
            "gamma_nf": float(gains.gamma_nf),
            "gamma_si": float(gains.gamma_si),
        },
        "pn_max_db": scenario.pn_max_db,
        "pf_max_db": scenario.pf_max_db,
        "allocation": {
            "alpha_n": alloc.alpha_n,
            "alpha_f": alloc.alpha_f,
            "beta_f": alloc.beta_f,
        },
        "zeta_nats": outcome.zeta,
        "zeta_bits": outcome.zeta / NATS_PER_BIT,
        "min_rate_nats": outcome.min_rate,
        "min_rate_bits": outcome.min_rate / NATS_PER_BIT,
        "iterations": outcome.iterations,
        "trace_len": len(outcome.trace),
        "termination": outcome.termination.value,
        "margins": margins,
        "feasible": bool(outcome.feasibility.passed),
    }
    _emit(
        report,
        args.json,
        [
            f"order: {order.value}",
            f"alpha_n: {alloc.alpha_n}",
            f"alpha_f: {alloc.alpha_f}",
            f"beta_f: {alloc.beta_f}",
            f"zeta: {outcome.zeta} nats ({outcome.zeta / NATS_PER_BIT} bits)",
            f"min rate: {outcome.min_rate} nats "
            f"({outcome.min_rate / NATS_PER_BIT} bits)",
            f"iterations: {outcome.iterations} (trace length {len(outcome.trace)})",
            f"termination: {outcome.termination.value}",
        ]
        + [f"margin {k}: {v}" for k, v in margins.items()]
        + [f"feasible: {outcome.feasibility.passed}"],
    )
    failed = (
        outcome.termination is ScaTermination.SUBPROBLEM_FAILURE
        and not outcome.feasibility.passed
    )
    return 3 if failed else 0


def cmd_oracle(args):
    scenario = load_scenario(args.scenario, args.order)
    gains, budgets, order = scenario.gains, scenario.budgets, scenario.order
    grid = grid_maxmin(
        gains, budgets, order,
        resolution=args.resolution, refine_depth=args.depth,
    )
    base = baseline_maxmin(gains, budgets, order)
    report = {
        "mode": "oracle",
        "order": order.value,
        "grid": {
            "min_rate_nats": grid.min_rate,
            "min_rate_bits": grid.min_rate / NATS_PER_BIT,
            "allocation": {
                "alpha_n": grid.allocation.alpha_n,
                "alpha_f": grid.allocation.alpha_f,
                "beta_f": grid.allocation.beta_f,
            },
            "evaluations": grid.evaluations,
        },
        "baseline": {
            "min_rate_nats": base.min_rate,
            "min_rate_bits": base.min_rate / NATS_PER_BIT,
            "p_n": base.powers.p_n,
            "p_f": base.powers.p_f,
        },
    }
    _emit(
        report,
        args.json,
        [
            f"order: {order.value}",
            f"grid min rate: {grid.min_rate} nats "
            f"({grid.min_rate / NATS_PER_BIT} bits)",
            f"grid allocation: alpha_n={grid.allocation.alpha_n} "
            f"alpha_f={grid.allocation.alpha_f} beta_f={grid.allocation.beta_f}",
            f"grid evaluations: {grid.evaluations}",
            f"baseline min rate: {base.min_rate} nats "
            f"({base.min_rate / NATS_PER_BIT} bits)",
            f"baseline powers: p_n={base.powers.p_n} p_f={base.powers.p_f}",
        ],
    )
    return 0


def _load_sweep_spec(args):
    presets = preset_sweeps()
    if args.sweep in presets:
        spec = presets[args.sweep]
    elif os.path.exists(args.sweep):
        spec = _parse_sweep_file(args.sweep)
    else:
        raise ScenarioError(
            f"unknown sweep preset {args.sweep!r} and no such spec file; "
            "valid presets: " + ", ".join(sorted(presets))
        )
    if args.trials is not None:
        if args.trials < 1:
            raise ScenarioError("--trials must be >= 1")
        spec = dataclasses.replace(spec, trials=args.trials)
    seed = args.seed if args.seed is not None else _env_seed()
    if seed is not None:
        spec = dataclasses.replace(spec, master_seed=int(seed))
    return spec


def _parse_sweep_file(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot parse sweep spec {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("sweep spec must be a JSON object")
    known = {
        "name", "param", "values_db", "trials", "seed", "schemes",
        "pn_max_db", "pf_max_db",
    } | set(DIST_KEYS)
    unknown = [k for k in data if k not in known]
    if unknown:
        raise ScenarioError(f"unknown sweep spec keys: {sorted(unknown)}")
    try:
        param = SweepParam(str(data.get("param")))
    except ValueError as exc:
        raise ScenarioError(
            f"sweep spec key 'param' must be one of "
            f"{[p.value for p in SweepParam]}, got {data.get('param')!r}"
        ) from exc
    values = data.get("values_db")
    if not isinstance(values, list) or not values:
        raise ScenarioError("sweep spec key 'values_db' must be a nonempty list")
    dist = ChannelDistribution(
        mean_n_db=_require_number(data, "lambda_n_db"),
        mean_f_db=_require_number(data, "lambda_f_db"),
        mean_nf_db=_require_number(data, "lambda_nf_db"),
        mean_si_db=_require_number(data, "lambda_si_db"),
    )
    schemes = tuple(data.get("schemes", ALL_SCHEMES))
    try:
        return SweepSpec(
            name=str(data.get("name", os.path.splitext(os.path.basename(path))[0])),
            param=param,
            values_db=tuple(float(v) for v in values),
            distribution=dist,
            budgets_db=(
                _require_number(data, "pn_max_db"),
                _require_number(data, "pf_max_db"),
            ),
            trials=int(data.get("trials", 1000)),
            master_seed=int(data.get("seed", DEFAULT_SEED)),
            schemes=schemes,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid sweep spec: {exc}") from exc


def cmd_sweep(args):
    spec = _load_sweep_spec(args)
    raw_path = args.raw_out or os.path.join(args.out_dir, f"{spec.name}_raw.csv")
    agg_path = args.aggregate_out or os.path.join(
        args.out_dir, f"{spec.name}_aggregate.csv"
    )
    result = run_sweep(spec, workers=args.workers)
    os.makedirs(os.path.dirname(raw_path) or ".", exist_ok=True)
    os.makedirs(os.path.dirname(agg_path) or ".", exist_ok=True)
    write_raw_csv(result.records, raw_path)
    write_aggregate_csv(result.aggregates, agg_path)
    print(f"wrote {raw_path} ({len(result.records)} rows)")
    print(f"wrote {agg_path} ({len(result.aggregates)} rows)")
    failures, ok = solve_failures(result.records)
    if not ok:
        print("points below 99% solved trials:", file=sys.stderr)
        print("param,value_db,scheme,solved,total", file=sys.stderr)
        for param_label, value_db, scheme, solved, total in failures:
            print(
                f"{param_label},{value_db},{scheme},{solved},{total}",
                file=sys.stderr,
            )
        return 4
    return 0


def cmd_validate(args):
    seed = args.seed if args.seed is not None else _env_seed()
    summary = validate_against_oracle(
        instances=args.instances,
        pn_max_db=args.pn_max_db,
        pf_max_db=args.pf_max_db,
        master_seed=DEFAULT_SEED if seed is None else int(seed),
        resolution=args.resolution,
        refine_depth=args.depth,
    )
    print(
        f"instances: {summary.instances} (both decoding orders each)\n"
        f"instances at >= 0.90x of grid optimum: "
        f"{summary.ratio_pass_fraction:.3f} (need >= 0.900)\n"
        f"median relative gap: {summary.median_rel_gap:.5f} (need <= 0.05000)\n"
        f"runtime: {summary.runtime_s:.1f} s\n"
        f"validate: {'PASS' if summary.passed else 'FAIL'}"
    )
    return 0 if summary.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cnoma",
        description="Max-min fair power allocation for a two-user uplink "
        "cooperative-NOMA cell: SCA solver, brute-force oracles, and "
        "Monte-Carlo sweeps.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser(
        "solve", help="run the SCA solver on a scenario file", allow_abbrev=False
    )
    p_solve.add_argument("scenario", help="path to a JSON scenario")
    p_solve.add_argument("--order", help="override the scenario decoding order")
    p_solve.add_argument("--json", action="store_true", help="machine-readable report")
    p_solve.add_argument(
        "--verify-only",
        action="store_true",
        help="recompute feasibility margins of the scenario's allocation/zeta",
    )
    p_solve.add_argument(
        "--dump-subproblem",
        metavar="PATH",
        help="write the first convex subproblem as plain text, one constraint per line",
    )
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser(
        "oracle",
        help="run the brute-force grid and bisection oracles on a scenario",
        allow_abbrev=False,
    )
    p_oracle.add_argument("scenario", help="path to a JSON scenario")
    p_oracle.add_argument("--order", help="override the scenario decoding order")
    p_oracle.add_argument("--json", action="store_true", help="machine-readable report")
    p_oracle.add_argument("--resolution", type=int, default=101, help="grid points per axis")
    p_oracle.add_argument("--depth", type=int, default=2, help="grid refinement passes")
    p_oracle.set_defaults(func=cmd_oracle)

    p_sweep = sub.add_parser(
        "sweep", help="run a Monte-Carlo sweep and write both CSVs", allow_abbrev=False
    )
    p_sweep.add_argument("sweep", help="preset name (fig2a..fig2d) or JSON spec path")
    p_sweep.add_argument("--out-dir", default=".", help="directory for default CSV paths")
    p_sweep.add_argument("--raw-out", help="raw per-trial CSV path")
    p_sweep.add_argument("--aggregate-out", help="aggregate CSV path")
    p_sweep.add_argument("--workers", type=int, default=1, help="worker processes")
    p_sweep.add_argument("--seed", type=int, help="master seed override")
    p_sweep.add_argument("--trials", type=int, help="trials per point override")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser(
        "validate",
        help="compare the SCA solver against the grid oracle on random instances",
        allow_abbrev=False,
    )
    p_val.add_argument("--instances", type=int, default=100)
    p_val.add_argument("--pn-max-db", type=float, default=20.0)
    p_val.add_argument("--pf-max-db", type=float, default=20.0)
    p_val.add_argument("--seed", type=int, help="master seed override")
    p_val.add_argument("--resolution", type=int, default=101)
    p_val.add_argument("--depth", type=int, default=1)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
