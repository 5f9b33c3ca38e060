"""Successive convex approximation for the max-min rate power allocation.

The nonconvex max-min problem — choose power fractions (alpha_n, alpha_f,
beta_f) maximizing the smaller of the two users' rates, with the far user's
rate bottlenecked by the decode-and-forward relay link — is solved as a
sequence of conservative second-order cone subproblems:

* rates are written multiplicatively via vartheta >= exp(zeta) - 1, with
  exp(zeta) approximated from below by a squaring chain of SOC rows
  (conic.exp_cone_rows);
* bilinear products fraction*vartheta are replaced by epigraph variables
  u, v, w bounded through rotated-cone inner approximations
  (x/p)^2 + (vartheta*p)^2 <= 2*u, tight at the current anchor when
  p = sqrt(x_anchor / vartheta_anchor);
* under the far-user-decoded-first order, the product alpha_n*beta_f that
  helps the far user is underestimated by the tangent of Lambda^2 at
  Lambda_anchor = sqrt(alpha_n*beta_f), with Lambda^2 <= alpha_n*beta_f
  kept exactly as a rotated cone.

Every substitution is an inner (feasible-side) approximation that is tight
at the anchor, so each subproblem contains its own anchor point and the
sequence of subproblem optima is nondecreasing.  Iteration stops when the
bound's increase falls below ScaConfig.epsilon, and the reported allocation
is the one whose exactly recomputed min-rate was best, so the outcome never
relies on the approximation quality.  verify_feasibility re-derives the
rate margins from scratch as an independent check.

Because the rotated-cone substitutions are tight only along rays through
the anchor, plain re-anchoring can crawl when the optimum differs from the
anchor mostly in the fraction/vartheta ratios.  sca_solve therefore
extrapolates the ratio parameters geometrically (one-step momentum in log
space) and keeps the scheme sound with a fallback: an extrapolated
subproblem only counts if it improves the bound by more than epsilon,
otherwise the iteration is redone at the plain anchor, whose optimum
provably dominates the previous one.  Convergence is only ever declared on
plain-anchor iterations, so the stopping rule and the monotone trace are
exactly those of the unaccelerated scheme.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import ConicProgram, aff, exp_cone_rows
from .ipm import SolveStatus, SolverSettings, solve_socp
from .rates import Allocation, DecodingOrder, achievable_rates, min_rate, project_allocation

_FLOOR = 1e-9


class ScaTermination(Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    SUBPROBLEM_FAILURE = "subproblem_failure"


@dataclass(frozen=True)
class ScaConfig:
    max_iters: int = 30
    epsilon: float = 1e-4  # stop when the bound improves by less than this
    q: int = 4  # squaring depth of the exp-approximation chain
    vartheta_floor: float = _FLOOR
    momentum: float = 1.0  # log-space anchor extrapolation factor; 0 disables
    momentum_clip: float = 8.0  # |log parameter| cap for extrapolated anchors
    solver: SolverSettings = field(default_factory=SolverSettings)


@dataclass
class ScaState:
    """Anchor of the current subproblem: allocation, bound, and the derived
    linearization parameters (a, b, c are the rotated-cone tightness points
    for alpha_f, alpha_n, beta_f; lam anchors the product underestimate)."""

    alloc: Allocation
    zeta: float
    vartheta: float
    a: float
    b: float
    c: float | None
    lam: float | None


@dataclass
class FeasibilityReport:
    margins: dict
    passed: bool
    tolerance: float


@dataclass
class ScaOutcome:
    allocation: Allocation
    zeta: float  # subproblem bound associated with the reported allocation
    min_rate: float  # exactly recomputed min rate (nats) of that allocation
    iterations: int
    trace: list  # subproblem optima, starting from the anchor's exact rate
    termination: ScaTermination
    feasibility: FeasibilityReport


def _params_from(alloc, vartheta, order):
    an = max(alloc.alpha_n, _FLOOR)
    af = max(alloc.alpha_f, _FLOOR)
    bf = max(alloc.beta_f, _FLOOR)
    a = math.sqrt(af / vartheta)
    b = math.sqrt(an / vartheta)
    if order is DecodingOrder.NUDF:
        return a, b, math.sqrt(bf / vartheta), None
    return a, b, None, math.sqrt(an * bf)


def initialize_state(gains, budgets, order, config=None):
    """Anchor at a fixed interior allocation; the bound starts at its exact
    min rate so the first subproblem is feasible by construction."""
    config = config or ScaConfig()
    alloc = Allocation(alpha_n=0.2, alpha_f=0.8, beta_f=1.0)
    zeta0 = float(min_rate(alloc, budgets, gains, order))
    vartheta = max(math.expm1(zeta0), config.vartheta_floor)
    a, b, c, lam = _params_from(alloc, vartheta, order)
    return ScaState(alloc=alloc, zeta=zeta0, vartheta=vartheta, a=a, b=b, c=c, lam=lam)


def update_state(state, alloc, zeta, vartheta, order, config):
    vartheta = max(vartheta, config.vartheta_floor)
    a, b, c, lam = _params_from(alloc, vartheta, order)
    return ScaState(alloc=alloc, zeta=zeta, vartheta=vartheta, a=a, b=b, c=c, lam=lam)


def _log_params(state):
    return np.array(
        [
            math.log(state.a),
            math.log(state.b),
            math.log(state.c) if state.c is not None else 0.0,
            math.log(max(state.lam, 1e-12)) if state.lam is not None else 0.0,
        ]
    )


def _extrapolate_state(plain, prev_log, config):
    """Anchor with ratio parameters extrapolated one momentum step in log
    space; the allocation/bound bookkeeping stays at the plain anchor."""
    cur = _log_params(plain)
    ext = np.clip(
        cur + config.momentum * (cur - prev_log),
        -config.momentum_clip,
        config.momentum_clip,
    )
    return ScaState(
        alloc=plain.alloc,
        zeta=plain.zeta,
        vartheta=plain.vartheta,
        a=math.exp(ext[0]),
        b=math.exp(ext[1]),
        c=math.exp(ext[2]) if plain.c is not None else None,
        lam=min(math.exp(ext[3]), 1.0) if plain.lam is not None else None,
    )


def build_subproblem(state, gains, budgets, order, config=None):
    """Conservative SOCP whose optimum bounds the next max-min rate.

    Decision variables: the power fractions, the rate bound zeta, its
    exponential surrogate vartheta, epigraph variables for the
    fraction*vartheta products (u for alpha_f, v for alpha_n, w for beta_f
    under near-user-decoded-first), the product underestimate Lambda under
    far-user-decoded-first, and the exp-chain variables.
    """
    config = config or ScaConfig()
    pn, pf = budgets.p_n_max, budgets.p_f_max
    gn, gf, gnf, gsi = gains.gamma_n, gains.gamma_f, gains.gamma_nf, gains.gamma_si

    prog = ConicProgram()
    an = prog.add_var("alpha_n", lb=0.0, ub=1.0)
    af = prog.add_var("alpha_f", lb=0.0, ub=1.0)
    bf = prog.add_var("beta_f", lb=0.0, ub=1.0)
    zeta = prog.add_var("zeta", lb=0.0)
    vth = prog.add_var("vartheta", lb=0.0)
    u = prog.add_var("u", lb=0.0)  # >= alpha_f * vartheta
    v = prog.add_var("v", lb=0.0)  # >= alpha_n * vartheta
    prog.set_objective({zeta: 1.0})

    prog.add_linear({an: 1.0, af: 1.0}, 1.0, name="fraction-budget")

    one = aff({}, 1.0)
    prog.add_rsoc(
        [aff({af: 1.0 / state.a}), aff({vth: state.a})], aff({u: 1.0}), one, name="u-epigraph"
    )
    prog.add_rsoc(
        [aff({an: 1.0 / state.b}), aff({vth: state.b})], aff({v: 1.0}), one, name="v-epigraph"
    )

    # relay decode: vartheta * ((alpha_n+alpha_f) Pn gsi + 1) <= beta_f Pf gnf
    prog.add_linear(
        {bf: -pf * gnf, u: pn * gsi, v: pn * gsi, vth: 1.0}, 0.0, name="relay-decode"
    )

    if order is DecodingOrder.FUDF:
        lam = prog.add_var("lambda", lb=0.0)  # underestimates sqrt(alpha_n*beta_f)
        prog.add_rsoc(
            [aff({lam: math.sqrt(2.0)})], aff({an: 1.0}), aff({bf: 1.0}), name="product-cap"
        )
        # near user decoded second: alpha_n Pn gn >= vartheta
        prog.add_linear({vth: 1.0, an: -pn * gn}, 0.0, name="near-rate")
        # far user at the base station, interference-limited by the near user:
        #   alpha_f Pn gn + beta_f Pf gf (1 + alpha_n Pn gn) >= vartheta (1 + alpha_n Pn gn)
        # with alpha_n*beta_f >= 2 lam_r Lambda - lam_r^2 and alpha_n*vartheta <= v.
        cross = pn * pf * gn * gf
        prog.add_linear(
            {
                v: pn * gn,
                vth: 1.0,
                lam: -2.0 * state.lam * cross,
                af: -pn * gn,
                bf: -pf * gf,
            },
            -state.lam * state.lam * cross,
            name="far-rate",
        )
    elif order is DecodingOrder.NUDF:
        w = prog.add_var("w", lb=0.0)  # >= beta_f * vartheta
        prog.add_rsoc(
            [aff({bf: 1.0 / state.c}), aff({vth: state.c})], aff({w: 1.0}), one, name="w-epigraph"
        )
        # near user decoded first, sees both far-user signals as interference:
        #   alpha_n Pn gn >= vartheta (alpha_f Pn gn + beta_f Pf gf + 1)
        prog.add_linear(
            {u: pn * gn, w: pf * gf, vth: 1.0, an: -pn * gn}, 0.0, name="near-rate"
        )
        # far user decoded second, interference-free combination
        prog.add_linear({vth: 1.0, af: -pn * gn, bf: -pf * gf}, 0.0, name="far-rate")
    else:
        raise ValueError(f"unknown decoding order: {order!r}")

    exp_cone_rows(prog, zeta, vth, q=config.q)
    return prog


def verify_feasibility(alloc, zeta, gains, budgets, order, tolerance=1e-3):
    """Recompute the rate margins of (alloc, zeta) from first principles."""
    pair = achievable_rates(alloc, budgets, gains, order)
    margins = {
        "rate_n_minus_zeta": float(pair.rate_n) - zeta,
        "rate_relay_minus_zeta": float(pair.rate_relay) - zeta,
        "rate_combined_minus_zeta": float(pair.rate_combined) - zeta,
    }
    passed = all(m >= -tolerance for m in margins.values())
    return FeasibilityReport(margins=margins, passed=passed, tolerance=tolerance)


def _solve_named(prog, settings):
    result = solve_socp(prog, settings)
    if result.status is not SolveStatus.OPTIMAL:
        return None
    return {name: float(result.x[i]) for i, name in enumerate(prog.var_names)}


def sca_solve(gains, budgets, order, config=None):
    """Run the approximation loop; see ScaOutcome for what is reported."""
    config = config or ScaConfig()
    state = initialize_state(gains, budgets, order, config)
    plain_state = state

    def exact_of(alloc):
        return float(min_rate(alloc, budgets, gains, order))

    best_alloc = project_allocation(state.alloc.alpha_n, state.alloc.alpha_f, state.alloc.beta_f)
    best_exact = exact_of(best_alloc)
    best_zeta = state.zeta
    trace = [state.zeta]

    termination = ScaTermination.MAX_ITERS
    iterations = 0
    prev_bound = None
    prev_log = None
    extrapolated = False
    for it in range(config.max_iters):
        sol = _solve_named(build_subproblem(state, gains, budgets, order, config), config.solver)
        if extrapolated and (sol is None or sol["zeta"] - prev_bound <= config.epsilon):
            # extrapolated anchor did not clearly help: redo at the plain
            # anchor, whose subproblem contains the previous optimum
            state = plain_state
            extrapolated = False
            sol = _solve_named(
                build_subproblem(state, gains, budgets, order, config), config.solver
            )
        if sol is None:
            termination = ScaTermination.SUBPROBLEM_FAILURE
            break
        iterations = it + 1

        bound = sol["zeta"]
        trace.append(bound)

        alloc = project_allocation(sol["alpha_n"], sol["alpha_f"], sol["beta_f"])
        exact = exact_of(alloc)
        if exact > best_exact:
            best_alloc, best_exact, best_zeta = alloc, exact, bound

        if not extrapolated and prev_bound is not None and bound - prev_bound <= config.epsilon:
            termination = ScaTermination.CONVERGED
            break

        plain_state = update_state(state, alloc, bound, sol["vartheta"], order, config)
        if prev_log is not None and config.momentum > 0.0:
            state = _extrapolate_state(plain_state, prev_log, config)
            extrapolated = True
        else:
            state = plain_state
            extrapolated = False
        prev_log = _log_params(plain_state)
        prev_bound = bound

    report = verify_feasibility(best_alloc, best_zeta, gains, budgets, order)
    return ScaOutcome(
        allocation=best_alloc,
        zeta=best_zeta,
        min_rate=best_exact,
        iterations=iterations,
        trace=trace,
        termination=termination,
        feasibility=report,
    )
