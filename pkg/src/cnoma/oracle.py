"""Brute-force references for the max-min power-allocation problem.

`grid_maxmin` exhaustively scores allocations on a uniform grid that is
recentred and shrunk around the incumbent a few times; every candidate is
evaluated with the exact rate formulas, so its value is a certified
achievable min rate (a lower bound on the true optimum that tightens with
resolution).  `baseline_maxmin` solves the non-cooperative uplink pairing
by bisection on the common rate, using the closed-form feasibility test
of that two-user problem.  Both exist to cross-check the iterative
solver, not to be fast.
"""

import math
from dataclasses import dataclass

import numpy as np

from .rates import Allocation, BaselinePowers, DecodingOrder, min_rate

# each refinement recentres the window on the incumbent and shrinks the
# axis ranges by this factor
_SHRINK = 5.0


@dataclass(frozen=True)
class OracleResult:
    """Best grid point found: an exactly-evaluated achievable min rate."""

    min_rate: float
    allocation: Allocation
    evaluations: int


@dataclass(frozen=True)
class BaselineResult:
    """Max-min common rate of the non-cooperative pairing, in nats."""

    min_rate: float
    powers: BaselinePowers


def _grid_axis(center, half_width, resolution):
    lo = max(0.0, center - half_width)
    hi = min(1.0, center + half_width)
    return np.linspace(lo, hi, resolution)


def grid_maxmin(gains, budgets, order, resolution=101, refine_depth=2):
    """Exhaustive max-min allocation search with local grid refinement.

    Under far-user-decoded-first every rate is nondecreasing in beta_f, so
    that axis is pinned at 1 and the search is two-dimensional; the other
    order searches all three fractions.  Points with alpha_n + alpha_f > 1
    are evaluated at the clipped feasible edge but excluded from the
    argmax, which breaks ties lexicographically (first flat index wins).
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    if refine_depth < 0:
        raise ValueError(f"refine_depth must be >= 0, got {refine_depth}")
    three_d = order is DecodingOrder.NUDF
    centers = np.array([0.5, 0.5, 0.5])
    half = np.array([0.5, 0.5, 0.5])
    best_alloc = None
    best_rate = -math.inf
    evaluations = 0
    for _ in range(refine_depth + 1):
        an = _grid_axis(centers[0], half[0], resolution)[:, None, None]
        af = _grid_axis(centers[1], half[1], resolution)[None, :, None]
        if three_d:
            bf = _grid_axis(centers[2], half[2], resolution)[None, None, :]
        else:
            bf = np.ones((1, 1, 1))
        af_edge = np.minimum(af, 1.0 - an)
        alloc = Allocation(
            alpha_n=np.broadcast_to(an, np.broadcast_shapes(an.shape, af_edge.shape)),
            alpha_f=af_edge,
            beta_f=bf,
        )
        rate = np.asarray(min_rate(alloc, budgets, gains, order), dtype=float)
        feasible = np.broadcast_to(an + af <= 1.0, rate.shape)
        rate = np.where(feasible, rate, -np.inf)
        evaluations += int(feasible.sum())
        flat = int(np.argmax(rate))
        i, j, k = np.unravel_index(flat, rate.shape)
        cand_rate = float(rate[i, j, k])
        if cand_rate > best_rate:
            best_rate = cand_rate
            best_alloc = Allocation(
                alpha_n=float(an[i, 0, 0]),
                alpha_f=float(np.minimum(af[0, j, 0], 1.0 - an[i, 0, 0])),
                beta_f=float(bf[0, 0, k]) if three_d else 1.0,
            )
        centers = np.array(
            [best_alloc.alpha_n, best_alloc.alpha_f, best_alloc.beta_f]
        )
        half = half / _SHRINK
    return OracleResult(
        min_rate=best_rate, allocation=best_alloc, evaluations=evaluations
    )


def baseline_maxmin(gains, budgets, order, tol=1e-6):
    """Max-min rate of uplink NOMA without cooperation, by bisection.

    Both users send one stream; the base station decodes in the given
    order, so the first-decoded user is interference-limited by the
    second.  A target rate t (nats, T = e^t - 1) is achievable iff the
    second-decoded user can clear T on a clean channel and the first can
    clear T against the minimal such interference:

        near first:  T <= Pf*gf  and  T*(T+1) <= Pn*gn
        far first:   T <= Pn*gn  and  T*(T+1) <= Pf*gf

    Bisection keeps (feasible lo, infeasible hi) until hi - lo <= tol and
    reports lo with the minimal powers that attain it.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    gn, gf = gains.gamma_n, gains.gamma_f
    cap_n = budgets.p_n_max * gn
    cap_f = budgets.p_f_max * gf

    def feasible(t):
        big = math.expm1(t)
        if order is DecodingOrder.NUDF:
            return big <= cap_f and big * (big + 1.0) <= cap_n
        return big <= cap_n and big * (big + 1.0) <= cap_f

    lo = 0.0
    hi = min(math.log1p(cap_n), math.log1p(cap_f))
    if feasible(hi):
        lo = hi  # the clean-channel cap binds; no interference slack left
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid

    big = math.expm1(lo)
    if order is DecodingOrder.NUDF:
        p_f = big / gf if gf > 0.0 else 0.0
        p_n = big * (big + 1.0) / gn if gn > 0.0 else 0.0
    else:
        p_n = big / gn if gn > 0.0 else 0.0
        p_f = big * (big + 1.0) / gf if gf > 0.0 else 0.0
    powers = BaselinePowers(
        p_n=min(p_n, budgets.p_n_max), p_f=min(p_f, budgets.p_f_max)
    )
    return BaselineResult(min_rate=lo, powers=powers)
