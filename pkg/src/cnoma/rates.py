"""SINR and rate model for the two-user uplink cooperative-NOMA cell.

A near user splits its transmit budget between its own signal (fraction
alpha_n) and a decode-and-forward copy of the far user's previous-slot
signal (fraction alpha_f); the far user transmits at fraction beta_f of its
budget.  The full-duplex near user suffers residual self-interference while
relaying.  Two base-station decoding orders are supported:

  far-user-decoded-first (FUDF): the far user's signal is decoded first,
  combining the direct and relayed copies; the near user is then decoded
  interference-free.

  near-user-decoded-first (NUDF): the near user is decoded first, seeing
  both far-user-bound signals as interference; the far user's combined
  signal is then decoded interference-free.

Rates are natural-log throughputs (nats/s/Hz); noise power is 1 so channel
gains absorb the SNR scaling.  Every function accepts scalars or
broadcastable numpy arrays in the allocation fields.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

NATS_PER_BIT = float(np.log(2.0))


class DecodingOrder(Enum):
    FUDF = "fudf"
    NUDF = "nudf"


@dataclass(frozen=True)
class PowerBudgets:
    """Maximum transmit powers (linear scale, noise-normalized)."""

    p_n_max: float
    p_f_max: float

    def __post_init__(self):
        if not (np.isfinite(self.p_n_max) and self.p_n_max >= 0.0):
            raise ValueError(f"p_n_max must be finite and >= 0, got {self.p_n_max}")
        if not (np.isfinite(self.p_f_max) and self.p_f_max >= 0.0):
            raise ValueError(f"p_f_max must be finite and >= 0, got {self.p_f_max}")


@dataclass(frozen=True)
class Allocation:
    """Power-fraction decision variables.

    alpha_n + alpha_f <= 1 splits the near user's budget between its own
    stream and the relayed stream; beta_f <= 1 scales the far user's budget.
    Fields may be numpy arrays (validated elementwise).
    """

    alpha_n: object
    alpha_f: object
    beta_f: object

    def __post_init__(self):
        an, af, bf = (np.asarray(v) for v in (self.alpha_n, self.alpha_f, self.beta_f))
        if not (np.all(an >= 0.0) and np.all(af >= 0.0)):
            raise ValueError("alpha_n and alpha_f must be >= 0")
        if not np.all(an + af <= 1.0):
            raise ValueError("alpha_n + alpha_f must be <= 1")
        if not (np.all(bf >= 0.0) and np.all(bf <= 1.0)):
            raise ValueError("beta_f must lie in [0, 1]")


@dataclass(frozen=True)
class BaselinePowers:
    """Transmit powers (linear) for the non-cooperative baselines."""

    p_n: float
    p_f: float


@dataclass(frozen=True)
class RatePair:
    """Achieved rates (nats) plus the far-user branch components.

    rate_f = min(rate_relay, rate_combined): the decode-and-forward relay
    must decode the far user's signal before the base station can combine,
    so the weaker branch bottlenecks the far user.
    """

    rate_n: object
    rate_f: object
    rate_relay: object
    rate_combined: object


def project_allocation(alpha_n, alpha_f, beta_f):
    """Clip a numerically fuzzy point onto the feasible allocation set.

    Used to turn interior-point iterates (feasible to ~1e-9) into exactly
    feasible Allocation values; the perturbation is at roundoff level.
    """
    an = min(max(float(alpha_n), 0.0), 1.0)
    af = min(max(float(alpha_f), 0.0), 1.0)
    s = an + af
    if s > 1.0:
        an, af = an / s, af / s
        af = min(af, 1.0 - an)
    bf = min(max(float(beta_f), 0.0), 1.0)
    return Allocation(alpha_n=an, alpha_f=af, beta_f=bf)


def relay_sinr(alloc, budgets, gains):
    """SINR of the far user's signal at the relaying near user.

    The near user's own transmission (both streams) leaks back through the
    residual self-interference channel gamma_si.
    """
    signal = alloc.beta_f * budgets.p_f_max * gains.gamma_nf
    leak = (alloc.alpha_n + alloc.alpha_f) * budgets.p_n_max * gains.gamma_si
    return signal / (leak + 1.0)


def bs_sinrs_fudf(alloc, budgets, gains):
    """(delta_f, delta_n) at the base station, far user decoded first.

    The far user's direct copy is decoded against the near user's own
    stream and combined with the relayed copy; the near user then decodes
    interference-free.
    """
    own_n = alloc.alpha_n * budgets.p_n_max * gains.gamma_n
    relayed = alloc.alpha_f * budgets.p_n_max * gains.gamma_n
    direct = alloc.beta_f * budgets.p_f_max * gains.gamma_f
    delta_f = relayed / (own_n + 1.0) + direct
    delta_n = own_n
    return delta_f, delta_n


def bs_sinrs_nudf(alloc, budgets, gains):
    """(delta_n, delta_f) at the base station, near user decoded first.

    The near user is decoded seeing both far-user-bound signals as
    interference; the far user's copies then add interference-free.
    """
    own_n = alloc.alpha_n * budgets.p_n_max * gains.gamma_n
    relayed = alloc.alpha_f * budgets.p_n_max * gains.gamma_n
    direct = alloc.beta_f * budgets.p_f_max * gains.gamma_f
    delta_n = own_n / (relayed + direct + 1.0)
    delta_f = relayed + direct
    return delta_n, delta_f


def achievable_rates(alloc, budgets, gains, order):
    """RatePair for one allocation under the given decoding order."""
    rate_relay = np.log1p(relay_sinr(alloc, budgets, gains))
    if order is DecodingOrder.FUDF:
        delta_f, delta_n = bs_sinrs_fudf(alloc, budgets, gains)
    elif order is DecodingOrder.NUDF:
        delta_n, delta_f = bs_sinrs_nudf(alloc, budgets, gains)
    else:
        raise ValueError(f"unknown decoding order: {order!r}")
    rate_combined = np.log1p(delta_f)
    return RatePair(
        rate_n=np.log1p(delta_n),
        rate_f=np.minimum(rate_relay, rate_combined),
        rate_relay=rate_relay,
        rate_combined=rate_combined,
    )


def min_rate(alloc, budgets, gains, order):
    """Max-min objective: the smaller of the two users' rates (nats)."""
    pair = achievable_rates(alloc, budgets, gains, order)
    return np.minimum(pair.rate_n, pair.rate_f)


def baseline_rates(powers, gains, order):
    """RatePair for traditional (non-cooperative) uplink NOMA.

    Direct links only; the second-decoded user is interference-free.  With
    no relay the far-user branch components both equal the direct rate.
    """
    sig_n = powers.p_n * gains.gamma_n
    sig_f = powers.p_f * gains.gamma_f
    if order is DecodingOrder.NUDF:
        delta_n = sig_n / (sig_f + 1.0)
        delta_f = sig_f
    elif order is DecodingOrder.FUDF:
        delta_f = sig_f / (sig_n + 1.0)
        delta_n = sig_n
    else:
        raise ValueError(f"unknown decoding order: {order!r}")
    rate_f = np.log1p(delta_f)
    return RatePair(
        rate_n=np.log1p(delta_n),
        rate_f=rate_f,
        rate_relay=rate_f,
        rate_combined=rate_f,
    )
