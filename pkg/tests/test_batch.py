"""Lockstep batch solver: template equality with the scalar builder and
numerical agreement with the per-instance path."""

import numpy as np

from cnoma.batch import _anchor_params, _layout_for, sca_solve_batch
from cnoma.channel import (
    DEFAULT_DISTRIBUTION,
    ChannelGains,
    db_to_linear,
    sample_gains,
    trial_stream,
)
from cnoma.conic import canonical_form
from cnoma.rates import Allocation, DecodingOrder, PowerBudgets
from cnoma.sca import ScaConfig, ScaState, build_subproblem, sca_solve


def _stack(draws):
    return ChannelGains(
        gamma_n=np.array([d.gamma_n for d in draws]),
        gamma_f=np.array([d.gamma_f for d in draws]),
        gamma_nf=np.array([d.gamma_nf for d in draws]),
        gamma_si=np.array([d.gamma_si for d in draws]),
    )


def test_template_matches_scalar_builder_exactly():
    rng = np.random.default_rng(7)
    for order in DecodingOrder:
        for q in (3, 4):
            layout = _layout_for(order, q)
            for rep in range(4):
                gains = ChannelGains(*np.exp(rng.normal(0.0, 1.5, size=4)))
                budgets = PowerBudgets(*np.exp(rng.normal(2.0, 1.0, size=2)))
                a, b, c, lam = np.exp(rng.normal(0.0, 1.0, size=4))
                state = ScaState(
                    alloc=Allocation(0.3, 0.5, 0.9), zeta=0.2, vartheta=0.7,
                    a=a, b=b,
                    c=c if order is DecodingOrder.NUDF else None,
                    lam=lam if order is DecodingOrder.FUDF else None,
                )
                canon = canonical_form(
                    build_subproblem(state, gains, budgets, order, ScaConfig(q=q))
                )
                aux = c if order is DecodingOrder.NUDF else lam
                G, h, orth, blocks = layout.fill(
                    (np.array([gains.gamma_n]), np.array([gains.gamma_f]),
                     np.array([gains.gamma_nf]), np.array([gains.gamma_si])),
                    budgets, np.array([a]), np.array([b]), np.array([aux]),
                )
                assert np.array_equal(G[0], canon.G), (order, q, rep)
                assert np.array_equal(h[0], canon.h), (order, q, rep)
                assert np.array_equal(orth[0], canon.orthant_scale), (order, q, rep)
                # block scales: canonical order vs dim-grouped batch order
                flat = {}
                for (starts, _idx), scales in zip(layout.cone.groups, blocks):
                    for k, start in enumerate(starts):
                        flat[int(start)] = scales[0][k]
                offset = canon.l
                for k, dim in enumerate(canon.soc_dims):
                    assert flat[offset] == canon.block_scale[k], (order, q, rep)
                    offset += dim


def test_anchor_params_floor_matches_scalar():
    an = np.array([0.0, 0.4])
    af = np.array([0.5, 0.0])
    bf = np.array([0.0, 1.0])
    vth = np.array([0.7, 0.7])
    a, b, aux = _anchor_params(an, af, bf, vth, DecodingOrder.FUDF)
    # zero components are floored, never dividing by zero
    assert np.all(np.isfinite(a)) and np.all(np.isfinite(b))
    assert np.all(np.isfinite(aux)) and np.all(aux > 0.0)


def test_batch_agrees_with_scalar_path():
    budgets = PowerBudgets(db_to_linear(15.0), db_to_linear(15.0))
    draws = [
        sample_gains(DEFAULT_DISTRIBUTION, trial_stream(123, 9, t))
        for t in range(12)
    ]
    stacked = _stack(draws)
    for order in DecodingOrder:
        out = sca_solve_batch(stacked, budgets, order)
        scalar = [sca_solve(d, budgets, order) for d in draws]
        rates = np.array([r.min_rate for r in scalar])
        assert np.max(np.abs(out.min_rate - rates)) <= 1e-6
        for t, result in enumerate(scalar):
            assert out.termination[t] is result.termination
            assert out.iterations[t] == result.iterations
        assert np.all(out.feasible)
        assert np.all(out.margin_min >= -1e-3)


def test_batch_deterministic_and_shape():
    budgets = PowerBudgets(db_to_linear(20.0), db_to_linear(20.0))
    draws = [
        sample_gains(DEFAULT_DISTRIBUTION, trial_stream(5, 0, t)) for t in range(7)
    ]
    stacked = _stack(draws)
    first = sca_solve_batch(stacked, budgets, DecodingOrder.FUDF)
    second = sca_solve_batch(stacked, budgets, DecodingOrder.FUDF)
    assert np.array_equal(first.min_rate, second.min_rate)
    assert np.array_equal(first.zeta, second.zeta)
    assert np.array_equal(first.iterations, second.iterations)
    for field in (first.min_rate, first.zeta, first.iterations,
                  first.termination, first.feasible, first.margin_min):
        assert field.shape == (7,)
    alloc = first.allocation
    assert np.asarray(alloc.alpha_n).shape == (7,)
    assert np.all(np.asarray(alloc.alpha_n) + np.asarray(alloc.alpha_f) <= 1.0)


def test_batch_zero_relay_link():
    gains = ChannelGains(
        gamma_n=np.array([18.0, 2.0]),
        gamma_f=np.array([2.5, 0.5]),
        gamma_nf=np.array([0.0, 12.0]),
        gamma_si=np.array([3.0, 1.0]),
    )
    budgets = PowerBudgets(db_to_linear(15.0), db_to_linear(15.0))
    out = sca_solve_batch(gains, budgets, DecodingOrder.FUDF)
    assert out.min_rate[0] == 0.0
    assert out.min_rate[1] > 0.1
    assert np.all(out.feasible)
