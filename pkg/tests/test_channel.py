"""Channel model: dB conversion, reproducible streams, exponential fading."""

import numpy as np
import pytest

from cnoma.channel import (
    DEFAULT_DISTRIBUTION,
    ChannelDistribution,
    ChannelGains,
    db_to_linear,
    linear_to_db,
    sample_gains,
    trial_stream,
)


def test_db_conversion_known_values():
    assert db_to_linear(0.0) == 1.0
    assert abs(db_to_linear(10.0) - 10.0) < 1e-12
    assert abs(db_to_linear(3.0) - 1.9952623149688795) < 1e-12
    assert abs(db_to_linear(12.0) - 15.848931924611133) < 1e-12
    for value in (-10.0, 0.0, 5.0, 12.0, 25.0):
        assert abs(linear_to_db(db_to_linear(value)) - value) < 1e-12


def test_default_distribution_means():
    means = DEFAULT_DISTRIBUTION.means_linear()
    expected = (15.848931924611133, 1.9952623149688795,
                15.848931924611133, 3.1622776601683795)
    assert np.allclose(means, expected, rtol=0, atol=1e-12)


def test_trial_stream_reproducible():
    dist = DEFAULT_DISTRIBUTION
    first = sample_gains(dist, trial_stream(42, 3, 17))
    second = sample_gains(dist, trial_stream(42, 3, 17))
    assert first == second
    other_trial = sample_gains(dist, trial_stream(42, 3, 18))
    assert first != other_trial
    other_seed = sample_gains(dist, trial_stream(43, 3, 17))
    assert first != other_seed


def test_trial_stream_key_structure_matters():
    dist = DEFAULT_DISTRIBUTION
    flat = sample_gains(dist, trial_stream(5, 1))
    nested = sample_gains(dist, trial_stream(5, 0, 1))
    assert flat != nested


def test_sample_gains_fields_valid():
    rng = trial_stream(0)
    for _ in range(200):
        g = sample_gains(DEFAULT_DISTRIBUTION, rng)
        for value in (g.gamma_n, g.gamma_f, g.gamma_nf, g.gamma_si):
            assert np.isfinite(value) and value >= 0.0


def test_gains_validation():
    with pytest.raises(ValueError):
        ChannelGains(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ChannelGains(1.0, float("nan"), 1.0, 1.0)
    # array-valued fields are validated elementwise
    with pytest.raises(ValueError):
        ChannelGains(np.array([1.0, -2.0]), np.ones(2), np.ones(2), np.ones(2))
    ChannelGains(np.ones(3), np.ones(3), np.ones(3), np.zeros(3))


def _draw_matrix(dist, rng, count):
    rows = []
    for _ in range(count):
        g = sample_gains(dist, rng)
        rows.append((g.gamma_n, g.gamma_f, g.gamma_nf, g.gamma_si))
    return np.array(rows)


def test_empirical_mean_matches_declared_mean():
    # pooled over the four fields: 1e5 unit-mean exponential draws
    dist = ChannelDistribution(0.0, 0.0, 0.0, 0.0)
    draws = _draw_matrix(dist, trial_stream(7), 25_000).ravel()
    assert draws.size == 100_000
    assert 0.99 <= draws.mean() <= 1.01

    # per-field means at the defaults, 2% relative
    stacked = _draw_matrix(DEFAULT_DISTRIBUTION, trial_stream(8), 25_000)
    for column, mean in zip(stacked.T, DEFAULT_DISTRIBUTION.means_linear()):
        assert abs(column.mean() / mean - 1.0) <= 0.02


def test_empirical_cdf_exponential_quantiles():
    dist = ChannelDistribution(0.0, 0.0, 0.0, 0.0)
    draws = _draw_matrix(dist, trial_stream(9), 25_000).ravel()
    for quantile in (0.25, 0.5, 0.75):
        x = -np.log1p(-quantile)  # exponential quantile function, mean 1
        empirical = np.mean(draws <= x)
        assert abs(empirical - quantile) <= 0.01
