"""Rayleigh block-fading channel model with reproducible per-trial streams.

Channel power gains are exponentially distributed (squared magnitude of a
circularly symmetric Gaussian coefficient) with means given in dB.  Noise
power is normalized to 1, so every gain is an SNR-scaled quantity.
"""

from dataclasses import dataclass

import numpy as np


def db_to_linear(value_db):
    """Convert a dB quantity to linear scale: 10 ** (value_db / 10)."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    """Inverse of db_to_linear; value must be > 0."""
    return 10.0 * np.log10(value)


@dataclass(frozen=True)
class ChannelDistribution:
    """Mean channel power gains (dB) for the four links of the cell.

    mean_n_db:  near user -> base station
    mean_f_db:  far user -> base station
    mean_nf_db: far user -> near user (relay link)
    mean_si_db: residual self-interference at the full-duplex near user
    """

    mean_n_db: float
    mean_f_db: float
    mean_nf_db: float
    mean_si_db: float

    def __post_init__(self):
        for name in ("mean_n_db", "mean_f_db", "mean_nf_db", "mean_si_db"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def means_linear(self):
        """Linear-scale means in draw order (n, f, nf, si)."""
        return (
            float(db_to_linear(self.mean_n_db)),
            float(db_to_linear(self.mean_f_db)),
            float(db_to_linear(self.mean_nf_db)),
            float(db_to_linear(self.mean_si_db)),
        )


@dataclass(frozen=True)
class ChannelGains:
    """One realization of the four link power gains (linear, >= 0).

    Fields may be numpy arrays of a common shape (validated elementwise),
    which the rate formulas and the lockstep batch solver broadcast over.
    """

    gamma_n: object
    gamma_f: object
    gamma_nf: object
    gamma_si: object

    def __post_init__(self):
        for name in ("gamma_n", "gamma_f", "gamma_nf", "gamma_si"):
            v = np.asarray(getattr(self, name))
            if not (np.all(np.isfinite(v)) and np.all(v >= 0.0)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


# Default mean gains (dB) for the simulated cell geometry: strong direct
# near-user and relay links, weak far-user link, moderate self-interference.
DEFAULT_DISTRIBUTION = ChannelDistribution(
    mean_n_db=12.0, mean_f_db=3.0, mean_nf_db=12.0, mean_si_db=5.0
)

# Default master seed for every randomized entry point (CLI override: --seed
# or the CNOMA_SEED environment variable).
DEFAULT_SEED = 42


def trial_stream(master_seed, *key):
    """Independent Generator for one trial, addressed by (master_seed, *key).

    Streams are derived through SeedSequence spawn keys, so any (seed, key)
    pair maps to the same stream no matter how many other trials ran before
    it or on which worker it runs.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def sample_gains(dist, rng):
    """Draw one ChannelGains realization from dist using rng.

    Exactly four exponential draws in the fixed order (n, f, nf, si); the
    draw order is part of the reproducibility contract.
    """
    mean_n, mean_f, mean_nf, mean_si = dist.means_linear()
    return ChannelGains(
        gamma_n=float(rng.exponential(mean_n)),
        gamma_f=float(rng.exponential(mean_f)),
        gamma_nf=float(rng.exponential(mean_nf)),
        gamma_si=float(rng.exponential(mean_si)),
    )
