"""Block-fading channel statistics for threshold-gated over-the-air aggregation.

Channel power gains are i.i.d. across clients and rounds with survival
function ``P(h > x) = exp(-x / (2 sigma_k^2))``, i.e. exponential with mean
``2 sigma_k^2``. Every closed form below (participation probability, expected
participant count, expected artificial-noise powers) integrates exactly that
law, so the Monte-Carlo estimators in the test suite must reproduce them.

A client is *reliable* in a round when its gain clears ``h_th = rho W^2 / P``;
otherwise it is *unreliable* and either stays idle or transmits full-power
noise, depending on the active strategy. The expected-noise closed forms cover
the artificial component only; channel AWGN is accounted separately by the
callers that need it.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .seeding import substream


@dataclass(frozen=True)
class ChannelParams:
    """Static channel description: client count, per-client scale, AWGN power.

    ``awgn_var`` is the total channel-noise power across all model
    coordinates (the receiver noise vector is N(0, awgn_var/d * I_d)).
    """

    num_clients: int
    sigma2: tuple
    awgn_var: float

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigError(f"num_clients must be >= 1, got {self.num_clients}")
        if len(self.sigma2) != self.num_clients:
            raise ConfigError(
                f"sigma2 must have length num_clients={self.num_clients}, "
                f"got {len(self.sigma2)}"
            )
        if any(s <= 0 for s in self.sigma2):
            raise ConfigError("every sigma2 entry must be > 0")
        if self.awgn_var < 0:
            raise ConfigError(f"awgn_var must be >= 0, got {self.awgn_var}")

    @classmethod
    def homogeneous(cls, num_clients, sigma2, awgn_var=0.0):
        return cls(num_clients, (float(sigma2),) * int(num_clients), float(awgn_var))

    @property
    def is_homogeneous(self):
        return len(set(self.sigma2)) == 1

    @property
    def sigma2_scalar(self):
        if not self.is_homogeneous:
            raise ConfigError("sigma2 is heterogeneous; no scalar value exists")
        return self.sigma2[0]

    def sigma2_array(self):
        return np.asarray(self.sigma2, dtype=float)


@dataclass(frozen=True)
class GainDraw:
    """One round of channel gains and phases, in client order."""

    gains: np.ndarray
    phases: np.ndarray
    round_index: int

    def __post_init__(self):
        if self.gains.shape != self.phases.shape:
            raise ConfigError("gains and phases must have equal length")
        if np.any(self.gains < 0):
            raise ConfigError("gains must be nonnegative")


def sample_gains(params, master_seed, round_index=0):
    """Draw one round of i.i.d. gains and uniform phases.

    Client k consumes the k-th row of a (K, 2) uniform block from the
    per-round gain stream: column 0 feeds the inverse-CDF exponential gain,
    column 1 the phase. Deterministic given (master_seed, round_index).
    """
    rng = substream(master_seed, "gains", round_index)
    u = rng.random((params.num_clients, 2))
    gains = -params.sigma2_array() * 2.0 * np.log1p(-u[:, 0])
    phases = 2.0 * math.pi * u[:, 1]
    return GainDraw(gains=gains, phases=phases, round_index=int(round_index))


def threshold(rho, power, grad_bound):
    """Participation threshold h_th = rho W^2 / P."""
    if power <= 0 or grad_bound <= 0:
        raise ConfigError("power and grad_bound must be > 0")
    if rho < 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    return rho * grad_bound**2 / power


def _check_rho_range(rho, power, grad_bound):
    cap = power / grad_bound**2
    if not 0 <= rho <= cap * (1 + 1e-12):
        raise ConfigError(f"rho must lie in [0, P/W^2] = [0, {cap}], got {rho}")


def participation_probability(rho, power, grad_bound, sigma2_k):
    """Probability exp(-rho W^2 / (2 P sigma_k^2)) that one client clears h_th."""
    if sigma2_k <= 0:
        raise ConfigError("sigma2_k must be > 0")
    if power <= 0 or grad_bound <= 0:
        raise ConfigError("power and grad_bound must be > 0")
    _check_rho_range(rho, power, grad_bound)
    return math.exp(-rho * grad_bound**2 / (2.0 * power * sigma2_k))


def expected_participants(rho, params, power, grad_bound):
    """Expected reliable-client count: sum_k exp(-rho W^2 / (2 P sigma_k^2))."""
    _check_rho_range(rho, power, grad_bound)
    s2 = params.sigma2_array()
    return float(np.sum(np.exp(-rho * grad_bound**2 / (2.0 * power * s2))))


def expected_noise_power(strategy, rho, params, power, grad_bound):
    """Channel-averaged artificial-noise power received per round.

    noisy: sum_k [2 P sigma_k^2 - rho W^2 exp(-rho W^2 / (2 P sigma_k^2))]
    idle:  sum_k  2 P sigma_k^2 exp(-rho W^2 / (2 P sigma_k^2))

    Both exclude channel AWGN.
    """
    if strategy not in ("noisy", "idle"):
        raise ConfigError(f"strategy must be 'noisy' or 'idle', got {strategy!r}")
    _check_rho_range(rho, power, grad_bound)
    s2 = params.sigma2_array()
    surv = np.exp(-rho * grad_bound**2 / (2.0 * power * s2))
    if strategy == "idle":
        return float(np.sum(2.0 * power * s2 * surv))
    return float(np.sum(2.0 * power * s2 - rho * grad_bound**2 * surv))
