"""Convergence-error bound for threshold-gated FedAvg over a fading MAC.

The training loop uses the decaying step size eta_t = 4 / (mu (a + t)) and
the quadratic round weights beta_t = (a + t)^2. ``theorem2_bound`` evaluates
the full error bound on the weighted-average model after tau rounds;
``gamma_approx`` keeps only its dominant long-run term, which is the quantity
the power optimizer actually minimizes.

Both take the channel operating point as a ``ChannelContext``: the expected
participant count K_t(rho) and an effective noise power sigma_q^2. Optimizer
callers pass the artificial-noise power alone; the training harness includes
channel AWGN.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LearningParams:
    """Curvature, gradient bounds, and schedule constants of the learning task."""

    smoothness: float
    strong_convexity: float
    grad_sq_bound: float
    schedule_offset: float
    local_steps: int
    grad_bound: float
    model_dim: int
    init_gap: float

    def __post_init__(self):
        if self.smoothness <= 0 or self.strong_convexity <= 0:
            raise ConfigError("smoothness and strong_convexity must be > 0")
        if self.strong_convexity > self.smoothness * (1 + 1e-12):
            raise ConfigError(
                f"strong_convexity={self.strong_convexity} must not exceed "
                f"smoothness={self.smoothness}"
            )
        if self.grad_sq_bound <= 0:
            raise ConfigError("grad_sq_bound must be > 0")
        if self.schedule_offset <= (math.sqrt(2) + 1) * self.smoothness:
            raise ConfigError(
                f"schedule_offset={self.schedule_offset} must exceed "
                f"(sqrt(2)+1)*smoothness={(math.sqrt(2) + 1) * self.smoothness}"
            )
        if self.local_steps < 1:
            raise ConfigError("local_steps must be >= 1")
        if self.grad_bound <= 0:
            raise ConfigError("grad_bound must be > 0")
        if self.model_dim < 1:
            raise ConfigError("model_dim must be >= 1")
        if self.init_gap < 0:
            raise ConfigError("init_gap must be >= 0")


@dataclass(frozen=True)
class ChannelContext:
    """Channel operating point consumed by the bound: K_t(rho) and sigma_q^2."""

    expected_participants: float
    noise_var: float

    def __post_init__(self):
        if self.expected_participants < 1:
            raise ConfigError(
                "expected participant count below one is degenerate "
                f"(got {self.expected_participants})"
            )
        if self.noise_var < 0:
            raise ConfigError("noise_var must be >= 0")


def step_size(t, lp):
    """eta_t = 4 / (mu (a + t))."""
    return 4.0 / (lp.strong_convexity * (lp.schedule_offset + t))


def round_weight(t, lp):
    """beta_t = (a + t)^2."""
    return (lp.schedule_offset + t) ** 2


def weight_sum(tau, lp):
    """S_tau = sum_{t=0}^{tau-1} (a + t)^2; always at least tau^3 / 3."""
    if tau < 1 or int(tau) != tau:
        raise ConfigError(f"tau must be a positive integer, got {tau}")
    s = float(np.sum((lp.schedule_offset + np.arange(int(tau), dtype=float)) ** 2))
    assert s >= tau**3 / 3.0
    return s


def _noise_bracket(rho, lp, ctx):
    if rho <= 0:
        raise ConfigError(f"rho must be > 0, got {rho}")
    kt = ctx.expected_participants
    return (
        4.0 * lp.smoothness**2 * lp.grad_sq_bound / kt
        + ctx.noise_var / (kt**2 * rho)
    )


def theorem2_bound(tau, rho, lp, ctx):
    """Full convergence-error bound at the weighted-average model.

    mu a^3 / (4 S_tau) * init_gap
      + 2 tau (tau + a) / (mu S_tau) * (4 M^2 G / K_t + sigma_q^2 / (K_t^2 rho))
    """
    s_tau = weight_sum(tau, lp)
    a = lp.schedule_offset
    mu = lp.strong_convexity
    first = mu * a**3 / (4.0 * s_tau) * lp.init_gap
    second = 2.0 * tau * (tau + a) / (mu * s_tau) * _noise_bracket(rho, lp, ctx)
    return first + second


def gamma_approx(tau, rho, lp, ctx):
    """Dominant-term approximation (6 / tau) * (4 M^2 G / K_t + sigma_q^2 / (K_t^2 rho))."""
    if tau < 1:
        raise ConfigError(f"tau must be >= 1, got {tau}")
    return 6.0 / tau * _noise_bracket(rho, lp, ctx)
