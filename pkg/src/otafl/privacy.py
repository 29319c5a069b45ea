"""Renyi differential privacy accounting for the over-the-air mechanism.

Per-round guarantees come in three strengths, ordered
``oracle <= exact <= bound``:

* ``gaussian_round_eps`` -- plain Gaussian mechanism with squared sensitivity
  capped at 2 W^2, giving alpha W^2 / sigma_q^2.
* ``subsampled_round_eps_exact`` -- the binomial-sum amplification formula for
  a client that participates with probability p (integer alpha >= 2).
* ``subsampled_round_eps_bound`` -- its closed-form relaxation
  (1/(alpha-1)) log(2 (p e^{(alpha-1) W^2 / sigma_q^2} + 1)^alpha), whose
  tau-fold composition is ``theorem1_total_eps``.

``renyi_divergence_oracle`` numerically integrates the divergence between the
base Gaussian and the participation mixture and validates the chain from
below. All spectral sums are evaluated in log domain so the formulas stay
finite for W^2/sigma_q^2 ratios far beyond anything a sane configuration uses.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from .errors import ConfigError, OracleConvergenceError


@dataclass(frozen=True)
class PrivacyParams:
    """Order, clipped-gradient bound, effective noise power, participation."""

    alpha: float
    grad_bound: float
    noise_var: float
    participation: float

    def __post_init__(self):
        if self.alpha <= 1:
            raise ConfigError(f"alpha must be > 1, got {self.alpha}")
        if self.grad_bound <= 0:
            raise ConfigError(f"grad_bound must be > 0, got {self.grad_bound}")
        if self.noise_var <= 0:
            raise ConfigError(f"noise_var must be > 0, got {self.noise_var}")
        if not 0 <= self.participation <= 1:
            raise ConfigError(
                f"participation must lie in [0, 1], got {self.participation}"
            )


@dataclass(frozen=True)
class RdpLedger:
    """Per-round contributions; composition is plain addition."""

    per_round_eps: tuple = ()

    @property
    def total_eps(self):
        return float(math.fsum(self.per_round_eps))


def compose(ledger, round_eps):
    """Append one round's epsilon to the ledger."""
    if round_eps < 0:
        raise ConfigError(f"round_eps must be >= 0, got {round_eps}")
    return RdpLedger(per_round_eps=ledger.per_round_eps + (float(round_eps),))


def _require_integer_alpha(alpha):
    if alpha < 2 or int(alpha) != alpha:
        raise ConfigError(f"subsampled forms require integer alpha >= 2, got {alpha}")
    return int(alpha)


def gaussian_round_eps(params):
    """Per-round RDP of the plain Gaussian mechanism: alpha W^2 / sigma_q^2."""
    return params.alpha * params.grad_bound**2 / params.noise_var


def subsampled_round_eps_exact(params):
    """Amplified per-round RDP for participation probability p.

    (1/(alpha-1)) log(1 + p^2 C(alpha,2) min{4(E_2 - 1), 2 E_2}
                        + sum_{j=3}^alpha p^j C(alpha,j) 2 E_{(j-1)j})
    with E_x = exp(x W^2 / sigma_q^2). Evaluated via log-sum-exp; the min
    branch compares log(4) + x_2 + log1p(-e^{-x_2}) against log(2) + x_2.
    """
    alpha = _require_integer_alpha(params.alpha)
    p = params.participation
    if p == 0:
        return 0.0
    ratio = params.grad_bound**2 / params.noise_var
    x2 = 2.0 * ratio
    log_min = min(
        math.log(4.0) + x2 + math.log1p(-math.exp(-x2)),
        math.log(2.0) + x2,
    )
    terms = [0.0, 2.0 * math.log(p) + math.log(math.comb(alpha, 2)) + log_min]
    for j in range(3, alpha + 1):
        terms.append(
            j * math.log(p)
            + math.log(math.comb(alpha, j))
            + math.log(2.0)
            + j * (j - 1) * ratio
        )
    return float(logsumexp(terms)) / (alpha - 1)


def subsampled_round_eps_bound(params):
    """Closed-form relaxation of the amplified per-round RDP.

    (1/(alpha-1)) log(2 (p e^{(alpha-1) W^2 / sigma_q^2} + 1)^alpha).
    Does not vanish at p = 0: the log 2 term is a fixed cost of the bound.
    """
    alpha = _require_integer_alpha(params.alpha)
    p = params.participation
    y = (alpha - 1) * params.grad_bound**2 / params.noise_var
    log_p = math.log(p) if p > 0 else -math.inf
    return (math.log(2.0) + alpha * float(np.logaddexp(0.0, log_p + y))) / (alpha - 1)


def theorem1_total_eps(tau, params):
    """Total epsilon after tau rounds: tau times the per-round bound."""
    if tau < 0 or int(tau) != tau:
        raise ConfigError(f"tau must be a nonnegative integer, got {tau}")
    alpha = _require_integer_alpha(params.alpha)
    if tau == 0:
        return 0.0
    p = params.participation
    y = (alpha - 1) * params.grad_bound**2 / params.noise_var
    log_p = math.log(p) if p > 0 else -math.inf
    log_term = float(np.logaddexp(0.0, log_p + y))
    return tau * math.log(2.0) / (alpha - 1) + tau * alpha / (alpha - 1) * log_term


def _log_normal_pdf(z, mean, var):
    return -0.5 * math.log(2.0 * math.pi * var) - (z - mean) ** 2 / (2.0 * var)


def renyi_divergence_oracle(alpha, p, delta, sigma_q2, rel_tol=1e-6):
    """Numerical alpha-Renyi divergence between N(0, sigma_q^2) and the
    participation mixture p N(delta, sigma_q^2) + (1-p) N(0, sigma_q^2).

    Integrates both directions on a window that covers every mode and the
    tilted integrand peak by at least 12 standard deviations, and returns the
    larger value. Raises OracleConvergenceError when the quadrature error
    estimate exceeds ``rel_tol`` relative.
    """
    if alpha <= 1:
        raise ConfigError(f"alpha must be > 1, got {alpha}")
    if sigma_q2 <= 0:
        raise ConfigError(f"sigma_q2 must be > 0, got {sigma_q2}")
    if not 0 <= p <= 1:
        raise ConfigError(f"p must lie in [0, 1], got {p}")
    if p == 0 or delta == 0:
        return 0.0

    log_p = math.log(p) if p > 0 else -math.inf
    log_1mp = math.log1p(-p) if p < 1 else -math.inf

    def log_mixture(z):
        if p == 1:
            return _log_normal_pdf(z, delta, sigma_q2)
        return float(
            np.logaddexp(
                log_p + _log_normal_pdf(z, delta, sigma_q2),
                log_1mp + _log_normal_pdf(z, 0.0, sigma_q2),
            )
        )

    def log_base(z):
        return _log_normal_pdf(z, 0.0, sigma_q2)

    sd = math.sqrt(sigma_q2)

    def one_direction(log_num, log_den):
        def log_integrand(z):
            return alpha * log_num(z) + (1.0 - alpha) * log_den(z)

        # locate the tilted peak on a coarse grid, then window generously
        span = (abs(delta) + sd) * (alpha + 14.0)
        zs = np.linspace(-span, span, 4001)
        vals = np.array([log_integrand(z) for z in zs])
        z_star = float(zs[int(np.argmax(vals))])
        shift = float(vals.max())
        lo = min(0.0, delta, z_star) - 12.0 * sd
        hi = max(0.0, delta, z_star) + 12.0 * sd
        integral, err = quad(
            lambda z: math.exp(log_integrand(z) - shift),
            lo,
            hi,
            epsabs=0.0,
            epsrel=min(rel_tol, 1e-9),
            limit=400,
        )
        if integral <= 0 or not math.isfinite(integral) or err / integral > rel_tol:
            raise OracleConvergenceError(
                f"quadrature did not converge: integral={integral}, err={err}"
            )
        return (shift + math.log(integral)) / (alpha - 1.0)

    forward = one_direction(log_mixture, log_base)
    backward = one_direction(log_base, log_mixture)
    return max(forward, backward)
