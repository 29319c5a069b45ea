"""Two-stage power-balance optimization.

Stage I intersects the iteration counts that can meet the convergence cap
(``tau_gamma_min``, evaluated at the error-minimizing balance ``rho_gamma``)
with those that can meet the privacy budget (``tau_eps_max``, evaluated at the
leakage-minimizing balance rho = P/W^2). Stage II line-searches the feasible
iteration counts; for each one it picks the balance parameter minimizing the
scalarized utility G(rho, tau) = lambda1 * gamma + lambda2 * eps, and returns
the best pair.

Two per-tau balance rules exist for the idle variant: the closed form
``rho_opt_idle`` (a fixed point of the printed formula, kept faithful to its
algebra) and a numerical minimizer of the utility itself. The closed form is
*not* the utility argmin -- at the default configuration it sits ~20% to the
right and its utility is ~1% high -- so the solution path defaults to it only
when ``idle_rho_mode='closed_form'`` is requested; sweeps and audits use the
numerical rule. The noisy variant always uses derivative bisection.

Stage II optionally re-checks the privacy budget at each candidate pair
(``budget_guard``): the bare line search can otherwise return a pair whose
composed epsilon overshoots eps_bar by ~20%, because the stage-I endpoints are
computed at different balance parameters than the stage-II optimum.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, expected_noise_power, expected_participants
from .convergence import ChannelContext, LearningParams, gamma_approx
from .errors import (
    ConfigError,
    DegenerateGainError,
    InfeasibleError,
    MaxItersExceededError,
    NonPositiveRadicandError,
)
from .privacy import PrivacyParams, theorem1_total_eps
from .strategy import StrategySpec

log = logging.getLogger(__name__)

_FIXED_POINT_TOL = 1e-9
_FIXED_POINT_MAX_ITERS = 100


@dataclass(frozen=True)
class OptimizerConfig:
    """Scalarization weights, budgets, and embedded channel/learning constants."""

    lambda1: float
    lambda2: float
    gamma_bar: float
    eps_bar: float
    power: float
    grad_bound: float
    alpha: int
    channel: ChannelParams
    learning: LearningParams
    bisection_tol: float = 1e-10
    bisection_max_iters: int = 200
    budget_guard: bool = True
    idle_rho_mode: str = "closed_form"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda1 + self.lambda2 <= 0:
            raise ConfigError("lambda1, lambda2 must be >= 0 with positive sum")
        if self.gamma_bar <= 0:
            raise ConfigError(f"gamma_bar must be > 0, got {self.gamma_bar}")
        if self.eps_bar <= 0:
            raise ConfigError(f"eps_bar must be > 0, got {self.eps_bar}")
        if self.power <= 0 or self.grad_bound <= 0:
            raise ConfigError("power and grad_bound must be > 0")
        if self.alpha < 2 or int(self.alpha) != self.alpha:
            raise ConfigError(f"alpha must be an integer >= 2, got {self.alpha}")
        if self.bisection_tol <= 0:
            raise ConfigError("bisection_tol must be > 0")
        if self.bisection_max_iters < 1:
            raise ConfigError("bisection_max_iters must be >= 1")
        if self.idle_rho_mode not in ("closed_form", "numeric"):
            raise ConfigError(f"unknown idle_rho_mode {self.idle_rho_mode!r}")
        if abs(self.learning.grad_bound - self.grad_bound) > 1e-12:
            raise ConfigError("learning.grad_bound must equal optimizer grad_bound")

    @property
    def rho_cap(self):
        return self.power / self.grad_bound**2

    def require_homogeneous(self):
        if not self.channel.is_homogeneous:
            raise ConfigError(
                "closed-form optimizer paths require a homogeneous per-client "
                "channel scale sigma2"
            )
        return self.channel.sigma2_scalar


@dataclass(frozen=True)
class FeasibleSet:
    tau_min: int
    tau_max: int

    def __post_init__(self):
        if self.tau_min > self.tau_max:
            raise InfeasibleError(self.tau_min, self.tau_max)

    def __iter__(self):
        return iter(range(self.tau_min, self.tau_max + 1))

    def __len__(self):
        return self.tau_max - self.tau_min + 1


@dataclass(frozen=True)
class PowerBalanceSolution:
    rho_opt: float
    tau_opt: int
    utility: float
    feasible: FeasibleSet
    strategy: str


def _spec(strategy):
    if isinstance(strategy, StrategySpec):
        return strategy
    return StrategySpec.parse(str(strategy))


def golden_section(f, lo, hi, rel_tol=1e-9, max_iters=400):
    """Deterministic golden-section minimizer for a unimodal scalar function."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iters):
        if abs(b - a) <= rel_tol * max(abs(a), abs(b), 1e-30):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def artificial_noise_power(strategy, rho, cfg):
    """Expected artificial-noise power for a strategy at balance rho."""
    spec = _spec(strategy)
    if spec.kind == "noise_free":
        return 0.0
    w = spec.noise_weight()
    p_idle = expected_noise_power("idle", rho, cfg.channel, cfg.power, cfg.grad_bound)
    if w == 0.0:
        return p_idle
    p_noisy = expected_noise_power("noisy", rho, cfg.channel, cfg.power, cfg.grad_bound)
    if w == 1.0:
        return p_noisy
    return (1.0 - w) * p_idle + w * p_noisy


def mean_participation(rho, cfg):
    return expected_participants(rho, cfg.channel, cfg.power, cfg.grad_bound) / (
        cfg.channel.num_clients
    )


def _gamma_context(strategy, rho, cfg):
    """Optimizer-mode context: expected participants and artificial noise only.

    The lone exception is the noise-free baseline, whose only perturbation is
    channel AWGN; dropping it there would drive the balance parameter to zero
    and amplify the channel noise without bound.
    """
    spec = _spec(strategy)
    kt = expected_participants(rho, cfg.channel, cfg.power, cfg.grad_bound)
    noise = artificial_noise_power(spec, rho, cfg)
    if spec.kind == "noise_free":
        noise = cfg.channel.awgn_var
    return ChannelContext(expected_participants=kt, noise_var=noise)


def privacy_params_at(strategy, rho, cfg):
    """Per-round privacy parameters at balance rho: p(rho) and the full
    effective noise (artificial plus channel AWGN)."""
    spec = _spec(strategy)
    noise = artificial_noise_power(spec, rho, cfg) + cfg.channel.awgn_var
    return PrivacyParams(
        alpha=cfg.alpha,
        grad_bound=cfg.grad_bound,
        noise_var=noise,
        participation=mean_participation(rho, cfg),
    )


def per_round_eps(strategy, rho, cfg):
    from .privacy import subsampled_round_eps_bound

    return subsampled_round_eps_bound(privacy_params_at(strategy, rho, cfg))


def utility(rho, tau, strategy, cfg):
    """G(rho, tau) = lambda1 * gamma_approx + lambda2 * composed epsilon bound."""
    if not 0 < rho <= cfg.rho_cap * (1 + 1e-12):
        raise ConfigError(f"rho must lie in (0, P/W^2], got {rho}")
    if tau < 1:
        raise ConfigError(f"tau must be >= 1, got {tau}")
    spec = _spec(strategy)
    gamma = gamma_approx(tau, rho, cfg.learning, _gamma_context(spec, rho, cfg))
    eps = theorem1_total_eps(int(tau), privacy_params_at(spec, rho, cfg))
    return cfg.lambda1 * gamma + cfg.lambda2 * eps


def rho_gamma(strategy, cfg, _variant=None):
    """Convergence-error-minimizing balance parameter (closed form).

    idle:  P sigma^2 (sqrt(4 a_i + 1) - 1) / (a_i W^2),   a_i = 4 M^2 G / W^2
    noisy: P sigma^2 (sqrt(4 a_n + 9) - 1) / (W^2 (a_n + 2)), a_n = 4 M^2 G - W^2

    The idle form is the exact minimizer of the gamma_approx bracket; the
    noisy form solves the bracket's stationarity with e^x linearized, which
    lands within a couple percent of the true
    argmin. ``_variant='mg2'`` switches to the 4 M G^2 misprint so the
    validator's mutation check can prove the cross-check would catch it.
    """
    spec = _spec(strategy)
    branch = spec.kind if spec.kind in ("noisy", "idle") else spec.base
    s2 = cfg.require_homogeneous()
    m, g, w = cfg.learning.smoothness, cfg.learning.grad_sq_bound, cfg.grad_bound
    curvature_term = 4.0 * m * g**2 if _variant == "mg2" else 4.0 * m**2 * g
    if branch == "idle":
        a_i = curvature_term / w**2
        rho = cfg.power * s2 * (math.sqrt(4.0 * a_i + 1.0) - 1.0) / (a_i * w**2)
    else:
        a_n = curvature_term - w**2
        if a_n + 2.0 * w**2 <= 0:
            raise ConfigError(
                f"noisy closed form undefined: 4 M^2 G - W^2 = {a_n} <= -2 W^2"
            )
        rho = cfg.power * s2 * (math.sqrt(4.0 * a_n + 9.0) - 1.0) / (w**2 * (a_n + 2.0))
    if rho <= 0:
        raise ConfigError(f"rho_gamma came out nonpositive ({rho})")
    if rho > cfg.rho_cap:
        log.warning("rho_gamma %.6g exceeds P/W^2 = %.6g; clamping", rho, cfg.rho_cap)
        rho = cfg.rho_cap
    return rho


def tau_gamma_min(strategy, cfg, _variant=None):
    """Fewest iterations meeting gamma_bar at rho_gamma; floored at one."""
    rho = rho_gamma(strategy, cfg, _variant=_variant)
    gamma_one = gamma_approx(1, rho, cfg.learning, _gamma_context(strategy, rho, cfg))
    return max(1, math.ceil(gamma_one / cfg.gamma_bar))


def tau_eps_max(strategy, cfg):
    """Most iterations meeting eps_bar, at the leakage-minimizing rho = P/W^2."""
    per_round = per_round_eps(strategy, cfg.rho_cap, cfg)
    tau = math.floor(cfg.eps_bar / per_round)
    if tau < 1:
        raise InfeasibleError(
            msg=f"privacy budget eps_bar={cfg.eps_bar} admits no full round "
            f"(per-round bound {per_round})"
        )
    return tau


def feasible_span(strategy, cfg):
    """Signed stage-I endpoints (tau_gamma_min, tau_eps_max), without the
    nonemptiness check; sweep disparity metrics difference these spans."""
    per_round = per_round_eps(strategy, cfg.rho_cap, cfg)
    return tau_gamma_min(strategy, cfg), math.floor(cfg.eps_bar / per_round)


def feasible_set(strategy, cfg):
    lo, hi = feasible_span(strategy, cfg)
    if hi < 1:
        raise InfeasibleError(lo, hi)
    return FeasibleSet(tau_min=lo, tau_max=hi)


def rho_opt_idle(tau, cfg):
    """Closed-form per-tau balance for the idle variant.

    rho_tau = (2 P sigma^2 / W^2) sqrt(a / (W^2 (alpha-1)/(2 P sigma^2) + b - 1))
    with a = lambda1 / (lambda2 tau^2 K_t W^2), b = 4 lambda1 M^2 G /
    (lambda2 tau^2 K_t). K_t itself depends on rho, so the formula is closed
    by fixed-point iteration seeded at K_t = K; a nonpositive radicand along
    the way or failure to converge falls back to the numerical minimizer.
    """
    if tau < 1:
        raise ConfigError(f"tau must be >= 1, got {tau}")
    s2 = cfg.require_homogeneous()
    if cfg.lambda2 == 0:
        # pure-gamma scalarization: the per-tau optimum is rho_gamma itself
        return rho_gamma("idle", cfg)
    kt = float(cfg.channel.num_clients)
    rho = None
    for _ in range(_FIXED_POINT_MAX_ITERS):
        try:
            rho_new = _idle_closed_form(tau, kt, s2, cfg)
        except NonPositiveRadicandError:
            log.warning(
                "idle closed form hit a nonpositive radicand at K_t=%.4g; "
                "falling back to the numerical minimizer",
                kt,
            )
            return rho_opt_numeric(tau, "idle", cfg)
        if rho is not None and abs(rho_new - rho) < _FIXED_POINT_TOL:
            return rho_new
        rho = rho_new
        kt = expected_participants(rho, cfg.channel, cfg.power, cfg.grad_bound)
    log.warning("idle closed form did not converge; using the numerical minimizer")
    return rho_opt_numeric(tau, "idle", cfg)


def _idle_closed_form(tau, kt, s2, cfg):
    """One evaluation of the printed formula at a frozen K_t."""
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    m, g, w = cfg.learning.smoothness, cfg.learning.grad_sq_bound, cfg.grad_bound
    a = lam1 / (lam2 * tau**2 * kt * w**2)
    b = 4.0 * lam1 * m**2 * g / (lam2 * tau**2 * kt)
    denom = w**2 * (cfg.alpha - 1) / (2.0 * cfg.power * s2) + b - 1.0
    if denom <= 0:
        raise NonPositiveRadicandError(
            f"W^2 (alpha-1)/(2 P sigma^2) + b - 1 = {denom} <= 0"
        )
    rho = 2.0 * cfg.power * s2 / w**2 * math.sqrt(a / denom)
    if rho > cfg.rho_cap:
        log.warning("idle closed form %.6g exceeds P/W^2; clamping", rho)
        rho = cfg.rho_cap
    return rho


def _utility_derivative(tau, strategy, cfg):
    h = 1e-6 * cfg.rho_cap

    def deriv(rho):
        lo = max(rho - h, 1e-12 * cfg.rho_cap)
        hi = min(rho + h, cfg.rho_cap)
        return (utility(hi, tau, strategy, cfg) - utility(lo, tau, strategy, cfg)) / (
            hi - lo
        )

    return deriv


def rho_opt_noisy(tau, cfg, strategy="noisy"):
    """Per-tau balance by bisecting the utility's derivative sign.

    Brackets [delta, P/W^2] with delta = 1e-9 P/W^2; when the derivative never
    changes sign the utility is monotone and the better boundary wins. Runs to
    half-bracket below ``bisection_tol`` within ``bisection_max_iters``.
    """
    if tau < 1:
        raise ConfigError(f"tau must be >= 1, got {tau}")
    spec = _spec(strategy)
    deriv = _utility_derivative(tau, spec, cfg)
    lo = 1e-9 * cfg.rho_cap
    hi = cfg.rho_cap
    f_lo, f_hi = deriv(lo), deriv(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        u_lo = utility(lo, tau, spec, cfg)
        u_hi = utility(hi, tau, spec, cfg)
        return lo if u_lo < u_hi else hi
    n = 0
    while n < cfg.bisection_max_iters:
        mid = (lo + hi) / 2.0
        f_mid = deriv(mid)
        if f_mid == 0.0 or (hi - lo) / 2.0 < cfg.bisection_tol:
            return mid
        n += 1
        if math.copysign(1.0, f_mid) == math.copysign(1.0, f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    if (hi - lo) / 2.0 < cfg.bisection_tol:
        return (lo + hi) / 2.0
    raise MaxItersExceededError(lo, hi, cfg.bisection_max_iters)


def rho_opt_numeric(tau, strategy, cfg):
    """Golden-section minimizer of the utility over (0, P/W^2]."""
    lo = 1e-9 * cfg.rho_cap
    return golden_section(
        lambda rho: utility(rho, tau, strategy, cfg), lo, cfg.rho_cap, rel_tol=1e-12
    )


def privacy_rho_min(tau, strategy, cfg):
    """Smallest balance whose composed epsilon stays within eps_bar at tau.

    The per-round bound decreases in rho, so the constraint is one-sided;
    returns 0 when even rho -> 0 satisfies it, and raises Infeasible when the
    cap cannot. The root is nudged up so tau * eps(rho) <= eps_bar holds
    strictly in floating point.
    """
    from scipy.optimize import brentq

    budget = cfg.eps_bar / tau
    lo = 1e-9 * cfg.rho_cap
    if per_round_eps(strategy, cfg.rho_cap, cfg) > budget:
        raise InfeasibleError(
            msg=f"tau={tau} cannot meet eps_bar even at rho = P/W^2"
        )
    if per_round_eps(strategy, lo, cfg) <= budget:
        return 0.0
    root = brentq(
        lambda rho: per_round_eps(strategy, rho, cfg) - budget,
        lo,
        cfg.rho_cap,
        xtol=1e-15,
        rtol=8.9e-16,
    )
    rho = min(root, cfg.rho_cap)
    while tau * per_round_eps(strategy, rho, cfg) > cfg.eps_bar:
        rho = np.nextafter(rho, cfg.rho_cap)
    return float(rho)


def rho_for_tau(tau, strategy, cfg, idle_rho_mode=None):
    """Stage-II per-tau balance rule for one strategy."""
    spec = _spec(strategy)
    mode = idle_rho_mode or cfg.idle_rho_mode
    if spec.kind == "idle" or (spec.kind == "mixed" and spec.portion == 0.0):
        if mode == "closed_form":
            return rho_opt_idle(tau, cfg)
        return rho_opt_numeric(tau, "idle", cfg)
    if spec.kind == "mixed" and spec.portion == 1.0:
        return rho_opt_noisy(tau, cfg, strategy="noisy")
    return rho_opt_noisy(tau, cfg, strategy=spec)


def stage2_curve(strategy, cfg, feasible=None, budget_guard=None, idle_rho_mode=None):
    """Per-tau line-search points: list of (tau, rho_tau, utility)."""
    spec = _spec(strategy)
    fs = feasible if feasible is not None else feasible_set(spec, cfg)
    guard = cfg.budget_guard if budget_guard is None else budget_guard
    points = []
    for tau in fs:
        rho = rho_for_tau(tau, spec, cfg, idle_rho_mode=idle_rho_mode)
        if guard:
            rho = min(max(rho, privacy_rho_min(tau, spec, cfg)), cfg.rho_cap)
            if rho <= 0:
                rho = 1e-9 * cfg.rho_cap
        points.append((tau, rho, utility(rho, tau, spec, cfg)))
    return points


def two_stage_optimize(strategy, cfg, budget_guard=None, idle_rho_mode=None):
    """Stage I + stage II; deterministic tie-break by utility, then tau, then rho."""
    spec = _spec(strategy)
    fs = feasible_set(spec, cfg)
    points = stage2_curve(
        spec, cfg, feasible=fs, budget_guard=budget_guard, idle_rho_mode=idle_rho_mode
    )
    tau_opt, rho_opt, best = min(points, key=lambda p: (p[2], p[0], p[1]))
    return PowerBalanceSolution(
        rho_opt=rho_opt,
        tau_opt=tau_opt,
        utility=best,
        feasible=fs,
        strategy=spec.label(),
    )


def baseline_rho(baseline, cfg, gains=None, tau=None):
    """Balance parameter for the non-CDPB power-balancing rules.

    gamma_based ignores privacy and reuses rho_gamma. h_min couples everyone
    to the worst draw: rho = P min_k h_k / W^2 (may exceed P/W^2; the transmit
    construction stays power-feasible because every gain clears that
    threshold by definition). noise_free searches the utility with all
    artificial noise zeroed.
    """
    spec = _spec(baseline) if not isinstance(baseline, StrategySpec) else baseline
    if spec.kind == "gamma_based":
        return rho_gamma(spec.base, cfg)
    if spec.kind == "h_min":
        if gains is None:
            raise ConfigError("h_min baseline requires a GainDraw")
        h_min = float(np.min(gains.gains))
        if h_min <= 0:
            raise DegenerateGainError("minimum channel gain is zero")
        return cfg.power * h_min / cfg.grad_bound**2
    if spec.kind == "noise_free":
        tau_ref = tau if tau is not None else max(1, tau_gamma_min(spec.base, cfg))
        lo = 1e-9 * cfg.rho_cap
        return golden_section(
            lambda rho: utility(rho, tau_ref, spec, cfg), lo, cfg.rho_cap, rel_tol=1e-12
        )
    raise ConfigError(f"no balance rule for baseline {spec.kind!r}")
