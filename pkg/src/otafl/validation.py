"""Named self-checks behind the CLI ``validate`` subcommand.

Each check returns a ``CheckResult`` with the measured worst-case figure and
its tolerance. The checks mirror the acceptance gates: Monte-Carlo channel
statistics against the closed forms, closed-form balance parameters against
independent 1-D minimizers, the privacy ordering chain, and the convergence
bound against trained losses on the quadratic task.

``mutate='lemma1_mg2'`` flips the curvature factor in the error-minimizing
balance formula from 4 M^2 G to 4 M G^2, demonstrating that the cross-check
catches a transposed constant.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import optimizer as opt
from .channel import ChannelParams, expected_noise_power, expected_participants
from .convergence import ChannelContext, gamma_approx, theorem2_bound
from .engine import run_training
from .privacy import (
    PrivacyParams,
    renyi_divergence_oracle,
    subsampled_round_eps_bound,
    subsampled_round_eps_exact,
    theorem1_total_eps,
)

MC_DRAWS = 1_000_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (
            f"{status} {self.name}: measured {self.measured:.6g} "
            f"vs tolerance {self.tolerance:.6g}{extra}"
        )


def check_channel_statistics(cfg, draws=MC_DRAWS, seed=123):
    """Monte-Carlo K_t, P_n, P_i against their closed forms at five balances."""
    s2 = cfg.channel.sigma2_scalar
    k = cfg.channel.num_clients
    rng = np.random.default_rng(seed)
    h = rng.exponential(scale=2.0 * s2, size=draws)
    worst = 0.0
    for frac in (0.1, 0.3, 0.5, 0.7, 1.0):
        rho = frac * cfg.rho_cap
        h_th = rho * cfg.grad_bound**2 / cfg.power
        reliable = h >= h_th
        kt_mc = k * reliable.mean()
        kt = expected_participants(rho, cfg.channel, cfg.power, cfg.grad_bound)
        pi_mc = k * np.mean((h * cfg.power - rho * cfg.grad_bound**2) * reliable)
        pi = expected_noise_power("idle", rho, cfg.channel, cfg.power, cfg.grad_bound)
        pn_mc = k * np.mean(h * cfg.power - rho * cfg.grad_bound**2 * reliable)
        pn = expected_noise_power("noisy", rho, cfg.channel, cfg.power, cfg.grad_bound)
        worst = max(
            worst,
            abs(kt_mc - kt) / kt,
            abs(pi_mc - pi) / pi,
            abs(pn_mc - pn) / pn,
        )
    return CheckResult("channel_mc_vs_closed_form", worst <= 0.01, worst, 0.01)


def _idle_bracket(rho, cfg):
    ctx = ChannelContext(
        expected_participants=expected_participants(
            rho, cfg.channel, cfg.power, cfg.grad_bound
        ),
        noise_var=expected_noise_power(
            "idle", rho, cfg.channel, cfg.power, cfg.grad_bound
        ),
    )
    return gamma_approx(1, rho, cfg.learning, ctx)


def _noisy_linearized_primitive(rho, cfg):
    """Antiderivative of the linearized noisy stationarity polynomial.

    The noisy closed form solves (a_n + 2 W^2) x^2 + W^2 x - W^2 = 0 in
    x = rho W^2 / (2 P sigma^2); its primitive is convex with that root as
    the unique interior minimum, so a golden-section on it is an independent
    check of the algebra.
    """
    w = cfg.grad_bound
    s2 = cfg.channel.sigma2_scalar
    a_n = 4.0 * cfg.learning.smoothness**2 * cfg.learning.grad_sq_bound - w**2
    x = rho * w**2 / (2.0 * cfg.power * s2)
    return (a_n + 2.0 * w**2) * x**3 / 3.0 + w**2 * x**2 / 2.0 - w**2 * x


def _theorem3_surrogate(rho, tau, kt, cfg):
    """Convex scalar objective whose exact argmin is the printed idle formula
    at a frozen participant count."""
    s2 = cfg.channel.sigma2_scalar
    w = cfg.grad_bound
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    a = lam1 / (lam2 * tau**2 * kt * w**2)
    c = w**2 * (cfg.alpha - 1) / (2.0 * cfg.power * s2)
    b = 4.0 * lam1 * cfg.learning.smoothness**2 * cfg.learning.grad_sq_bound / (
        lam2 * tau**2 * kt
    )
    scale = 2.0 * cfg.power * s2 / w**2
    return (c + b - 1.0) * rho + a * scale**2 / rho


def check_closed_forms(base_cfg, mutate=None, tau_ref=60):
    """rho_gamma and the idle per-tau formula vs golden-section minimizers.

    Oracle objectives are the ones each piece of algebra actually minimizes:
    the true error bracket for the idle rho_gamma (exact algebra), the
    linearized-stationarity primitive for the noisy branch, and the frozen-
    participant surrogate for the per-tau idle formula.
    """
    worst = 0.0
    variant = "mg2" if mutate == "lemma1_mg2" else None
    for m in (0.8, 1.0, 1.25):
        for g in (0.8, 1.0, 1.25):
            for s2 in (0.35, 0.5, 0.7):
                cfg = replace(
                    base_cfg,
                    channel=ChannelParams.homogeneous(
                        base_cfg.channel.num_clients, s2, base_cfg.channel.awgn_var
                    ),
                    learning=replace(
                        base_cfg.learning,
                        smoothness=m,
                        strong_convexity=min(m, base_cfg.learning.strong_convexity),
                        grad_sq_bound=g,
                        schedule_offset=math.ceil((math.sqrt(2) + 1) * m) + 1.0,
                    ),
                )
                lo = 1e-9 * cfg.rho_cap
                rg_i = opt.rho_gamma("idle", cfg, _variant=variant)
                oracle_i = opt.golden_section(
                    lambda r: _idle_bracket(r, cfg), lo, cfg.rho_cap, rel_tol=1e-13
                )
                worst = max(worst, abs(rg_i - oracle_i) / oracle_i)

                rg_n = opt.rho_gamma("noisy", cfg, _variant=variant)
                oracle_n = opt.golden_section(
                    lambda r: _noisy_linearized_primitive(r, cfg),
                    lo,
                    cfg.rho_cap,
                    rel_tol=1e-13,
                )
                worst = max(worst, abs(rg_n - oracle_n) / oracle_n)

                rho_tau = opt.rho_opt_idle(tau_ref, cfg)
                kt = expected_participants(
                    rho_tau, cfg.channel, cfg.power, cfg.grad_bound
                )
                oracle_t = opt.golden_section(
                    lambda r: _theorem3_surrogate(r, tau_ref, kt, cfg),
                    lo,
                    2.0 * cfg.rho_cap,
                    rel_tol=1e-13,
                )
                oracle_t = min(oracle_t, cfg.rho_cap)
                worst = max(worst, abs(rho_tau - oracle_t) / oracle_t)
    return CheckResult("closed_form_vs_oracle", worst <= 1e-4, worst, 1e-4)


def check_rdp_chain(cfg=None):
    """oracle <= exact <= bound across the grid, plus the composition identity."""
    worst_violation = -math.inf
    worst_identity = 0.0
    for alpha in range(2, 9):
        for p in np.arange(0.1, 0.95, 0.1):
            for ratio in (0.01, 0.1, 0.5):
                params = PrivacyParams(
                    alpha=alpha,
                    grad_bound=1.0,
                    noise_var=1.0 / ratio,
                    participation=float(p),
                )
                oracle = renyi_divergence_oracle(
                    alpha, float(p), math.sqrt(2.0), 1.0 / ratio
                )
                exact = subsampled_round_eps_exact(params)
                bound = subsampled_round_eps_bound(params)
                worst_violation = max(
                    worst_violation, oracle - exact, exact - bound
                )
                total = theorem1_total_eps(7, params)
                worst_identity = max(
                    worst_identity, abs(total - 7.0 * bound) / total
                )
    passed = worst_violation <= 1e-9 and worst_identity <= 1e-12
    return CheckResult(
        "rdp_ordering_chain",
        passed,
        worst_violation,
        0.0,
        detail=f"composition identity rel err {worst_identity:.3g}",
    )


def check_lemma2_inversion(cfg):
    """eps at tau_eps_max stays within budget; one more round overshoots."""
    worst_ok = True
    for strategy in ("noisy", "idle"):
        tau_max = opt.tau_eps_max(strategy, cfg)
        params = opt.privacy_params_at(strategy, cfg.rho_cap, cfg)
        at_max = theorem1_total_eps(tau_max, params)
        beyond = theorem1_total_eps(tau_max + 1, params)
        worst_ok = worst_ok and (at_max <= cfg.eps_bar < beyond)
    return CheckResult(
        "lemma2_inversion", worst_ok, float(worst_ok), 1.0, detail="both strategies"
    )


def check_theorem2_ordering(syscfg, num_seeds=None):
    """Seed-mean trained suboptimality under the convergence bound."""
    seeds = num_seeds if num_seeds is not None else syscfg.num_seeds
    task = syscfg.build_task()
    cfg = syscfg.optimizer_config(task)
    lp = syscfg.learning_params(task)
    worst_ratio = 0.0
    for strategy in ("noisy", "idle"):
        sol = opt.two_stage_optimize(strategy, cfg)
        finals = []
        for s in range(seeds):
            traces = run_training(syscfg, strategy, sol.rho_opt, sol.tau_opt, syscfg.seed + s)
            finals.append(traces[-1].loss_weighted)
        mean_loss = float(np.mean(finals))
        kt = expected_participants(sol.rho_opt, cfg.channel, cfg.power, cfg.grad_bound)
        noise = (
            opt.artificial_noise_power(strategy, sol.rho_opt, cfg)
            + cfg.channel.awgn_var
        )
        bound = theorem2_bound(
            sol.tau_opt,
            sol.rho_opt,
            lp,
            ChannelContext(expected_participants=kt, noise_var=noise),
        )
        worst_ratio = max(worst_ratio, mean_loss / bound)
    return CheckResult(
        "theorem2_ordering", worst_ratio <= 1.0, worst_ratio, 1.0,
        detail="trained loss / bound, both strategies",
    )


def check_budget_closure(syscfg):
    """Guarded solutions respect eps_bar when actually trained."""
    task = syscfg.build_task()
    cfg = syscfg.optimizer_config(task)
    worst = 0.0
    for strategy in ("noisy", "idle"):
        sol = opt.two_stage_optimize(strategy, cfg, budget_guard=True)
        traces = run_training(syscfg, strategy, sol.rho_opt, sol.tau_opt, syscfg.seed)
        worst = max(worst, traces[-1].eps_cumulative / cfg.eps_bar)
    return CheckResult("budget_closure", worst <= 1.0, worst, 1.0)


def run_all(syscfg, mutate=None, mc_draws=MC_DRAWS, theorem2_seeds=None):
    task = syscfg.build_task()
    cfg = syscfg.optimizer_config(task)
    results = [
        check_channel_statistics(cfg, draws=mc_draws),
        check_closed_forms(cfg, mutate=mutate),
        check_rdp_chain(),
        check_lemma2_inversion(cfg),
        check_theorem2_ordering(syscfg, num_seeds=theorem2_seeds),
        check_budget_closure(syscfg),
    ]
    return results
