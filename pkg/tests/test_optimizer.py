import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

import otafl.optimizer as opt
from otafl.channel import ChannelParams, GainDraw, sample_gains
from otafl.convergence import LearningParams
from otafl.engine import is_baseline_round_eps
from otafl.errors import (
    ConfigError,
    DegenerateGainError,
    InfeasibleError,
    MaxItersExceededError,
    NonPositiveRadicandError,
)
from otafl.optimizer import OptimizerConfig, golden_section
from otafl.privacy import PrivacyParams, gaussian_round_eps, subsampled_round_eps_bound
from otafl.strategy import StrategySpec


def make_ocfg(m=1.0, g=1.0, w=1.0, sigma2=0.5, k=100, power=1.0, alpha=2,
              lam1=1.0, lam2=1e-5, gamma_bar=0.01, eps_bar=100.0, awgn=0.01,
              a=None, psi=1e-10, n_max=200):
    mu = min(1.0, m)
    if a is None:
        a = math.ceil((math.sqrt(2.0) + 1.0) * m) + 1.0
    lp = LearningParams(
        smoothness=m, strong_convexity=mu, grad_sq_bound=g, schedule_offset=a,
        local_steps=1, grad_bound=w, model_dim=10, init_gap=1.0,
    )
    return OptimizerConfig(
        lambda1=lam1, lambda2=lam2, gamma_bar=gamma_bar, eps_bar=eps_bar,
        power=power, grad_bound=w, alpha=alpha,
        channel=ChannelParams.homogeneous(k, sigma2, awgn), learning=lp,
        bisection_tol=psi, bisection_max_iters=n_max,
    )


# ------------------------------------------------------------------ rho_gamma
def test_rho_gamma_idle_closed_value():
    cfg = make_ocfg(w=2.0)
    # a_i = 1: rho = P sigma^2 (sqrt(5) - 1) / 4
    assert opt.rho_gamma("idle", cfg) == pytest.approx(
        0.5 * (math.sqrt(5.0) - 1.0) / 4.0, rel=1e-12
    )


def test_rho_gamma_noisy_closed_value():
    cfg = make_ocfg()
    # a_n = 3: rho = P sigma^2 (sqrt(21) - 1) / 5
    assert opt.rho_gamma("noisy", cfg) == pytest.approx(
        0.5 * (math.sqrt(21.0) - 1.0) / 5.0, rel=1e-12
    )


def _idle_bracket(rho, cfg):
    return opt.utility(rho, 1, "idle", replace(cfg, lambda2=0.0)) / cfg.lambda1


def test_rho_gamma_idle_is_bracket_argmin():
    # grid-search oracle over 10^4 points: the closed form is the exact argmin
    cfg = make_ocfg()
    grid = np.linspace(1e-6, cfg.rho_cap, 10_001)
    vals = [_idle_bracket(r, cfg) for r in grid]
    best = grid[int(np.argmin(vals))]
    assert abs(opt.rho_gamma("idle", cfg) - best) <= 2 * (grid[1] - grid[0])


def test_rho_gamma_noisy_solves_linearized_kkt():
    # the noisy closed form is the positive root of
    # (a_n + 2 W^2) x^2 + W^2 x - W^2 = 0 in x = rho W^2 / (2 P sigma^2);
    # against the true bracket argmin it carries a ~1-2% linearization gap
    cfg = make_ocfg()
    a_n = 4.0 - 1.0
    x = opt.rho_gamma("noisy", cfg) / (2 * cfg.power * 0.5)
    residual = (a_n + 2.0) * x**2 + x - 1.0
    assert abs(residual) < 1e-12
    grid = np.linspace(1e-6, cfg.rho_cap, 20_001)
    vals = [opt.utility(r, 1, "noisy", replace(cfg, lambda2=0.0)) for r in grid]
    true_min = grid[int(np.argmin(vals))]
    gap = abs(opt.rho_gamma("noisy", cfg) - true_min) / true_min
    assert 0.001 < gap < 0.05


def test_rho_gamma_requires_homogeneous_channel():
    cfg = make_ocfg()
    hetero = replace(cfg, channel=ChannelParams(2, (0.4, 0.6), 0.0))
    with pytest.raises(ConfigError):
        opt.rho_gamma("idle", hetero)


# -------------------------------------------------------------- tau_gamma_min
def test_tau_gamma_min_nonincreasing_in_gamma_bar():
    values = [
        opt.tau_gamma_min("idle", make_ocfg(gamma_bar=gb))
        for gb in (0.005, 0.01, 0.02, 0.04, 0.08)
    ]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_tau_gamma_min_matches_gamma_approx_identity():
    cfg = make_ocfg()
    from otafl.convergence import gamma_approx

    rho = opt.rho_gamma("idle", cfg)
    independent = math.ceil(
        gamma_approx(1, rho, cfg.learning, opt._gamma_context("idle", rho, cfg))
        / cfg.gamma_bar
    )
    assert opt.tau_gamma_min("idle", cfg) == independent


def test_tau_gamma_min_floors_at_one():
    assert opt.tau_gamma_min("idle", make_ocfg(gamma_bar=1e9)) == 1


# ---------------------------------------------------------------- tau_eps_max
def test_tau_eps_max_scales_with_budget():
    base = opt.tau_eps_max("idle", make_ocfg(eps_bar=100.0))
    doubled = opt.tau_eps_max("idle", make_ocfg(eps_bar=200.0))
    assert doubled in (2 * base, 2 * base + 1)


def test_tau_eps_max_inversion_property(plain_ocfg):
    from otafl.privacy import theorem1_total_eps

    for strategy in ("noisy", "idle"):
        tau_max = opt.tau_eps_max(strategy, plain_ocfg)
        params = opt.privacy_params_at(strategy, plain_ocfg.rho_cap, plain_ocfg)
        assert theorem1_total_eps(tau_max, params) <= plain_ocfg.eps_bar
        assert theorem1_total_eps(tau_max + 1, params) > plain_ocfg.eps_bar


def test_tau_eps_max_high_noise_limit():
    # enormous channel noise: the per-round bound collapses to
    # (log 2 + alpha log(p + 1)) / (alpha - 1), still a finite floor
    cfg = make_ocfg(awgn=1e12)
    p = opt.mean_participation(cfg.rho_cap, cfg)
    limit = (math.log(2.0) + 2.0 * math.log1p(p)) / 1.0
    assert opt.tau_eps_max("idle", cfg) == math.floor(cfg.eps_bar / limit)


def test_tau_eps_max_infeasible_budget():
    with pytest.raises(InfeasibleError):
        opt.tau_eps_max("idle", make_ocfg(eps_bar=1e-6))


# --------------------------------------------------------------- feasible_set
def test_feasible_set_default_ordering(plain_ocfg):
    fs_i = opt.feasible_set("idle", plain_ocfg)
    fs_n = opt.feasible_set("noisy", plain_ocfg)
    assert len(fs_i) >= 1 and len(fs_n) >= 1
    assert len(fs_i) >= len(fs_n)


def test_feasible_set_infeasible_budgets():
    with pytest.raises(InfeasibleError) as err:
        opt.feasible_set("idle", make_ocfg(gamma_bar=1e-7, eps_bar=1.0))
    assert err.value.tau_min is not None and err.value.tau_max is not None


def test_feasible_set_generous_budgets():
    fs = opt.feasible_set("idle", make_ocfg(gamma_bar=1e9, eps_bar=1e6))
    assert fs.tau_min == 1
    assert fs.tau_max > 100_000


# -------------------------------------------------------------------- utility
def test_utility_reduces_to_gamma_when_lambda2_zero(plain_ocfg):
    from otafl.convergence import gamma_approx

    cfg = replace(plain_ocfg, lambda2=0.0)
    rho, tau = 0.4, 60
    expect = cfg.lambda1 * gamma_approx(
        tau, rho, cfg.learning, opt._gamma_context("idle", rho, cfg)
    )
    assert opt.utility(rho, tau, "idle", cfg) == pytest.approx(expect, rel=1e-14)


def test_utility_increasing_in_tau_when_lambda1_zero(plain_ocfg):
    cfg = replace(plain_ocfg, lambda1=0.0)
    vals = [opt.utility(0.5, t, "idle", cfg) for t in (10, 20, 40, 80)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_utility_idle_beats_noisy_per_tau(plain_ocfg):
    # at each feasible tau the idle optimum is at least as good
    fs = opt.feasible_set("idle", plain_ocfg)
    for tau in (fs.tau_min, (fs.tau_min + fs.tau_max) // 2, fs.tau_max):
        g_i = opt.utility(
            opt.rho_opt_numeric(tau, "idle", plain_ocfg), tau, "idle", plain_ocfg
        )
        g_n = opt.utility(
            opt.rho_opt_noisy(tau, plain_ocfg), tau, "noisy", plain_ocfg
        )
        assert g_i <= g_n


# --------------------------------------------------------------- rho_opt_idle
def test_rho_opt_idle_vanishes_with_lambda1():
    # the radicand numerator carries lambda1; sigma2 = 0.35 keeps the privacy
    # curvature term above one so the denominator stays bounded away from zero
    # (at sigma2 = 0.5 it equals the numerator's own lambda1 term and the
    # limit is finite instead)
    cfg = make_ocfg(lam1=1e-12, sigma2=0.35)
    assert opt.rho_opt_idle(60, cfg) < 1e-3


def test_rho_opt_idle_decreases_in_tau_when_privacy_binds():
    # sigma2 = 0.35 puts the privacy curvature term above one, so the radicand
    # shrinks as tau grows; at sigma2 = 0.5 (curvature exactly one) the
    # formula is tau-free instead
    cfg = make_ocfg(sigma2=0.35)
    vals = [opt.rho_opt_idle(t, cfg) for t in (30, 60, 120, 240)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    flat_cfg = make_ocfg(sigma2=0.5)
    flat = [opt.rho_opt_idle(t, flat_cfg) for t in (30, 60, 120)]
    assert max(flat) - min(flat) < 1e-12


def test_rho_opt_idle_matches_surrogate_minimizer():
    # golden-section on the frozen-participant objective the formula solves
    cfg = make_ocfg(sigma2=0.35, m=1.25, g=0.8)
    tau = 60
    rho = opt.rho_opt_idle(tau, cfg)
    from otafl.channel import expected_participants

    kt = expected_participants(rho, cfg.channel, cfg.power, cfg.grad_bound)
    s2, w = 0.35, cfg.grad_bound
    a = cfg.lambda1 / (cfg.lambda2 * tau**2 * kt * w**2)
    b = 4 * cfg.lambda1 * cfg.learning.smoothness**2 * cfg.learning.grad_sq_bound / (
        cfg.lambda2 * tau**2 * kt
    )
    c = w**2 * (cfg.alpha - 1) / (2 * cfg.power * s2)
    scale = 2 * cfg.power * s2 / w**2

    def surrogate(r):
        return (c + b - 1.0) * r + a * scale**2 / r

    oracle = golden_section(surrogate, 1e-9, 2 * cfg.rho_cap, rel_tol=1e-13)
    assert abs(rho - oracle) / oracle < 1e-4


def test_rho_opt_idle_falls_back_on_bad_radicand(caplog):
    # P = 4 drives the radicand negative at the K_t = K seed; the numerical
    # minimizer takes over
    import logging

    cfg = make_ocfg(power=4.0)
    with caplog.at_level(logging.WARNING, logger="otafl.optimizer"):
        rho = opt.rho_opt_idle(74, cfg)
    assert 0 < rho <= cfg.rho_cap
    assert rho == pytest.approx(opt.rho_opt_numeric(74, "idle", cfg), rel=1e-6)
    assert any("radicand" in r.message or "converge" in r.message for r in caplog.records)


def test_idle_closed_form_radicand_error():
    cfg = make_ocfg(sigma2=0.7, lam2=1.0)
    with pytest.raises(NonPositiveRadicandError):
        opt._idle_closed_form(100, 100.0, 0.7, cfg)


# -------------------------------------------------------------- rho_opt_noisy
def test_rho_opt_noisy_boundary_when_monotone():
    # lambda1 = 0 leaves only the epsilon term, decreasing in rho, so the
    # utility is monotone and the cap boundary wins
    cfg = make_ocfg(lam1=0.0)
    assert opt.rho_opt_noisy(60, cfg) == pytest.approx(cfg.rho_cap)


def test_rho_opt_noisy_matches_golden_section(plain_ocfg):
    fs = opt.feasible_set("noisy", plain_ocfg)
    tau = (fs.tau_min + fs.tau_max) // 2
    rho = opt.rho_opt_noisy(tau, plain_ocfg)
    oracle = golden_section(
        lambda r: opt.utility(r, tau, "noisy", plain_ocfg),
        1e-9,
        plain_ocfg.rho_cap,
        rel_tol=1e-12,
    )
    assert abs(rho - oracle) / oracle < max(plain_ocfg.bisection_tol, 1e-4)


def test_rho_opt_noisy_halving_contract():
    # tolerance of half the interval terminates within two iterations
    cfg = make_ocfg(psi=0.5, n_max=2)
    rho = opt.rho_opt_noisy(60, cfg)
    assert 0 < rho <= cfg.rho_cap


def test_rho_opt_noisy_max_iters_error():
    cfg = make_ocfg(psi=1e-300, n_max=3)
    with pytest.raises(MaxItersExceededError) as err:
        opt.rho_opt_noisy(60, cfg)
    lo, hi = err.value.bracket
    assert 0 <= lo < hi <= cfg.rho_cap


# ----------------------------------------------------------- two_stage_optimize
def test_two_stage_single_point_feasible_set():
    cfg = make_ocfg(eps_bar=79.0)
    fs = opt.feasible_set("idle", cfg)
    assert len(fs) == 1
    sol = opt.two_stage_optimize("idle", cfg)
    assert sol.tau_opt == fs.tau_min


def test_two_stage_deterministic(plain_ocfg):
    a = opt.two_stage_optimize("idle", plain_ocfg)
    b = opt.two_stage_optimize("idle", plain_ocfg)
    assert a == b


def test_two_stage_global_minimum_audit(plain_ocfg):
    # numeric stage II, guard off: no sampled (rho, tau) pair beats the
    # returned solution; the closed-form stage II sits within 2% (its known
    # linearization slack)
    for strategy in ("noisy", "idle"):
        sol = opt.two_stage_optimize(
            strategy, plain_ocfg, budget_guard=False, idle_rho_mode="numeric"
        )
        fs = sol.feasible
        grid = np.linspace(plain_ocfg.rho_cap / 100, plain_ocfg.rho_cap, 100)
        grid_best = min(
            opt.utility(r, t, strategy, plain_ocfg)
            for t in range(fs.tau_min, fs.tau_max + 1)
            for r in grid
        )
        assert sol.utility <= grid_best * (1 + 1e-9)
    closed = opt.two_stage_optimize(
        "idle", plain_ocfg, budget_guard=False, idle_rho_mode="closed_form"
    )
    numeric = opt.two_stage_optimize(
        "idle", plain_ocfg, budget_guard=False, idle_rho_mode="numeric"
    )
    assert numeric.utility <= closed.utility <= numeric.utility * 1.02


def test_two_stage_local_minimum_certificate(plain_ocfg):
    delta = 1e-3 * plain_ocfg.rho_cap
    for strategy in ("noisy", "idle"):
        for tau, rho, g in opt.stage2_curve(
            strategy, plain_ocfg, budget_guard=False, idle_rho_mode="numeric"
        ):
            if rho + delta <= plain_ocfg.rho_cap:
                assert opt.utility(rho + delta, tau, strategy, plain_ocfg) >= g
            assert opt.utility(max(rho - delta, 1e-9), tau, strategy, plain_ocfg) >= g


def test_two_stage_idle_beats_noisy(plain_ocfg):
    for guard in (False, True):
        sol_i = opt.two_stage_optimize("idle", plain_ocfg, budget_guard=guard)
        sol_n = opt.two_stage_optimize("noisy", plain_ocfg, budget_guard=guard)
        assert sol_i.utility <= sol_n.utility
        assert sol_i.feasible.tau_min <= sol_i.tau_opt <= sol_i.feasible.tau_max


def test_two_stage_budget_guard(plain_ocfg):
    for strategy in ("noisy", "idle"):
        for tau, rho, _ in opt.stage2_curve(strategy, plain_ocfg, budget_guard=True):
            assert tau * opt.per_round_eps(strategy, rho, plain_ocfg) <= (
                plain_ocfg.eps_bar * (1 + 1e-12)
            )


def test_two_stage_mixed_endpoints(plain_ocfg):
    idle = opt.two_stage_optimize(
        StrategySpec(kind="mixed", portion=0.0), plain_ocfg, budget_guard=False
    )
    pure = opt.two_stage_optimize("idle", plain_ocfg, budget_guard=False)
    assert idle.rho_opt == pure.rho_opt and idle.tau_opt == pure.tau_opt
    noisy = opt.two_stage_optimize(
        StrategySpec(kind="mixed", portion=1.0), plain_ocfg, budget_guard=False
    )
    pure_n = opt.two_stage_optimize("noisy", plain_ocfg, budget_guard=False)
    assert noisy.rho_opt == pure_n.rho_opt and noisy.tau_opt == pure_n.tau_opt


# ---------------------------------------------------------------- baseline_rho
def test_baseline_h_min_unit_gains():
    cfg = make_ocfg(k=3)
    draw = GainDraw(gains=np.ones(3), phases=np.zeros(3), round_index=0)
    assert opt.baseline_rho(StrategySpec(kind="h_min"), cfg, gains=draw) == 1.0


def test_baseline_h_min_degenerate():
    cfg = make_ocfg(k=2)
    draw = GainDraw(gains=np.array([0.0, 1.0]), phases=np.zeros(2), round_index=0)
    with pytest.raises(DegenerateGainError):
        opt.baseline_rho(StrategySpec(kind="h_min"), cfg, gains=draw)


def test_baseline_h_min_median_below_cdpb(plain_ocfg):
    sol = opt.two_stage_optimize("idle", plain_ocfg)
    rhos = [
        opt.baseline_rho(
            StrategySpec(kind="h_min"),
            plain_ocfg,
            gains=sample_gains(plain_ocfg.channel, 500 + i, 0),
        )
        for i in range(100)
    ]
    assert float(np.median(rhos)) <= sol.rho_opt


def test_baseline_gamma_based_is_rho_gamma(plain_ocfg):
    spec = StrategySpec(kind="gamma_based")
    assert opt.baseline_rho(spec, plain_ocfg) == opt.rho_gamma("idle", plain_ocfg)


def test_noise_free_round_eps_dominates_cdpb(plain_ocfg):
    # with awgn far below the artificial-noise level, the noise-free rounds
    # leak much more per round at any common balance
    rho = 0.5
    nf = opt.per_round_eps(StrategySpec(kind="noise_free"), rho, plain_ocfg)
    cdpb = opt.per_round_eps("idle", rho, plain_ocfg)
    assert nf > cdpb


def test_is_baseline_crossover():
    # without amplification the plain accountant dominates the CDPB bound
    # once p e^{(alpha-1) W^2/sq} + 1 < sqrt(2) e^{W^2/sq} (alpha = 2); at the
    # high-noise training point the relaxed bound's log 2 floor flips the
    # comparison, which is a property of the bound, not of the mechanisms
    tight = PrivacyParams(alpha=2, grad_bound=1.0, noise_var=0.5, participation=math.exp(-1))
    assert gaussian_round_eps(tight) >= subsampled_round_eps_bound(tight)
    loose = PrivacyParams(alpha=2, grad_bound=1.0, noise_var=60.0, participation=math.exp(-1))
    assert gaussian_round_eps(loose) < subsampled_round_eps_bound(loose)


def test_is_baseline_round_eps_matches_gaussian(plain_ocfg):
    rho = 0.5
    spec = StrategySpec(kind="is_based")
    value = is_baseline_round_eps(spec, rho, plain_ocfg)
    noise = opt.artificial_noise_power("idle", rho, plain_ocfg) + plain_ocfg.channel.awgn_var
    assert value == pytest.approx(2.0 * 1.0 / noise, rel=1e-12)


# -------------------------------------------------------------- golden_section
@given(st.floats(-5.0, 5.0))
def test_golden_section_quadratic(center):
    found = golden_section(lambda x: (x - center) ** 2, -10.0, 10.0, rel_tol=1e-12)
    assert abs(found - center) < 1e-6
