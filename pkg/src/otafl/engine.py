"""End-to-end FedAvg training over the simulated multiple-access channel.

Each round: draw gains, run local SGD from the broadcast model, clip the
per-client payload to norm W, build the transmit plan (reliable clients
power-saturate and split between signal and artificial noise; unreliable
clients go silent or jam at full power, per strategy), superpose everything
with channel AWGN, rescale by the configured divisor, update the global
model, and charge the round's privacy cost to the ledger.

Two server update forms exist. ``rescaled_gradient`` (default) transmits the
summed local gradients and applies theta <- theta - eta_t * ghat, the update
the convergence bound analyzes: the effective noise then enters scaled by
eta_t^2 and decays with the schedule. ``displacement`` transmits
theta_local - theta (which already embeds the local step size) and applies
theta <- theta + ghat; its update noise does not decay, so trained losses
plateau well above the rescaled form at the same budget.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import expected_participants, sample_gains, threshold
from .convergence import round_weight, step_size
from .errors import ConfigError, DegenerateGainError, EmptyRoundError
from .optimizer import artificial_noise_power, privacy_params_at
from .privacy import (
    PrivacyParams,
    RdpLedger,
    compose,
    gaussian_round_eps,
    subsampled_round_eps_bound,
)
from .seeding import substream
from .strategy import StrategySpec

ROLE_RELIABLE = "reliable"
ROLE_NOISY = "unreliable_noisy"
ROLE_IDLE = "unreliable_idle"


@dataclass(frozen=True)
class RoundTrace:
    """Per-round record emitted by the training loop."""

    t: int
    participants: tuple
    sigma_q2_realized: float
    loss_current: float
    loss_weighted: float
    eps_cumulative: float


@dataclass(frozen=True)
class TransmitPlan:
    """Per-client roles, precoding scales, and artificial-noise variances."""

    roles: tuple
    scale: np.ndarray
    noise_var: np.ndarray
    rho: float
    h_th: float


def clip_gradient(g, grad_bound):
    """Scale g down to norm grad_bound when it exceeds it."""
    if grad_bound <= 0:
        raise ConfigError("grad_bound must be > 0")
    norm = float(np.linalg.norm(g))
    if norm <= grad_bound or norm == 0.0:
        return np.array(g, dtype=float, copy=True)
    return np.asarray(g, dtype=float) * (grad_bound / norm)


def normalize_gradient(g, grad_bound):
    """Rescale g to norm exactly grad_bound (strict power-balance mode)."""
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return np.array(g, dtype=float, copy=True)
    return np.asarray(g, dtype=float) * (grad_bound / norm)


def local_update(theta, task, client, local_steps, eta, rng=None, batch_size=None):
    """Run ``local_steps`` SGD steps on one client's loss from theta."""
    if local_steps < 1:
        raise ConfigError("local_steps must be >= 1")
    if eta <= 0:
        raise ConfigError("eta must be > 0")
    current = np.array(theta, dtype=float, copy=True)
    for _ in range(local_steps):
        grad = task.client_gradient(client, current, rng=rng, batch_size=batch_size)
        current = current - eta * grad
    return current


def _client_payloads(task, theta, eta, local_steps, update_form, master_seed, t, batch_size):
    """Per-client transmit payloads, shape (K, d), before clipping.

    displacement: theta_local_final - theta.
    rescaled_gradient: sum of the per-step local gradients along the same
    trajectory (the server re-applies eta_t).
    """
    k = task.num_clients
    if task.kind == "quadratic" and batch_size is None:
        # full-batch quadratic: identical linear map per client, vectorized
        thetas = np.tile(theta, (k, 1))
        grad_sum = np.zeros_like(thetas)
        for _ in range(local_steps):
            grads = task.batch_gradients(thetas)
            grad_sum += grads
            thetas = thetas - eta * grads
        return thetas - theta[None, :] if update_form == "displacement" else grad_sum

    payloads = np.zeros((k, task.dim))
    for client in range(k):
        rng = substream(master_seed, "batch", t, client) if batch_size else None
        current = np.array(theta, dtype=float, copy=True)
        grad_sum = np.zeros(task.dim)
        for _ in range(local_steps):
            grad = task.client_gradient(client, current, rng=rng, batch_size=batch_size)
            grad_sum += grad
            current = current - eta * grad
        payloads[client] = current - theta if update_form == "displacement" else grad_sum
    return payloads


def build_transmit_plan(
    strategy, gains, payloads, rho, power, grad_bound, dim, master_seed=0
):
    """Assign roles, precoding scales a_k = rho / h_k, and noise variances.

    Reliable clients saturate the power budget: a_k (||g_k||^2 + d sigma_r^2)
    = P exactly, so sigma_r^2 = (P h_k / rho - ||g_k||^2) / d, which is
    nonnegative whenever h_k clears the threshold and the payload is clipped.
    Unreliable clients jam at full power (d sigma_r^2 = P) or stay silent;
    the mixed strategy flips a per-(round, client) coin between the two.
    """
    spec = strategy if isinstance(strategy, StrategySpec) else StrategySpec.parse(strategy)
    if rho <= 0:
        raise ConfigError(f"rho must be > 0, got {rho}")
    h_th = threshold(rho, power, grad_bound)
    k = len(gains.gains)
    norms_sq = np.sum(np.asarray(payloads, dtype=float) ** 2, axis=1)
    roles = []
    scale = np.zeros(k)
    noise_var = np.zeros(k)
    weight = spec.noise_weight()
    for client in range(k):
        h = float(gains.gains[client])
        if h >= h_th:
            roles.append(ROLE_RELIABLE)
            scale[client] = rho / h
            if spec.kind == "noise_free":
                noise_var[client] = 0.0
            else:
                slack = power * h / rho - norms_sq[client]
                noise_var[client] = max(slack, 0.0) / dim
        else:
            if weight == 0.0:
                send_noise = False
            elif weight == 1.0:
                send_noise = True
            else:
                coin = substream(master_seed, "coin", gains.round_index, client)
                send_noise = bool(coin.random() < weight)
            if send_noise:
                roles.append(ROLE_NOISY)
                noise_var[client] = power / dim
            else:
                roles.append(ROLE_IDLE)
    return TransmitPlan(
        roles=tuple(roles), scale=scale, noise_var=noise_var, rho=rho, h_th=h_th
    )


def aggregate(
    plan,
    gains,
    payloads,
    awgn_var,
    divisor_mode,
    master_seed=0,
    expected_count=None,
):
    """Superpose the round's transmissions and rescale to a gradient estimate.

    Returns (g_hat, participant ids, realized sigma_q^2). The realized noise
    variance is the total received perturbation power
    d sum_reliable rho sigma_r^2 + d sum_jamming h_k sigma_r^2 + awgn_var.
    """
    dim = payloads.shape[1]
    y = np.zeros(dim)
    participants = []
    sigma_q2 = awgn_var
    for client, role in enumerate(plan.roles):
        h = float(gains.gains[client])
        if role == ROLE_RELIABLE:
            participants.append(client)
            coeff = math.sqrt(plan.scale[client] * h)
            signal = payloads[client]
            if plan.noise_var[client] > 0:
                rng = substream(master_seed, "noise", gains.round_index, client)
                signal = signal + rng.standard_normal(dim) * math.sqrt(
                    plan.noise_var[client]
                )
            y += coeff * signal
            sigma_q2 += dim * plan.rho * plan.noise_var[client]
        elif role == ROLE_NOISY:
            rng = substream(master_seed, "noise", gains.round_index, client)
            y += math.sqrt(h) * rng.standard_normal(dim) * math.sqrt(
                plan.noise_var[client]
            )
            sigma_q2 += dim * h * plan.noise_var[client]
    if awgn_var > 0:
        rng = substream(master_seed, "awgn", gains.round_index)
        y += rng.standard_normal(dim) * math.sqrt(awgn_var / dim)
    if divisor_mode == "realized":
        divisor = float(len(participants))
    elif divisor_mode == "expected":
        if expected_count is None:
            raise ConfigError("expected divisor mode needs expected_count")
        divisor = float(expected_count)
    else:
        raise ConfigError(f"unknown divisor_mode {divisor_mode!r}")
    if divisor < 1:
        raise EmptyRoundError(f"round {gains.round_index}: divisor {divisor} < 1")
    g_hat = y / (math.sqrt(plan.rho) * divisor)
    return g_hat, tuple(participants), float(sigma_q2)


def training_round_eps(spec, rho, cfg, sigma_q2_realized):
    """Privacy charged for one round, by strategy family.

    CDPB variants and the budget-only / noise-free baselines use the
    composed-bound accountant at (p(rho), expected effective noise). The
    worst-channel baseline has everyone transmit, so p = 1 and the realized
    noise applies. The independent-sampling baseline gets no amplification:
    the server knows the participants, so the plain Gaussian accountant
    applies at the same noise level.
    """
    if spec.kind == "h_min":
        if sigma_q2_realized <= 0:
            return math.inf
        params = PrivacyParams(
            alpha=cfg.alpha,
            grad_bound=cfg.grad_bound,
            noise_var=sigma_q2_realized,
            participation=1.0,
        )
        return subsampled_round_eps_bound(params)
    if spec.kind == "is_based":
        return is_baseline_round_eps(spec, rho, cfg)
    noise = artificial_noise_power(spec, rho, cfg) + cfg.channel.awgn_var
    if noise <= 0:
        return math.inf  # a zero-noise round carries no privacy at all
    return subsampled_round_eps_bound(privacy_params_at(spec, rho, cfg))


def is_baseline_round_eps(spec, rho, cfg):
    """Per-round epsilon without subsampling amplification (CSI-aware server)."""
    base = spec if isinstance(spec, StrategySpec) else StrategySpec.parse(str(spec))
    noise = artificial_noise_power(
        StrategySpec(kind=base.base), rho, cfg
    ) + cfg.channel.awgn_var
    params = PrivacyParams(
        alpha=cfg.alpha,
        grad_bound=cfg.grad_bound,
        noise_var=noise,
        participation=mean_p(rho, cfg),
    )
    return gaussian_round_eps(params)


def mean_p(rho, cfg):
    return expected_participants(rho, cfg.channel, cfg.power, cfg.grad_bound) / (
        cfg.channel.num_clients
    )


def run_training(syscfg, strategy, rho, tau, seed):
    """Run tau rounds and return one RoundTrace per round.

    Deterministic given (config, strategy, rho, tau, seed). Rounds with no
    reliable client under the realized divisor skip the model update but
    still advance time and charge privacy.
    """
    spec = strategy if isinstance(strategy, StrategySpec) else StrategySpec.parse(strategy)
    task = syscfg.build_task()
    lp = syscfg.learning_params(task)
    cfg = syscfg.optimizer_config(task)
    channel = cfg.channel
    dim = task.dim
    if tau < 0 or int(tau) != tau:
        raise ConfigError(f"tau must be a nonnegative integer, got {tau}")
    if spec.kind != "h_min" and rho <= 0:
        raise ConfigError(f"rho must be > 0, got {rho}")

    theta = np.zeros(dim)
    weighted = np.zeros(dim)
    weight_total = 0.0
    ledger = RdpLedger()
    traces = []
    for t in range(int(tau)):
        draw = sample_gains(channel, seed, t)
        if spec.kind == "h_min":
            h_min = float(np.min(draw.gains))
            if h_min <= 0:
                raise DegenerateGainError(f"round {t}: minimum gain is zero")
            rho_t = cfg.power * h_min / cfg.grad_bound**2
        else:
            rho_t = rho
        eta = step_size(t, lp)
        payloads = _client_payloads(
            task,
            theta,
            eta,
            lp.local_steps,
            syscfg.update_form,
            seed,
            t,
            syscfg.task_batch_size,
        )
        bound_fn = (
            normalize_gradient
            if syscfg.gradient_norm_mode == "normalize"
            else clip_gradient
        )
        payloads = np.stack([bound_fn(g, cfg.grad_bound) for g in payloads])
        plan = build_transmit_plan(
            spec, draw, payloads, rho_t, cfg.power, cfg.grad_bound, dim, seed
        )
        expected_count = expected_participants(
            min(rho_t, cfg.rho_cap), channel, cfg.power, cfg.grad_bound
        )
        try:
            g_hat, participants, sigma_q2 = aggregate(
                plan,
                draw,
                payloads,
                channel.awgn_var,
                syscfg.divisor_mode,
                seed,
                expected_count,
            )
            if syscfg.update_form == "displacement":
                theta_next = theta + g_hat
            else:
                theta_next = theta - eta * g_hat
        except EmptyRoundError:
            participants = ()
            sigma_q2 = _plan_sigma_q2(plan, draw, channel.awgn_var, dim)
            theta_next = theta
        eps_t = training_round_eps(spec, min(rho_t, cfg.rho_cap), cfg, sigma_q2)
        ledger = compose(ledger, eps_t)
        beta = round_weight(t, lp)
        weighted += beta * theta
        weight_total += beta
        traces.append(
            RoundTrace(
                t=t,
                participants=participants,
                sigma_q2_realized=sigma_q2,
                loss_current=task.suboptimality(theta),
                loss_weighted=task.suboptimality(weighted / weight_total),
                eps_cumulative=ledger.total_eps,
            )
        )
        theta = theta_next
    return traces


def _plan_sigma_q2(plan, draw, awgn_var, dim):
    total = awgn_var
    for client, role in enumerate(plan.roles):
        if role == ROLE_RELIABLE:
            total += dim * plan.rho * plan.noise_var[client]
        elif role == ROLE_NOISY:
            total += dim * float(draw.gains[client]) * plan.noise_var[client]
    return float(total)
