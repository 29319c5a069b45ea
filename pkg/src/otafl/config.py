"""Configuration loading, validation, and derived parameter objects.

Configs are UTF-8 JSON with a ``schema_version`` field. Unknown keys are
rejected with their path so silent typos cannot change an experiment. An
empty file means "all defaults". Any top-level key can be overridden with an
``OTAFL_<KEY>`` environment variable whose value is parsed as JSON (falling
back to a bare string).

Curvature constants default to the task: smoothness and strong convexity come
from the synthetic task's exact values, the squared-gradient bound from the
trajectory certificate, and the schedule offset from
ceil((sqrt(2)+1) * smoothness) + 1. Explicit config values win.
"""

import json
import math
import os
from dataclasses import dataclass, field, fields

from .channel import ChannelParams
from .convergence import LearningParams
from .errors import ConfigError
from .optimizer import OptimizerConfig
from .strategy import StrategySpec
from .tasks import certify_grad_sq_bound, make_logistic_task, make_quadratic_task

ENV_PREFIX = "OTAFL_"
SCHEMA_VERSION = 1

_TASK_DEFAULTS = {
    "kind": "quadratic",
    "center_scale": 0.5,
    "curvature": None,
    "samples_per_client": 32,
    "regularizer": 0.1,
    "feature_scale": 1.0,
    "batch_size": None,
}


@dataclass
class SystemConfig:
    schema_version: int = SCHEMA_VERSION
    num_clients: int = 100
    sigma2: object = 0.5
    awgn_var: float = 1e-2
    power: float = 1.0
    grad_bound: float = 1.0
    model_dim: int = 10
    local_steps: int = 1
    alpha: int = 2
    lambda1: float = 1.0
    lambda2: float = 1e-5
    gamma_bar: float = 1e-2
    eps_bar: float = 100.0
    smoothness: float = None
    strong_convexity: float = None
    grad_sq_bound: float = None
    schedule_offset: float = None
    init_gap: float = None
    bisection_tol: float = 1e-10
    bisection_max_iters: int = 200
    strategy: str = "idle"
    divisor_mode: str = "realized"
    update_form: str = "rescaled_gradient"
    gradient_norm_mode: str = "clip"
    budget_guard: bool = True
    idle_rho_mode: str = "closed_form"
    seed: int = 0
    num_seeds: int = 20
    tau: int = None
    rho: float = None
    task: dict = field(default_factory=lambda: dict(_TASK_DEFAULTS))

    def __post_init__(self):
        self._task_cache = None
        self._validate()

    # ---------------------------------------------------------------- checks
    def _validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}"
            )
        _positive_int("num_clients", self.num_clients)
        _positive("power", self.power)
        _positive("grad_bound", self.grad_bound)
        _nonnegative("awgn_var", self.awgn_var)
        _positive_int("model_dim", self.model_dim)
        _positive_int("local_steps", self.local_steps)
        if self.alpha < 2 or int(self.alpha) != self.alpha:
            raise ConfigError(f"alpha: must be an integer >= 2, got {self.alpha}")
        _nonnegative("lambda1", self.lambda1)
        _nonnegative("lambda2", self.lambda2)
        if self.lambda1 + self.lambda2 <= 0:
            raise ConfigError("lambda1 + lambda2 must be positive")
        _positive("gamma_bar", self.gamma_bar)
        _positive("eps_bar", self.eps_bar)
        _positive("bisection_tol", self.bisection_tol)
        _positive_int("bisection_max_iters", self.bisection_max_iters)
        if self.divisor_mode not in ("realized", "expected"):
            raise ConfigError(f"divisor_mode: unknown value {self.divisor_mode!r}")
        if self.update_form not in ("displacement", "rescaled_gradient"):
            raise ConfigError(f"update_form: unknown value {self.update_form!r}")
        if self.gradient_norm_mode not in ("clip", "normalize"):
            raise ConfigError(
                f"gradient_norm_mode: unknown value {self.gradient_norm_mode!r}"
            )
        if self.idle_rho_mode not in ("closed_form", "numeric"):
            raise ConfigError(f"idle_rho_mode: unknown value {self.idle_rho_mode!r}")
        _positive_int("num_seeds", self.num_seeds)
        if self.tau is not None:
            _positive_int("tau", self.tau)
        if self.rho is not None:
            _positive("rho", self.rho)
        self.strategy_spec()  # parse errors surface at load time
        unknown_task = set(self.task) - set(_TASK_DEFAULTS)
        if unknown_task:
            raise ConfigError(f"task: unknown keys {sorted(unknown_task)}")
        merged = dict(_TASK_DEFAULTS)
        merged.update(self.task)
        self.task = merged
        if self.task["kind"] not in ("quadratic", "logistic_l2"):
            raise ConfigError(f"task.kind: unknown value {self.task['kind']!r}")
        # heterogeneous channels cannot feed the closed-form optimizer paths
        sigma2 = self.sigma2
        if isinstance(sigma2, (list, tuple)):
            if len(sigma2) != self.num_clients:
                raise ConfigError(
                    f"sigma2: list length {len(sigma2)} != num_clients {self.num_clients}"
                )
            if any(s <= 0 for s in sigma2):
                raise ConfigError("sigma2: every entry must be > 0")
            if len(set(map(float, sigma2))) > 1 and self.idle_rho_mode == "closed_form":
                raise ConfigError(
                    "sigma2: heterogeneous per-client scales are incompatible with "
                    "the closed-form optimizer paths, which assume a single shared "
                    "scale; set idle_rho_mode='numeric' or use a scalar sigma2"
                )
        else:
            _positive("sigma2", sigma2)

    # -------------------------------------------------------------- builders
    def channel_params(self):
        if isinstance(self.sigma2, (list, tuple)):
            return ChannelParams(
                self.num_clients, tuple(float(s) for s in self.sigma2), self.awgn_var
            )
        return ChannelParams.homogeneous(self.num_clients, self.sigma2, self.awgn_var)

    def build_task(self):
        if self._task_cache is None:
            if self.task["kind"] == "quadratic":
                self._task_cache = make_quadratic_task(
                    self.num_clients,
                    self.model_dim,
                    self.seed,
                    center_scale=self.task["center_scale"],
                    curvature=self.task["curvature"],
                )
            else:
                self._task_cache = make_logistic_task(
                    self.num_clients,
                    self.model_dim,
                    self.seed,
                    samples_per_client=self.task["samples_per_client"],
                    regularizer=self.task["regularizer"],
                    feature_scale=self.task["feature_scale"],
                )
        return self._task_cache

    @property
    def task_batch_size(self):
        return self.task["batch_size"]

    def resolved_curvature(self, task=None):
        """(smoothness, strong_convexity, schedule_offset) after defaults."""
        m = self.smoothness if self.smoothness is not None else (
            task.smoothness if task is not None else 1.0
        )
        mu = self.strong_convexity if self.strong_convexity is not None else (
            task.mu if task is not None else 1.0
        )
        a = self.schedule_offset
        if a is None:
            a = math.ceil((math.sqrt(2.0) + 1.0) * m) + 1.0
        return m, mu, a

    def learning_params(self, task=None):
        m, mu, a = self.resolved_curvature(task)
        g = self.grad_sq_bound
        if g is None:
            g = certify_grad_sq_bound(task, a) if task is not None else 1.0
        init_gap = self.init_gap
        if init_gap is None:
            init_gap = (
                float(task.theta_star @ task.theta_star) if task is not None else 1.0
            )
        return LearningParams(
            smoothness=m,
            strong_convexity=mu,
            grad_sq_bound=g,
            schedule_offset=a,
            local_steps=self.local_steps,
            grad_bound=self.grad_bound,
            model_dim=self.model_dim,
            init_gap=init_gap,
        )

    def optimizer_config(self, task=None):
        return OptimizerConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            gamma_bar=self.gamma_bar,
            eps_bar=self.eps_bar,
            power=self.power,
            grad_bound=self.grad_bound,
            alpha=int(self.alpha),
            channel=self.channel_params(),
            learning=self.learning_params(task),
            bisection_tol=self.bisection_tol,
            bisection_max_iters=self.bisection_max_iters,
            budget_guard=self.budget_guard,
            idle_rho_mode=self.idle_rho_mode,
        )

    def strategy_spec(self):
        return StrategySpec.parse(self.strategy)


def _positive(name, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{name}: must be a positive number, got {value!r}")


def _nonnegative(name, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
        raise ConfigError(f"{name}: must be a nonnegative number, got {value!r}")


def _positive_int(name, value):
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name}: must be a positive integer, got {value!r}")


def _apply_env_overrides(data, environ):
    known = {f.name for f in fields(SystemConfig)}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name not in known:
            raise ConfigError(f"environment override {key}: unknown config key {name!r}")
        try:
            data[name] = json.loads(raw)
        except json.JSONDecodeError:
            data[name] = raw
    return data


def load_config(path, environ=None):
    """Load, override, and validate a config file; report errors by field."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise exc
    if text.strip() == "":
        data = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}"
            ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return from_dict(data, environ=environ)


def from_dict(data, environ=None):
    known = {f.name for f in fields(SystemConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data = dict(data)
    if environ is None:
        environ = os.environ
    _apply_env_overrides(data, environ)
    return SystemConfig(**data)
