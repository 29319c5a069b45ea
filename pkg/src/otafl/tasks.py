"""Synthetic strongly-convex learning tasks with certifiable constants.

Two task families stand in for image classification so that the smoothness,
strong convexity, and gradient-norm assumptions behind the convergence bound
are verifiable instead of asserted:

* quadratic -- f_k(theta) = 1/2 (theta - c_k)^T Lambda (theta - c_k) with a
  shared diagonal curvature. mu and M are the extreme curvature entries and
  the global optimum is the center mean, all exact.
* logistic_l2 -- l2-regularized logistic regression on per-client Gaussian
  data. mu equals the regularizer, M adds the spectral bound of the averaged
  quarter-Gram matrix, and the optimum comes from a damped-Newton solver run
  to gradient norm below 1e-10.

``certify_grad_sq_bound`` replays the noiseless centralized trajectory under
the training schedule and returns the largest observed per-client squared
gradient norm with 20% headroom; the optimizer consumes that certificate.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .seeding import substream


@dataclass
class SyntheticTask:
    kind: str
    dim: int
    num_clients: int
    mu: float
    smoothness: float
    theta_star: np.ndarray
    f_star: float
    centers: np.ndarray = None
    curvature: np.ndarray = None
    features: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    regularizer: float = 0.0

    def client_loss(self, k, theta):
        if self.kind == "quadratic":
            diff = theta - self.centers[k]
            return 0.5 * float(diff @ (self.curvature * diff))
        x, y = self.features[k], self.labels[k]
        margins = -y * (x @ theta)
        return float(
            np.mean(np.logaddexp(0.0, margins))
            + 0.5 * self.regularizer * theta @ theta
        )

    def client_gradient(self, k, theta, rng=None, batch_size=None):
        """Gradient of client k's loss; optionally on a sampled minibatch."""
        if self.kind == "quadratic":
            return self.curvature * (theta - self.centers[k])
        x, y = self.features[k], self.labels[k]
        if batch_size is not None and batch_size < len(y):
            idx = rng.choice(len(y), size=batch_size, replace=False)
            x, y = x[idx], y[idx]
        s = 1.0 / (1.0 + np.exp(y * (x @ theta)))
        return -(x * (y * s)[:, None]).mean(axis=0) + self.regularizer * theta

    def batch_gradients(self, thetas):
        """Per-client gradients at per-client iterates, shape (K, d), full batch."""
        if self.kind == "quadratic":
            return (thetas - self.centers) * self.curvature[None, :]
        return np.stack(
            [self.client_gradient(k, thetas[k]) for k in range(self.num_clients)]
        )

    def global_loss(self, theta):
        return float(
            np.mean([self.client_loss(k, theta) for k in range(self.num_clients)])
        )

    def global_gradient(self, theta):
        return np.mean(
            [self.client_gradient(k, theta) for k in range(self.num_clients)], axis=0
        )

    def suboptimality(self, theta):
        if self.kind == "quadratic":
            # global loss is an exact quadratic around theta_star
            diff = theta - self.theta_star
            return 0.5 * float(diff @ (self.curvature * diff))
        return self.global_loss(theta) - self.f_star


def make_quadratic_task(num_clients, dim, master_seed, center_scale=0.5, curvature=None):
    """Per-client quadratic bowls with centers of RMS norm ``center_scale``."""
    if curvature is None:
        curvature = np.ones(dim)
    else:
        curvature = np.asarray(curvature, dtype=float)
        if curvature.shape != (dim,) or np.any(curvature <= 0):
            raise ConfigError("curvature must be a positive vector of length model_dim")
    centers = np.stack(
        [
            center_scale / math.sqrt(dim) * substream(master_seed, "data", 0, k).standard_normal(dim)
            for k in range(num_clients)
        ]
    )
    theta_star = centers.mean(axis=0)
    f_star = float(
        np.mean([0.5 * (theta_star - c) @ (curvature * (theta_star - c)) for c in centers])
    )
    return SyntheticTask(
        kind="quadratic",
        dim=dim,
        num_clients=num_clients,
        mu=float(curvature.min()),
        smoothness=float(curvature.max()),
        theta_star=theta_star,
        f_star=f_star,
        centers=centers,
        curvature=curvature,
    )


def make_logistic_task(
    num_clients,
    dim,
    master_seed,
    samples_per_client=32,
    regularizer=0.1,
    feature_scale=1.0,
):
    """l2-regularized logistic regression on synthetic per-client data."""
    if regularizer <= 0:
        raise ConfigError("logistic_l2 requires regularizer > 0")
    truth_rng = substream(master_seed, "init", 0, 0)
    theta_true = truth_rng.standard_normal(dim)
    features, labels = [], []
    for k in range(num_clients):
        rng = substream(master_seed, "data", 0, k)
        x = feature_scale / math.sqrt(dim) * rng.standard_normal((samples_per_client, dim))
        noise = 0.1 * rng.standard_normal(samples_per_client)
        y = np.sign(x @ theta_true + noise)
        y[y == 0] = 1.0
        features.append(x)
        labels.append(y)

    gram = np.zeros((dim, dim))
    for x in features:
        gram += x.T @ x / (4.0 * len(x))
    gram /= num_clients
    smoothness = regularizer + float(np.linalg.eigvalsh(gram).max())

    task = SyntheticTask(
        kind="logistic_l2",
        dim=dim,
        num_clients=num_clients,
        mu=regularizer,
        smoothness=smoothness,
        theta_star=np.zeros(dim),
        f_star=0.0,
        features=features,
        labels=labels,
        regularizer=regularizer,
    )
    task.theta_star = _solve_logistic_optimum(task)
    task.f_star = task.global_loss(task.theta_star)
    return task


def _solve_logistic_optimum(task, grad_tol=1e-10, max_iter=200):
    """Damped Newton on the global loss; strong convexity makes this safe."""
    theta = np.zeros(task.dim)
    for _ in range(max_iter):
        grad = task.global_gradient(theta)
        if np.linalg.norm(grad) < grad_tol:
            return theta
        hess = task.regularizer * np.eye(task.dim)
        for x, y in zip(task.features, task.labels):
            s = 1.0 / (1.0 + np.exp(-(x @ theta) * y))
            w = s * (1.0 - s)
            hess += (x.T * w) @ x / len(y) / task.num_clients
        step = np.linalg.solve(hess, grad)
        # backtracking keeps the damped iteration monotone
        t, f0 = 1.0, task.global_loss(theta)
        while task.global_loss(theta - t * step) > f0 - 1e-4 * t * grad @ step:
            t *= 0.5
            if t < 1e-8:
                break
        theta = theta - t * step
    grad_norm = np.linalg.norm(task.global_gradient(theta))
    if grad_norm >= grad_tol:
        raise ConfigError(f"logistic optimum solver stalled at grad norm {grad_norm}")
    return theta


def certify_grad_sq_bound(task, schedule_offset, rounds=256, headroom=1.2):
    """Largest per-client squared gradient norm on the reference trajectory.

    Replays noiseless centralized descent with the training step sizes from
    the all-zeros start, tracks max_k ||grad f_k(theta_t)||^2 over iterates
    plus the optimum, and pads by ``headroom``.
    """
    theta = np.zeros(task.dim)
    worst = 0.0
    for t in range(rounds):
        grads = np.stack([task.client_gradient(k, theta) for k in range(task.num_clients)])
        worst = max(worst, float(np.max(np.sum(grads**2, axis=1))))
        eta = 4.0 / (task.mu * (schedule_offset + t))
        theta = theta - eta * grads.mean(axis=0)
    grads_star = np.stack(
        [task.client_gradient(k, task.theta_star) for k in range(task.num_clients)]
    )
    worst = max(worst, float(np.max(np.sum(grads_star**2, axis=1))))
    return headroom * worst
