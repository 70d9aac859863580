"""Convex ERM tasks, the step-size schedules from the utility analysis, and excess risk.

A task pairs a data distribution with a large frozen evaluation sample that
stands in for the population. The model space is the L2 ball of radius
``task.radius``; every protocol projects onto it after each update.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

LOSSES = ("logistic", "squared")
ESTIMATORS = ("last_iterate", "average_iterate")
DEFAULT_EVAL_SIZE = 100_000


def _log1pexp(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def project(theta: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(theta))
    return theta if norm <= radius else theta * (radius / norm)


def loss_values(kind: str, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = x @ theta
    if kind == "logistic":
        return _log1pexp(-y * z)
    return 0.5 * (z - y) ** 2


def loss_gradients(kind: str, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-example gradients, one row per example."""
    z = x @ theta
    if kind == "logistic":
        coef = -y * _sigmoid(-y * z)
    else:
        coef = z - y
    return coef[:, None] * x


@dataclass(frozen=True)
class ERMDataset:
    """A client dataset: record ``j`` is ``(features[j], labels[j])``."""

    kind: str
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def gradients(self, indices, theta: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        return loss_gradients(self.kind, theta, self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class ERMTask:
    """A convex learning problem over the ball of radius ``radius``.

    Features are uniform on the unit sphere. Logistic labels are ``+1`` with
    probability ``sigmoid(<theta_planted, x>)``; squared-loss targets are
    ``<theta_planted, x>`` plus N(0, ``label_noise``^2) noise, clipped to
    ``[-target_bound, target_bound]`` so the loss stays Lipschitz.
    """

    loss: str
    dimension: int
    radius: float
    lipschitz: float
    smoothness: Optional[float]
    planted: np.ndarray
    eval_features: np.ndarray
    eval_labels: np.ndarray
    label_noise: float = 0.0
    target_bound: float = 0.0
    optimum: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius!r}")
        if not self.lipschitz > 0:
            raise ValueError(f"lipschitz must be > 0, got {self.lipschitz!r}")

    @classmethod
    def logistic(cls, dimension: int = 10, radius: float = 1.0, eval_size: int = DEFAULT_EVAL_SIZE,
                 planted_norm: Optional[float] = None, seed: int = 0) -> "ERMTask":
        """Logistic regression with unit-norm features: 1-Lipschitz and 1/4-smooth."""
        rng = np.random.default_rng([seed, 0])
        planted = _planted(rng, dimension, radius if planted_norm is None else planted_norm)
        task = cls("logistic", dimension, radius, 1.0, 0.25, planted,
                   np.empty((0, dimension)), np.empty(0))
        x, y = task.draw(eval_size, np.random.default_rng([seed, 1]))
        return dataclasses.replace(task, eval_features=x, eval_labels=y)

    @classmethod
    def squared(cls, dimension: int = 10, radius: float = 1.0, eval_size: int = DEFAULT_EVAL_SIZE,
                planted_norm: Optional[float] = None, label_noise: float = 0.1,
                target_bound: float = 2.0, seed: int = 0) -> "ERMTask":
        """Least squares with unit-norm features; Lipschitz ``radius + target_bound``, 1-smooth."""
        rng = np.random.default_rng([seed, 0])
        planted = _planted(rng, dimension, radius / 2 if planted_norm is None else planted_norm)
        task = cls("squared", dimension, radius, radius + target_bound, 1.0, planted,
                   np.empty((0, dimension)), np.empty(0), label_noise, target_bound)
        x, y = task.draw(eval_size, np.random.default_rng([seed, 1]))
        return dataclasses.replace(task, eval_features=x, eval_labels=y)

    def draw(self, size: int, rng: np.random.Generator) -> tuple:
        x = rng.standard_normal((size, self.dimension))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        z = x @ self.planted
        if self.loss == "logistic":
            y = np.where(rng.random(size) < _sigmoid(z), 1.0, -1.0)
        else:
            y = np.clip(z + self.label_noise * rng.standard_normal(size),
                        -self.target_bound, self.target_bound)
        return x, y

    def sample_dataset(self, n: int, rng: np.random.Generator) -> ERMDataset:
        x, y = self.draw(n, rng)
        return ERMDataset(self.loss, x, y)

    def risk(self, theta, eval_samples: Optional[tuple] = None) -> float:
        x, y = (self.eval_features, self.eval_labels) if eval_samples is None else eval_samples
        return float(np.mean(loss_values(self.loss, np.asarray(theta, dtype=float), x, y)))

    def full_gradient(self, theta: np.ndarray) -> np.ndarray:
        x, y = self.eval_features, self.eval_labels
        return loss_gradients(self.loss, theta, x, y).mean(axis=0)

    def with_optimum(self, tolerance: float = 1e-8) -> "ERMTask":
        return dataclasses.replace(self, optimum=compute_optimum(self, tolerance))


def _planted(rng: np.random.Generator, dimension: int, norm: float) -> np.ndarray:
    v = rng.standard_normal(dimension)
    return v * (norm / np.linalg.norm(v))


def compute_optimum(task: ERMTask, tolerance: float = 1e-8, max_iter: int = 100_000) -> np.ndarray:
    """Minimizer of the evaluation-sample risk over the ball, by projected gradient descent.

    Uses step ``1 / beta`` and stops once the gradient mapping
    ``beta * (theta - project(theta - grad / beta))`` has norm at most ``tolerance``.
    """
    if not tolerance > 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance!r}")
    beta = task.smoothness
    if beta is None:
        raise ValueError("compute_optimum needs a smooth task")
    theta = np.zeros(task.dimension)
    for _ in range(max_iter):
        nxt = project(theta - task.full_gradient(theta) / beta, task.radius)
        if beta * float(np.linalg.norm(theta - nxt)) <= tolerance:
            return nxt
        theta = nxt
    raise ValueError(f"projected gradient descent did not reach tolerance {tolerance!r} "
                     f"within {max_iter} iterations")


def _check_index(i: int) -> None:
    if int(i) != i or i < 1:
        raise ValueError(f"iteration index must be a positive integer, got {i!r}")


def lr_fixed(i: int, task: ERMTask, sigma: float, n: int, p0: float, m: int) -> float:
    """``R (1 - 2 e^{-n p0 / m}) / sqrt((p sigma^2 + L^2) i)`` for the fixed-window protocol."""
    _check_index(i)
    factor = 1 - 2 * math.exp(-n * p0 / m)
    if factor <= 0:
        raise ValueError(
            f"learning rate would be nonpositive: n*p0/m = {n * p0 / m!r} must exceed ln 2")
    return task.radius * factor / math.sqrt((task.dimension * sigma ** 2 + task.lipschitz ** 2) * i)


def lr_avg(i: int, task: ERMTask, sigma: float, n: int, m: int) -> float:
    """``R sqrt(n) / sqrt((m p sigma^2 + n L^2) i)`` for the averaged protocol."""
    _check_index(i)
    return task.radius * math.sqrt(n) / math.sqrt(
        (m * task.dimension * sigma ** 2 + n * task.lipschitz ** 2) * i)


def lr_smooth(task: ERMTask, sigma: float, n: int, m: int) -> float:
    """Constant step ``R sqrt(n) / (beta R sqrt(n) + m sqrt(L^2 + p sigma^2))`` for smooth losses."""
    if task.smoothness is None:
        raise ValueError("lr_smooth needs the task's smoothness constant")
    r, root_n = task.radius, math.sqrt(n)
    return r * root_n / (task.smoothness * r * root_n
                         + m * math.sqrt(task.lipschitz ** 2 + task.dimension * sigma ** 2))


def empty_slot_probability(n: int, p0: float, m: int) -> float:
    """Exact probability that a fixed-window slot gets no check-in, ``(1 - p0/m)^n``."""
    return (1 - p0 / m) ** n


def empty_slot_poisson_bound(n: int, p0: float, m: int) -> float:
    """Poisson-approximation bound ``2 e^{-n p0 / m}`` on the empty-slot probability."""
    return 2 * math.exp(-n * p0 / m)


def iterate_estimate(trace, estimator: str = "last_iterate", theta0=None) -> np.ndarray:
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if trace.iterates is None or len(trace.iterates) == 0:
        if theta0 is None:
            raise ValueError("trace has no model iterates")
        return np.asarray(theta0, dtype=float)
    if estimator == "last_iterate":
        return trace.iterates[-1]
    return trace.iterates.mean(axis=0)


def excess_risk(trace, task: ERMTask, estimator: str = "last_iterate",
                eval_samples: Optional[tuple] = None) -> float:
    """Risk of the chosen model estimate minus the risk at ``task.optimum``.

    ``eval_samples`` is an optional ``(features, labels)`` pair; by default the
    task's frozen evaluation sample is used.
    """
    if task.optimum is None:
        raise ValueError("task.optimum is not set; call task.with_optimum() first")
    theta = iterate_estimate(trace, estimator)
    return task.risk(theta, eval_samples) - task.risk(task.optimum, eval_samples)
