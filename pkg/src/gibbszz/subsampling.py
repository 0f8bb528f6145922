"""Unbiased mini-batch estimates of switching-rate arguments.

The potential is split as ``U(xi, alpha) = U0(xi, alpha) + sum_j Uj(xi)``. For a
batch ``J`` of ``B`` indices drawn uniformly without replacement,

    G_i = d_i U0(xi, alpha) + (n / B) * sum_{j in J} d_i Uj(xi)

is an unbiased estimate of ``d_i U``. Every point gradient evaluated is charged
to an :class:`EpochCounter`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["EpochCounter", "SubsampleEstimator", "epoch_report", "sample_batch"]


@dataclass
class EpochCounter:
    n_data: int
    grad_point_evals: int = 0

    def charge(self, evals: int):
        self.grad_point_evals += int(evals)

    @property
    def epochs(self) -> float:
        return epoch_report(self)


def epoch_report(counter: EpochCounter) -> float:
    """Number of full passes over the data charged so far."""
    if counter.n_data <= 0:
        raise ValueError("epochs are undefined without data")
    return counter.grad_point_evals / counter.n_data


def sample_batch(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Draw ``size`` distinct indices from ``range(n)`` with Floyd's algorithm.

    Uses exactly ``size`` uniform draws (index ``floor(u * (j + 1))``) and
    returns indices in insertion order.
    A full batch consumes no randomness.
    """
    if size >= n:
        return np.arange(n)
    chosen = np.zeros(n, dtype=bool)
    out = np.empty(size, dtype=np.int64)
    for k, j in enumerate(range(n - size, n)):
        t = int(rng.random() * (j + 1))
        if chosen[t]:
            t = j
        chosen[t] = True
        out[k] = t
    return out


@dataclass
class SubsampleEstimator:
    """Mini-batch estimator of partial derivatives of the potential.

    ``per_point_grad(j, xi, i)`` returns ``d_i Uj(xi)`` and
    ``prior_grad(xi, alpha, i)`` returns ``d_i U0(xi, alpha)``.
    """

    batch_size: int
    n_data: int
    per_point_grad: Callable[[int, np.ndarray, int], float]
    prior_grad: Callable[[np.ndarray, np.ndarray, int], float]
    counter: EpochCounter = field(default=None)

    def __post_init__(self):
        if self.n_data > 0 and not 1 <= self.batch_size <= self.n_data:
            raise ValueError(f"batch size must lie in [1, {self.n_data}], got {self.batch_size}")
        if self.counter is None:
            self.counter = EpochCounter(self.n_data)

    def estimate(self, xi, alpha, i, rng, batch=None):
        """``G_i`` for a fresh batch (or the given one)."""
        g = self.prior_grad(xi, alpha, i)
        if self.n_data == 0:
            return g
        if batch is None:
            batch = sample_batch(rng, self.n_data, self.batch_size)
        acc = 0.0
        for j in batch:
            acc += self.per_point_grad(int(j), xi, i)
        self.counter.charge(len(batch))
        return g + (self.n_data / len(batch)) * acc

    def rate_arg(self, xi, theta, alpha, i, rng):
        """``theta_i * G_i``; its positive part is the estimated switching rate."""
        return theta[i] * self.estimate(xi, alpha, i, rng)
