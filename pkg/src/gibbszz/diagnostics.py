"""Trajectory statistics, autocorrelation times and effective sample sizes."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "DiscretizedChain",
    "EfficiencySummary",
    "discretize",
    "trajectory_integral",
    "trajectory_moment",
    "trajectory_batch_means",
    "autocorrelation",
    "iact",
    "batch_means_se",
    "efficiency_summary",
    "chain_summary",
]

MIN_STEPS = 100


@dataclass
class DiscretizedChain:
    """States read off a trajectory at times ``0, dt, 2 dt, ...``."""

    dt: float
    samples: np.ndarray
    alpha: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self):
        return np.arange(self.n_steps) * self.dt

    def tail(self, start_time):
        """Drop the samples before ``start_time`` (burn-in)."""
        k = int(math.ceil(start_time / self.dt - 1e-9))
        alpha = None if self.alpha is None else self.alpha[k:]
        return DiscretizedChain(self.dt, self.samples[k:], alpha, dict(self.stats))


def discretize(sk, dt=None, n_steps=10_000) -> DiscretizedChain:
    """Sample a skeleton on a regular grid; ``dt`` defaults to ``final_time / n_steps``."""
    T = sk.final_time
    if T <= 0:
        raise ValueError("cannot discretize a zero-length trajectory")
    dt = T / n_steps if dt is None else float(dt)
    n = int(math.floor(T / dt + 1e-9)) + 1
    ts = np.minimum(np.arange(n) * dt, T)
    xi, k = sk.positions_at(ts)
    return DiscretizedChain(dt, xi, sk.alpha[k], dict(getattr(sk, "stats", {})))


def trajectory_integral(sk, coord, power=1, t0=0.0, t1=None, block="xi") -> float:
    """Exact ``int_{t0}^{t1} f(s)^power ds`` along the interpolated trajectory.

    ``block="xi"`` integrates the piecewise linear position, ``"alpha"`` the
    piecewise constant hyperparameters.
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    t1 = sk.final_time if t1 is None else t1
    if not 0.0 <= t0 <= t1 <= sk.final_time:
        raise ValueError("integration window outside the trajectory")
    T = sk.t
    ends = np.append(T[1:], sk.final_time)
    u = np.clip(T, t0, t1)
    v = np.clip(ends, t0, t1)
    w = v - u
    if block == "alpha":
        vals = sk.alpha[:, coord]
        return float(np.sum(w * vals**power))
    x0, th = sk.xi[:, coord], sk.theta[:, coord]
    fu = x0 + th * (u - T)
    fv = x0 + th * (v - T)
    if power == 1:
        return float(np.sum(0.5 * w * (fu + fv)))
    return float(np.sum(w * (fu * fu + fu * fv + fv * fv) / 3.0))


def trajectory_moment(sk, coord, power=1, block="xi") -> float:
    """Time average ``(1/T) int_0^T f(s)^power ds`` of one coordinate."""
    if sk.final_time <= 0:
        raise ValueError("zero-length trajectory")
    return trajectory_integral(sk, coord, power, block=block) / sk.final_time


def trajectory_batch_means(sk, coord, power=1, n_batches=20, block="xi", burn_in=0.0):
    """Time average and its batch-means standard error over equal windows."""
    edges = np.linspace(burn_in, sk.final_time, n_batches + 1)
    means = np.array([trajectory_integral(sk, coord, power, a, b, block) / (b - a)
                      for a, b in zip(edges[:-1], edges[1:])])
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def autocorrelation(x):
    """Biased empirical autocorrelation of a 1-D series, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0.0:
        raise ValueError("autocorrelation of a constant chain is undefined")
    return acov / acov[0]


def iact(chain, coord=None) -> float:
    """Integrated autocorrelation time, in steps, with Geyer's initial positive sequence.

    ``chain`` is a :class:`DiscretizedChain` (with ``coord``) or a 1-D array.
    The estimate is ``-1 + 2 sum_m (rho_2m + rho_2m+1)`` over the leading run of
    positive pair sums, floored at ``1 / log10(n)`` so that strongly antithetic
    chains keep a finite effective sample size.
    """
    x = chain.samples[:, coord] if isinstance(chain, DiscretizedChain) else np.asarray(chain)
    n = x.size
    if n < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps, got {n}")
    if np.ptp(x) == 0.0:
        raise ValueError("IACT of a constant chain is undefined")
    rho = autocorrelation(x)
    if n % 2:
        rho = rho[:-1]
    pairs = rho[0::2] + rho[1::2]
    nonpos = np.flatnonzero(pairs <= 0.0)
    m = nonpos[0] if nonpos.size else pairs.size
    tau = -1.0 + 2.0 * float(np.sum(pairs[:m]))
    return max(tau, 1.0 / math.log10(n))


def batch_means_se(x, n_batches=25) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    b = x.size // n_batches
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class EfficiencySummary:
    iact: list
    ess: list
    ess_per_epoch: list
    slowest_coordinate: int
    dt: float
    epochs: float

    @property
    def iact_time(self):
        """IACT converted to process-time units."""
        return [v * self.dt for v in self.iact]

    @property
    def min_ess_per_epoch(self) -> float:
        return self.ess_per_epoch[self.slowest_coordinate]

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def chain_summary(samples, epochs, dt=1.0) -> EfficiencySummary:
    """Per-coordinate IACT/ESS of a sample matrix ``(n_steps, d)``."""
    samples = np.asarray(samples, dtype=float)
    taus = [iact(samples[:, i]) for i in range(samples.shape[1])]
    ess = [samples.shape[0] / tau for tau in taus]
    per_epoch = [e / epochs if epochs > 0 else math.inf for e in ess]
    return EfficiencySummary(taus, ess, per_epoch, int(np.argmax(taus)), float(dt), float(epochs))


def efficiency_summary(sk, epochs, dt=None) -> EfficiencySummary:
    """Discretize a skeleton (or take a discretized chain) and summarise ``xi``.

    The slowest coordinate is the one with the largest IACT (0-based index).
    """
    chain = sk if isinstance(sk, DiscretizedChain) else discretize(sk, dt)
    return chain_summary(chain.samples, epochs, chain.dt)
