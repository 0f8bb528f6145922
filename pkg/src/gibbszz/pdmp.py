"""Event-time machinery for piecewise deterministic processes.

Contains the closed-form first arrival time of a Poisson process with an
affine intensity and the :class:`Skeleton` container that records the event
points of a zig-zag type trajectory.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from os import PathLike

import numpy as np

__all__ = [
    "AffineRateBound",
    "Skeleton",
    "SkeletonError",
    "first_arrival_affine",
    "first_arrivals_affine",
    "INITIAL",
    "BOUNCE",
    "HYPER",
]

# event kinds
INITIAL, BOUNCE, HYPER = 0, 1, 2


class SkeletonError(ValueError):
    """Raised when an event would break the skeleton invariants."""


@dataclass(frozen=True)
class AffineRateBound:
    """Envelope ``s -> intercept + max(slope, 0) * s`` for a switching rate."""

    intercept: float
    slope: float

    def __post_init__(self):
        if not self.intercept >= 0.0:
            raise ValueError(f"intercept must be >= 0, got {self.intercept}")

    def __call__(self, s):
        return self.intercept + max(self.slope, 0.0) * s

    def first_arrival(self, exp_draw: float) -> float:
        return first_arrival_affine(self.intercept, self.slope, exp_draw)


def first_arrival_affine(a: float, b: float, exp_draw: float) -> float:
    """Solve ``int_0^tau (a + b+ s) ds = exp_draw`` for ``tau``.

    ``exp_draw`` is an Exponential(1) variate, so the result is a draw of the
    first arrival time of a Poisson process with intensity ``a + max(b, 0) s``.
    Returns ``inf`` when the intensity is identically zero.
    """
    if b <= 0.0:
        if a <= 0.0:
            return math.inf
        return exp_draw / a
    # rationalised form of (-a + sqrt(a^2 + 2 b E)) / b, no cancellation for large a
    return 2.0 * exp_draw / (a + math.sqrt(a * a + 2.0 * b * exp_draw))


def first_arrivals_affine(a, b, exp_draws):
    """Vectorised :func:`first_arrival_affine`."""
    a = np.asarray(a, dtype=float)
    b = np.maximum(np.asarray(b, dtype=float), 0.0)
    e = np.asarray(exp_draws, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(b > 0.0, 2.0 * e / (a + np.sqrt(a * a + 2.0 * b * e)), e / a)
    return np.where((a <= 0.0) & (b <= 0.0), np.inf, tau)


class Skeleton:
    """Event record of a piecewise linear trajectory.

    Row ``k`` holds the state ``(xi, theta, alpha)`` right after the event at
    time ``t[k]``; between ``t[k]`` and ``t[k + 1]`` the position moves as
    ``xi[k] + theta[k] * (s - t[k])`` while ``theta`` and ``alpha`` stay fixed.
    The trajectory ends at ``final_time``, which is at or after the last event.

    Each event either flips one velocity component (a bounce) or redraws the
    hyperparameters (a Gibbs event), never both.
    """

    def __init__(self, t, xi, theta, alpha, final_time=None, kinds=None, check=True):
        self._t = np.ascontiguousarray(t, dtype=float)
        self._xi = np.ascontiguousarray(xi, dtype=float)
        self._theta = np.ascontiguousarray(theta, dtype=np.int8)
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim == 1:
            alpha = alpha.reshape(len(self._t), -1) if alpha.size else np.zeros((len(self._t), 0))
        self._alpha = np.ascontiguousarray(alpha)
        self._n = len(self._t)
        if kinds is None:
            kinds = _infer_kinds(self._theta)
        self._kinds = np.ascontiguousarray(kinds, dtype=np.int8)
        self.final_time = float(self._t[self._n - 1] if final_time is None else final_time)
        self.stats = {}
        if check:
            self.validate()

    @classmethod
    def start(cls, xi, theta, alpha=()):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        theta = np.atleast_1d(np.asarray(theta))
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        return cls([0.0], xi[None, :], theta[None, :], alpha[None, :], final_time=0.0)

    # -- shape and raw access -------------------------------------------------
    @property
    def n_events(self) -> int:
        return self._n

    @property
    def p(self) -> int:
        return self._xi.shape[1]

    @property
    def r(self) -> int:
        return self._alpha.shape[1]

    @property
    def t(self):
        return self._t[: self._n]

    @property
    def xi(self):
        return self._xi[: self._n]

    @property
    def theta(self):
        return self._theta[: self._n]

    @property
    def alpha(self):
        return self._alpha[: self._n]

    @property
    def kinds(self):
        return self._kinds[: self._n]

    def __len__(self):
        return self._n

    def __repr__(self):
        return (f"Skeleton(n_events={self._n}, p={self.p}, r={self.r}, "
                f"final_time={self.final_time:g})")

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (self.final_time == other.final_time
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.xi, other.xi)
                and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.kinds, other.kinds))

    # -- construction ---------------------------------------------------------
    def append(self, t, xi, theta, alpha=None):
        """Append the post-event state at time ``t`` and return ``self``."""
        xi = np.asarray(xi, dtype=float)
        theta = np.asarray(theta, dtype=np.int8)
        alpha = self.alpha[-1] if alpha is None else np.atleast_1d(np.asarray(alpha, dtype=float))
        k = self._n - 1
        t = float(t)
        if not (t > self._t[k] and t >= self.final_time):
            raise SkeletonError(f"event time {t} does not exceed the end of the trajectory")
        if xi.shape != (self.p,) or theta.shape != (self.p,) or alpha.shape != (self.r,):
            raise SkeletonError("event dimensions do not match the skeleton")
        expected = self._xi[k] + self._theta[k] * (t - self._t[k])
        tol = 1e-12 * np.maximum(np.maximum(np.abs(expected), 1.0), t)
        if np.any(np.abs(xi - expected) > tol):
            raise SkeletonError("position is inconsistent with linear interpolation")
        flips = int(np.count_nonzero(theta != self._theta[k]))
        alpha_changed = not np.array_equal(alpha, self._alpha[k])
        if flips > 1 or (flips == 1 and alpha_changed):
            raise SkeletonError("an event may flip one velocity component or change alpha, not both")
        if np.any(np.abs(theta) != 1):
            raise SkeletonError("velocity entries must be +1 or -1")
        self._grow()
        n = self._n
        self._t[n] = t
        self._xi[n] = xi
        self._theta[n] = theta
        self._alpha[n] = alpha
        self._kinds[n] = BOUNCE if flips == 1 else HYPER
        self._n = n + 1
        self.final_time = max(self.final_time, t)
        return self

    def close(self, final_time):
        """Extend the trajectory, without a new event, up to ``final_time``."""
        final_time = float(final_time)
        if final_time < self._t[self._n - 1]:
            raise SkeletonError("final time precedes the last event")
        self.final_time = final_time
        return self

    def _grow(self):
        if self._n < len(self._t):
            return
        cap = max(2 * len(self._t), 16)

        def grow(a):
            out = np.empty((cap,) + a.shape[1:], dtype=a.dtype)
            out[: self._n] = a[: self._n]
            return out

        self._t, self._xi, self._theta = grow(self._t), grow(self._xi), grow(self._theta)
        self._alpha, self._kinds = grow(self._alpha), grow(self._kinds)

    def validate(self):
        t, xi, theta, alpha = self.t, self.xi, self.theta, self.alpha
        if self._n == 0 or t[0] != 0.0:
            raise SkeletonError("the first event must be at t = 0")
        if np.any(np.diff(t) <= 0.0):
            raise SkeletonError("event times must be strictly increasing")
        if self.final_time < t[-1]:
            raise SkeletonError("final time precedes the last event")
        if np.any(np.abs(theta) != 1):
            raise SkeletonError("velocity entries must be +1 or -1")
        if self._n > 1:
            dt = np.diff(t)[:, None]
            expected = xi[:-1] + theta[:-1] * dt
            tol = 1e-12 * np.maximum(np.maximum(np.abs(expected), 1.0), t[1:, None])
            if np.any(np.abs(xi[1:] - expected) > tol):
                raise SkeletonError("positions are inconsistent with linear interpolation")
            flips = np.count_nonzero(theta[1:] != theta[:-1], axis=1)
            alpha_changed = np.any(alpha[1:] != alpha[:-1], axis=1)
            if np.any(flips > 1) or np.any((flips == 1) & alpha_changed):
                raise SkeletonError("an event may flip one velocity component or change alpha, not both")
        return self

    # -- queries --------------------------------------------------------------
    def segment_index(self, t):
        """Index ``k`` with ``t[k] <= t < t[k+1]`` (half-open segments)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.final_time):
            raise ValueError(f"query time outside [0, {self.final_time}]")
        return np.searchsorted(self.t, t, side="right") - 1

    def position_at(self, t):
        """Return ``(xi, theta, alpha)`` at time ``t``.

        At an event time the post-event state is returned.
        """
        k = int(self.segment_index(t))
        xi = self._xi[k] + self._theta[k] * (float(t) - self._t[k])
        return xi, self._theta[k].copy(), self._alpha[k].copy()

    def positions_at(self, ts):
        """Vectorised positions, ``(len(ts), p)``, plus the segment indices."""
        ts = np.asarray(ts, dtype=float)
        k = self.segment_index(ts)
        xi = self._xi[k] + self._theta[k] * (ts - self._t[k])[:, None]
        return xi, k

    def event_counts(self):
        kinds = self.kinds
        return {"bounce": int(np.sum(kinds == BOUNCE)), "hyper": int(np.sum(kinds == HYPER))}

    # -- serialization --------------------------------------------------------
    def header(self):
        return (["t"] + [f"xi_{i + 1}" for i in range(self.p)]
                + [f"theta_{i + 1}" for i in range(self.p)]
                + [f"alpha_{i + 1}" for i in range(self.r)])

    def to_csv(self, path: str | PathLike):
        """Write one row per event followed by a terminal row at ``final_time``."""
        xi_end, theta_end, alpha_end = self.position_at(self.final_time)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for k in range(self._n):
                w.writerow([repr(float(self._t[k]))]
                           + [repr(float(v)) for v in self._xi[k]]
                           + [int(v) for v in self._theta[k]]
                           + [repr(float(v)) for v in self._alpha[k]])
            w.writerow([repr(self.final_time)]
                       + [repr(float(v)) for v in xi_end]
                       + [int(v) for v in theta_end]
                       + [repr(float(v)) for v in alpha_end])

    @classmethod
    def from_csv(cls, path: str | PathLike):
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        p = sum(h.startswith("xi_") for h in header)
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        body, last = rows[:-1], rows[-1]
        return cls(body[:, 0], body[:, 1:1 + p], body[:, 1 + p:1 + 2 * p],
                   body[:, 1 + 2 * p:], final_time=last[0])


def _infer_kinds(theta):
    kinds = np.full(len(theta), HYPER, dtype=np.int8)
    if len(theta):
        kinds[0] = INITIAL
        flips = np.count_nonzero(theta[1:] != theta[:-1], axis=1)
        kinds[1:][flips == 1] = BOUNCE
    return kinds
