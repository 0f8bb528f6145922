"""Zig-zag and Gibbs zig-zag samplers.

The Gibbs zig-zag (GZZ) process moves ``xi`` with zig-zag dynamics for the
conditional ``pi(xi | alpha)`` and, at the arrival times of an independent
Poisson clock of rate ``eta``, redraws ``alpha`` from a kernel that preserves
``pi(alpha | xi)``. Bounce times are simulated by Poisson thinning against the
per-coordinate affine envelopes supplied by the model; every envelope is
recomputed from the current state after each candidate.

Two interchangeable engines are provided. The reference engine is plain
Python and works with any model exposing ``dim``, ``n_data``,
``envelopes(xi, theta, alpha)`` and ``estimator(batch_size)``. The compiled
engine handles :class:`~gibbszz.models.LogisticGaussianModel` instances and
draws the same random numbers in the same order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .diagnostics import DiscretizedChain
from .models import GibbsKernel, LogisticGaussianModel
from .pdmp import HYPER, Skeleton, first_arrivals_affine
from .subsampling import sample_batch

__all__ = [
    "ZigZagConfig",
    "GzzConfig",
    "GibbsKernel",
    "EnvelopeViolation",
    "KernelError",
    "make_streams",
    "run_zigzag",
    "run_gzz",
    "sample_grid",
    "hyper_update_counterfactual_check",
]

log = logging.getLogger(__name__)

STREAMS = ("thin", "clock", "sub", "kernel")
ENVELOPE_RTOL = 1e-9


class EnvelopeViolation(RuntimeError):
    """A thinning candidate had a rate above its envelope: a bound bug in the model."""


class KernelError(RuntimeError):
    """The hyperparameter kernel raised; carries the event index."""

    def __init__(self, event_index, original):
        super().__init__(f"hyperparameter kernel failed at event {event_index}: {original!r}")
        self.event_index = event_index


@dataclass(frozen=True)
class ZigZagConfig:
    """Zig-zag settings.

    ``refresh_gamma`` is a scalar or per-coordinate excess switching rate and
    ``batch_size=None`` means full-batch gradients.
    """

    horizon: float
    seed: int = 0
    refresh_gamma: float | tuple = 0.0
    batch_size: int | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if np.any(np.asarray(self.refresh_gamma, dtype=float) < 0):
            raise ValueError("refresh rates must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be at least 1")

    def gamma(self, p):
        return np.ascontiguousarray(np.broadcast_to(np.asarray(self.refresh_gamma, dtype=float), (p,)))


@dataclass(frozen=True)
class GzzConfig:
    zz: ZigZagConfig
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


def make_streams(seed: int) -> dict:
    """Independent counter-based streams, one per consumer of randomness."""
    return {name: np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))
            for k, name in enumerate(STREAMS)}


def _use_compiled(model, backend):
    if backend == "python":
        return False
    ok = isinstance(model, LogisticGaussianModel)
    if backend == "numba" and not ok:
        raise TypeError("the compiled engine needs a LogisticGaussianModel")
    return ok


def _start_state(model, start):
    xi, theta = start[0], start[1]
    alpha = start[2] if len(start) > 2 else np.zeros(0)
    xi = np.array(xi, dtype=float).ravel()
    theta = np.array(theta, dtype=np.int8).ravel()
    alpha = np.atleast_1d(np.array(alpha, dtype=float))
    if xi.shape != (model.dim,) or theta.shape != (model.dim,):
        raise ValueError(f"start state must have dimension {model.dim}")
    if np.any(np.abs(theta) != 1):
        raise ValueError("velocity entries must be +1 or -1")
    return xi, theta, alpha


def run_zigzag(model, alpha_fixed, start, cfg: ZigZagConfig, backend="auto") -> Skeleton:
    """Zig-zag process for ``pi(xi | alpha_fixed)`` up to ``cfg.horizon``.

    ``start`` is ``(xi, theta)``. Returns the event skeleton; run statistics
    (epochs, candidates, bounces) are in ``skeleton.stats``.
    """
    xi, theta, _ = _start_state(model, start)
    alpha = np.atleast_1d(np.asarray(alpha_fixed, dtype=float))
    return _run(model, None, xi, theta, alpha, cfg, 0.0, backend, dt=None)


def run_gzz(model, kernel, start, cfg: GzzConfig, backend="auto") -> Skeleton:
    """Gibbs zig-zag process up to ``cfg.zz.horizon``.

    ``start`` is ``(xi, theta, alpha)``; ``kernel`` maps ``(xi, alpha, rng)``
    to a new ``alpha`` and defaults to ``model.kernel``.
    """
    xi, theta, alpha = _start_state(model, start)
    kernel = model.kernel if kernel is None else kernel
    return _run(model, kernel, xi, theta, alpha, cfg.zz, cfg.eta, backend, dt=None)


def sample_grid(model, kernel, start, cfg, dt=None, n_steps=10_000, backend="auto") -> DiscretizedChain:
    """Run (G)ZZ and keep only the states on the grid ``0, dt, 2 dt, ...``.

    Memory stays bounded for long horizons. ``cfg`` is a :class:`GzzConfig`,
    or a :class:`ZigZagConfig` for a fixed ``alpha``. ``dt`` defaults to
    ``horizon / n_steps``. The end state is in ``chain.stats["final_state"]``.
    """
    eta = cfg.eta if isinstance(cfg, GzzConfig) else 0.0
    zz = cfg.zz if isinstance(cfg, GzzConfig) else cfg
    xi, theta, alpha = _start_state(model, start)
    if eta > 0:
        kernel = model.kernel if kernel is None else kernel
    dt = zz.horizon / n_steps if dt is None else float(dt)
    return _run(model, kernel, xi, theta, alpha, zz, eta, backend, dt=dt)


def _run(model, kernel, xi, theta, alpha, zz, eta, backend, dt):
    streams = make_streams(zz.seed)
    gamma = zz.gamma(model.dim)
    if _use_compiled(model, backend):
        return _run_compiled(model, kernel, xi, theta, alpha, zz, eta, gamma, streams, dt)
    sk = _run_python(model, kernel, xi, theta, alpha, zz, eta, gamma, streams)
    if dt is None:
        return sk
    from .diagnostics import discretize

    chain = discretize(sk, dt)
    chain.stats = sk.stats
    return chain


def _stats(model, zz, eta, grad_evals, candidates, bounces, hypers):
    n = model.n_data
    return {
        "grad_point_evals": int(grad_evals),
        "n_data": n,
        "epochs": float(grad_evals / n) if n else 0.0,
        "candidates": int(candidates),
        "bounces": int(bounces),
        "hyper_events": int(hypers),
        "eta": float(eta),
        "horizon": float(zz.horizon),
        "batch_size": zz.batch_size,
        "seed": zz.seed,
    }


def _run_python(model, kernel, xi, theta, alpha, zz, eta, gamma, streams):
    thin, clock, sub, krng = (streams[k] for k in STREAMS)
    est = model.estimator(zz.batch_size)
    sk = Skeleton.start(xi, theta, alpha)
    t, horizon = 0.0, zz.horizon
    candidates = bounces = hypers = 0
    while True:
        a, b = model.envelopes(xi, theta, alpha)
        a = a + gamma
        b = np.maximum(b, 0.0)
        taus = first_arrivals_affine(a, b, thin.standard_exponential(model.dim))
        i = int(np.argmin(taus))
        tau_b = taus[i]
        tau_h = clock.standard_exponential() / eta if eta > 0.0 else math.inf
        hyper = tau_h < tau_b
        tau = tau_h if hyper else tau_b
        if t + tau >= horizon:
            xi = xi + theta * (horizon - t)
            break
        xi = xi + theta * tau
        t = t + tau
        if hyper:
            hypers += 1
            try:
                alpha = kernel(xi, alpha, krng)
            except Exception as err:
                raise KernelError(sk.n_events, err) from err
            est.counter.charge(kernel.data_cost)
            sk.append(t, xi, theta, alpha)
            continue
        candidates += 1
        arg = float(est.rate_arg(xi, theta, alpha, i, sub))
        rate = max(arg, 0.0) + gamma[i]
        M = a[i] + b[i] * tau
        if rate > M + ENVELOPE_RTOL * abs(M):
            raise EnvelopeViolation(f"rate {rate} exceeds envelope {M} for coordinate {i} at t={t}")
        if thin.random() * M < rate:
            theta = theta.copy()
            theta[i] = -theta[i]
            bounces += 1
            sk.append(t, xi, theta, alpha)
    sk.close(horizon)
    sk.stats = _stats(model, zz, eta, est.counter.grad_point_evals, candidates, bounces, hypers)
    sk.stats["final_state"] = (xi, theta, alpha)
    return sk


def _run_compiled(model, kernel, xi, theta, alpha, zz, eta, gamma, streams, dt):
    thin, clock, sub, krng = (streams[k] for k in STREAMS)
    p, n = model.dim, model.n_data
    batch = n if zz.batch_size is None else int(zz.batch_size)
    if n and not 1 <= batch <= n:
        raise ValueError(f"batch size must lie in [1, {n}], got {batch}")
    r = alpha.size
    record = dt is None
    cap = 1024 if record else 0
    rec_t, rec_xi = np.empty(cap), np.empty((cap, p))
    rec_theta, rec_alpha = np.empty((cap, p), dtype=np.int8), np.empty((cap, r))
    rec_kind = np.empty(cap, dtype=np.int8)
    n_rec = 0
    if record:
        rec_t[0], rec_xi[0], rec_theta[0], rec_alpha[0], rec_kind[0] = 0.0, xi, theta, alpha, 0
        n_rec = 1
    n_grid = 0 if record else int(math.floor(zz.horizon / dt + 1e-9)) + 1
    grid_xi, grid_alpha = np.empty((n_grid, p)), np.empty((n_grid, r))
    grid_k = 0
    grid_dt = 1.0 if record else dt

    chosen = np.zeros(max(n, 1), dtype=np.bool_)
    idx = np.empty(max(n, 1), dtype=np.int64)
    counters = np.zeros(4, dtype=np.int64)
    prec = np.ascontiguousarray(model.prior_precision(alpha), dtype=float)
    data_cost = 0
    t = 0.0
    while True:
        status, t, n_rec, grid_k, info = _engine.gzz_loop(
            t, zz.horizon, float(eta), xi, theta, alpha, prec, model.data_bound, gamma,
            model.design, model.y, batch, thin, clock, sub, chosen, idx,
            rec_t, rec_xi, rec_theta, rec_alpha, rec_kind, n_rec,
            grid_dt, grid_xi, grid_alpha, grid_k, counters, ENVELOPE_RTOL)
        if status == _engine.DONE:
            break
        if status == _engine.VIOLATION:
            raise EnvelopeViolation(f"rate exceeds envelope by a factor {info} at t={t}")
        if status == _engine.HYPER_EVENT:
            try:
                alpha = kernel(xi, alpha, krng)
            except Exception as err:
                raise KernelError(n_rec if record else int(counters[3]), err) from err
            data_cost += kernel.data_cost
            prec = np.ascontiguousarray(model.prior_precision(alpha), dtype=float)
            if not record:
                continue
        if n_rec >= len(rec_t):
            cap = 2 * len(rec_t)
            rec_t, rec_xi, rec_theta, rec_alpha, rec_kind = (
                _grow(a, cap) for a in (rec_t, rec_xi, rec_theta, rec_alpha, rec_kind))
        if status == _engine.HYPER_EVENT:
            rec_t[n_rec], rec_xi[n_rec], rec_theta[n_rec], rec_alpha[n_rec] = t, xi, theta, alpha
            rec_kind[n_rec] = HYPER
            n_rec += 1

    stats = _stats(model, zz, eta, counters[0] + data_cost, counters[1], counters[2], counters[3])
    stats["final_state"] = (xi, theta, alpha)
    if record:
        sk = Skeleton(rec_t[:n_rec], rec_xi[:n_rec], rec_theta[:n_rec], rec_alpha[:n_rec],
                      final_time=zz.horizon, kinds=rec_kind[:n_rec], check=False)
        sk.stats = stats
        return sk
    return DiscretizedChain(dt, grid_xi, grid_alpha, stats=stats)


def _grow(a, cap):
    out = np.empty((cap,) + a.shape[1:], dtype=a.dtype)
    out[: len(a)] = a
    return out


def hyper_update_counterfactual_check(sk: Skeleton, eta=None) -> dict:
    """Compare the number of hyperparameter events with a Poisson(eta T) count.

    ``eta`` defaults to the value stored in ``sk.stats``; without it the
    consistency verdict is omitted.
    """
    counts = sk.event_counts()
    T = sk.final_time
    rate = counts["hyper"] / T if T > 0 else 0.0
    out = {"bounces": counts["bounce"], "hyper_events": counts["hyper"], "rate": rate}
    eta = sk.stats.get("eta") if eta is None else eta
    if eta:
        se = math.sqrt(eta / T)
        out.update(se=se, z=(rate - eta) / se, consistent=abs(rate - eta) <= 3.0 * se)
    return out
