"""Compiled inner loop of the Gibbs zig-zag sampler for logistic/Gaussian models.

The loop consumes random numbers in exactly the same order as the reference
Python loop in :mod:`gibbszz.samplers`, so both produce the same trajectory
for the same seed. It hands control back to Python at every hyperparameter
event, when the record buffers are full, or on an envelope violation.
"""
import math

import numpy as np
from numba import njit

DONE, HYPER_EVENT, BUFFER_FULL, VIOLATION = 0, 1, 2, 3

# counters layout
GRAD_EVALS, CANDIDATES, BOUNCES, HYPERS = 0, 1, 2, 3


@njit(cache=True)
def first_arrival(a, b, e):
    if b <= 0.0:
        if a <= 0.0:
            return np.inf
        return e / a
    return 2.0 * e / (a + math.sqrt(a * a + 2.0 * b * e))


@njit(cache=True)
def sigmoid(psi):
    if psi >= 0.0:
        return 1.0 / (1.0 + math.exp(-psi))
    e = math.exp(psi)
    return e / (1.0 + e)


@njit(cache=True)
def sample_batch(rng, n, size, chosen, out):
    """Floyd's algorithm; ``chosen`` is a zeroed scratch mask, left zeroed."""
    k = 0
    for j in range(n - size, n):
        t = int(rng.random() * (j + 1))
        if chosen[t]:
            t = j
        chosen[t] = True
        out[k] = t
        k += 1
    for m in range(size):
        chosen[out[m]] = False


@njit(cache=True)
def gzz_loop(t, horizon, eta, xi, theta, alpha, prec, bound, gamma,
             design, y, batch, thin, clock, sub, chosen, idx,
             rec_t, rec_xi, rec_theta, rec_alpha, rec_kind, n_rec,
             grid_dt, grid_xi, grid_alpha, grid_k, counters, rtol):
    """Advance the process until the horizon or the next hyperparameter event.

    Mutates ``xi`` and ``theta`` in place. Returns
    ``(status, t, n_rec, grid_k, info)`` where ``info`` is the offending
    rate ratio on an envelope violation.
    """
    p = xi.shape[0]
    n = y.shape[0]
    cap = rec_t.shape[0]
    n_grid = grid_xi.shape[0]
    a = np.empty(p)
    b = np.empty(p)
    full = batch >= n
    if full:
        for j in range(n):
            idx[j] = j
    nb = n if full else batch
    factor = 1.0 if full else n / batch

    while True:
        if cap > 0 and n_rec >= cap:
            return BUFFER_FULL, t, n_rec, grid_k, 0.0

        tau_min = np.inf
        imin = -1
        for i in range(p):
            e = thin.standard_exponential()
            g = theta[i] * prec[i] * xi[i]
            a[i] = (g if g > 0.0 else 0.0) + bound[i] + gamma[i]
            b[i] = prec[i] if prec[i] > 0.0 else 0.0
            tau = first_arrival(a[i], b[i], e)
            if tau < tau_min:
                tau_min = tau
                imin = i
        tau_h = np.inf
        if eta > 0.0:
            tau_h = clock.standard_exponential() / eta
        hyper = tau_h < tau_min
        tau = tau_h if hyper else tau_min
        t_next = t + tau

        if t_next >= horizon:
            while grid_k < n_grid:
                s = min(grid_k * grid_dt, horizon)
                for k in range(p):
                    grid_xi[grid_k, k] = xi[k] + theta[k] * (s - t)
                grid_alpha[grid_k, :] = alpha
                grid_k += 1
            for k in range(p):
                xi[k] = xi[k] + theta[k] * (horizon - t)
            return DONE, horizon, n_rec, grid_k, 0.0

        while grid_k < n_grid and grid_k * grid_dt < t_next:
            s = grid_k * grid_dt
            for k in range(p):
                grid_xi[grid_k, k] = xi[k] + theta[k] * (s - t)
            grid_alpha[grid_k, :] = alpha
            grid_k += 1
        for k in range(p):
            xi[k] = xi[k] + theta[k] * tau
        t = t_next

        if hyper:
            counters[HYPERS] += 1
            return HYPER_EVENT, t, n_rec, grid_k, 0.0

        # thinning step for the candidate coordinate
        i = imin
        counters[CANDIDATES] += 1
        G = prec[i] * xi[i]
        if n > 0:
            if not full:
                sample_batch(sub, n, batch, chosen, idx)
            acc = 0.0
            for jj in range(nb):
                j = idx[jj]
                psi = 0.0
                for k in range(p):
                    psi += design[j, k] * xi[k]
                acc += design[j, i] * (sigmoid(psi) - y[j])
            counters[GRAD_EVALS] += nb
            G = G + factor * acc
        arg = theta[i] * G
        rate = (arg if arg > 0.0 else 0.0) + gamma[i]
        M = a[i] + b[i] * tau
        if rate > M + rtol * abs(M):
            return VIOLATION, t, n_rec, grid_k, rate / M
        u = thin.random()
        if u * M < rate:
            theta[i] = -theta[i]
            counters[BOUNCES] += 1
            if cap > 0:
                rec_t[n_rec] = t
                rec_xi[n_rec, :] = xi
                rec_theta[n_rec, :] = theta
                rec_alpha[n_rec, :] = alpha
                rec_kind[n_rec] = 1
                n_rec += 1
