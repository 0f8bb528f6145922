import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, signal

from gibbszz.diagnostics import (
    autocorrelation,
    batch_means_se,
    chain_summary,
    discretize,
    efficiency_summary,
    iact,
    trajectory_batch_means,
    trajectory_integral,
    trajectory_moment,
)
from gibbszz.pdmp import Skeleton


def ar1(rho, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n)
    return signal.lfilter([1.0], [1.0, -rho], e)


def random_skeleton(seed, p=2, n_events=40):
    rng = np.random.default_rng(seed)
    sk = Skeleton.start(rng.normal(size=p), rng.choice([-1, 1], p), [rng.random()])
    t = 0.0
    for k in range(n_events):
        tn = t + rng.exponential()
        xi = sk.xi[-1] + sk.theta[-1] * (tn - t)
        theta = sk.theta[-1].copy()
        if k % 4:
            theta[rng.integers(p)] *= -1
            sk.append(tn, xi, theta)
        else:
            sk.append(tn, xi, theta, [rng.random()])
        t = tn
    return sk.close(t + 0.37)


# -- trajectory integrals --------------------------------------------------------

def test_ramp_moments():
    sk = Skeleton.start([0.0], [1]).close(1.0)
    assert trajectory_moment(sk, 0, 1) == pytest.approx(0.5, rel=1e-15)
    assert trajectory_moment(sk, 0, 2) == pytest.approx(1.0 / 3.0, rel=1e-15)


def test_tent_moments():
    sk = Skeleton.start([0.0], [1])
    sk.append(1.0, [1.0], [-1])
    sk.close(2.0)
    # tent on [0,2] peaking at 1: mean 1/2, mean square 1/3
    assert trajectory_moment(sk, 0, 1) == pytest.approx(0.5)
    assert trajectory_moment(sk, 0, 2) == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("power", [1, 2])
def test_integral_matches_quadrature(seed, power):
    sk = random_skeleton(seed)
    breaks = list(sk.t[1:])
    for coord in range(sk.p):
        f = lambda s: sk.position_at(s)[0][coord] ** power
        ref = integrate.quad(f, 0.0, sk.final_time, points=breaks, limit=500, epsabs=1e-12)[0]
        assert trajectory_integral(sk, coord, power) == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_integral_matches_fine_riemann_sum():
    sk = random_skeleton(7)
    dt = 1e-4
    ts = np.arange(0.0, sk.final_time, dt) + dt / 2
    xi, _ = sk.positions_at(ts)
    ref = np.sum(xi[:, 1] ** 2) * dt
    tail = sk.final_time - ts[-1] - dt / 2
    ref += sk.position_at(sk.final_time)[0][1] ** 2 * tail
    assert trajectory_integral(sk, 1, 2) == pytest.approx(ref, rel=1e-6)


def test_alpha_block_integral():
    sk = random_skeleton(3)
    ends = np.append(sk.t[1:], sk.final_time)
    assert trajectory_integral(sk, 0, 1, block="alpha") == pytest.approx(np.sum((ends - sk.t) * sk.alpha[:, 0]))


def test_windowed_integrals_add_up():
    sk = random_skeleton(5)
    T = sk.final_time
    parts = [trajectory_integral(sk, 0, 2, a, b) for a, b in [(0, T / 3), (T / 3, 0.8 * T), (0.8 * T, T)]]
    assert sum(parts) == pytest.approx(trajectory_integral(sk, 0, 2), rel=1e-12)
    m, se = trajectory_batch_means(sk, 0, 2, n_batches=5)
    assert m == pytest.approx(trajectory_moment(sk, 0, 2), rel=1e-12)
    assert se > 0


def test_integral_validation():
    sk = random_skeleton(0)
    with pytest.raises(ValueError):
        trajectory_integral(sk, 0, 3)
    with pytest.raises(ValueError):
        trajectory_integral(sk, 0, 1, 0.0, sk.final_time + 1)


# -- discretization --------------------------------------------------------------

def test_discretize_matches_position_queries():
    sk = random_skeleton(2)
    chain = discretize(sk, n_steps=500)
    assert chain.n_steps == 501
    for k in [0, 17, 250, 500]:
        xi, _, alpha = sk.position_at(chain.times[k])
        np.testing.assert_allclose(chain.samples[k], xi, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(chain.alpha[k], alpha)


def test_discretize_explicit_step_and_tail():
    sk = Skeleton.start([0.0], [1]).close(1.0)
    chain = discretize(sk, dt=0.3)
    np.testing.assert_allclose(chain.samples[:, 0], [0.0, 0.3, 0.6, 0.9])
    tail = chain.tail(0.3)
    np.testing.assert_allclose(tail.samples[:, 0], [0.3, 0.6, 0.9])
    with pytest.raises(ValueError):
        discretize(Skeleton.start([0.0], [1]).close(0.0))


# -- autocorrelation times -------------------------------------------------------

def test_autocorrelation_against_direct_sum():
    x = ar1(0.5, 300, 0)
    xc = x - x.mean()
    direct = np.array([np.dot(xc[: 300 - k], xc[k:]) for k in range(300)]) / np.dot(xc, xc)
    np.testing.assert_allclose(autocorrelation(x), direct, atol=1e-12)


def test_iid_iact_is_one():
    x = np.random.default_rng(1).normal(size=100_000)
    assert iact(x) == pytest.approx(1.0, abs=0.05)


def test_ar1_iact():
    rho = 0.9
    exact = (1 + rho) / (1 - rho)
    assert iact(ar1(rho, 500_000, 2)) == pytest.approx(exact, rel=0.1)


def test_antithetic_chain_is_floored():
    n = 10_000
    x = (-1.0) ** np.arange(n) + 0.01 * np.random.default_rng(3).normal(size=n)
    tau = iact(x)
    assert tau < 1.0
    assert tau >= 1.0 / math.log10(n)


def test_iact_rejects_degenerate_input():
    with pytest.raises(ValueError):
        iact(np.ones(1000))
    with pytest.raises(ValueError):
        iact(np.arange(99.0))


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-3, 1e3), sign=st.sampled_from([-1.0, 1.0]), shift=st.floats(-1e3, 1e3),
       seed=st.integers(0, 1000))
def test_iact_affine_invariance(scale, sign, shift, seed):
    x = ar1(0.7, 2000, seed)
    assert iact(sign * scale * x + shift) == pytest.approx(iact(x), rel=1e-6)


def test_batch_means_se_of_iid_series():
    x = np.random.default_rng(4).normal(size=250_000)
    assert batch_means_se(x, 50) == pytest.approx(1 / math.sqrt(x.size), rel=0.3)


# -- summaries -------------------------------------------------------------------

def test_chain_summary_definitions():
    rng = np.random.default_rng(5)
    n = 20_000
    samples = np.column_stack([rng.normal(size=n), ar1(0.95, n, 6), ar1(0.5, n, 7)])
    s = chain_summary(samples, epochs=40.0, dt=0.5)
    assert s.slowest_coordinate == 1
    for i in range(3):
        assert s.iact[i] == iact(samples[:, i])
        assert s.ess[i] == pytest.approx(n / s.iact[i])
        assert s.ess_per_epoch[i] == pytest.approx(s.ess[i] / 40.0)
    assert s.iact_time == pytest.approx([0.5 * v for v in s.iact])
    assert s.min_ess_per_epoch == s.ess_per_epoch[1]


def test_summary_json_fields(tmp_path):
    sk = random_skeleton(8, n_events=400)
    s = efficiency_summary(sk, epochs=3.0)
    path = tmp_path / "s.json"
    s.to_json(path)
    back = json.loads(path.read_text())
    assert set(back) == {"iact", "ess", "ess_per_epoch", "slowest_coordinate", "dt", "epochs"}
    assert len(back["iact"]) == sk.p
    assert back["epochs"] == 3.0
    assert isinstance(back["slowest_coordinate"], int)


def test_epoch_scaling():
    n = 5000
    samples = np.column_stack([np.random.default_rng(9).normal(size=n), ar1(0.9, n, 10)])
    one = chain_summary(samples, epochs=1.0)
    two = chain_summary(samples, epochs=2.0)
    assert one.ess_per_epoch == one.ess
    assert two.ess_per_epoch == [e / 2 for e in one.ess_per_epoch]
    # i.i.d. column 0 against AR(1) column 1; indices are 0-based
    assert one.slowest_coordinate == 1


def test_moment_is_limit_of_discretized_mean():
    sk = random_skeleton(11)
    chain = discretize(sk, dt=1e-4)
    for coord in range(sk.p):
        assert chain.samples[:, coord].mean() == pytest.approx(trajectory_moment(sk, coord), rel=1e-4, abs=1e-6)
