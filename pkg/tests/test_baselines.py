import numpy as np
import pytest
from scipy import integrate, special

from gibbszz.baselines import HmcConfig, hmc_within_gibbs, leapfrog, tune_hmc
from gibbszz.diagnostics import batch_means_se
from gibbszz.models import GaussianGammaModel, GaussianModel, GibbsKernel, LogisticRegressionModel

KEEP = GibbsKernel(lambda xi, alpha, rng: alpha)


def quartic_grad(q):
    return q**3 + q


def quartic_energy(q, p):
    return float(np.sum(q**4 / 4 + q**2 / 2) + 0.5 * p @ p)


def test_leapfrog_is_reversible():
    rng = np.random.default_rng(0)
    q0, p0 = rng.normal(size=3), rng.normal(size=3)
    q1, p1, _ = leapfrog(q0, p0, quartic_grad, 0.05, 40)
    q2, p2, _ = leapfrog(q1, -p1, quartic_grad, 0.05, 40)
    np.testing.assert_allclose(q2, q0, atol=1e-10)
    np.testing.assert_allclose(-p2, p0, atol=1e-10)


def test_leapfrog_preserves_volume():
    rng = np.random.default_rng(1)
    z0 = rng.normal(size=4)
    h = 1e-6

    def flow(z):
        q, p, _ = leapfrog(z[:2], z[2:], quartic_grad, 0.1, 15)
        return np.concatenate([q, p])

    J = np.column_stack([(flow(z0 + h * e) - flow(z0 - h * e)) / (2 * h) for e in np.eye(4)])
    assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-6)


def test_leapfrog_energy_error_is_second_order():
    q0, p0 = np.array([1.0, -0.5]), np.array([0.3, 0.8])
    h0 = quartic_energy(q0, p0)
    errs = []
    for eps in (0.02, 0.01):
        q, p, _ = leapfrog(q0, p0, quartic_grad, eps, int(round(1.0 / eps)))
        errs.append(abs(quartic_energy(q, p) - h0))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_leapfrog_returns_final_gradient():
    q, _, g = leapfrog(np.ones(2), np.zeros(2), quartic_grad, 0.1, 3)
    np.testing.assert_array_equal(g, quartic_grad(q))


def test_tiny_steps_are_always_accepted():
    res = hmc_within_gibbs(GaussianModel([1.0, 2.0]), KEEP, (np.ones(2), []),
                           HmcConfig(1e-4, 5, 1000, seed=1))
    assert res.acceptance_rate >= 0.999
    assert res.n_nonfinite == 0


def test_gaussian_second_moments():
    model = GaussianModel([1.0, 4.0])
    res = hmc_within_gibbs(model, KEEP, (np.zeros(2), []), HmcConfig(0.3, 7, 40_000, seed=2))
    x2 = res.samples[1000:] ** 2
    for i, target in enumerate([1.0, 0.25]):
        assert abs(x2[:, i].mean() - target) < 3 * batch_means_se(x2[:, i])


def test_conjugate_toy_moments():
    model = GaussianGammaModel(p=2, shape=4.0, rate=4.0)
    res = hmc_within_gibbs(model, None, (np.zeros(2), [1.0]), HmcConfig(0.4, 6, 30_000, seed=3))
    exact = model.moments()
    x2 = res.samples[1000:, 0] ** 2
    a = res.alpha[1000:, 0]
    assert abs(x2.mean() - exact["xi_sq_mean"]) < 3 * batch_means_se(x2)
    assert abs(a.mean() - exact["alpha_mean"]) < 3 * batch_means_se(a)


def test_logistic_posterior_mean_matches_quadrature():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(25, 1))
    y = (rng.random(25) < special.expit(0.8 * X[:, 0])).astype(float)
    model = LogisticRegressionModel(X, y, prior_precision=0.5)

    def dens(b):
        return np.exp(-model.potential(np.array([b]), None))

    z = integrate.quad(dens, -15, 15, epsabs=0, limit=200)[0]
    mean = integrate.quad(lambda b: b * dens(b), -15, 15, epsabs=0, limit=200)[0] / z
    res = hmc_within_gibbs(model, None, (np.zeros(1), []), HmcConfig(0.3, 5, 30_000, seed=5))
    x = res.samples[1000:, 0]
    assert abs(x.mean() - mean) < 3 * batch_means_se(x)


class Walled(GaussianModel):
    """Standard normal restricted to |q| < 1 via an infinite potential."""

    def data_potential_and_grad(self, xi):
        if np.any(np.abs(xi) > 1.0):
            return np.inf, np.zeros(self.dim)
        return 0.0, np.zeros(self.dim)


def test_nonfinite_energy_is_rejected():
    res = hmc_within_gibbs(Walled(1.0), KEEP, (np.zeros(1), []), HmcConfig(0.5, 4, 500, seed=6))
    assert res.n_nonfinite > 0
    assert np.all(np.abs(res.samples) <= 1.0)
    assert res.accepted.sum() + res.n_nonfinite <= 500


def test_epoch_charging():
    rng = np.random.default_rng(7)
    model = LogisticRegressionModel(rng.normal(size=(10, 2)), np.ones(10))
    res = hmc_within_gibbs(model, None, (np.zeros(2), []), HmcConfig(0.1, 3, 7, seed=0))
    # initial pass, then (L gradient passes + 1 energy pass) per iteration
    assert res.grad_point_evals == 10 + 7 * 4 * 10
    assert res.epochs == pytest.approx(29.0)
    charged = GibbsKernel(lambda xi, alpha, rng: alpha, data_cost=5)
    res = hmc_within_gibbs(model, charged, (np.zeros(2), []), HmcConfig(0.1, 3, 7, seed=0))
    assert res.grad_point_evals == 10 + 7 * (40 + 5)


def test_runs_are_reproducible():
    model = GaussianGammaModel(p=2)
    cfg = HmcConfig(0.3, 5, 200, seed=8)
    a = hmc_within_gibbs(model, None, (np.zeros(2), [1.0]), cfg)
    b = hmc_within_gibbs(model, None, (np.zeros(2), [1.0]), cfg)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.alpha, b.alpha)


def test_config_validation():
    with pytest.raises(ValueError):
        HmcConfig(0.0, 5)
    with pytest.raises(ValueError):
        HmcConfig(0.1, 0)


# -- tuning ----------------------------------------------------------------------

def logistic_model():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 2))
    return LogisticRegressionModel(X, (rng.random(30) < 0.5).astype(float))


def test_tune_single_point_grid():
    out = tune_hmc(logistic_model(), None, [(0.2, 5)], (np.zeros(2), []), pilot_iterations=400,
                   n_iterations=123)
    assert (out.config.step_size, out.config.n_leapfrog) == (0.2, 5)
    assert out.config.n_iterations == 123
    assert len(out.table) == 1


def test_tune_flags_when_no_pilot_is_near_target():
    out = tune_hmc(logistic_model(), None, [(3.0, 5), (5.0, 5)], (np.zeros(2), []), pilot_iterations=300)
    assert out.flagged
    best = min(out.table, key=lambda r: abs(r["acceptance"] - 0.651))
    assert out.config.step_size == best["step_size"]


def test_tune_prefers_efficient_in_window_config():
    grid = [(0.005, 5), (0.05, 5), (0.2, 5), (0.3, 10), (0.5, 10)]
    out = tune_hmc(logistic_model(), None, grid, (np.zeros(2), []), pilot_iterations=1000, window=0.35)
    inside = [r for r in out.table if abs(r["acceptance"] - 0.651) <= 0.35]
    assert inside and not out.flagged
    best = max(inside, key=lambda r: r["ess_per_epoch"])
    assert (out.config.step_size, out.config.n_leapfrog) == (best["step_size"], best["n_leapfrog"])
    # the tiny step barely moves and must lose to a larger one
    tiny = out.table[0]
    assert best["ess_per_epoch"] > tiny["ess_per_epoch"]


def test_tune_rejects_empty_grid():
    with pytest.raises(ValueError):
        tune_hmc(logistic_model(), None, [], (np.zeros(2), []))
