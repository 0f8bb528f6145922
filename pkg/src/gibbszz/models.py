"""Target models for the (Gibbs) zig-zag sampler.

Every model here has the same structure: a logistic likelihood on an
augmented design matrix ``Xt`` (possibly with no rows) and a zero-mean
Gaussian prior on ``xi`` whose diagonal precision depends on the
hyperparameters ``alpha``,

    U(xi, alpha) = 1/2 sum_i prec_i(alpha) xi_i^2
                   + sum_j [log(1 + exp(psi_j)) - y_j psi_j],   psi = Xt @ xi

(plus terms in ``alpha`` alone, which never enter the zig-zag rates). Because
``|d/dpsi log-lik| <= 1`` the per-point gradient is bounded by ``|Xt_ji|`` and
the switching rate along a ray is dominated by an affine function of time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from os import PathLike

import numpy as np
from scipy.special import expit, log_expit

from .pdmp import AffineRateBound
from .subsampling import SubsampleEstimator

__all__ = [
    "LogisticData",
    "GibbsKernel",
    "LogisticGaussianModel",
    "GaussianModel",
    "GaussianGammaModel",
    "LogisticRegressionModel",
    "RandomEffectsPriors",
    "RandomEffectsModel",
    "SpikeSlabPriors",
    "SpikeSlabModel",
    "logistic_grad_point",
    "sparse_covariates",
    "generate_random_effects",
    "generate_spike_slab",
    "generate_synthetic",
    "random_effects_gibbs",
    "spike_slab_gibbs",
]


def _sigmoid(psi: float) -> float:
    if psi >= 0.0:
        return 1.0 / (1.0 + math.exp(-psi))
    e = math.exp(psi)
    return e / (1.0 + e)


def _dot(row, xi) -> float:
    # sequential sum; matches the compiled engine bit for bit
    s = 0.0
    for k in range(len(xi)):
        s += row[k] * xi[k]
    return s


def logistic_grad_point(X, Y, xi, j, i) -> float:
    """``d/dxi_i`` of ``-log f(Y_j | xi)`` for the logistic likelihood."""
    x = X[j]
    return float(x[i]) * (_sigmoid(_dot(x, xi)) - float(Y[j]))


@dataclass
class LogisticData:
    """Binary responses ``y`` with covariates ``X`` and optional group ids."""

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray | None = None
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]} entries")
        if not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise ValueError("responses must be 0 or 1")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64).ravel()
            if self.groups.shape != self.y.shape:
                raise ValueError("groups must have one entry per response")
            if self.groups.min(initial=0) < 0:
                raise ValueError("group ids must be nonnegative")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path: str | PathLike):
        """Header ``y,x1..xp[,g]``; group ids are written 1-based."""
        header = ["y"] + [f"x{i + 1}" for i in range(self.p)]
        if self.groups is not None:
            header.append("g")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.n):
                row = [int(self.y[k])] + [repr(float(v)) for v in self.X[k]]
                if self.groups is not None:
                    row.append(int(self.groups[k]) + 1)
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | PathLike):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        cols = {name: k for k, name in enumerate(header)}
        if "y" not in cols:
            raise ValueError("dataset is missing the 'y' column")
        xcols = sorted((h for h in header if h.startswith("x") and h[1:].isdigit()),
                       key=lambda h: int(h[1:]))
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        groups = data[:, cols["g"]].astype(np.int64) - 1 if "g" in cols else None
        X = data[:, [cols[h] for h in xcols]]
        return cls(X, data[:, cols["y"]], groups)


@dataclass(frozen=True)
class GibbsKernel:
    """Markov kernel for ``alpha`` that preserves ``pi(d alpha | xi)``.

    ``data_cost`` is the number of point evaluations charged per update.
    """

    update: object
    data_cost: int = 0

    def __call__(self, xi, alpha, rng):
        return np.atleast_1d(np.asarray(self.update(xi, alpha, rng), dtype=float))


class LogisticGaussianModel:
    """Logistic likelihood with a hyperparameter-dependent Gaussian prior.

    Subclasses provide :meth:`prior_precision` and, when there are
    hyperparameters, :meth:`gibbs`.
    """

    def __init__(self, design, y):
        design = np.asarray(design, dtype=float)
        self.design = np.ascontiguousarray(np.atleast_2d(design))
        self.y = np.ascontiguousarray(np.asarray(y, dtype=float).ravel())
        if self.design.shape[0] != self.y.shape[0]:
            raise ValueError("design and responses disagree in length")
        n = self.design.shape[0]
        # rate bound of the likelihood part, valid for every mini-batch
        self.data_bound = (n * np.abs(self.design).max(axis=0) if n
                           else np.zeros(self.design.shape[1]))

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    @property
    def n_data(self) -> int:
        return self.design.shape[0]

    def prior_precision(self, alpha) -> np.ndarray:
        raise NotImplementedError

    def gibbs(self, xi, alpha, rng):
        return np.asarray(alpha, dtype=float)

    @property
    def kernel(self) -> GibbsKernel:
        return GibbsKernel(self.gibbs)

    # -- potential and gradients ----------------------------------------------
    def data_potential_and_grad(self, xi):
        """Likelihood part of ``U`` and its gradient, one pass over the data."""
        if self.n_data == 0:
            return 0.0, np.zeros(self.dim)
        psi = self.design @ xi
        u = float(np.sum(-log_expit(psi) + (1.0 - self.y) * psi))
        return u, self.design.T @ (expit(psi) - self.y)

    def prior_potential_and_grad(self, xi, alpha):
        prec = self.prior_precision(alpha)
        return 0.5 * float(np.sum(prec * xi * xi)), prec * xi

    def potential(self, xi, alpha) -> float:
        return self.data_potential_and_grad(xi)[0] + self.prior_potential_and_grad(xi, alpha)[0]

    def grad(self, xi, alpha) -> np.ndarray:
        return self.data_potential_and_grad(xi)[1] + self.prior_potential_and_grad(xi, alpha)[1]

    def point_potential(self, j, xi) -> float:
        """``Uj(xi) = -log f(y_j | xi)``."""
        psi = float(self.design[j] @ xi)
        return -self.y[j] * psi + math.log1p(math.exp(-abs(psi))) + max(psi, 0.0)

    def grad_point(self, j, xi, i) -> float:
        return logistic_grad_point(self.design, self.y, xi, j, i)

    def prior_grad(self, xi, alpha, i) -> float:
        return float(self.prior_precision(alpha)[i]) * float(xi[i])

    # -- rate bounds ----------------------------------------------------------
    def envelopes(self, xi, theta, alpha):
        """Intercepts and slopes of the affine bounds for all coordinates."""
        prec = self.prior_precision(alpha)
        g = theta * prec * xi
        return np.maximum(g, 0.0) + self.data_bound, prec

    def envelope(self, xi, theta, alpha, i, batch_size=None) -> AffineRateBound:
        """Affine bound on ``(theta_i G_i(xi + s theta))^+`` for every batch.

        The bound does not depend on the batch size.
        """
        a, b = self.envelopes(np.asarray(xi, dtype=float), np.asarray(theta), alpha)
        return AffineRateBound(float(a[i]), float(b[i]))

    def estimator(self, batch_size=None) -> SubsampleEstimator:
        n = self.n_data
        if n == 0:
            batch = 1
        else:
            batch = n if batch_size is None else int(batch_size)
        return SubsampleEstimator(batch, n, self.grad_point, self.prior_grad)


class GaussianModel(LogisticGaussianModel):
    """Independent centred Gaussians with fixed precisions, no data.

    A zero precision gives a potential that is constant in that coordinate.
    """

    def __init__(self, precision):
        precision = np.atleast_1d(np.asarray(precision, dtype=float))
        super().__init__(np.zeros((0, precision.size)), np.zeros(0))
        self.precision = precision

    def prior_precision(self, alpha):
        return self.precision


class GaussianGammaModel(LogisticGaussianModel):
    """Conjugate toy: ``xi | a ~ N(0, I / a)``, ``a ~ Gamma(shape, rate)``.

    The marginal of each ``xi_i`` is Student-t with ``2 * shape`` degrees of
    freedom, so second moments exist for ``shape > 1`` and fourth moments for
    ``shape > 2``.
    """

    def __init__(self, p=1, shape=4.0, rate=4.0):
        super().__init__(np.zeros((0, p)), np.zeros(0))
        self.shape, self.rate = float(shape), float(rate)

    def prior_precision(self, alpha):
        return np.full(self.dim, float(alpha[0]))

    def gibbs(self, xi, alpha, rng):
        shape = self.shape + 0.5 * self.dim
        rate = self.rate + 0.5 * float(np.sum(np.square(xi)))
        return np.array([rng.gamma(shape, 1.0 / rate)])

    def sample_joint(self, rng):
        a = rng.gamma(self.shape, 1.0 / self.rate)
        return rng.normal(0.0, 1.0 / math.sqrt(a), size=self.dim), np.array([a])

    def moments(self):
        """Exact moments of the joint target."""
        a, b = self.shape, self.rate
        return {
            "xi_mean": 0.0,
            "xi_sq_mean": b / (a - 1.0),
            "xi_fourth_mean": 3.0 * b * b / ((a - 1.0) * (a - 2.0)) if a > 2 else math.inf,
            "alpha_mean": a / b,
            "alpha_sq_mean": a * (a + 1.0) / b**2,
        }


class LogisticRegressionModel(LogisticGaussianModel):
    """Plain logistic regression with a fixed diagonal Gaussian prior."""

    def __init__(self, X, y, prior_precision=1.0):
        super().__init__(X, y)
        self.precision = np.broadcast_to(np.asarray(prior_precision, dtype=float), (self.dim,)).copy()

    def prior_precision(self, alpha):
        return self.precision


@dataclass(frozen=True)
class RandomEffectsPriors:
    a_phi: float = 1.0
    b_phi: float = 1.0
    a_sigma: float = 1.0
    b_sigma: float = 1.0


def random_effects_gibbs(xi, alpha, hyperpriors: RandomEffectsPriors, rng, p, K, strict=True):
    """Exact draw of ``(phi, sigma2)`` given ``xi = (upsilon, m, beta)``.

    ``phi ~ Gamma(a_phi + (K+1)/2, rate = b_phi + m^2/2 + sum(beta^2)/2)`` and
    ``sigma2 ~ InvGamma(a_sigma + c, b_sigma + sum(upsilon^2)/2)`` with
    ``c = 3/2`` when ``strict`` and ``c = p/2`` otherwise.
    """
    hp = hyperpriors
    upsilon, m, beta = xi[:p], xi[p], xi[p + 1:p + 1 + K]
    phi_rate = hp.b_phi + 0.5 * m * m + 0.5 * float(np.sum(beta * beta))
    phi = rng.gamma(hp.a_phi + 0.5 * (K + 1), 1.0 / phi_rate)
    shape = hp.a_sigma + (1.5 if strict else 0.5 * p)
    scale = hp.b_sigma + 0.5 * float(np.sum(upsilon * upsilon))
    sigma2 = scale / rng.gamma(shape)
    return np.array([phi, sigma2])


class RandomEffectsModel(LogisticGaussianModel):
    """Logistic random-intercept model.

    ``psi_ij = m + beta_j + X_ij . upsilon`` with ``m, beta_j ~ N(0, 1/phi)``,
    ``upsilon_l ~ N(0, sigma2)``, ``phi ~ Gamma(a_phi, b_phi)`` and
    ``sigma2 ~ InvGamma(a_sigma, b_sigma)``.

    Parameter layout: ``xi = (upsilon_1..upsilon_p, m, beta_1..beta_K)``,
    ``alpha = (phi, sigma2)``. The augmented design has columns
    ``[X, 1, group indicators]`` in the same order.
    """

    def __init__(self, X, groups, y, hyperpriors=None, strict_conditionals=True, n_groups=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        groups = np.asarray(groups, dtype=np.int64).ravel()
        K = int(groups.max()) + 1 if n_groups is None else int(n_groups)
        onehot = np.zeros((len(groups), K))
        onehot[np.arange(len(groups)), groups] = 1.0
        super().__init__(np.hstack([X, np.ones((len(groups), 1)), onehot]), y)
        self.p, self.K = X.shape[1], K
        self.hyperpriors = hyperpriors or RandomEffectsPriors()
        self.strict = bool(strict_conditionals)

    @classmethod
    def from_data(cls, data: LogisticData, **kw):
        return cls(data.X, data.groups, data.y, **kw)

    def prior_precision(self, alpha):
        phi, sigma2 = float(alpha[0]), float(alpha[1])
        prec = np.full(self.dim, phi)
        prec[: self.p] = 1.0 / sigma2
        return prec

    def gibbs(self, xi, alpha, rng):
        return random_effects_gibbs(xi, alpha, self.hyperpriors, rng, self.p, self.K, self.strict)

    def initial_alpha(self):
        return np.array([1.0, 1.0])


@dataclass(frozen=True)
class SpikeSlabPriors:
    a_tau: float = 1.0
    b_tau: float = 1.0
    a_nu: float = 1.0
    b_nu: float = 1.0
    a_pi: float = 1.0
    b_pi: float = 1.0
    sigma0_sq: float = 10.0


def spike_slab_gibbs(xi, alpha, hyperpriors: SpikeSlabPriors, rng):
    """One sweep ``gamma -> tau2 -> nu -> pi`` of exact conditional draws.

    ``xi = (upsilon_0, ..., upsilon_p)`` and
    ``alpha = (gamma_1..gamma_p, tau2_1..tau2_p, pi, nu)``.
    """
    hp = hyperpriors
    v = np.asarray(xi[1:], dtype=float)
    p = v.size
    tau2 = np.array(alpha[p:2 * p], dtype=float)
    pi, nu = float(alpha[2 * p]), float(alpha[2 * p + 1])
    v2 = v * v

    # P(gamma_i = 1) = A / (A + B), A = pi/sqrt(nu) exp(-v^2/(2 nu tau2)), B = (1-pi) exp(-v^2/(2 tau2))
    log_odds = (math.log(pi) - 0.5 * math.log(nu) - v2 / (2.0 * nu * tau2)
                - math.log1p(-pi) + v2 / (2.0 * tau2))
    gamma = (rng.random(p) < expit(log_odds)).astype(float)

    scale = hp.b_tau + np.where(gamma == 1.0, v2 / (2.0 * nu), 0.5 * v2)
    tau2 = scale / rng.gamma(hp.a_tau + 0.5, size=p)

    n_on = float(gamma.sum())
    nu = (hp.b_nu + 0.5 * float(np.sum(gamma * v2 / tau2))) / rng.gamma(hp.a_nu + 0.5 * n_on)
    pi = rng.beta(hp.a_pi + n_on, hp.b_pi + p - n_on)
    return np.concatenate([gamma, tau2, [pi, nu]])


class SpikeSlabModel(LogisticGaussianModel):
    """Logistic regression with a spike-and-slab prior.

    ``upsilon_i ~ gamma_i N(0, nu tau2_i) + (1 - gamma_i) N(0, tau2_i)``,
    ``gamma_i ~ Bernoulli(pi)``, ``tau2_i ~ InvGamma(a_tau, b_tau)``,
    ``nu ~ InvGamma(a_nu, b_nu)``, ``pi ~ Beta(a_pi, b_pi)`` and an intercept
    ``upsilon_0 ~ N(0, sigma0_sq)``.
    """

    def __init__(self, X, y, hyperpriors=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        super().__init__(np.hstack([np.ones((X.shape[0], 1)), X]), y)
        self.p = X.shape[1]
        self.hyperpriors = hyperpriors or SpikeSlabPriors()

    @classmethod
    def from_data(cls, data: LogisticData, **kw):
        return cls(data.X, data.y, **kw)

    def unpack(self, alpha):
        p = self.p
        return {"gamma": alpha[:p], "tau2": alpha[p:2 * p], "pi": alpha[2 * p], "nu": alpha[2 * p + 1]}

    def prior_precision(self, alpha):
        p = self.p
        gamma, tau2, nu = alpha[:p], alpha[p:2 * p], alpha[2 * p + 1]
        prec = np.empty(p + 1)
        prec[0] = 1.0 / self.hyperpriors.sigma0_sq
        prec[1:] = 1.0 / np.where(gamma == 1.0, nu * tau2, tau2)
        return prec

    def gibbs(self, xi, alpha, rng):
        return spike_slab_gibbs(xi, alpha, self.hyperpriors, rng)

    def initial_alpha(self):
        p = self.p
        return np.concatenate([np.ones(p), np.ones(p), [0.5, 1.0]])


# -- synthetic data -----------------------------------------------------------

def sparse_covariates(rng, shape, epsilon):
    """Entries are 0 with probability ``epsilon`` and standard normal otherwise."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    zero = rng.random(shape) < epsilon
    return np.where(zero, 0.0, rng.standard_normal(shape))


def _sparse_truth(rng, p, nonzero_fraction):
    truth = np.zeros(p)
    k = math.ceil(nonzero_fraction * p)
    truth[:k] = rng.standard_normal(k)
    return truth


def generate_random_effects(n_per_group, K, p, epsilon, seed, m=None, beta=None, upsilon=None,
                            nonzero_fraction=1.0):
    """Synthetic grouped data from the random-intercept logistic model."""
    if min(n_per_group, K, p) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    upsilon = _sparse_truth(rng, p, nonzero_fraction) if upsilon is None else np.asarray(upsilon, float)
    m = float(rng.standard_normal()) if m is None else float(m)
    beta = rng.standard_normal(K) if beta is None else np.asarray(beta, float)
    groups = np.repeat(np.arange(K), n_per_group)
    X = sparse_covariates(rng, (K * n_per_group, p), epsilon)
    psi = m + beta[groups] + X @ upsilon
    y = (rng.random(len(psi)) < expit(psi)).astype(float)
    return LogisticData(X, y, groups, truth={"upsilon": upsilon, "m": m, "beta": beta})


def generate_spike_slab(n, p, epsilon, seed, nonzero_fraction=0.2, upsilon=None, intercept=None):
    """Synthetic data for sparse logistic regression with an intercept."""
    if min(n, p) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    upsilon = _sparse_truth(rng, p, nonzero_fraction) if upsilon is None else np.asarray(upsilon, float)
    intercept = float(rng.standard_normal()) if intercept is None else float(intercept)
    X = sparse_covariates(rng, (n, p), epsilon)
    psi = intercept + X @ upsilon
    y = (rng.random(n) < expit(psi)).astype(float)
    return LogisticData(X, y, truth={"upsilon": upsilon, "intercept": intercept})


def generate_synthetic(kind, dims, epsilon, seed, truth=None, nonzero_fraction=None):
    """Dispatch on ``kind`` (``"random_effects"`` or ``"spike_slab"``).

    ``dims`` holds ``n`` and ``p`` (and ``K`` for random effects); for random
    effects ``n`` is the number of subjects per group.
    """
    truth = truth or {}
    if kind == "random_effects":
        return generate_random_effects(dims["n"], dims["K"], dims["p"], epsilon, seed,
                                       nonzero_fraction=1.0 if nonzero_fraction is None else nonzero_fraction,
                                       **truth)
    if kind == "spike_slab":
        return generate_spike_slab(dims["n"], dims["p"], epsilon, seed,
                                   nonzero_fraction=0.2 if nonzero_fraction is None else nonzero_fraction,
                                   **truth)
    raise ValueError(f"unknown model kind {kind!r}")
