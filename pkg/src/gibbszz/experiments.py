"""Experiment specifications, single runs and the sweep/comparison drivers.

Every result row carries the fully resolved specification (as JSON), its
hash, the replica index and the derived sampler seed, so any row can be
reproduced with ``run_single(ExperimentSpec.from_json(row["spec"]), row["replica"])``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import stats

from .baselines import HmcConfig, hmc_within_gibbs, tune_hmc
from .diagnostics import chain_summary
from .models import RandomEffectsModel, SpikeSlabModel, generate_synthetic
from .samplers import GzzConfig, ZigZagConfig, sample_grid

__all__ = [
    "ExperimentSpec",
    "ConfigError",
    "build_dataset",
    "build_model",
    "replica_seed",
    "run_single",
    "run_replicas",
    "run_eta_sweep",
    "run_batch_sweep",
    "run_comparison",
    "fit_loglog_slope",
    "parse_grid",
]

log = logging.getLogger(__name__)

MODELS = ("random_effects", "spike_slab")
SAMPLERS = ("zz", "gzz", "hmc-gibbs")
SMALL_ETA = 0.1
DEFAULT_HMC_GRID = ",".join(f"{e}:{L}" for L in (5, 10, 20)
                            for e in (0.005, 0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.14, 0.17, 0.2, 0.25, 0.3))


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def parse_grid(text):
    """``"0.01:5, 0.02:10"`` -> ``((0.01, 5), (0.02, 10))``."""
    if isinstance(text, (list, tuple)):
        return tuple((float(e), int(L)) for e, L in text)
    out = []
    for item in str(text).replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            eps, L = item.split(":")
            out.append((float(eps), int(L)))
        except ValueError:
            raise ConfigError(f"bad HMC grid entry {item!r}, expected step:leapfrogs") from None
    return tuple(out)


@dataclass(frozen=True)
class ExperimentSpec:
    """Flat experiment configuration.

    For ``random_effects`` ``n`` counts subjects per group (``n * K`` data
    points); for ``spike_slab`` it is the total number of observations and
    ``K`` is ignored. ``None`` fields are filled in by :meth:`resolve`.
    """

    model: str = "random_effects"
    n: int = 10
    p: int = 2
    K: int = 2
    epsilon: float = 0.5
    nonzero_fraction: float | None = None
    strict_conditionals: bool = True
    sampler: str = "gzz"
    eta: float = 1.0
    batch_size: int | None = 10
    horizon: float = 1000.0
    horizon_eta_factor: float = 0.0
    burn_in_fraction: float = 0.1
    n_steps: int = 10_000
    refresh_gamma: float = 0.0
    hmc_step_size: float = 0.05
    hmc_n_leapfrog: int = 10
    hmc_iterations: int = 5000
    hmc_burn_in: int | None = None
    hmc_grid: str = DEFAULT_HMC_GRID
    pilot_iterations: int = 2000
    replicas: int = 1
    seed: int = 0
    data_seed: int | None = None
    output_dir: str = "results"

    def resolve(self) -> "ExperimentSpec":
        """Validate and materialize every default."""
        spec = self
        if spec.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {spec.model!r}")
        if spec.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}, got {spec.sampler!r}")
        if min(spec.n, spec.p, spec.K) < 1:
            raise ConfigError("dimensions n, p and K must be positive")
        if not 0.0 < spec.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1], got {spec.epsilon}")
        if spec.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if spec.sampler == "gzz" and not spec.eta > 0:
            raise ConfigError(f"eta must be positive, got {spec.eta}")
        if not spec.horizon > 0 or spec.n_steps < 100:
            raise ConfigError("horizon must be positive and n_steps at least 100")
        if not 0.0 <= spec.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        n_total = spec.n * spec.K if spec.model == "random_effects" else spec.n
        if spec.batch_size is not None and not 1 <= spec.batch_size <= n_total:
            raise ConfigError(f"batch size must lie in [1, {n_total}], got {spec.batch_size}")
        if spec.hmc_step_size <= 0 or spec.hmc_n_leapfrog < 1 or spec.hmc_iterations < 100:
            raise ConfigError("invalid HMC settings")
        parse_grid(spec.hmc_grid)
        changes = {}
        if spec.nonzero_fraction is None:
            changes["nonzero_fraction"] = 1.0 if spec.model == "random_effects" else 0.2
        if spec.data_seed is None:
            changes["data_seed"] = spec.seed
        if spec.hmc_burn_in is None:
            changes["hmc_burn_in"] = spec.hmc_iterations // 10
        if spec.horizon_eta_factor > 0 and spec.sampler == "gzz":
            changes["horizon"] = max(spec.horizon, spec.horizon_eta_factor / spec.eta)
            changes["horizon_eta_factor"] = 0.0
        return replace(spec, **changes)

    @property
    def n_data(self) -> int:
        return self.n * self.K if self.model == "random_effects" else self.n

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "ExperimentSpec":
        return cls.from_mapping(json.loads(text))

    @classmethod
    def from_mapping(cls, mapping) -> "ExperimentSpec":
        """Build from string or typed values; unknown keys are an error."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(known[key], value)
        return cls(**kwargs)

    def spec_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _coerce(f, value):
    if not isinstance(value, str):
        return value
    text = value.strip()
    kind = str(f.type)
    if text.lower() in ("none", "null", "") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(float(text)) if float(text).is_integer() else int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {f.name} = {value!r}") from None
    return text


def replica_seed(seed: int, replica: int) -> int:
    """Sampler seed of a replica, derived from the master seed."""
    state = np.random.SeedSequence(seed, spawn_key=(1000 + replica,)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def build_dataset(spec: ExperimentSpec):
    dims = {"n": spec.n, "p": spec.p, "K": spec.K}
    return generate_synthetic(spec.model, dims, spec.epsilon, spec.data_seed,
                              nonzero_fraction=spec.nonzero_fraction)


def build_model(spec: ExperimentSpec, data=None):
    data = build_dataset(spec) if data is None else data
    if spec.model == "random_effects":
        return RandomEffectsModel(data.X, data.groups, data.y,
                                  strict_conditionals=spec.strict_conditionals, n_groups=spec.K)
    return SpikeSlabModel(data.X, data.y)


def run_single(spec: ExperimentSpec, replica: int = 0, model=None, backend="auto") -> dict:
    """One replica of one sampler; returns a flat result row."""
    spec = spec.resolve()
    model = build_model(spec) if model is None else model
    seed = replica_seed(spec.seed, replica)
    xi0 = np.zeros(model.dim)
    alpha0 = model.initial_alpha()
    row = {"spec_hash": spec.spec_hash(), "replica": replica, "seed": seed, "model": spec.model,
           "sampler": spec.sampler, "n": spec.n, "p": spec.p, "K": spec.K, "n_data": model.n_data,
           "epsilon": spec.epsilon, "eta": spec.eta if spec.sampler == "gzz" else None,
           "batch_size": spec.batch_size if spec.sampler != "hmc-gibbs" else None}

    if spec.sampler == "hmc-gibbs":
        burn = spec.hmc_burn_in
        cfg = HmcConfig(spec.hmc_step_size, spec.hmc_n_leapfrog, spec.hmc_iterations + burn, seed)
        res = hmc_within_gibbs(model, None, (xi0, alpha0), cfg)
        samples = res.samples[burn:]
        epochs = res.epochs * spec.hmc_iterations / (spec.hmc_iterations + burn)
        summary = chain_summary(samples, epochs, dt=1.0)
        row.update(acceptance=res.acceptance_rate, nonfinite=res.n_nonfinite,
                   step_size=spec.hmc_step_size, n_leapfrog=spec.hmc_n_leapfrog)
    else:
        batch = spec.batch_size
        gamma = spec.refresh_gamma
        burn_time = spec.burn_in_fraction * spec.horizon
        run_time = spec.horizon - burn_time
        state = (xi0, np.ones(model.dim, dtype=np.int8), alpha0)

        def config(horizon, s):
            zz = ZigZagConfig(horizon, seed=s, refresh_gamma=gamma, batch_size=batch)
            return GzzConfig(zz, spec.eta) if spec.sampler == "gzz" else zz

        if burn_time > 0:
            warm = sample_grid(model, None, state, config(burn_time, seed ^ 0x5EED), n_steps=100,
                               backend=backend)
            state = warm.stats["final_state"]
        chain = sample_grid(model, None, state, config(run_time, seed), n_steps=spec.n_steps,
                            backend=backend)
        epochs = chain.stats["epochs"]
        summary = chain_summary(chain.samples, epochs, dt=chain.dt)
        row.update(bounces=chain.stats["bounces"], candidates=chain.stats["candidates"],
                   hyper_events=chain.stats["hyper_events"], horizon=spec.horizon)

    k = summary.slowest_coordinate
    row.update(epochs=summary.epochs, dt=summary.dt, slowest_coordinate=k,
               iact=summary.iact[k], iact_time=summary.iact[k] * summary.dt,
               ess=summary.ess[k], ess_per_epoch=summary.ess_per_epoch[k],
               spec=spec.to_json())
    return row


def _run_one(args):
    spec, replica = args
    return run_single(spec, replica)


def run_replicas(specs, workers=1):
    """Run every ``(spec, replica)`` pair; rows come back in input order."""
    jobs = [(s.resolve(), r) for s in specs for r in range(s.resolve().replicas)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if np.unique(x).size < 2:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def _medians(rows, key, value):
    groups = {}
    for row in rows:
        groups.setdefault(row[key], []).append(row[value])
    keys = sorted(groups)
    return keys, [float(np.median(groups[k])) for k in keys]


def run_eta_sweep(spec: ExperimentSpec, eta_values, workers=1):
    """IACT of the slowest component for each ``eta``, over replicas.

    Returns ``(rows, fit)``; ``fit["slope"]`` is the log-log slope of the
    median IACT (time units) against ``eta`` over ``eta <= 0.1``.
    """
    etas = [float(e) for e in eta_values]
    if not etas:
        raise ConfigError("the eta grid is empty")
    if any(not e > 0 for e in etas):
        raise ConfigError("eta values must be positive")
    specs = [replace(spec, sampler="gzz", eta=e).resolve() for e in etas]
    rows = run_replicas(specs, workers)
    keys, med = _medians(rows, "eta", "iact_time")
    small = [(k, m) for k, m in zip(keys, med) if k <= SMALL_ETA]
    slope = fit_loglog_slope([k for k, _ in small], [m for _, m in small]) if len(small) >= 2 else math.nan
    fit = {"eta": keys, "median_iact_time": med, "slope": slope, "n_small": len(small)}
    return rows, fit


def run_batch_sweep(spec: ExperimentSpec, batch_sizes, etas=(1e-3, 6.47), workers=1):
    """IACT and ESS per epoch for each mini-batch size at a low and a high ``eta``.

    Returns ``(rows, summary)`` where ``summary[eta]`` is the ratio of the
    median IACT at the smallest batch to that at the largest.
    """
    sizes = [int(b) for b in batch_sizes]
    if not sizes:
        raise ConfigError("the batch-size grid is empty")
    n_total = spec.n_data
    for b in sizes:
        if not 1 <= b <= n_total:
            raise ConfigError(f"batch size must lie in [1, {n_total}], got {b}")
    specs = [replace(spec, sampler="gzz", eta=float(e), batch_size=b).resolve()
             for e in etas for b in sizes]
    rows = run_replicas(specs, workers)
    summary = {}
    for e in etas:
        sub = [r for r in rows if r["eta"] == float(e)]
        keys, med = _medians(sub, "batch_size", "iact_time")
        summary[float(e)] = {"batch_size": keys, "median_iact_time": med,
                             "iact_ratio_small_to_full": med[0] / med[-1]}
    return rows, summary


def run_comparison(spec: ExperimentSpec, axis, values, workers=1, eps_times_n=50.0):
    """GZZ (with sub-sampling) against tuned HMC-within-Gibbs along a scaling axis.

    ``axis`` is ``"K"`` (number of groups) or ``"n"`` (observations, with
    ``epsilon = eps_times_n / n``). For each axis value HMC is tuned once on
    the shared dataset, then every replica runs both samplers. Returns
    ``(rows, summary)`` with the median ESS-per-epoch ratio per value and its
    Spearman correlation with the axis.
    """
    values = [int(v) for v in values]
    if axis not in ("K", "n"):
        raise ConfigError(f"axis must be 'K' or 'n', got {axis!r}")
    if not values:
        raise ConfigError("the comparison axis is empty")
    grid = parse_grid(spec.hmc_grid)
    if not grid:
        raise ConfigError("the HMC grid is empty")
    rows, tuned = [], {}
    for v in values:
        change = {axis: v}
        if axis == "n":
            change["epsilon"] = eps_times_n / v
        base = replace(spec, **change).resolve()
        model = build_model(base)
        tune = tune_hmc(model, None, grid, (np.zeros(model.dim), model.initial_alpha()),
                        pilot_iterations=base.pilot_iterations, seed=base.seed)
        tuned[v] = {"step_size": tune.config.step_size, "n_leapfrog": tune.config.n_leapfrog,
                    "flagged": tune.flagged}
        gzz = replace(base, sampler="gzz").resolve()
        hmc = replace(base, sampler="hmc-gibbs", hmc_step_size=tune.config.step_size,
                      hmc_n_leapfrog=tune.config.n_leapfrog).resolve()
        pair = run_replicas([gzz, hmc], workers)
        by_rep = {}
        for row in pair:
            row["axis"], row["axis_value"] = axis, v
            row["hmc_flagged"] = tune.flagged
            by_rep.setdefault(row["replica"], {})[row["sampler"]] = row
        for rep, d in sorted(by_rep.items()):
            ratio = d["gzz"]["ess_per_epoch"] / d["hmc-gibbs"]["ess_per_epoch"]
            for row in d.values():
                row["ratio"] = ratio
        rows.extend(pair)
    ratios = {}
    for row in rows:
        if row["sampler"] == "gzz":
            ratios.setdefault(row["axis_value"], []).append(row["ratio"])
    med = [float(np.median(ratios[v])) for v in values]
    rho = float(stats.spearmanr(values, med).statistic) if len(values) > 1 else math.nan
    summary = {"axis": axis, "values": values, "median_ratio": med, "spearman": rho, "hmc": tuned}
    return rows, summary
