"""
Gibbs zig-zag against HMC-within-Gibbs
======================================

Both samplers alternate between the regression coefficients and the
hyperparameters. HMC pays for a full pass over the data at every leapfrog
step, while the zig-zag with batch size 1 pays for one data point per
candidate event. The cost is measured in epochs (full passes over the
data). The comparison is reported as the ratio of effective sample sizes
per epoch for the slowest coordinate.

This is a reduced version of the benchmark in the acceptance suite. Expect a
few minutes on one core.
"""
from gibbszz.experiments import ExperimentSpec, run_comparison

spec = ExperimentSpec(model="random_effects", n=50, p=3, epsilon=0.1, batch_size=1, eta=1.0,
                      horizon=1000.0, replicas=2, seed=11,
                      hmc_grid="0.02:10,0.05:10,0.1:10,0.2:5", pilot_iterations=1000, hmc_iterations=2000)
rows, summary = run_comparison(spec, "K", [2, 4])

for row in rows:
    print(f"K={row['K']} {row['sampler']:>9s} replica {row['replica']}: "
          f"ESS/epoch {row['ess_per_epoch']:.2e} (slowest coordinate {row['slowest_coordinate']})")
print("tuned HMC:", summary["hmc"])
print("median GZZ/HMC ratio by K:", dict(zip(summary["values"], summary["median_ratio"])))
