"""
How often should the hyperparameters move?
==========================================

On a small random-effects logistic model the slowest coordinate is the
global mean, whose scale is set by the precision hyperparameter. Updating
the hyperparameters at rate eta, the autocorrelation time of that slowest
coordinate grows roughly like 1/eta once eta is small.
"""
from gibbszz.experiments import ExperimentSpec, run_eta_sweep

spec = ExperimentSpec(model="random_effects", n=10, K=2, p=2, epsilon=0.5, batch_size=10,
                      horizon=1000.0, horizon_eta_factor=500.0, n_steps=5000, replicas=3, seed=7)
etas = [0.01, 0.03, 0.1, 1.0]
rows, fit = run_eta_sweep(spec, etas)

print(f"{'eta':>6s} {'median IACT (time)':>20s}")
for eta, tau in zip(fit["eta"], fit["median_iact_time"]):
    print(f"{eta:6.2f} {tau:20.1f}")
print(f"log-log slope over eta <= 0.1: {fit['slope']:.2f}")
