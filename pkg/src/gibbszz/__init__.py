"""Gibbs zig-zag sampling for hierarchical logistic models."""
from .pdmp import AffineRateBound, Skeleton, SkeletonError, first_arrival_affine
from .subsampling import EpochCounter, SubsampleEstimator, epoch_report
from .models import (
    GaussianGammaModel,
    GaussianModel,
    GibbsKernel,
    LogisticData,
    LogisticRegressionModel,
    RandomEffectsModel,
    RandomEffectsPriors,
    SpikeSlabModel,
    SpikeSlabPriors,
    generate_synthetic,
)
from .samplers import (
    EnvelopeViolation,
    GzzConfig,
    ZigZagConfig,
    hyper_update_counterfactual_check,
    run_gzz,
    run_zigzag,
    sample_grid,
)
from .diagnostics import efficiency_summary, iact, trajectory_moment

__version__ = "0.1.0"
