"""Crowd-size estimation for monostatic mmWave radar under non-uniform spatial priors."""

from .estimator import (
    EstimationResult,
    VisiblePmf,
    analytical_pmf,
    empirical_pmf,
    estimate_crowd_size,
    kl_divergence,
)
from .geometry import (
    AngularInterval,
    CrowdRealization,
    PolarPoint,
    SceneConfig,
    count_visible,
    is_complete_1_blockage,
    is_partial_1_blockage,
    is_simultaneous_2_blockage,
    visibility_interval,
    visible_agents,
)
from .model import (
    BlockageField,
    VisibilityCurve,
    build_field,
    compute_p1,
    compute_p2,
    expected_visibility,
    r1_membership,
    visibility_curve,
    visibility_likelihood,
)
from .sim import ExperimentSpec, SweepResult, run_sweep, simulate_counts
from .spatial import (
    SobolCloud,
    SpatialDensity,
    UniformDensity,
    build_sobol_cloud,
    canonical_suite,
    load_density,
    qmc_integrate,
)

__version__ = "0.1.0"
