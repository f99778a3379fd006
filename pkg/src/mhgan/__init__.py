"""Metropolis-Hastings sample selection for imperfect generators.

Wraps a generator with a (calibrated) discriminator and selects among its
draws with an independence sampler, with a discriminator rejection sampling
baseline, analytic mixture benchmarks and sample-quality metrics.
"""

from .calibration import (
    EPS,
    CalibratedDiscriminator,
    CalibrationSet,
    Calibrator,
    apply_calibrator,
    fit_calibrator,
    make_calibration_set,
    z_statistic,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    default_config,
    load_config,
    run_experiment,
    sweep_k,
)
from .metrics import (
    ModeAssignment,
    MetricsReport,
    assign_modes,
    high_quality_rate,
    ks_two_sample,
    mode_jsd,
    roc_auc,
    within_mode_std,
)
from .mixtures import (
    GaussianMixture,
    make_grid25,
    make_univariate4,
    mixture_logpdf,
    mixture_sample,
)
from .mlp import MLPDiscriminator, MLPNet, TrainConfig, grad_check, init_mlp, mlp_forward, mlp_train
from .models import (
    Discriminator,
    FunctionDiscriminator,
    GridGenerator,
    MixtureGenerator,
    imperfect_grid_generator,
    oracle_discriminator,
    warp_discriminator,
)
from .samplers import (
    ChainResult,
    DRSConfig,
    MHConfig,
    MHSamples,
    drs_estimate_max,
    drs_sample,
    drs_sample_many,
    mh_accept_prob,
    mh_chain,
    mh_sample_iid,
    substream,
)

__version__ = "0.1.0"
