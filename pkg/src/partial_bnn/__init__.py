"""Partially stochastic Bayesian neural networks at desk scale.

Networks carry a flat float64 parameter vector split by a boolean mask into
a stochastic subset (given a posterior by one of five backends: MAP, mean
field VI, HMC, Gauss-Newton Laplace, SWAG) and a deterministic remainder
held at point estimates. The package also ships the predictive metrics,
chain-agreement diagnostics, synthetic and tabular data handling, the
constructive noise-recovery certificates, and a config-driven CLI.
"""

__version__ = "0.1.0"

from . import autodiff
from .data import (
    Dataset,
    destandardize,
    gen_sine_large,
    gen_sine_small,
    load_csv,
    make_split,
    standardize,
)
from .diagnostics import (
    ChainPredictions,
    all_chains_agreement,
    bootstrap_agreement,
    per_chain_accuracy,
    read_chain_blob,
    write_chain_blob,
)
from .inference import (
    CategoricalLikelihood,
    GaussianLikelihood,
    HmcConfig,
    LaplaceConfig,
    LaplacePosterior,
    LogDensityModel,
    MapConfig,
    MeanFieldGaussian,
    MfviConfig,
    SampleSet,
    SwagConfig,
    SwagPosterior,
    fit_laplace,
    fit_swag,
    load_posterior,
    logdensity,
    logdensity_and_grad,
    run_hmc,
    sample_swag,
    save_posterior,
    train_map,
    train_mfvi,
    tune_prior_precision,
)
from .network import (
    Activation,
    ArchitectureSpec,
    GradientRequest,
    Network,
    eval_theta,
    forward,
    grad_logdensity,
    init_network,
    load_network,
    save_network,
)
from .partition import (
    ParameterPartition,
    PriorSpec,
    effective_prior,
    select_all,
    select_by_layer,
    select_none,
    select_top_abs,
    select_top_variance,
)
from .predictive import (
    MetricsReport,
    PredictiveResult,
    compute_metrics,
    interval_coverage,
    predict,
    predictive_intervals,
)
from .rng import make_rng
from .ucda import (
    ConstructiveNet,
    GeneratorConfig,
    NoiseSpec,
    build_constructive,
    default_noise,
    moment_match_counterexample,
    train_conditional_generator,
    verify_recovery,
)
