"""Noisy spike recovery from Fourier samples and its error-scaling laws."""

from .errors import (
    DegeneracyError,
    EstimatorError,
    IllConditionedError,
    RankDeficiencyError,
    SizeError,
)
from .estimators import EstimatorConfig, RefineResult, esprit, esprit_refine, mle_refine, weights_least_squares
from .experiments import (
    ErrorRecord,
    SweepConfig,
    SweepReport,
    error_metrics,
    expected_slopes,
    fit_slope,
    match_spikes,
    run_sweep,
)
from .measure import (
    MeasurementSet,
    NoiseModel,
    SpikeMeasure,
    apply_noise,
    draw_noise,
    fourier_coefficient,
    random_measure,
    sample_noiseless,
)
from .perturbation import (
    DesignMatrices,
    GramBlocks,
    PerturbationSolution,
    build_design,
    dirichlet_derivative,
    dirichlet_sum,
    gram_blocks,
    predicted_error_scales,
    rhs_noise_scales,
    scaled_gram_deviation,
    solve_first_order,
)

__version__ = "0.1.0"
