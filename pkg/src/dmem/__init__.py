"""Gaussian multisource exchangeability models: full MEM, iMEM and the two-stage dMEM."""

from dmem.changepoint import ChangepointResult, DetectorConfig, Fallback, detect, select_sources
from dmem.clustering import ClusterAssignment, Strategy, assign, pool
from dmem.errors import (
    DataFormatError,
    DataValidationError,
    DMEMError,
    InvalidArgument,
    ModelSpaceTooLarge,
)
from dmem.mem import (
    ModelConfiguration,
    PosteriorMixture,
    PriorSpec,
    SourceSummary,
    count_evaluations,
    esss,
    fit_mem,
    log_group_marginal,
    log_model_marginal,
)
from dmem.pipeline import (
    EstimateRecord,
    EstimatorKind,
    EstimatorSpec,
    run_dmem,
    run_estimator,
    run_imem,
    run_kmeans_baseline,
    run_no_borrow,
)
from dmem.scores import ScoredSource, imem_select, marginal_score, score_all

__version__ = "0.1.0"
