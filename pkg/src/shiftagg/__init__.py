"""Aggregate vector-valued prediction models for a shifted target domain.

The core operation combines a sequence of fixed models into a linear
aggregate whose weights are fitted from labeled source data (importance
weighted by a density ratio) and unlabeled target data. Baseline
aggregation and selection methods, density-ratio estimators, synthetic
dataset generators, evaluation metrics, and an experiment harness with a
CLI round out the package.
"""

from .aggregation import (
    AggregatedModel,
    AggregationResult,
    empirical_gram,
    empirical_moment,
    iwa,
    majority_votes,
    oracle_weights,
    sor,
    tcr,
    tmr,
    tmv,
)
from .datasets import (
    DomainAdaptationInstance,
    load_csv_instance,
    make_sinc_shift,
    make_transformed_moons,
    save_csv_instance,
    sinc_ratio,
)
from .density_ratio import (
    ConstantRatio,
    DensityRatio,
    GaussianRatio,
    LearnedRatio,
    fit_domain_classifier,
    normalized_weights,
)
from .errors import (
    ConfigError,
    CsvFormatError,
    DegenerateGramError,
    DegenerateGramWarning,
    DimensionError,
    NumericalError,
)
from .harness import (
    ExperimentConfig,
    ResultTable,
    run_correlation,
    run_experiment,
    run_rate_check,
    run_sensitivity,
    write_outputs,
)
from .linalg import TruncatedInverse, pinv_rcond, solve_regularized, spectral_pinv, sym_eig
from .metrics import EvaluationReport, accuracy, empirical_risk, pearson, pearson_with_flag
from .models import (
    CorruptedModel,
    FeatureModel,
    LinearModel,
    Model,
    ModelSequence,
    PrecomputedModel,
    SoftmaxModel,
    corrupt,
    fit_ridge,
    fit_softmax_classifier,
    polynomial_features,
    predict_batch,
    stack_predictions,
)
from .selection import SelectionResult, dev_select, iwv_select, select_as_aggregation

__version__ = "0.1.0"

__all__ = [
    "AggregatedModel",
    "AggregationResult",
    "ConfigError",
    "ConstantRatio",
    "CorruptedModel",
    "CsvFormatError",
    "DegenerateGramError",
    "DegenerateGramWarning",
    "DensityRatio",
    "DimensionError",
    "DomainAdaptationInstance",
    "EvaluationReport",
    "ExperimentConfig",
    "FeatureModel",
    "GaussianRatio",
    "LearnedRatio",
    "LinearModel",
    "Model",
    "ModelSequence",
    "NumericalError",
    "PrecomputedModel",
    "ResultTable",
    "SelectionResult",
    "SoftmaxModel",
    "TruncatedInverse",
    "accuracy",
    "corrupt",
    "dev_select",
    "empirical_gram",
    "empirical_moment",
    "empirical_risk",
    "fit_domain_classifier",
    "fit_ridge",
    "fit_softmax_classifier",
    "iwa",
    "iwv_select",
    "load_csv_instance",
    "majority_votes",
    "make_sinc_shift",
    "make_transformed_moons",
    "normalized_weights",
    "oracle_weights",
    "pearson",
    "pearson_with_flag",
    "pinv_rcond",
    "polynomial_features",
    "predict_batch",
    "run_correlation",
    "run_experiment",
    "run_rate_check",
    "run_sensitivity",
    "save_csv_instance",
    "select_as_aggregation",
    "sinc_ratio",
    "solve_regularized",
    "sor",
    "spectral_pinv",
    "stack_predictions",
    "sym_eig",
    "tcr",
    "tmr",
    "tmv",
    "write_outputs",
]
