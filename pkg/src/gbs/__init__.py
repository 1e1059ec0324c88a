"""Adaptive paired-comparison survey engine for binary-attribute products.

The engine learns a product distribution (independent Bernoulli bits with
sigmoid-parameterized logits) by turning each respondent's forced choice
between two adaptively generated partial profiles into a bounded,
low-variance stochastic ascent step. Submodules:

* ``core`` -- logits, question generation, gradient estimators, SGD loop.
* ``population`` -- synthetic respondents and the logit choice rule.
* ``nn`` -- from-scratch MLP substrate with exact backprop.
* ``baselines`` -- logistic / hierarchical-Bayes / neural comparison fits.
* ``policy`` -- amortized covariate-to-logits policy learning.
* ``evaluation`` -- enumeration oracles, hold-out metrics, benchmarks.
* ``verify`` -- analytic identity checks.
* ``service`` -- FastAPI app hosting live survey sessions.
* ``cli`` -- command-line entry point.
"""

__version__ = "0.1.0"

from .core import (
    GradientEstimate,
    PairedQuestion,
    SurveyConfig,
    SurveyResult,
    extract_product,
    gbs_gradient,
    run_single_product,
    sample_question,
    sgd_update,
    sigmoid,
    two_question_gradient,
)
from .population import (
    MixtureSpec,
    Population,
    PopulationSpec,
    RespondentModel,
    generate_population,
    holdout_population,
    representative_utility,
)

__all__ = [
    "GradientEstimate",
    "PairedQuestion",
    "SurveyConfig",
    "SurveyResult",
    "extract_product",
    "gbs_gradient",
    "run_single_product",
    "sample_question",
    "sgd_update",
    "sigmoid",
    "two_question_gradient",
    "MixtureSpec",
    "Population",
    "PopulationSpec",
    "RespondentModel",
    "generate_population",
    "holdout_population",
    "representative_utility",
    "__version__",
]
