"""Built-in learners, cross-validated risk and the discrete super learner."""

from .crossfit import (
    CrossFitPlan,
    CrossFitResult,
    cross_fit,
    cross_fit_predict,
    cv_risk,
    default_folds,
    discrete_super_learner,
    fit_learner,
    pointwise_loss,
    seed_rng,
)
from .models import (
    FittedModel,
    InterceptModel,
    LayoutError,
    LinearModel,
    TreeEnsembleModel,
    fit,
    model_from_dict,
    predict,
)
from .specs import (
    BINOMIAL,
    SQUARED,
    GradientBoostedTrees,
    Intercept,
    LearnerSpec,
    LearnerSpecError,
    Logistic,
    PenalizedLinear,
    SuperLearnerSpec,
    spec_from_dict,
    spec_to_dict,
)
