"""Treatment-effect estimation from remotely sensed outcome proxies.

Combines an experimental sample whose outcomes are missing with an
observational sample that links outcomes to the same remotely sensed
features, identifying the average treatment effect as a ratio of
feature-projected treatment and outcome variation. Includes the
common-practice surrogate estimator for comparison, quasi-experimental
variants, synthetic designs with known truth, and credibility diagnostics.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Dataset,
    Mode,
    SampleTag,
    UnitRecord,
    load_csv,
    load_did_csv,
    split_folds,
    validate,
    write_csv,
)
from .dgp import (  # noqa: F401
    DgpSpec,
    FinitePopulation,
    MissingPattern,
    adversarial_population,
    gen_adversarial,
    gen_calibrated,
    gen_did,
    gen_iv,
    population_oracle,
    random_finite_population,
)
from .estimate import (  # noqa: F401
    AnalyticVariance,
    EstimateConfig,
    EstimateResult,
    analytic_variance,
    bootstrap_ci,
    estimate_ate,
    ratio_estimate,
)
from .baseline import (  # noqa: F401
    bias_weight_w,
    binary_bias_decomposition,
    surrogate_estimate,
)
from .diagnostics import (  # noqa: F401
    relevance_test,
    specification_test,
    stability_export,
)
from .moments import (  # noqa: F401
    MarginalCounts,
    VariationValues,
    marginal_counts,
    sigma2_expansion,
    variation,
    variation_complete,
)
from .multivalued import BinningSpec, bias_bound, discretize  # noqa: F401
from .predict import PredictorSet, fit_predictors, predict_all  # noqa: F401
from .quasi import DidResult, IvResult, did_att, iv_late  # noqa: F401
from .represent import (  # noqa: F401
    RepresentationFit,
    cond_variation,
    learn_representation,
    naive_representation,
    theta_init,
)
