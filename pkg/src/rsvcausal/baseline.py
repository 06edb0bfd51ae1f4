"""The common-practice surrogate estimator and its bias characterizations.

Practice-as-usual predicts the outcome from the features on the
observational sample and averages those predictions by treatment arm in the
experimental sample. When the features are caused by the outcome rather
than mediating the treatment, that target generally differs from the
average treatment effect; the helpers here compute the surrogate estimate,
its binary-case decomposition, and the exact population bias weights on a
finite support.
"""

from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .data import Dataset
from .dgp import FinitePopulation
from .errors import DataError, ZeroCount
from .predict import PredictorSet

__all__ = [
    "surrogate_estimate",
    "binary_bias_decomposition",
    "bias_weight_w",
]


def _expected_outcome(ds: Dataset, predictor, X: np.ndarray) -> np.ndarray:
    """Predicted mean outcome value per row."""
    if isinstance(predictor, PredictorSet):
        probs = predictor.prob_y(X)
        values = (
            np.asarray(ds.value_map, dtype=np.float64)
            if ds.value_map is not None
            else np.arange(ds.k_outcomes, dtype=np.float64)
        )
        return probs @ values
    return np.asarray(predictor(X), dtype=np.float64)


def surrogate_estimate(
    ds: Dataset, ps: Union[PredictorSet, Callable[[np.ndarray], np.ndarray]]
) -> float:
    """Common-practice estimate: arm difference of predicted outcomes.

    ``ps`` is a fitted predictor set (its outcome model is used) or any
    callable mapping feature rows to predicted outcome values, e.g. the
    identity on a single binary feature for classifier-as-outcome designs.
    """
    e = ds.has_e & (ds.treatment >= 0)
    treated = e & (ds.treatment == 1)
    control = e & (ds.treatment == 0)
    if not treated.any() or not control.any():
        raise DataError("surrogate estimate needs experimental units in both arms")
    pred = _expected_outcome(ds, ps, ds.rsv)
    return float(pred[treated].mean() - pred[control].mean())


def binary_bias_decomposition(ds: Dataset):
    """Slope decomposition of the surrogate target on fully labeled data.

    With a binary feature and binary outcome the surrogate target factors
    into (outcome-on-feature slope) x (feature-on-outcome slope) x (true
    effect). Requires labels for every unit (simulation/oracle mode):
    either the dataset's generator stored them in ``meta`` or all units
    carry outcomes.

    Returns
    -------
    (beta_tilde, beta, predicted_theta_tilde)
        The two regression slopes and their product with the labeled
        difference-in-means effect.
    """
    if ds.k_outcomes != 2:
        raise DataError("binary decomposition requires binary outcomes")
    r = ds.rsv[:, 0]
    if not set(np.unique(r)) <= {0.0, 1.0}:
        raise DataError("binary decomposition requires a binary first feature")
    y_full = ds.meta.get("full_outcome")
    d_full = ds.meta.get("full_treatment")
    if y_full is None:
        if np.any(ds.outcome < 0):
            raise DataError("full outcome labels unavailable")
        y_full = ds.outcome
    if d_full is None:
        if np.any(ds.has_e & (ds.treatment < 0)):
            raise DataError("full treatment labels unavailable")
        d_full = ds.treatment
    y_full = np.asarray(y_full, dtype=np.float64)
    d_full = np.asarray(d_full, dtype=np.float64)

    if np.var(r) == 0 or np.var(y_full) == 0:
        raise DataError("zero-variance feature or outcome")

    obs = ds.has_o
    r_o, y_o = r[obs], y_full[obs]
    if not ((r_o == 1).any() and (r_o == 0).any()):
        raise DataError("observational sample lacks feature variation")
    beta_tilde = float(y_o[r_o == 1].mean() - y_o[r_o == 0].mean())

    if not ((y_full == 1).any() and (y_full == 0).any()):
        raise DataError("outcome has a single value")
    beta = float(r[y_full == 1].mean() - r[y_full == 0].mean())

    e = ds.has_e
    theta_labeled = float(
        y_full[e & (d_full == 1)].mean() - y_full[e & (d_full == 0)].mean()
    )
    return beta_tilde, beta, beta_tilde * beta * theta_labeled


def bias_weight_w(pop: FinitePopulation):
    """Exact common-practice bias weights on a finite feature support.

    For the binary untreated-observational design, the surrogate target's
    bias for the treated mean factors through the density-ratio weight

        w(r) = [Pr{Y(0)=1 | e} * f(r | D=1, e)] / [Pr{Y(1)=1 | e} * f(r | D=0, e)],

    integrated against the feature density among outcome-1 experimental
    units and scaled by the treated mean.

    Returns
    -------
    (w, integrated_bias)
        Per-support-point weights and the total bias they integrate to.
    """
    if pop.k != 2:
        raise ZeroCount("bias weights are defined for binary outcomes")
    p_d = np.array([1.0 - pop.p_d1_e, pop.p_d1_e])
    f_r_d = pop.py_d @ pop.r_given_y  # (2, m): f(r | D=d, e)
    mu1 = float(pop.py_d[1, 1])
    mu0 = float(pop.py_d[0, 1])
    if mu1 <= 0.0:
        raise ZeroCount("treated outcome-1 probability is zero")
    if np.any(f_r_d[0] <= 0.0):
        raise ZeroCount("a support point has zero probability among untreated units")
    w = (mu0 * f_r_d[1]) / (mu1 * f_r_d[0])
    p_y1r_e = (p_d[1] * pop.py_d[1, 1] + p_d[0] * pop.py_d[0, 1]) * pop.r_given_y[1]
    if p_y1r_e.sum() <= 0.0:
        raise ZeroCount("no outcome-1 mass in the experimental sample")
    f_r_y1_e = p_y1r_e / p_y1r_e.sum()
    integrated = float(mu1 * ((w - 1.0) @ f_r_y1_e))
    return w, integrated
