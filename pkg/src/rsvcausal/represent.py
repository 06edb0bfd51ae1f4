"""Learned feature representation for the moment-ratio estimator.

The representation with the best downstream precision is the conditional
outcome variation divided by a conditional variance surrogate,
``h(R) = E(delta_o | R) / sigma2(theta, R)``. Both pieces are assembled
from the fitted predictors and the counted marginals; an initial
least-squares pass supplies the theta plugged into the surrogate. None of
this needs to be consistent for the true conditional moments: downstream
inference only requires that the learned function settles down and stays
correlated with outcome variation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, UnitRecord
from .errors import InvalidSpec, SingularDesign
from .moments import MarginalCounts
from .predict import PredictorSet

__all__ = [
    "RepresentationFit",
    "cond_variation",
    "cond_variation_arrays",
    "theta_init",
    "learn_representation",
    "naive_representation",
    "NAIVE_KINDS",
]

NAIVE_KINDS = ("pred_y", "first_feature", "custom")

COND_LIMIT = 1e12
NEAR_SINGULAR = 1e8
RIDGE_REL = 1e-10


def cond_variation_arrays(
    ps: PredictorSet, counts: MarginalCounts, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in conditional expectations of the variation statistics.

    Returns ``(ce, co)`` with shapes ``(n,)`` and ``(n, K-1)``: the
    predictor-weighted reciprocal-count contrasts, scaled by the predicted
    sample-membership probabilities.
    """
    counts.require_positive()
    k = counts.k_outcomes
    ref = counts.reference
    pY = ps.prob_y(X)
    pD = ps.prob_d(X)
    pe = ps.prob_e(X)
    po = ps.prob_o(X)
    ce = (pD / counts.p_d1e - (1.0 - pD) / counts.p_d0e) * pe
    comps = [j for j in range(k) if j != ref]
    co = np.empty((X.shape[0], k - 1))
    for idx, j in enumerate(comps):
        co[:, idx] = (pY[:, j] / counts.p_yo[j] - pY[:, ref] / counts.p_yo[ref]) * po
    return ce, co


def cond_variation(
    ps: PredictorSet, counts: MarginalCounts, unit: UnitRecord
) -> tuple[float, np.ndarray]:
    """Per-unit plug-in conditional variation (scalar ce, vector co)."""
    ce, co = cond_variation_arrays(ps, counts, np.asarray(unit.rsv)[None, :])
    return float(ce[0]), co[0]


def theta_init(ce: np.ndarray, co: np.ndarray) -> np.ndarray:
    """No-intercept least squares of ce on co over the training fold.

    Solves the normal equations; a nearly singular Gram gets a small
    Tikhonov ridge, and a numerically singular one raises SingularDesign
    (the representation carries no usable outcome signal).
    """
    co = np.asarray(co, dtype=np.float64)
    if co.ndim == 1:
        co = co[:, None]
    gram = co.T @ co
    tr = float(np.trace(gram))
    if tr <= 0.0 or not np.isfinite(tr):
        raise SingularDesign("outcome-variation plug-in is identically zero")
    cond = np.linalg.cond(gram)
    if cond > COND_LIMIT:
        raise SingularDesign(f"normal equations condition number {cond:.3g}")
    if cond > NEAR_SINGULAR:
        gram = gram + RIDGE_REL * tr * np.eye(gram.shape[0])
    rhs = co.T @ np.asarray(ce, dtype=np.float64)
    return np.linalg.solve(gram, rhs)


def _sigma2_arrays(
    ps: PredictorSet, counts: MarginalCounts, X: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    """Predictor-weighted variance surrogate from the exclusive-events expansion."""
    k = counts.k_outcomes
    ref = counts.reference
    pY = ps.prob_y(X)
    pD = ps.prob_d(X)
    pe = ps.prob_e(X)
    po = ps.prob_o(X)
    theta = np.atleast_1d(theta)
    comps = [j for j in range(k) if j != ref]
    s2 = (pD / counts.p_d1e**2 + (1.0 - pD) / counts.p_d0e**2) * pe
    obs = np.zeros(X.shape[0])
    for idx, j in enumerate(comps):
        obs += theta[idx] ** 2 * pY[:, j] / counts.p_yo[j] ** 2
    obs += float(np.sum(theta)) ** 2 * pY[:, ref] / counts.p_yo[ref] ** 2
    return s2 + obs * po


@dataclass
class RepresentationFit:
    """A learned representation, frozen as a function of the features.

    ``h``, ``ce``, ``co`` and ``sigma2`` hold the per-unit values on the
    training fold the fit was produced from; :meth:`values_for` evaluates
    the same frozen function (same predictors, counts, initial estimate,
    and variance floor) on any other units.
    """

    theta_init: np.ndarray
    h: np.ndarray
    ce: np.ndarray
    co: np.ndarray
    sigma2: np.ndarray
    floor_value: float
    predictors: PredictorSet
    counts: MarginalCounts

    def values_for(self, X: np.ndarray) -> np.ndarray:
        """Representation values (n, K-1) for new feature rows."""
        _, co = cond_variation_arrays(self.predictors, self.counts, X)
        s2 = _sigma2_arrays(self.predictors, self.counts, X, self.theta_init)
        s2 = np.maximum(s2, self.floor_value)
        return co / s2[:, None]

    def write_csv(self, path, X: np.ndarray) -> None:
        """Export per-unit representation values for external plotting."""
        vals = self.values_for(X)
        header = ",".join(f"h_{j + 1}" for j in range(vals.shape[1]))
        np.savetxt(path, vals, delimiter=",", header=header, comments="")


def learn_representation(
    ds: Dataset,
    mask: np.ndarray,
    ps: PredictorSet,
    counts: MarginalCounts,
    sigma_floor_rel: float = 1e-8,
) -> RepresentationFit:
    """Build the representation on a training fold.

    The variance surrogate is floored at ``sigma_floor_rel`` times its
    training-fold median (frozen, so evaluation elsewhere uses the same
    floor); the representation is the plug-in outcome variation divided by
    the floored surrogate, one column per non-reference outcome category.
    """
    X = ds.rsv[mask]
    ce, co = cond_variation_arrays(ps, counts, X)
    t0 = theta_init(ce, co)
    s2 = _sigma2_arrays(ps, counts, X, t0)
    floor_value = float(sigma_floor_rel * np.median(s2))
    s2 = np.maximum(s2, floor_value)
    h = co / s2[:, None]
    return RepresentationFit(
        theta_init=t0,
        h=h,
        ce=ce,
        co=co,
        sigma2=s2,
        floor_value=floor_value,
        predictors=ps,
        counts=counts,
    )


def naive_representation(
    kind: str,
    ps: Optional[PredictorSet] = None,
    X: Optional[np.ndarray] = None,
    custom: Optional[np.ndarray] = None,
    reference: int = 0,
) -> np.ndarray:
    """Simple benchmark representations for the specification test.

    ``pred_y`` is the predicted-outcome representation implicitly used by
    common practice (the probability of category 1 in the binary case);
    ``first_feature`` is the raw first feature column; ``custom`` passes a
    user-supplied per-unit vector through unchanged.
    """
    if kind == "custom":
        if custom is None:
            raise InvalidSpec("custom representation requires a value vector")
        arr = np.asarray(custom, dtype=np.float64)
        return arr[:, None] if arr.ndim == 1 else arr
    if X is None:
        raise InvalidSpec("pred_y/first_feature representations require features")
    if kind == "first_feature":
        return np.asarray(X, dtype=np.float64)[:, :1]
    if kind == "pred_y":
        if ps is None:
            raise InvalidSpec("pred_y representation requires fitted predictors")
        p = ps.prob_y(X)
        k = ps.k_outcomes
        if k == 2:
            return p[:, 1:2]
        cols = [j for j in range(k) if j != reference]
        return p[:, cols]
    raise InvalidSpec(f"unknown naive representation {kind!r}; choose from {NAIVE_KINDS}")
