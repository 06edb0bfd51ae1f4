"""End-to-end estimation: cross-fitting, the ratio estimator, and inference.

Every estimand in the package is the solution of a moment system built from
mutually exclusive unit-level events (treated experimental member, each
observational outcome category, ...). A unit activates at most one event per
side, so the residual's conditional second moment expands into a
predictor-weighted sum of reciprocal squared counts, and every plug-in the
representation needs can be assembled from the same event table. The
``Event``/``MomentDesign`` machinery below captures that once; the main
average-effect routes, the quasi-experimental cells, and the bootstrap all
replay it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from .data import Dataset, Mode, split_folds, validate
from .errors import (
    DataError,
    IdentificationError,
    IrrelevantRSV,
    Unsupported,
    ZeroCount,
)
from .moments import MarginalCounts, default_reference
from .predict import PredictorSet, fit_predictors
from .represent import RepresentationFit, naive_representation, theta_init as _theta_init_op

__all__ = [
    "Event",
    "MomentDesign",
    "ate_design",
    "complete_arm_design",
    "CellFit",
    "CellState",
    "fit_cell",
    "build_state",
    "ratio_from_state",
    "ratio_estimate",
    "EstimateConfig",
    "EstimateResult",
    "AnalyticVariance",
    "estimate_ate",
    "bootstrap_ci",
    "analytic_variance",
    "canonical_representation",
]

IRRELEVANCE_SCALE = 1e-3
COND_LIMIT = 1e12


def canonical_representation(h: np.ndarray) -> np.ndarray:
    """Scale-canonical form of a representation.

    Max-normalizes and snaps to float32 resolution, so any exact rescaling
    h -> a*h maps to the identical canonical array and the downstream ratio
    is bit-for-bit scale invariant. The snap changes the representation by
    at most 2^-24 relative, far below sampling noise, and validity never
    depended on the representation's values anyway.
    """
    h = np.asarray(h, dtype=np.float64)
    m = float(np.max(np.abs(h))) if h.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return h
    return np.float32(h / m).astype(np.float64)


# -- event machinery ---------------------------------------------------------


@dataclass(frozen=True)
class Event:
    """One exclusive unit-level event entering a moment system.

    ``e_coef``/``o_coef`` are its loadings in the treatment-side and
    outcome-side contrasts; ``indicate`` evaluates the event on dataset
    rows and ``predict`` gives its predicted probability from features.
    """

    name: str
    e_coef: float
    o_coef: np.ndarray
    indicate: Callable[[Dataset, np.ndarray], np.ndarray]
    predict: Callable[[PredictorSet, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MomentDesign:
    """A full moment system: events plus the contrast dimension."""

    events: tuple
    dim: int  # length of the outcome-side contrast (K-1)

    @property
    def o_matrix(self) -> np.ndarray:
        return np.stack([ev.o_coef for ev in self.events])  # (m, dim)

    @property
    def e_vector(self) -> np.ndarray:
        return np.array([ev.e_coef for ev in self.events])  # (m,)


def _unit_vec(dim: int, idx: int) -> np.ndarray:
    v = np.zeros(dim)
    v[idx] = 1.0
    return v


def ate_design(k: int, reference: int) -> MomentDesign:
    """Moment system for the no-direct-effects route (incomplete cases)."""
    comps = [j for j in range(k) if j != reference]
    dim = k - 1
    events = [
        Event(
            "d1e",
            1.0,
            np.zeros(dim),
            lambda ds, m: ds.has_e[m] & (ds.treatment[m] == 1),
            lambda ps, X: ps.prob_d(X) * ps.prob_e(X),
        ),
        Event(
            "d0e",
            -1.0,
            np.zeros(dim),
            lambda ds, m: ds.has_e[m] & (ds.treatment[m] == 0),
            lambda ps, X: (1.0 - ps.prob_d(X)) * ps.prob_e(X),
        ),
    ]
    for idx, j in enumerate(comps):
        events.append(
            Event(
                f"y{j}o",
                0.0,
                _unit_vec(dim, idx),
                lambda ds, m, j=j: ds.has_o[m] & (ds.outcome[m] == j),
                lambda ps, X, j=j: ps.prob_y(X)[:, j] * ps.prob_o(X),
            )
        )
    events.append(
        Event(
            f"y{reference}o",
            0.0,
            -np.ones(dim),
            lambda ds, m, j=reference: ds.has_o[m] & (ds.outcome[m] == j),
            lambda ps, X, j=reference: ps.prob_y(X)[:, j] * ps.prob_o(X),
        )
    )
    return MomentDesign(tuple(events), dim)


def complete_arm_design(k: int, reference: int, d: int) -> MomentDesign:
    """Arm-specific moment system for the direct-effects route.

    Identifies the average potential outcome of arm ``d``; the reference
    observational event is shared between the two contrast sides.
    """
    comps = [j for j in range(k) if j != reference]
    dim = k - 1

    def p_arm(ps, X):
        pd = ps.prob_d(X)
        return pd if d == 1 else 1.0 - pd

    def p_arm_obs(ps, X):
        pd = ps.prob_d_obs(X)
        return pd if d == 1 else 1.0 - pd

    events = [
        Event(
            f"d{d}e",
            1.0,
            np.zeros(dim),
            lambda ds, m: ds.has_e[m] & (ds.treatment[m] == d),
            lambda ps, X: p_arm(ps, X) * ps.prob_e(X),
        )
    ]
    for idx, j in enumerate(comps):
        events.append(
            Event(
                f"y{j}d{d}o",
                0.0,
                _unit_vec(dim, idx),
                lambda ds, m, j=j: ds.has_o[m]
                & (ds.outcome[m] == j)
                & (ds.treatment[m] == d),
                lambda ps, X, j=j: ps.prob_y_arm(X, d)[:, j]
                * p_arm_obs(ps, X)
                * ps.prob_o(X),
            )
        )
    events.append(
        Event(
            f"y{reference}d{d}o",
            -1.0,
            -np.ones(dim),
            lambda ds, m, j=reference: ds.has_o[m]
            & (ds.outcome[m] == j)
            & (ds.treatment[m] == d),
            lambda ps, X, j=reference: ps.prob_y_arm(X, d)[:, j]
            * p_arm_obs(ps, X)
            * ps.prob_o(X),
        )
    )
    return MomentDesign(tuple(events), dim)


# -- cell fitting (training side) ---------------------------------------------


@dataclass
class CellFit:
    """A trained moment cell: counted probabilities, initial estimate, and
    the frozen learned-representation function."""

    design: MomentDesign
    probs: np.ndarray  # (m,) training-fold event probabilities
    theta_init: np.ndarray  # (dim,)
    floor_value: float
    predictors: PredictorSet

    def plug_ins(self, X: np.ndarray):
        """(ce, co, sigma2) evaluated at feature rows under theta_init."""
        preds = np.column_stack([ev.predict(self.predictors, X) for ev in self.design.events])
        e_vec = self.design.e_vector
        o_mat = self.design.o_matrix
        ce = preds @ (e_vec / self.probs)
        co = preds @ (o_mat / self.probs[:, None])
        coef = e_vec - o_mat @ self.theta_init  # residual loadings per event
        s2 = preds @ (coef**2 / self.probs**2)
        return ce, co, s2

    def h_values(self, X: np.ndarray) -> np.ndarray:
        _, co, s2 = self.plug_ins(X)
        s2 = np.maximum(s2, self.floor_value)
        return co / s2[:, None]


def _event_probs(design: MomentDesign, ds: Dataset, mask: np.ndarray) -> np.ndarray:
    inds = np.column_stack([ev.indicate(ds, mask) for ev in design.events])
    return inds.mean(axis=0)


def fit_cell(
    design: MomentDesign,
    ds: Dataset,
    train_mask: np.ndarray,
    ps: PredictorSet,
    sigma_floor_rel: float = 1e-8,
    X: Optional[np.ndarray] = None,
) -> CellFit:
    """Train one moment cell on a fold: count, initialize, learn the weights."""
    probs = _event_probs(design, ds, train_mask)
    if np.any(probs <= 0.0):
        bad = design.events[int(np.argmin(probs))].name
        raise ZeroCount(f"event {bad} has zero training-fold probability")
    if X is None:
        X = ds.rsv[train_mask]
    preds = np.column_stack([ev.predict(ps, X) for ev in design.events])
    e_vec = design.e_vector
    o_mat = design.o_matrix
    ce = preds @ (e_vec / probs)
    co = preds @ (o_mat / probs[:, None])
    t0 = _theta_init_op(ce, co)
    coef = e_vec - o_mat @ t0
    s2 = preds @ (coef**2 / probs**2)
    floor_value = float(sigma_floor_rel * np.median(s2))
    return CellFit(
        design=design,
        probs=probs,
        theta_init=t0,
        floor_value=floor_value,
        predictors=ps,
    )


# -- cell evaluation (test side) ----------------------------------------------


@dataclass
class CellState:
    """Everything needed to recompute a cell estimate on resampled rows."""

    indicators: np.ndarray  # (n_test, m) float 0/1
    h: np.ndarray  # (n_test, dim) canonical representation values
    e_vector: np.ndarray
    o_matrix: np.ndarray
    event_names: tuple

    @property
    def n(self) -> int:
        return self.indicators.shape[0]


def build_state(
    cell: CellFit, ds: Dataset, test_mask: np.ndarray, X: Optional[np.ndarray] = None
) -> CellState:
    if X is None:
        X = ds.rsv[test_mask]
    h = canonical_representation(cell.h_values(X))
    inds = np.column_stack(
        [ev.indicate(ds, test_mask).astype(np.float64) for ev in cell.design.events]
    )
    return CellState(
        indicators=inds,
        h=h,
        e_vector=cell.design.e_vector,
        o_matrix=cell.design.o_matrix,
        event_names=tuple(ev.name for ev in cell.design.events),
    )


def state_from_h(design: MomentDesign, ds: Dataset, test_mask: np.ndarray, h: np.ndarray) -> CellState:
    """Test-side state for an externally supplied representation."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    return CellState(
        indicators=np.column_stack(
            [ev.indicate(ds, test_mask).astype(np.float64) for ev in design.events]
        ),
        h=canonical_representation(h),
        e_vector=design.e_vector,
        o_matrix=design.o_matrix,
        event_names=tuple(ev.name for ev in design.events),
    )


def ratio_terms(state: CellState, sel: Optional[np.ndarray] = None):
    """Numerator and denominator of the cell ratio on a row selection.

    Returns ``(num (dim,), den (dim, dim), n, de, do)``; the estimate solves
    ``den @ theta = num``. Event probabilities are recounted on the
    selection, matching the counting estimators of the point estimate.
    """
    inds = state.indicators if sel is None else state.indicators[sel]
    h = state.h if sel is None else state.h[sel]
    n = inds.shape[0]
    probs = inds.mean(axis=0)
    active = (np.abs(state.e_vector) > 0) | (np.abs(state.o_matrix).sum(axis=1) > 0)
    if np.any(probs[active] <= 0.0):
        bad = state.event_names[int(np.argmin(np.where(active, probs, np.inf)))]
        raise ZeroCount(f"event {bad} has zero probability in this fold")
    de = inds @ (state.e_vector / probs)
    do = inds @ (state.o_matrix / probs[:, None])
    num = h.T @ de / n
    den = h.T @ do / n
    return num, den, n, de, do


def _solve_ratio(
    num: np.ndarray,
    den: np.ndarray,
    h: np.ndarray,
    do: np.ndarray,
    n: int,
    irrelevance_scale: float,
) -> np.ndarray:
    dim = den.shape[0]
    if dim == 1:
        tol = (
            irrelevance_scale
            * float(np.std(h[:, 0]))
            * float(np.std(do[:, 0]))
            / np.sqrt(n)
        )
        # rounding guard: a denominator that is zero in exact arithmetic
        # (constant representation) accumulates O(sqrt(n) * eps) noise
        scale = float(np.mean(np.abs(do[:, 0]))) * float(np.max(np.abs(h))) if n else 0.0
        tol = max(tol, 1e-11 * scale * np.sqrt(n))
        if abs(float(den[0, 0])) <= tol:
            raise IrrelevantRSV(
                "outcome-variation denominator is indistinguishable from zero; "
                "the features carry no usable outcome signal"
            )
        return np.array([float(num[0]) / float(den[0, 0])])
    if not np.all(np.isfinite(den)) or np.linalg.cond(den) > COND_LIMIT:
        raise IrrelevantRSV("outcome-variation matrix is numerically singular")
    return np.linalg.solve(den, num)


def ratio_from_state(
    state: CellState,
    sel: Optional[np.ndarray] = None,
    irrelevance_scale: float = IRRELEVANCE_SCALE,
) -> np.ndarray:
    num, den, n, _, do = ratio_terms(state, sel)
    h = state.h if sel is None else state.h[sel]
    return _solve_ratio(num, den, h, do, n, irrelevance_scale)


def ratio_estimate(
    ds: Dataset,
    test_mask: np.ndarray,
    rep: Union[RepresentationFit, np.ndarray],
    counts: Optional[MarginalCounts] = None,
    reference: Optional[int] = None,
    irrelevance_scale: float = IRRELEVANCE_SCALE,
) -> np.ndarray:
    """Causal contrast on a test fold from a fitted or supplied representation.

    ``rep`` is either a learned representation (evaluated on the fold's
    features) or a per-unit value array aligned with the fold. Marginal
    probabilities are recounted on the test fold; ``counts`` only fixes the
    outcome reference category when provided. Scale of the representation is
    quotiented out exactly (see :func:`canonical_representation`).
    """
    ref = (
        counts.reference
        if counts is not None
        else (default_reference(ds.k_outcomes) if reference is None else reference)
    )
    design = ate_design(ds.k_outcomes, ref)
    if isinstance(rep, RepresentationFit):
        h = rep.values_for(ds.rsv[test_mask])
    else:
        h = rep
    state = state_from_h(design, ds, test_mask, h)
    return ratio_from_state(state, irrelevance_scale=irrelevance_scale)


# -- configuration and results -------------------------------------------------


@dataclass
class EstimateConfig:
    """Knobs for :func:`estimate_ate`; echoed into every result."""

    n_folds: int = 2
    predictor: str = "logistic"
    class_weights: Optional[Sequence[float]] = None
    clip: float = 0.01
    bootstrap: int = 1000
    alpha: float = 0.10
    seed: int = 0
    cluster: bool = True
    sigma_floor_rel: float = 1e-8
    penalty_scale: float = 1e-3
    reference: Optional[int] = None
    irrelevance_scale: float = IRRELEVANCE_SCALE
    representation: Union[str, np.ndarray] = "learned"
    whole_pipeline_bootstrap: bool = False

    def to_dict(self) -> dict:
        d = {}
        for k, v in self.__dict__.items():
            if isinstance(v, np.ndarray):
                d[k] = "custom-array"
            elif isinstance(v, (list, tuple)):
                d[k] = list(v)
            else:
                d[k] = v
        return d


@dataclass
class EstimateResult:
    """Point estimate with inference and provenance."""

    theta_hat: float
    theta_vec: np.ndarray
    se: float
    ci_low: float
    ci_high: float
    per_stratum: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "theta_vec": list(map(float, np.atleast_1d(self.theta_vec))),
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "per_stratum": None
            if self.per_stratum is None
            else {
                str(k): {"theta": float(v[0]), "n": int(v[1])}
                for k, v in self.per_stratum.items()
            },
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=str)

    def csv_row(self) -> dict:
        return {
            "theta_hat": repr(self.theta_hat),
            "se": repr(self.se),
            "ci_low": repr(self.ci_low),
            "ci_high": repr(self.ci_high),
        }


@dataclass
class AnalyticVariance:
    """Delta-method variance pieces for the binary, covariate-free case."""

    v_vec: np.ndarray  # (8,)
    sigma_mat: np.ndarray  # (8, 8)
    b_moments: np.ndarray  # (8,)
    variance: float  # unknown-counts asymptotic variance of sqrt(n)(theta_hat - theta)
    variance_known: float  # known-counts analogue
    n: int

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance / self.n))

    @property
    def se_known(self) -> float:
        return float(np.sqrt(self.variance_known / self.n))


# -- orchestration -----------------------------------------------------------


def _stratum_weights(ds: Dataset) -> dict:
    """Experimental-sample stratum shares on the full dataset."""
    labels = ds.covariate
    e_mask = ds.has_e
    xs = sorted({v for v in labels[e_mask] if v is not None})
    total = sum(int(np.sum(e_mask & (labels == x))) for x in xs)
    if total == 0:
        raise ZeroCount("no experimental units carry a covariate label")
    return {x: np.sum(e_mask & (labels == x)) / total for x in xs}


def _scalar_from_vec(theta_vec: np.ndarray, values: np.ndarray, reference: int) -> float:
    """Reduce a categorical contrast vector to the mean-outcome scale.

    The contrast components are differences of category probabilities, so
    the complement category moves by minus their sum; the scalar effect is
    sum_j (v_j - v_ref) * theta_j.
    """
    k = len(values)
    comps = [j for j in range(k) if j != reference]
    return float(sum((values[j] - values[reference]) * theta_vec[i] for i, j in enumerate(comps)))


@dataclass
class _FoldPieces:
    """Per-fold, per-stratum states and the fixed pieces used to combine them."""

    states: dict  # stratum -> CellState (incomplete) or (CellState, CellState) complete
    weight: float  # fold weight (test-fold share)
    n_test: int
    stratum_rows: dict  # stratum -> row positions within the test fold
    pos_in_stratum: np.ndarray  # per test row, its index within its stratum
    stratum_of_row: np.ndarray  # per test row, its stratum key index (into `order`)
    order: list  # stratum keys in a fixed order
    test_e_flags: np.ndarray  # per test row, e-membership (for stratum reweighting)
    clusters: Optional[np.ndarray]  # cluster labels on the test fold
    train_e_counts: dict  # stratum -> training-fold e-member count (for weights)


def _prepare(ds: Dataset, config: EstimateConfig):
    problems = validate(ds)
    if problems:
        raise DataError("; ".join(problems[:5]))
    if ds.mode not in (Mode.INCOMPLETE, Mode.COMPLETE):
        raise Unsupported(f"estimate_ate supports incomplete/complete modes, not {ds.mode}")
    if ds.k_outcomes < 2:
        raise Unsupported("discretize a continuous outcome before estimation")
    ref = default_reference(ds.k_outcomes) if config.reference is None else config.reference
    fold_ids = split_folds(ds, config.n_folds, config.seed)
    return ref, fold_ids


def _fit_fold(
    ds: Dataset,
    config: EstimateConfig,
    ref: int,
    train_mask: np.ndarray,
    test_mask: np.ndarray,
    fold_idx: int,
):
    """Train on one fold's complement; freeze test-side states."""
    complete = ds.mode == Mode.COMPLETE
    strata = [None]
    if ds.covariate is not None:
        strata = sorted({v for v in ds.covariate if v is not None})

    states = {}
    stratum_rows = {}
    train_e_counts = {}
    test_rows = np.flatnonzero(test_mask)
    for x in strata:
        if x is None:
            tr_mask = train_mask
            te_mask = test_mask
            rows = np.arange(test_rows.size)
        else:
            in_x = ds.covariate == x
            tr_mask = train_mask & in_x
            te_mask = test_mask & in_x
            rows = np.flatnonzero(in_x[test_mask])
        if not tr_mask.any() or not te_mask.any():
            raise ZeroCount(f"fold {fold_idx}: stratum {x!r} missing from a fold")
        try:
            ps = fit_predictors(
                ds,
                kind=config.predictor,
                class_weights=config.class_weights,
                clip=config.clip,
                seed=config.seed + 7919 * fold_idx,
                mask=tr_mask,
                penalty_scale=config.penalty_scale,
                complete=complete,
            )
            if complete:
                pair = []
                for d in (0, 1):
                    design = complete_arm_design(ds.k_outcomes, ref, d)
                    cell = fit_cell(design, ds, tr_mask, ps, config.sigma_floor_rel)
                    pair.append(build_state(cell, ds, te_mask))
                states[x] = tuple(pair)
            else:
                design = ate_design(ds.k_outcomes, ref)
                if isinstance(config.representation, str) and config.representation == "learned":
                    cell = fit_cell(design, ds, tr_mask, ps, config.sigma_floor_rel)
                    states[x] = build_state(cell, ds, te_mask)
                else:
                    if isinstance(config.representation, np.ndarray):
                        h = config.representation[te_mask]
                    else:
                        h = naive_representation(
                            config.representation, ps=ps, X=ds.rsv[te_mask], reference=ref
                        )
                    states[x] = state_from_h(design, ds, te_mask, h)
        except (IdentificationError, DataError) as exc:
            raise type(exc)(f"fold {fold_idx}, stratum {x!r}: {exc}") from exc
        stratum_rows[x] = rows
        train_e_counts[x] = int(np.sum(ds.has_e[tr_mask]))

    n_test = int(test_mask.sum())
    order = list(states.keys())
    pos_in_stratum = np.zeros(n_test, dtype=np.int64)
    stratum_of_row = np.zeros(n_test, dtype=np.int64)
    for xi, x in enumerate(order):
        rows = stratum_rows[x]
        pos_in_stratum[rows] = np.arange(rows.size)
        stratum_of_row[rows] = xi
    clusters = ds.cluster[test_mask] if (ds.cluster is not None and config.cluster) else None
    return _FoldPieces(
        states=states,
        weight=float(n_test),
        n_test=n_test,
        stratum_rows=stratum_rows,
        pos_in_stratum=pos_in_stratum,
        stratum_of_row=stratum_of_row,
        order=order,
        test_e_flags=ds.has_e[test_mask].copy(),
        clusters=clusters,
        train_e_counts=train_e_counts,
    )


def _cell_value(state_or_pair, subsel, irrelevance_scale) -> np.ndarray:
    if isinstance(state_or_pair, tuple):
        mu0 = ratio_from_state(state_or_pair[0], subsel, irrelevance_scale)
        mu1 = ratio_from_state(state_or_pair[1], subsel, irrelevance_scale)
        return mu1 - mu0
    return ratio_from_state(state_or_pair, subsel, irrelevance_scale)


def _fold_theta(
    pieces: _FoldPieces,
    config: EstimateConfig,
    stratum_w: Optional[dict],
    sel: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Contrast vector for one fold, optionally on a resampled row selection.

    With covariate strata, per-stratum estimates are averaged with
    experimental-share weights; under resampling the weights are recounted
    from the fixed training part plus the selected test rows.
    """
    if pieces.order == [None]:
        return _cell_value(pieces.states[None], sel, config.irrelevance_scale)

    vals = {}
    sel_e_counts = {}
    for xi, x in enumerate(pieces.order):
        if sel is None:
            subsel = None
        else:
            rows = sel[pieces.stratum_of_row[sel] == xi]
            if rows.size == 0:
                raise ZeroCount(f"stratum {x!r} empty in a bootstrap replicate")
            subsel = pieces.pos_in_stratum[rows]
            sel_e_counts[x] = int(pieces.test_e_flags[rows].sum())
        vals[x] = _cell_value(pieces.states[x], subsel, config.irrelevance_scale)

    if sel is None:
        weights = stratum_w
    else:
        counts = {
            x: pieces.train_e_counts[x] + sel_e_counts.get(x, 0) for x in pieces.order
        }
        total = sum(counts.values())
        if total == 0:
            raise ZeroCount("no experimental units in a bootstrap replicate")
        weights = {x: c / total for x, c in counts.items()}
    return np.asarray(sum(np.asarray(vals[x]) * weights[x] for x in vals))


def estimate_ate(ds: Dataset, config: Optional[EstimateConfig] = None) -> EstimateResult:
    """Cross-fitted average-effect estimate with bootstrap inference.

    Folds are split deterministically (cluster-respecting); each fold's
    representation is learned on its complement and frozen; estimates are
    recombined with test-fold-size weights. With covariate strata the
    whole pipeline runs within each stratum and stratum estimates are
    averaged with experimental-sample shares. In complete mode the two
    arm-specific mean outcomes are estimated and differenced. Multi-category
    outcomes reduce to the mean-outcome scale through the dataset's value
    map.
    """
    config = config or EstimateConfig()
    ref, fold_ids = _prepare(ds, config)
    stratum_w = _stratum_weights(ds) if ds.covariate is not None else None

    pieces = []
    for f in range(config.n_folds):
        test_mask = fold_ids == f
        train_mask = ~test_mask
        pieces.append(_fit_fold(ds, config, ref, train_mask, test_mask, f))
    total_w = sum(p.weight for p in pieces)
    for p in pieces:
        p.weight /= total_w

    fold_vecs = [_fold_theta(p, config, stratum_w) for p in pieces]
    theta_vec = sum(w.weight * v for w, v in zip(pieces, fold_vecs))

    values = (
        np.asarray(ds.value_map, dtype=np.float64)
        if ds.value_map is not None
        else np.arange(ds.k_outcomes, dtype=np.float64)
    )
    theta_hat = _scalar_from_vec(theta_vec, values, ref)

    per_stratum = None
    if ds.covariate is not None:
        per_stratum = {}
        for x in stratum_w:
            vx = sum(
                p.weight
                * np.asarray(_cell_value(p.states[x], None, config.irrelevance_scale))
                for p in pieces
            )
            n_x = int(np.sum(ds.covariate == x))
            per_stratum[x] = (_scalar_from_vec(vx, values, ref), n_x)

    se = float("nan")
    ci_low = ci_high = float("nan")
    degenerate = False
    n_failed = 0
    if config.bootstrap and config.bootstrap > 0:
        if config.whole_pipeline_bootstrap:
            se, ci_low, ci_high, degenerate, n_failed = _pipeline_bootstrap(
                ds, config, theta_hat
            )
        else:
            se, ci_low, ci_high, degenerate, n_failed = _bootstrap(
                pieces, ds, config, stratum_w, theta_hat, values, ref
            )

    meta = {
        "seed": config.seed,
        "n_folds": config.n_folds,
        "predictor": config.predictor,
        "mode": ds.mode.value,
        "k_outcomes": ds.k_outcomes,
        "reference": ref,
        "n": ds.n,
        "n_e": int(ds.has_e.sum()),
        "n_o": int(ds.has_o.sum()),
        "alpha": config.alpha,
        "bootstrap": config.bootstrap,
        "bootstrap_degenerate": degenerate,
        "bootstrap_failed": n_failed,
        "fold_estimates": [float(_scalar_from_vec(v, values, ref)) for v in fold_vecs],
        "config": config.to_dict(),
    }
    if ds.value_map is not None:
        meta["value_map"] = list(map(float, ds.value_map))
    if "bias_bound" in ds.meta:
        meta["bias_bound"] = ds.meta["bias_bound"]
    return EstimateResult(
        theta_hat=theta_hat,
        theta_vec=theta_vec,
        se=se,
        ci_low=ci_low,
        ci_high=ci_high,
        per_stratum=per_stratum,
        meta=meta,
    )


def _resample_indices(rng, n, clusters):
    if clusters is None:
        return rng.integers(0, n, n)
    labels, inverse = np.unique(clusters, return_inverse=True)
    groups = [np.flatnonzero(inverse == g) for g in range(len(labels))]
    picks = rng.integers(0, len(groups), len(groups))
    return np.concatenate([groups[p] for p in picks])


def _bootstrap(pieces, ds, config, stratum_w, theta_hat, values, ref):
    """Frozen-representation bootstrap over test folds."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xB007]))
    B = config.bootstrap
    reps = np.full(B, np.nan)
    for b in range(B):
        try:
            vec = 0.0
            for p in pieces:
                sel = _resample_indices(rng, p.n_test, p.clusters)
                vec = vec + p.weight * _fold_theta(p, config, stratum_w, sel)
            reps[b] = _scalar_from_vec(np.asarray(vec), values, ref)
        except IdentificationError:
            continue
    ok = np.isfinite(reps)
    n_failed = int(B - ok.sum())
    degenerate = n_failed > 0.1 * B
    if ok.sum() < 2:
        return float("nan"), float("nan"), float("nan"), True, n_failed
    se = float(np.std(reps[ok], ddof=1))
    z = float(norm.ppf(1.0 - config.alpha / 2.0))
    return se, theta_hat - z * se, theta_hat + z * se, degenerate, n_failed


def _take_rows(ds: Dataset, idx: np.ndarray) -> Dataset:
    pick = lambda a: None if a is None else a[idx]
    return Dataset(
        has_e=ds.has_e[idx].copy(),
        has_o=ds.has_o[idx].copy(),
        rsv=ds.rsv[idx].copy(),
        k_outcomes=ds.k_outcomes,
        treatment=ds.treatment[idx].copy(),
        outcome=ds.outcome[idx].copy(),
        covariate=pick(ds.covariate),
        cluster=pick(ds.cluster),
        instrument=pick(ds.instrument),
        period=pick(ds.period),
        mode=ds.mode,
        value_map=ds.value_map,
        meta=dict(ds.meta),
    )


def _pipeline_bootstrap(ds: Dataset, config: EstimateConfig, theta_hat: float):
    """Sensitivity variant: re-run the entire pipeline per resample.

    Unlike the default (frozen-representation) bootstrap, each replicate
    redraws the full dataset (clusters when present), resplits folds, and
    refits predictors and representations. Much slower; offered to probe
    whether representation-learning noise materially widens the interval.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xF1FE]))
    inner = replace(config, bootstrap=0, whole_pipeline_bootstrap=False)
    B = config.bootstrap
    reps = np.full(B, np.nan)
    clusters = ds.cluster if (ds.cluster is not None and config.cluster) else None
    for b in range(B):
        idx = _resample_indices(rng, ds.n, clusters)
        try:
            reps[b] = estimate_ate(
                _take_rows(ds, idx), replace(inner, seed=config.seed + 1 + b)
            ).theta_hat
        except (IdentificationError, DataError):
            continue
    ok = np.isfinite(reps)
    n_failed = int(B - ok.sum())
    degenerate = n_failed > 0.1 * B
    if ok.sum() < 2:
        return float("nan"), float("nan"), float("nan"), True, n_failed
    se = float(np.std(reps[ok], ddof=1))
    z = float(norm.ppf(1.0 - config.alpha / 2.0))
    return se, theta_hat - z * se, theta_hat + z * se, degenerate, n_failed


def bootstrap_ci(
    ds: Dataset,
    config: Optional[EstimateConfig] = None,
) -> tuple[float, tuple[float, float]]:
    """Standard error and normal-quantile CI from the frozen-representation
    bootstrap (convenience wrapper returning just the inference pieces)."""
    config = config or EstimateConfig()
    if config.bootstrap <= 0:
        config = replace(config, bootstrap=1000)
    res = estimate_ate(ds, config)
    return res.se, (res.ci_low, res.ci_high)


def analytic_variance(
    ds: Dataset,
    test_mask: np.ndarray,
    rep: Union[RepresentationFit, np.ndarray],
    theta_hat: float,
) -> AnalyticVariance:
    """Asymptotic variance for the binary, covariate-free case.

    Returns both the known-counts plug-in variance (residual second moment
    over the squared denominator) and the unknown-counts delta-method
    variance, which propagates the estimation error of the four counted
    marginals through an eight-dimensional moment vector.
    """
    if ds.k_outcomes != 2:
        raise Unsupported("analytic variance requires binary outcomes")
    if ds.covariate is not None:
        raise Unsupported("analytic variance requires no covariate strata (bootstrap instead)")
    if isinstance(rep, RepresentationFit):
        h = rep.values_for(ds.rsv[test_mask])
    else:
        h = np.asarray(rep, dtype=np.float64)
        if h.ndim == 1:
            h = h[:, None]
    z = canonical_representation(h)[:, 0]

    e = ds.has_e[test_mask]
    o = ds.has_o[test_mask]
    d = ds.treatment[test_mask]
    y = ds.outcome[test_mask]
    i_d1e = (e & (d == 1)).astype(np.float64)
    i_d0e = (e & (d == 0)).astype(np.float64)
    i_y1o = (o & (y == 1)).astype(np.float64)
    i_y0o = (o & (y == 0)).astype(np.float64)
    B = np.column_stack(
        [i_d1e * z, i_d0e * z, i_y1o * z, i_y0o * z, i_d1e, i_d0e, i_y1o, i_y0o]
    )
    n = B.shape[0]
    b = B.mean(axis=0)
    if min(b[4:]) <= 0:
        raise ZeroCount("a marginal count is zero on the test fold")
    t = theta_hat
    v = np.array(
        [
            1.0 / b[4],
            -1.0 / b[5],
            -t / b[6],
            t / b[7],
            -b[0] / b[4] ** 2,
            b[1] / b[5] ** 2,
            t * b[2] / b[6] ** 2,
            -t * b[3] / b[7] ** 2,
        ]
    )
    sigma = np.cov(B, rowvar=False, ddof=1)
    de = i_d1e / b[4] - i_d0e / b[5]
    do = i_y1o / b[6] - i_y0o / b[7]
    den = float(np.mean(do * z))
    if den == 0.0:
        raise IrrelevantRSV("denominator is exactly zero")
    V = float(v @ sigma @ v)
    resid = de - t * do
    known = float(np.mean(resid**2 * z**2)) / den**2
    return AnalyticVariance(
        v_vec=v,
        sigma_mat=sigma,
        b_moments=b,
        variance=V / den**2,
        variance_known=known,
        n=n,
    )
