"""Marginal event counts and per-unit treatment/outcome variation statistics.

The estimator's raw material is a pair of inverse-probability-weighted
indicator contrasts per unit: a treatment contrast built from experimental
membership and an outcome contrast built from observational membership.
Their conditional-on-features ratio identifies the treatment effect, so the
only nuisances at this layer are the marginal event probabilities, estimated
by simple counts within a fold (optionally within covariate strata).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, UnitRecord
from .errors import Unsupported, ZeroCount

__all__ = [
    "MarginalCounts",
    "VariationValues",
    "marginal_counts",
    "variation",
    "variation_complete",
    "sigma2_expansion",
    "default_reference",
]


def default_reference(k: int) -> int:
    """Reference outcome category: 0 in the binary case, K-1 otherwise.

    The binary convention keeps the lone contrast component on category 1
    (so a positive effect on Pr(Y=1) is a positive component); for K > 2 the
    highest index is the pivot.
    """
    return 0 if k == 2 else k - 1


@dataclass(frozen=True)
class MarginalCounts:
    """Empirical event probabilities within one fold (or fold stratum).

    ``p_yo[k]`` is the share of fold units that are o-members with outcome
    category ``k``. ``p_ydo[k][d]`` (complete mode only) conditions the
    observational events on the treatment arm. All shares are relative to
    the full fold (or full within-stratum) size, matching the counting
    estimators used throughout.
    """

    p_d1e: float
    p_d0e: float
    p_yo: np.ndarray
    k_outcomes: int
    reference: int
    n: int
    p_ydo: Optional[np.ndarray] = None  # shape (K, 2)
    by_stratum: Optional[dict] = None

    def require_positive(self, complete: bool = False) -> None:
        needed = [self.p_d1e, self.p_d0e] + list(self.p_yo)
        if complete:
            if self.p_ydo is None:
                raise Unsupported("complete-mode counts were not requested")
            needed += list(np.ravel(self.p_ydo))
        if min(needed) <= 0.0:
            raise ZeroCount(
                "a marginal event has zero empirical probability in this fold/stratum"
            )


@dataclass(frozen=True)
class VariationValues:
    """Per-unit variation statistics.

    ``delta_e`` is the treatment contrast (scalar); ``delta_o`` the outcome
    contrast, one component per non-reference category (length K-1, a plain
    scalar-valued length-1 vector in the binary case).
    """

    delta_e: float
    delta_o: np.ndarray


def _masks(ds: Dataset, fold: Optional[np.ndarray]):
    if fold is None:
        return np.ones(ds.n, dtype=bool)
    fold = np.asarray(fold)
    if fold.dtype == bool:
        return fold
    raise TypeError("fold selector must be a boolean mask or None")


def marginal_counts(
    ds: Dataset,
    fold: Optional[np.ndarray] = None,
    stratify: bool = False,
    reference: Optional[int] = None,
    complete: bool = False,
) -> MarginalCounts:
    """Count marginal event probabilities on the selected fold.

    Parameters
    ----------
    ds : Dataset
    fold : boolean mask or None
        Units to count over (None = all).
    stratify : bool
        Additionally compute within-stratum counts for each covariate value
        (stored in ``by_stratum``; the top-level counts stay unconditional).
    reference : int, optional
        Reference outcome category (default: :func:`default_reference`).
    complete : bool
        Also count the per-arm observational events ``p_ydo``.

    Raises
    ------
    ZeroCount
        If any probability required by the requested mode is zero.
    """
    mask = _masks(ds, fold)
    n = int(mask.sum())
    if n == 0:
        raise ZeroCount("empty fold")
    k = ds.k_outcomes
    if k < 2:
        raise Unsupported("marginal counts need categorical outcomes (K >= 2)")
    ref = default_reference(k) if reference is None else reference

    def _count(sub: np.ndarray, by_stratum=None) -> MarginalCounts:
        m = int(sub.sum())
        if m == 0:
            raise ZeroCount("empty stratum")
        e = ds.has_e[sub]
        o = ds.has_o[sub]
        d = ds.treatment[sub]
        y = ds.outcome[sub]
        p_d1e = float(np.mean(e & (d == 1)))
        p_d0e = float(np.mean(e & (d == 0)))
        p_yo = np.array([float(np.mean(o & (y == j))) for j in range(k)])
        p_ydo = None
        if complete:
            p_ydo = np.array(
                [
                    [float(np.mean(o & (y == j) & (d == dd))) for dd in (0, 1)]
                    for j in range(k)
                ]
            )
        c = MarginalCounts(
            p_d1e=p_d1e,
            p_d0e=p_d0e,
            p_yo=p_yo,
            k_outcomes=k,
            reference=ref,
            n=m,
            p_ydo=p_ydo,
            by_stratum=by_stratum,
        )
        c.require_positive(complete=complete)
        return c

    by = None
    if stratify:
        if ds.covariate is None:
            raise Unsupported("stratify=True requires a covariate column")
        by = {}
        for x in sorted({v for v in ds.covariate[mask] if v is not None}):
            by[x] = _count(mask & (ds.covariate == x))
    return _count(mask, by_stratum=by)


def variation(unit: UnitRecord, counts: MarginalCounts) -> VariationValues:
    """Treatment and outcome contrasts for one unit.

    Exactly one reciprocal-count term is active per contrast: the treatment
    contrast fires only for e-members, each outcome-contrast component only
    for o-members realizing that component's category (or the reference).
    """
    counts.require_positive()
    k = counts.k_outcomes
    ref = counts.reference
    de = 0.0
    if unit.sample.has_e and unit.treatment is not None:
        de = (
            1.0 / counts.p_d1e if unit.treatment == 1 else -1.0 / counts.p_d0e
        )
    comps = [j for j in range(k) if j != ref]
    do = np.zeros(k - 1)
    if unit.sample.has_o and unit.outcome is not None:
        y = unit.outcome
        for idx, j in enumerate(comps):
            if y == j:
                do[idx] = 1.0 / counts.p_yo[j]
            elif y == ref:
                do[idx] = -1.0 / counts.p_yo[ref]
    return VariationValues(delta_e=de, delta_o=do)


def variation_complete(
    unit: UnitRecord, d: int, counts: MarginalCounts
) -> VariationValues:
    """Arm-specific contrasts for the complete-case (direct effects) route.

    For arm ``d``, the treatment-side contrast pairs the experimental event
    {D=d, e-member} against the observational reference event
    {Y=ref, D=d, o-member}; the outcome-side contrast is the per-arm
    analogue of :func:`variation`.
    """
    counts.require_positive(complete=True)
    k = counts.k_outcomes
    ref = counts.reference
    p_de = counts.p_d1e if d == 1 else counts.p_d0e
    p_ref_d = counts.p_ydo[ref][d]
    de = 0.0
    if unit.sample.has_e and unit.treatment == d:
        de += 1.0 / p_de
    in_arm_obs = unit.sample.has_o and unit.outcome is not None and unit.treatment == d
    if in_arm_obs and unit.outcome == ref:
        de -= 1.0 / p_ref_d
    comps = [j for j in range(k) if j != ref]
    do = np.zeros(k - 1)
    if in_arm_obs:
        y = unit.outcome
        for idx, j in enumerate(comps):
            if y == j:
                do[idx] = 1.0 / counts.p_ydo[j][d]
            elif y == ref:
                do[idx] = -1.0 / p_ref_d
    return VariationValues(delta_e=de, delta_o=do)


def sigma2_expansion(
    delta_e: float,
    delta_o: float,
    theta: float,
    unit: UnitRecord,
    counts: MarginalCounts,
) -> float:
    """Closed-form residual second moment for binary outcomes.

    Because a unit with a single sample membership activates exactly one of
    the four events {D=1,e}, {D=0,e}, {Y=1,o}, {Y=0,o}, the squared residual
    (delta_e - theta * delta_o)**2 collapses to a sum of reciprocal squared
    counts, one indicator each:

        1{D=1,e}/p1e^2 + 1{D=0,e}/p0e^2
        + theta^2 * (1{Y=1,o}/p1o^2 + 1{Y=0,o}/p0o^2).

    Dual-membership units can activate one event on each side, so for them
    the cross term -2*theta*delta_e*delta_o is dropped by this closed form;
    we use it anyway as the variance surrogate, which only costs efficiency,
    never validity, of the downstream estimate.
    """
    if counts.k_outcomes != 2:
        raise Unsupported("closed-form expansion is for binary outcomes")
    counts.require_positive()
    out = 0.0
    if unit.sample.has_e and unit.treatment is not None:
        if unit.treatment == 1:
            out += 1.0 / counts.p_d1e**2
        else:
            out += 1.0 / counts.p_d0e**2
    if unit.sample.has_o and unit.outcome is not None:
        if unit.outcome == 1:
            out += theta**2 / counts.p_yo[1] ** 2
        else:
            out += theta**2 / counts.p_yo[0] ** 2
    return out
