"""Synthetic data-generating processes with known truth, plus an exact
finite-support population oracle.

The oracle enumerates the joint distribution of (sample, treatment, outcome,
feature) on a finite feature support and evaluates every population object
the estimators target: the direct potential-outcome effect, the
moment-ratio form of the same effect (their equality is the identification
identity, checked exactly), the efficiency-weighted representation, and the
common-practice surrogate target with its bias decomposition.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, Mode
from .errors import InvalidSpec, SupportTooLarge

__all__ = [
    "MissingPattern",
    "DgpSpec",
    "gen_calibrated",
    "gen_adversarial",
    "gen_iv",
    "gen_did",
    "FinitePopulation",
    "OracleResult",
    "population_oracle",
    "adversarial_population",
    "random_finite_population",
    "sample_finite",
]


class MissingPattern(enum.Enum):
    DELETE_TREATED = "delete_treated"
    RANDOM_HALF = "random_half"
    SPLIT = "split"
    NONE = "none"


@dataclass
class DgpSpec:
    """Parameters for the synthetic generators.

    ``theta_shift`` moves the treated outcome probability relative to the
    calibration anchor (true effect = -0.07 + theta_shift); ``a``/``b`` are
    the untreated/treated success probabilities of the adversarial design.
    """

    kind: str = "calibrated"
    n: int = 1000
    theta_shift: float = 0.0
    p0: float = 0.25
    a: float = 0.6
    b: float = 0.2
    rsv_dim: int = 4
    seed: int = 0
    missing_pattern: MissingPattern = MissingPattern.DELETE_TREATED
    rsv_signal: float = 1.0
    stability_shift: float = 0.0
    # quasi-experimental knobs
    complier_share: float = 0.6
    always_share: float = 0.2
    late: float = 0.3
    att: float = 0.2
    drift: float = 0.1
    channel: tuple = (0.2, 0.8)  # Pr(R=1 | Y=0), Pr(R=1 | Y=1)

    def _check_prob(self, value: float, name: str) -> None:
        if not 0.0 < value < 1.0:
            raise InvalidSpec(f"{name}={value} must lie strictly inside (0, 1)")


def _bern(rng, p, size):
    return (rng.random(size) < p).astype(np.int64)


def gen_calibrated(spec: DgpSpec, complete: bool = False) -> Dataset:
    """Binary-outcome design with Gaussian mean-shift features.

    The treatment is a fair coin; the untreated outcome probability is
    ``p0`` and the treated one ``p0 - 0.07 + theta_shift``. Features are
    standard normal with a mean shift of ``rsv_signal`` on the first
    ceil(dim/4) coordinates when the outcome is 1 (a tunable stand-in for
    real sensor embeddings). ``missing_pattern`` controls which units keep
    outcomes; ``stability_shift`` (SPLIT pattern) moves every feature
    coordinate of the observational units to inject a cross-sample
    violation.
    ``complete=True`` keeps the treatment on observational units and marks
    the dataset for the direct-effects route (the design itself has no
    direct effects, so both routes target the same effect).

    Dataset ``meta`` records the true effect and the full label vectors so
    benchmark estimators with complete data can be simulated.
    """
    theta = -0.07 + spec.theta_shift
    p1 = spec.p0 + theta
    spec._check_prob(spec.p0, "p0")
    spec._check_prob(p1, "p0 + theta")
    if spec.rsv_dim < 1 or spec.n < 4:
        raise InvalidSpec("need rsv_dim >= 1 and n >= 4")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    d = _bern(rng, 0.5, n)
    y = np.where(d == 1, _bern(rng, p1, n), _bern(rng, spec.p0, n))
    r = rng.standard_normal((n, spec.rsv_dim))
    k_sig = max(1, spec.rsv_dim // 4)
    r[:, :k_sig] += spec.rsv_signal * y[:, None]

    pat = spec.missing_pattern
    if pat == MissingPattern.DELETE_TREATED:
        has_e = np.ones(n, dtype=bool)
        has_o = d == 0
    elif pat == MissingPattern.RANDOM_HALF:
        has_e = np.ones(n, dtype=bool)
        has_o = rng.random(n) < 0.5
    elif pat == MissingPattern.SPLIT:
        has_e = rng.random(n) < 0.5
        has_o = ~has_e
    elif pat == MissingPattern.NONE:
        has_e = np.ones(n, dtype=bool)
        has_o = np.ones(n, dtype=bool)
    else:
        raise InvalidSpec(f"unknown missing pattern {pat}")
    if pat == MissingPattern.SPLIT and spec.stability_shift != 0.0:
        r[has_o, :] += spec.stability_shift

    treatment = d.copy() if complete else np.where(has_e, d, -1)
    outcome = np.where(has_o, y, -1)
    return Dataset(
        has_e=has_e,
        has_o=has_o,
        rsv=r,
        k_outcomes=2,
        treatment=treatment.astype(np.int64),
        outcome=outcome.astype(np.int64),
        mode=Mode.COMPLETE if complete else Mode.INCOMPLETE,
        meta={
            "kind": "calibrated",
            "theta_true": theta,
            "full_treatment": d,
            "full_outcome": y,
            "pattern": pat.value,
            "seed": spec.seed,
        },
    )


def gen_adversarial(spec: DgpSpec) -> Dataset:
    """Two-point-feature design where the surrogate practice is biased.

    The feature equals the outcome with probability one half and is one
    otherwise, for every unit; samples are split at random and the
    observational sample is untreated. The surrogate target then misses the
    true effect by exactly (a - b) / (a + 1), recorded in ``meta`` next to
    the true effect b - a.
    """
    spec._check_prob(spec.a, "a")
    spec._check_prob(spec.b, "b")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    is_e = rng.random(n) < 0.5
    d = np.where(is_e, _bern(rng, 0.5, n), 0)
    y = np.where(d == 1, _bern(rng, spec.b, n), _bern(rng, spec.a, n))
    coin = rng.random(n) < 0.5
    r = np.where(coin, y, 1).astype(np.float64)[:, None]
    treatment = np.where(is_e, d, 0)  # observational treatments recorded as 0
    outcome = np.where(is_e, -1, y)
    return Dataset(
        has_e=is_e,
        has_o=~is_e,
        rsv=r,
        k_outcomes=2,
        treatment=treatment.astype(np.int64),
        outcome=outcome.astype(np.int64),
        mode=Mode.INCOMPLETE,
        meta={
            "kind": "adversarial",
            "theta_true": spec.b - spec.a,
            "surrogate_bias": (spec.a - spec.b) / (spec.a + 1.0),
            "full_treatment": d,
            "full_outcome": y,
            "seed": spec.seed,
        },
    )


def _channel_draw(rng, y, channel):
    p = np.where(y == 1, channel[1], channel[0])
    return _bern(rng, p, len(y)).astype(np.float64)[:, None]


def gen_iv(spec: DgpSpec) -> Dataset:
    """Imperfect-compliance design with a binary instrument.

    Units are compliers, always-takers, or never-takers; the instrument is
    a fair coin in the quasi-experimental sample. The complier effect (the
    stored truth) is ``late``; cells (d, z) are all populated as long as
    both non-complier shares are positive.
    """
    c, at = spec.complier_share, spec.always_share
    nt = 1.0 - c - at
    for v, nm in ((c, "complier_share"), (at, "always_share"), (nt, "never share")):
        if not 0.0 <= v <= 1.0:
            raise InvalidSpec(f"{nm} out of range")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    is_e = rng.random(n) < 0.5
    u = rng.random(n)
    stratum = np.where(u < c, 0, np.where(u < c + at, 1, 2))  # 0 c, 1 at, 2 nt
    z = _bern(rng, 0.5, n)
    dd = np.where(stratum == 0, z, np.where(stratum == 1, 1, 0))
    p0_by = {0: 0.3, 1: 0.5, 2: 0.35}
    p1_by = {0: 0.3 + spec.late, 1: 0.55, 2: 0.65}
    for v in list(p0_by.values()) + list(p1_by.values()):
        spec._check_prob(v, "stratum outcome probability")
    p0v = np.vectorize(p0_by.get)(stratum)
    p1v = np.vectorize(p1_by.get)(stratum)
    y = np.where(dd == 1, _bern(rng, p1v, n), _bern(rng, p0v, n))
    # observational outcomes redrawn from a free marginal; feature channel shared
    y_obs = _bern(rng, 0.45, n)
    y_final = np.where(is_e, y, y_obs)
    r = _channel_draw(rng, y_final, spec.channel)
    weak = c <= 0.0
    return Dataset(
        has_e=is_e,
        has_o=~is_e,
        rsv=r,
        k_outcomes=2,
        treatment=np.where(is_e, dd, -1).astype(np.int64),
        outcome=np.where(is_e, -1, y_final).astype(np.int64),
        instrument=np.where(is_e, z, -1).astype(np.int64),
        mode=Mode.IV,
        meta={
            "kind": "iv",
            "late_true": spec.late,
            "first_stage": c,
            "weak_instrument": weak,
            "seed": spec.seed,
        },
    )


def gen_did(spec: DgpSpec) -> Dataset:
    """Two-period design with a common drift and a treated-period effect.

    Arms have different untreated baselines (so a naive post-period
    difference is biased) but share the drift; the stored truth is the
    treated-arm effect at the second period. Wide layout: per-period
    features in ``rsv``/``rsv2`` and outcomes in ``outcome``/``outcome2``.
    """
    q1, q0 = 0.3, 0.5
    for v, nm in (
        (q1 + spec.drift, "treated second-period baseline"),
        (q0 + spec.drift, "control second-period baseline"),
        (q1 + spec.drift + spec.att, "treated second-period mean"),
    ):
        spec._check_prob(v, nm)
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    is_e = rng.random(n) < 0.5
    d = _bern(rng, 0.5, n)
    base = np.where(d == 1, q1, q0)
    y1 = _bern(rng, base, n)
    y2_0 = _bern(rng, base + spec.drift, n)
    y2_1 = _bern(rng, np.clip(base + spec.drift + spec.att, 1e-9, 1 - 1e-9), n)
    y2 = np.where(d == 1, y2_1, y2_0)
    # observational panel: free per-period marginals, same feature channels
    o_y1 = _bern(rng, 0.4, n)
    o_y2 = _bern(rng, 0.5, n)
    y1f = np.where(is_e, y1, o_y1)
    y2f = np.where(is_e, y2, o_y2)
    r1 = _channel_draw(rng, y1f, spec.channel)
    r2 = _channel_draw(rng, y2f, spec.channel)
    return Dataset(
        has_e=is_e,
        has_o=~is_e,
        rsv=r1,
        rsv2=r2,
        k_outcomes=2,
        treatment=np.where(is_e, d, -1).astype(np.int64),
        outcome=np.where(is_e, -1, y1f).astype(np.int64),
        outcome2=np.where(is_e, -1, y2f).astype(np.int64),
        mode=Mode.DID,
        meta={"kind": "did", "att_true": spec.att, "seed": spec.seed},
    )


# -- finite-support population oracle -----------------------------------------


@dataclass
class FinitePopulation:
    """Exact population for the two-sample, no-direct-effects model.

    ``py_d[d]`` are the experimental potential-outcome pmfs, ``py_o`` the
    observational outcome pmf, and ``r_given_y`` the shared feature channel
    (stability across samples holds by construction).
    """

    p_e: float
    p_d1_e: float
    py_d: np.ndarray  # (2, K)
    py_o: np.ndarray  # (K,)
    r_given_y: np.ndarray  # (K, m)
    support: np.ndarray  # (m, p) feature values
    values: Optional[np.ndarray] = None  # (K,) outcome values, default 0..K-1
    reference: Optional[int] = None

    def __post_init__(self):
        self.py_d = np.asarray(self.py_d, dtype=np.float64)
        self.py_o = np.asarray(self.py_o, dtype=np.float64)
        self.r_given_y = np.asarray(self.r_given_y, dtype=np.float64)
        self.support = np.asarray(self.support, dtype=np.float64)
        k = self.py_o.size
        if self.values is None:
            self.values = np.arange(k, dtype=np.float64)
        if self.reference is None:
            self.reference = 0 if k == 2 else k - 1
        if not 0.0 < self.p_e < 1.0 or not 0.0 < self.p_d1_e < 1.0:
            raise InvalidSpec("sample and treatment shares must be inside (0, 1)")
        for row, nm in ((self.py_d[0], "py_d[0]"), (self.py_d[1], "py_d[1]"), (self.py_o, "py_o")):
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-12:
                raise InvalidSpec(f"{nm} must be a probability vector")
        if np.any(self.r_given_y < 0) or np.any(
            np.abs(self.r_given_y.sum(axis=1) - 1.0) > 1e-12
        ):
            raise InvalidSpec("r_given_y rows must be probability vectors")

    @property
    def k(self) -> int:
        return self.py_o.size

    @property
    def m(self) -> int:
        return self.r_given_y.shape[1]


@dataclass
class OracleResult:
    """Population quantities computed by exact enumeration."""

    theta: float
    theta_vec: np.ndarray
    theta_ratio_vec: np.ndarray
    identity_gap: float
    theta_tilde: float
    surrogate_bias: float
    irrelevant: bool
    support: np.ndarray
    p_r: np.ndarray
    ce: np.ndarray  # E(treatment contrast | R=r)
    co: np.ndarray  # E(outcome contrast | R=r), (m, K-1)
    h_star: np.ndarray  # efficiency-weighted representation per support point
    w_weights: Optional[np.ndarray] = None  # binary-case density-ratio weights
    integrated_bias: Optional[float] = None

    def to_json(self) -> str:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        return json.dumps({k: conv(v) for k, v in self.__dict__.items()}, sort_keys=True)


def adversarial_population(a: float, b: float, e_share: float = 0.5) -> FinitePopulation:
    """The two-point-feature design as an exact population object."""
    for v, nm in ((a, "a"), (b, "b")):
        if not 0.0 < v < 1.0:
            raise InvalidSpec(f"{nm} must be inside (0, 1)")
    # channel: feature equals the outcome with prob 1/2, else 1
    r_given_y = np.array([[0.5, 0.5], [0.0, 1.0]])
    return FinitePopulation(
        p_e=e_share,
        p_d1_e=0.5,
        py_d=np.array([[1 - a, a], [1 - b, b]]),
        py_o=np.array([1 - a, a]),
        r_given_y=r_given_y,
        support=np.array([[0.0], [1.0]]),
    )


def random_finite_population(seed: int, k: int = 2, support_size: int = 3) -> FinitePopulation:
    """Random valid population with a relevance guarantee (for stress tests)."""
    rng = np.random.default_rng(seed)
    for _ in range(100):
        py_d = rng.dirichlet(np.ones(k) * 2.0, size=2)
        py_o = rng.dirichlet(np.ones(k) * 2.0)
        rows = rng.dirichlet(np.ones(support_size), size=k)
        pop = FinitePopulation(
            p_e=float(rng.uniform(0.25, 0.75)),
            p_d1_e=float(rng.uniform(0.25, 0.75)),
            py_d=py_d,
            py_o=np.maximum(py_o, 0.02) / np.maximum(py_o, 0.02).sum(),
            r_given_y=rows,
            support=rng.standard_normal((support_size, 1)),
        )
        # require distinguishable channel rows, otherwise the features are irrelevant
        gaps = [
            np.abs(rows[i] - rows[j]).sum()
            for i in range(k)
            for j in range(i + 1, k)
        ]
        if min(gaps) > 0.05:
            return pop
    raise InvalidSpec("failed to draw a relevant random population")


def sample_finite(pop: FinitePopulation, n: int, seed: int = 0) -> Dataset:
    """Draw a two-sample dataset from an exact finite population.

    Experimental units carry the treatment and lose the outcome;
    observational units carry the outcome (treatment recorded as 0, the
    untreated convention). ``meta`` stores the population's true effect and
    the full labels.
    """
    rng = np.random.default_rng(seed)
    is_e = rng.random(n) < pop.p_e
    d = np.where(is_e, _bern(rng, pop.p_d1_e, n), 0)
    y = np.empty(n, dtype=np.int64)
    k = pop.k
    for i in range(n):
        pmf = pop.py_d[d[i]] if is_e[i] else pop.py_o
        y[i] = rng.choice(k, p=pmf)
    r_idx = np.array([rng.choice(pop.m, p=pop.r_given_y[y[i]]) for i in range(n)])
    r = pop.support[r_idx]
    comps = [j for j in range(k) if j != pop.reference]
    theta = float(
        sum(
            (pop.values[j] - pop.values[pop.reference])
            * (pop.py_d[1, j] - pop.py_d[0, j])
            for j in comps
        )
    )
    return Dataset(
        has_e=is_e,
        has_o=~is_e,
        rsv=np.asarray(r, dtype=np.float64),
        k_outcomes=k,
        treatment=np.where(is_e, d, 0).astype(np.int64),
        outcome=np.where(is_e, -1, y).astype(np.int64),
        mode=Mode.INCOMPLETE,
        value_map=None if np.array_equal(pop.values, np.arange(k)) else pop.values,
        meta={
            "kind": "finite",
            "theta_true": theta,
            "full_treatment": d,
            "full_outcome": y,
            "support_index": r_idx,
            "seed": seed,
        },
    )


def population_oracle(pop: FinitePopulation) -> OracleResult:
    """Evaluate the population objects by summing over the joint support.

    The direct effect comes from the potential-outcome pmfs; the ratio-form
    effect solves the population moment system weighted by the
    efficiency-weighted representation. Their gap is the identification
    identity evaluated exactly and is reported, not hidden.
    """
    if pop.m > 10_000:
        raise SupportTooLarge(f"support size {pop.m} exceeds 10000")
    k, m = pop.k, pop.m
    ref = pop.reference
    comps = [j for j in range(k) if j != ref]

    # joint building blocks
    p_o = 1.0 - pop.p_e
    p_d = np.array([1.0 - pop.p_d1_e, pop.p_d1_e])
    # Pr(D=d, e, R=r) = p_e * p_d[d] * sum_y py_d[d, y] channel[y, r]
    p_dr_e = pop.p_e * p_d[:, None] * (pop.py_d @ pop.r_given_y)  # (2, m)
    # Pr(Y=y, o, R=r) = p_o * py_o[y] * channel[y, r]
    p_yr_o = p_o * pop.py_o[:, None] * pop.r_given_y  # (k, m)
    p_r = p_dr_e.sum(axis=0) + p_yr_o.sum(axis=0)
    if np.any(p_r <= 0):
        raise InvalidSpec("a support point has zero probability")

    p_d1e = float(p_dr_e[1].sum())
    p_d0e = float(p_dr_e[0].sum())
    p_yo = p_yr_o.sum(axis=1)  # (k,)
    if min(p_d1e, p_d0e, float(p_yo.min())) <= 0:
        raise InvalidSpec("a marginal event has zero probability")

    cond_d1 = p_dr_e[1] / p_r
    cond_d0 = p_dr_e[0] / p_r
    cond_y = p_yr_o / p_r  # (k, m)
    ce = cond_d1 / p_d1e - cond_d0 / p_d0e  # E(treatment contrast | r)
    co = np.stack(
        [cond_y[j] / p_yo[j] - cond_y[ref] / p_yo[ref] for j in comps], axis=1
    )  # (m, k-1)

    theta_vec = pop.py_d[1, comps] - pop.py_d[0, comps]
    theta = float(
        sum((pop.values[j] - pop.values[ref]) * (pop.py_d[1, j] - pop.py_d[0, j]) for j in comps)
    )

    irrelevant = bool(np.max(np.abs(co)) < 1e-13)
    if irrelevant:
        theta_ratio_vec = np.full(k - 1, np.nan)
        h_star = np.zeros((m, k - 1))
        gap = float("nan")
    else:
        # efficiency weighting: residual variance from the exclusive events
        resid = np.zeros(m)
        resid += cond_d1 / p_d1e**2 + cond_d0 / p_d0e**2
        for i, j in enumerate(comps):
            resid += theta_vec[i] ** 2 * cond_y[j] / p_yo[j] ** 2
        resid += float(theta_vec.sum()) ** 2 * cond_y[ref] / p_yo[ref] ** 2
        h_star = co / resid[:, None]
        weighted = (h_star * p_r[:, None]).T  # (k-1, m)
        den = weighted @ co  # (k-1, k-1)
        num = weighted @ ce  # (k-1,)
        theta_ratio_vec = np.linalg.solve(den, num)
        gap = float(np.max(np.abs(theta_ratio_vec - theta_vec)))

    # common-practice surrogate target
    f_r_d1 = p_dr_e[1] / p_d1e  # f(r | D=1, e)
    f_r_d0 = p_dr_e[0] / p_d0e
    p_r_o = p_yr_o.sum(axis=0)
    ey_given_r_o = (pop.values @ p_yr_o) / np.where(p_r_o > 0, p_r_o, 1.0)
    theta_tilde = float(ey_given_r_o @ (f_r_d1 - f_r_d0))

    w_weights = None
    integrated_bias = None
    if k == 2:
        mu1 = float(pop.py_d[1, 1])
        mu0 = float(pop.py_d[0, 1])
        if mu1 > 0 and np.all(f_r_d0 > 0):
            w_weights = (mu0 * f_r_d1) / (mu1 * f_r_d0)
            # density of the features among outcome-1 experimental units
            p_y1r_e = pop.p_e * (
                p_d[1] * pop.py_d[1, 1] + p_d[0] * pop.py_d[0, 1]
            ) * pop.r_given_y[1]
            f_r_y1_e = p_y1r_e / p_y1r_e.sum()
            integrated_bias = float(mu1 * ((w_weights - 1.0) @ f_r_y1_e))

    return OracleResult(
        theta=theta,
        theta_vec=theta_vec,
        theta_ratio_vec=theta_ratio_vec,
        identity_gap=gap,
        theta_tilde=theta_tilde,
        surrogate_bias=theta_tilde - theta,
        irrelevant=irrelevant,
        support=pop.support,
        p_r=p_r,
        ce=ce,
        co=co,
        h_star=h_star,
        w_weights=w_weights,
        integrated_bias=integrated_bias,
    )
