"""Two-sample data model: records, CSV ingest/validation, and fold splits.

A unit belongs to the experimental sample (treatment observed, outcome
missing), the observational sample (outcome observed), or both at once when
its outcome was collected inside the experiment. Membership is tracked with
two booleans (``has_e``, ``has_o``) so that dual-membership units enter every
downstream count exactly once per sample they belong to.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import (
    EmptySample,
    InfeasibleSplit,
    MalformedRow,
    SchemaViolation,
)

__all__ = [
    "SampleTag",
    "Mode",
    "UnitRecord",
    "Dataset",
    "DEFAULT_SCHEMA",
    "load_csv",
    "load_did_csv",
    "write_csv",
    "write_did_csv",
    "validate",
    "split_folds",
]


class SampleTag(enum.Enum):
    """Sample membership of one unit."""

    EXP = "e"
    OBS = "o"
    BOTH = "eo"

    @property
    def has_e(self) -> bool:
        return self in (SampleTag.EXP, SampleTag.BOTH)

    @property
    def has_o(self) -> bool:
        return self in (SampleTag.OBS, SampleTag.BOTH)


class Mode(enum.Enum):
    """Analysis mode: which identification route the dataset supports."""

    INCOMPLETE = "incomplete"
    COMPLETE = "complete"
    IV = "iv"
    DID = "did"


@dataclass(frozen=True)
class UnitRecord:
    """One observation.

    Fields that do not apply to a unit's sample membership are ``None``:
    experimental-only units carry no outcome, observational-only units carry
    no treatment (incomplete mode). ``rsv`` always has the dataset's common
    dimension.
    """

    sample: SampleTag
    rsv: np.ndarray
    treatment: Optional[int] = None
    outcome: Optional[int] = None
    covariate: Optional[str] = None
    cluster: Optional[str] = None
    instrument: Optional[int] = None
    period: Optional[int] = None


DEFAULT_SCHEMA = {
    "sample": "sample",
    "treatment": "treatment",
    "outcome": "outcome",
    "x": "x",
    "cluster": "cluster",
    "instrument": "instrument",
    "period": "period",
    "rsv_prefix": "r_",
}

_MISSING = {"", "NA", "nan", "NaN"}


def _int_col(series: pd.Series, name: str) -> np.ndarray:
    """String series -> int array with -1 for missing cells."""
    out = np.full(len(series), -1, dtype=np.int64)
    for i, cell in enumerate(series):
        s = "" if cell is None else str(cell).strip()
        if s in _MISSING:
            continue
        try:
            v = float(s)
        except ValueError as exc:
            raise MalformedRow(f"row {i}: non-numeric {name} value {s!r}") from exc
        if v != int(v):
            raise MalformedRow(f"row {i}: non-integer {name} value {s!r}")
        out[i] = int(v)
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of units, stored column-wise.

    ``outcome`` holds category indices (−1 where missing). In continuous
    mode (``k_outcomes == 0``) ``outcome_raw`` holds the undisclosed real
    values and estimation requires discretization first. ``value_map`` maps
    category index to numeric outcome value; ``None`` means the identity map.
    """

    has_e: np.ndarray
    has_o: np.ndarray
    rsv: np.ndarray
    k_outcomes: int
    treatment: np.ndarray  # int, -1 missing
    outcome: np.ndarray  # int category index, -1 missing
    covariate: Optional[np.ndarray] = None  # object labels or None
    cluster: Optional[np.ndarray] = None
    instrument: Optional[np.ndarray] = None
    period: Optional[np.ndarray] = None
    mode: Mode = Mode.INCOMPLETE
    outcome_raw: Optional[np.ndarray] = None
    value_map: Optional[np.ndarray] = None
    rsv2: Optional[np.ndarray] = None  # second-period features (DID wide form)
    outcome2: Optional[np.ndarray] = None  # second-period outcome (DID wide form)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("has_e", "has_o", "treatment", "outcome"):
            getattr(self, name).setflags(write=False)
        self.rsv.setflags(write=False)

    @property
    def n(self) -> int:
        return self.rsv.shape[0]

    @property
    def rsv_dim(self) -> int:
        return self.rsv.shape[1]

    @property
    def units(self) -> list[UnitRecord]:
        """Materialize per-row records (views share the feature storage)."""
        out = []
        for i in range(self.n):
            if self.has_e[i] and self.has_o[i]:
                tag = SampleTag.BOTH
            elif self.has_e[i]:
                tag = SampleTag.EXP
            else:
                tag = SampleTag.OBS
            out.append(
                UnitRecord(
                    sample=tag,
                    rsv=self.rsv[i],
                    treatment=None if self.treatment[i] < 0 else int(self.treatment[i]),
                    outcome=None if self.outcome[i] < 0 else int(self.outcome[i]),
                    covariate=None if self.covariate is None else self.covariate[i],
                    cluster=None if self.cluster is None else self.cluster[i],
                    instrument=None
                    if self.instrument is None or self.instrument[i] < 0
                    else int(self.instrument[i]),
                    period=None
                    if self.period is None or self.period[i] < 0
                    else int(self.period[i]),
                )
            )
        return out

    @classmethod
    def from_units(
        cls,
        units: Sequence[UnitRecord],
        k_outcomes: int = 2,
        mode: Mode = Mode.INCOMPLETE,
        **kwargs,
    ) -> "Dataset":
        n = len(units)
        rsv = np.asarray([u.rsv for u in units], dtype=np.float64)
        has_e = np.array([u.sample.has_e for u in units])
        has_o = np.array([u.sample.has_o for u in units])
        treatment = np.array(
            [-1 if u.treatment is None else u.treatment for u in units], dtype=np.int64
        )
        outcome = np.array(
            [-1 if u.outcome is None else u.outcome for u in units], dtype=np.int64
        )
        covariate = None
        if any(u.covariate is not None for u in units):
            covariate = np.array([u.covariate for u in units], dtype=object)
        cluster = None
        if any(u.cluster is not None for u in units):
            cluster = np.array(
                [f"__row{i}" if u.cluster is None else u.cluster for i, u in enumerate(units)],
                dtype=object,
            )
        instrument = None
        if any(u.instrument is not None for u in units):
            instrument = np.array(
                [-1 if u.instrument is None else u.instrument for u in units], dtype=np.int64
            )
        period = None
        if any(u.period is not None for u in units):
            period = np.array(
                [-1 if u.period is None else u.period for u in units], dtype=np.int64
            )
        return cls(
            has_e=has_e,
            has_o=has_o,
            rsv=rsv,
            k_outcomes=k_outcomes,
            treatment=treatment,
            outcome=outcome,
            covariate=covariate,
            cluster=cluster,
            instrument=instrument,
            period=period,
            mode=mode,
            **kwargs,
        )


def load_csv(
    path,
    schema: Optional[dict] = None,
    k_outcomes: int = 2,
    mode: Mode = Mode.INCOMPLETE,
    strict: bool = True,
) -> Dataset:
    """Read and validate a dataset from CSV.

    Parameters
    ----------
    path : str or file-like
        CSV with a header row. Required columns: the sample tag and the
        feature columns ``r_1..r_p`` (prefix configurable via ``schema``).
        Optional columns: treatment, outcome, x, cluster, instrument,
        period. Missing cells are empty or ``NA``.
    schema : dict, optional
        Role -> column-name overrides, merged over ``DEFAULT_SCHEMA``.
    k_outcomes : int
        Number of outcome categories (>= 2). Pass 0 for a real-valued
        outcome column that will be discretized later.
    mode : Mode
        INCOMPLETE (observational treatments absent/zero) or COMPLETE.
    strict : bool
        Reject experimental-only rows that carry an outcome value.

    Raises
    ------
    MalformedRow, SchemaViolation, EmptySample
    """
    sch = dict(DEFAULT_SCHEMA)
    if schema:
        sch.update(schema)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)

    if sch["sample"] not in df.columns:
        raise SchemaViolation(f"missing required column {sch['sample']!r}")
    prefix = sch["rsv_prefix"]
    rsv_cols = sorted(
        (c for c in df.columns if c.startswith(prefix) and c[len(prefix):].isdigit()),
        key=lambda c: int(c[len(prefix):]),
    )
    if not rsv_cols:
        raise SchemaViolation(f"no feature columns with prefix {prefix!r}")

    tag_map = {"e": SampleTag.EXP, "o": SampleTag.OBS, "eo": SampleTag.BOTH}
    tags = []
    for i, cell in enumerate(df[sch["sample"]]):
        key = str(cell).strip().lower()
        if key not in tag_map:
            raise MalformedRow(f"row {i}: unknown sample tag {cell!r}")
        tags.append(tag_map[key])
    has_e = np.array([t.has_e for t in tags])
    has_o = np.array([t.has_o for t in tags])

    try:
        rsv = df[rsv_cols].to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise MalformedRow(f"non-numeric feature cell: {exc}") from exc
    if not np.all(np.isfinite(rsv)):
        bad = int(np.argwhere(~np.isfinite(rsv))[0][0])
        raise MalformedRow(f"row {bad}: non-finite feature value")

    n = len(df)
    treatment = (
        _int_col(df[sch["treatment"]], "treatment")
        if sch["treatment"] in df.columns
        else np.full(n, -1, dtype=np.int64)
    )
    outcome_raw = None
    if k_outcomes == 0:
        outcome = np.full(n, -1, dtype=np.int64)
        outcome_raw = np.full(n, np.nan)
        if sch["outcome"] in df.columns:
            for i, cell in enumerate(df[sch["outcome"]]):
                s = str(cell).strip()
                if s in _MISSING:
                    continue
                try:
                    outcome_raw[i] = float(s)
                except ValueError as exc:
                    raise MalformedRow(f"row {i}: non-numeric outcome {s!r}") from exc
    else:
        outcome = (
            _int_col(df[sch["outcome"]], "outcome")
            if sch["outcome"] in df.columns
            else np.full(n, -1, dtype=np.int64)
        )
        if np.any(outcome >= k_outcomes):
            bad = int(np.argmax(outcome >= k_outcomes))
            raise MalformedRow(
                f"row {bad}: outcome index {outcome[bad]} out of range for K={k_outcomes}"
            )
    instrument = (
        _int_col(df[sch["instrument"]], "instrument")
        if sch["instrument"] in df.columns
        else None
    )
    period = (
        _int_col(df[sch["period"]], "period") if sch["period"] in df.columns else None
    )

    covariate = None
    if sch["x"] in df.columns:
        vals = [str(c).strip() for c in df[sch["x"]]]
        if any(v not in _MISSING for v in vals):
            covariate = np.array(
                [None if v in _MISSING else v for v in vals], dtype=object
            )
    cluster = None
    if sch["cluster"] in df.columns:
        vals = [str(c).strip() for c in df[sch["cluster"]]]
        if any(v not in _MISSING for v in vals):
            cluster = np.array(
                [f"__row{i}" if v in _MISSING else v for i, v in enumerate(vals)],
                dtype=object,
            )

    if strict:
        has_outcome = outcome >= 0 if k_outcomes else ~np.isnan(outcome_raw)
        bad = has_e & ~has_o & has_outcome
        if bad.any():
            raise SchemaViolation(
                f"row {int(np.argmax(bad))}: experimental-only unit carries an outcome"
            )
    if not has_e.any():
        raise EmptySample("no experimental units")
    if not has_o.any():
        raise EmptySample("no observational units")

    return Dataset(
        has_e=has_e,
        has_o=has_o,
        rsv=rsv,
        k_outcomes=k_outcomes,
        treatment=treatment,
        outcome=outcome,
        covariate=covariate,
        cluster=cluster,
        instrument=instrument,
        period=period,
        mode=mode,
        outcome_raw=outcome_raw,
    )


def load_did_csv(path, schema: Optional[dict] = None) -> Dataset:
    """Read a two-period dataset in wide layout.

    One row per unit: ``sample``, optional ``treatment``/``cluster``,
    per-period outcomes ``y_1``/``y_2`` on observational rows, and
    period-suffixed feature columns ``r1_1..r1_p`` / ``r2_1..r2_p``.
    """
    sch = dict(DEFAULT_SCHEMA)
    if schema:
        sch.update(schema)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if sch["sample"] not in df.columns:
        raise SchemaViolation(f"missing required column {sch['sample']!r}")

    def period_cols(prefix):
        cols = sorted(
            (c for c in df.columns if c.startswith(prefix) and c[len(prefix):].isdigit()),
            key=lambda c: int(c[len(prefix):]),
        )
        if not cols:
            raise SchemaViolation(f"no feature columns with prefix {prefix!r}")
        return cols

    c1, c2 = period_cols("r1_"), period_cols("r2_")
    if len(c1) != len(c2):
        raise SchemaViolation("period feature blocks must have equal width")
    try:
        r1 = df[c1].to_numpy(dtype=np.float64)
        r2 = df[c2].to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise MalformedRow(f"non-numeric feature cell: {exc}") from exc
    if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
        raise MalformedRow("non-finite feature value in a period block")

    tag_map = {"e": SampleTag.EXP, "o": SampleTag.OBS, "eo": SampleTag.BOTH}
    tags = []
    for i, cell in enumerate(df[sch["sample"]]):
        key = str(cell).strip().lower()
        if key not in tag_map:
            raise MalformedRow(f"row {i}: unknown sample tag {cell!r}")
        tags.append(tag_map[key])
    has_e = np.array([t.has_e for t in tags])
    has_o = np.array([t.has_o for t in tags])
    n = len(df)
    treatment = (
        _int_col(df[sch["treatment"]], "treatment")
        if sch["treatment"] in df.columns
        else np.full(n, -1, dtype=np.int64)
    )
    y1 = _int_col(df["y_1"], "y_1") if "y_1" in df.columns else np.full(n, -1, np.int64)
    y2 = _int_col(df["y_2"], "y_2") if "y_2" in df.columns else np.full(n, -1, np.int64)
    cluster = None
    if sch["cluster"] in df.columns:
        vals = [str(c).strip() for c in df[sch["cluster"]]]
        if any(v not in _MISSING for v in vals):
            cluster = np.array(
                [f"__row{i}" if v in _MISSING else v for i, v in enumerate(vals)],
                dtype=object,
            )
    if not has_e.any():
        raise EmptySample("no experimental units")
    if not has_o.any():
        raise EmptySample("no observational units")
    return Dataset(
        has_e=has_e,
        has_o=has_o,
        rsv=r1,
        k_outcomes=2,
        treatment=treatment,
        outcome=y1,
        cluster=cluster,
        mode=Mode.DID,
        rsv2=r2,
        outcome2=y2,
    )


def write_did_csv(ds: Dataset, path) -> None:
    """Inverse of :func:`load_did_csv` for two-period (wide) datasets."""
    if ds.rsv2 is None or ds.outcome2 is None:
        raise SchemaViolation("dataset has no second-period columns")
    tags = np.where(ds.has_e & ds.has_o, "eo", np.where(ds.has_e, "e", "o"))
    cols = {
        "sample": tags,
        "treatment": ["" if t < 0 else str(int(t)) for t in ds.treatment],
        "y_1": ["" if o < 0 else str(int(o)) for o in ds.outcome],
        "y_2": ["" if o < 0 else str(int(o)) for o in ds.outcome2],
    }
    if ds.cluster is not None:
        cols["cluster"] = [str(v) for v in ds.cluster]
    for j in range(ds.rsv_dim):
        cols[f"r1_{j + 1}"] = [repr(float(v)) for v in ds.rsv[:, j]]
    for j in range(ds.rsv2.shape[1]):
        cols[f"r2_{j + 1}"] = [repr(float(v)) for v in ds.rsv2[:, j]]
    pd.DataFrame(cols, index=range(ds.n)).to_csv(path, index=False)


def write_csv(ds: Dataset, path) -> None:
    """Inverse of :func:`load_csv` (identity round-trip field-for-field)."""
    n = ds.n
    cols = {}
    tags = np.where(ds.has_e & ds.has_o, "eo", np.where(ds.has_e, "e", "o"))
    cols["sample"] = tags
    cols["treatment"] = ["" if t < 0 else str(int(t)) for t in ds.treatment]
    if ds.k_outcomes == 0 and ds.outcome_raw is not None:
        cols["outcome"] = ["" if np.isnan(v) else repr(float(v)) for v in ds.outcome_raw]
    else:
        cols["outcome"] = ["" if o < 0 else str(int(o)) for o in ds.outcome]
    if ds.covariate is not None:
        cols["x"] = ["" if v is None else str(v) for v in ds.covariate]
    if ds.cluster is not None:
        cols["cluster"] = [str(v) for v in ds.cluster]
    if ds.instrument is not None:
        cols["instrument"] = ["" if z < 0 else str(int(z)) for z in ds.instrument]
    if ds.period is not None:
        cols["period"] = ["" if t < 0 else str(int(t)) for t in ds.period]
    for j in range(ds.rsv_dim):
        cols[f"r_{j + 1}"] = [repr(float(v)) for v in ds.rsv[:, j]]
    pd.DataFrame(cols, index=range(n)).to_csv(path, index=False)


def validate(ds: Dataset) -> list[str]:
    """Check dataset invariants; return one message per violation.

    Violations are data, not exceptions: an empty list means the dataset is
    fit for estimation in its declared mode.
    """
    out = []
    if not ds.has_e.any():
        out.append("no experimental units (need at least one unit with e-membership)")
    if not ds.has_o.any():
        out.append("no observational units (need at least one unit with o-membership)")
    if not np.all(np.isfinite(ds.rsv)):
        out.append("non-finite feature values present")

    exp_only = ds.has_e & ~ds.has_o
    obs = ds.has_o
    for i in np.flatnonzero(exp_only & (ds.treatment < 0)):
        out.append(f"row {i}: experimental unit lacks a treatment value")
    if ds.k_outcomes > 0:
        for i in np.flatnonzero(obs & (ds.outcome < 0)):
            out.append(f"row {i}: observational unit lacks an outcome value")
        bad = ds.outcome >= ds.k_outcomes
        for i in np.flatnonzero(bad):
            out.append(f"row {i}: outcome index out of range for K={ds.k_outcomes}")
    bad_t = (ds.treatment >= 0) & (ds.treatment > 1)
    for i in np.flatnonzero(bad_t):
        out.append(f"row {i}: treatment not in {{0,1}}")
    if ds.instrument is not None:
        bad_z = (ds.instrument >= 0) & (ds.instrument > 1)
        for i in np.flatnonzero(bad_z):
            out.append(f"row {i}: instrument not in {{0,1}}")

    obs_only = obs & ~ds.has_e
    if ds.mode == Mode.INCOMPLETE:
        # Observational treatments must be absent or the all-zero convention.
        for i in np.flatnonzero(obs_only & (ds.treatment > 0)):
            out.append(
                f"row {i}: treated observational unit in incomplete mode "
                "(no-direct-effect regime expects treatment absent or 0)"
            )
    elif ds.mode == Mode.COMPLETE:
        t_obs = ds.treatment[obs]
        if not ((t_obs == 0).any() and (t_obs == 1).any()):
            out.append(
                "complete mode requires observational units with both treatment values"
            )
    return out


def split_folds(
    ds: Dataset, n_folds: int = 2, seed: int = 0, max_retries: int = 200
) -> np.ndarray:
    """Deterministic fold assignment, cluster-respecting.

    Clusters (rows sharing a cluster id) never straddle folds. Every fold
    must contain at least one e-member and one o-member; the shuffle is
    retried up to ``max_retries`` times before giving up.

    Returns
    -------
    ndarray of int
        Fold index per unit, a partition into ``n_folds`` groups.
    """
    n = ds.n
    if not 2 <= n_folds <= n:
        raise InfeasibleSplit(f"n_folds={n_folds} infeasible for n={n}")
    if ds.cluster is not None:
        labels, inverse = np.unique(ds.cluster, return_inverse=True)
        groups = [np.flatnonzero(inverse == g) for g in range(len(labels))]
    else:
        groups = [np.array([i]) for i in range(n)]
    if len(groups) < n_folds:
        raise InfeasibleSplit(
            f"only {len(groups)} clusters for {n_folds} folds"
        )

    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        order = rng.permutation(len(groups))
        sizes = np.zeros(n_folds, dtype=np.int64)
        fold = np.empty(n, dtype=np.int64)
        for g in order:
            f = int(np.argmin(sizes))
            fold[groups[g]] = f
            sizes[f] += len(groups[g])
        ok = all(
            ds.has_e[fold == f].any() and ds.has_o[fold == f].any()
            for f in range(n_folds)
        )
        if ok:
            return fold
    raise InfeasibleSplit(
        "could not produce folds with both sample memberships present in every fold"
    )
