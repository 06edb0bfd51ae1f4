import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsvcausal.data import (
    Dataset,
    SampleTag,
    UnitRecord,
    load_csv,
    split_folds,
    validate,
    write_csv,
)
from rsvcausal.errors import EmptySample, InfeasibleSplit, MalformedRow, SchemaViolation


def test_load_basic_two_rows():
    csv = "sample,treatment,outcome,r_1\ne,1,NA,0.3\no,NA,1,0.5\n"
    ds = load_csv(io.StringIO(csv))
    assert ds.n == 2 and ds.rsv_dim == 1 and ds.k_outcomes == 2
    assert ds.has_e[0] and not ds.has_o[0]
    assert ds.treatment[0] == 1 and ds.outcome[0] == -1
    assert ds.outcome[1] == 1 and ds.treatment[1] == -1


def test_strict_mode_rejects_outcome_on_experimental_row():
    csv = "sample,treatment,outcome,r_1\ne,1,1,0.3\no,,1,0.5\n"
    with pytest.raises(SchemaViolation):
        load_csv(io.StringIO(csv))
    ds = load_csv(io.StringIO(csv), strict=False)
    assert ds.n == 2


def test_non_numeric_feature_is_malformed():
    csv = "sample,treatment,outcome,r_1\ne,1,,abc\no,,1,0.5\n"
    with pytest.raises(MalformedRow):
        load_csv(io.StringIO(csv))


def test_empty_sample_errors():
    csv = "sample,treatment,outcome,r_1\ne,1,,0.3\ne,0,,0.5\n"
    with pytest.raises(EmptySample):
        load_csv(io.StringIO(csv))


def test_wide_feature_block_dimension():
    width = 12
    csv = "sample,treatment,outcome," + ",".join(f"r_{j+1}" for j in range(width)) + "\n"
    csv += "o,,1," + ",".join("0.25" for _ in range(width)) + "\n"
    csv += "e,0,," + ",".join("0.5" for _ in range(width)) + "\n"
    ds = load_csv(io.StringIO(csv))
    assert ds.rsv_dim == width


@given(
    n_e=st.integers(1, 6),
    n_o=st.integers(1, 6),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=30, deadline=None)
def test_csv_round_trip(n_e, n_o, seed):
    rng = np.random.default_rng(seed)
    units = []
    for _ in range(n_e):
        units.append(
            UnitRecord(
                sample=SampleTag.EXP,
                rsv=rng.standard_normal(3),
                treatment=int(rng.integers(0, 2)),
                cluster=f"c{rng.integers(0, 3)}",
            )
        )
    for _ in range(n_o):
        units.append(
            UnitRecord(
                sample=SampleTag.OBS,
                rsv=rng.standard_normal(3),
                outcome=int(rng.integers(0, 2)),
                cluster=f"c{rng.integers(0, 3)}",
            )
        )
    ds = Dataset.from_units(units)
    buf = io.StringIO()
    write_csv(ds, buf)
    buf.seek(0)
    back = load_csv(buf)
    assert np.array_equal(back.has_e, ds.has_e)
    assert np.array_equal(back.has_o, ds.has_o)
    assert np.array_equal(back.treatment, ds.treatment)
    assert np.array_equal(back.outcome, ds.outcome)
    assert np.array_equal(back.cluster, ds.cluster)
    assert np.array_equal(back.rsv, ds.rsv)


def _toy(n_e=3, n_o=3, clusters=None):
    units = []
    for i in range(n_e):
        units.append(
            UnitRecord(
                SampleTag.EXP,
                np.array([float(i)]),
                treatment=i % 2,
                cluster=None if clusters is None else clusters[i],
            )
        )
    for i in range(n_o):
        units.append(
            UnitRecord(
                SampleTag.OBS,
                np.array([float(i) + 0.5]),
                outcome=i % 2,
                cluster=None if clusters is None else clusters[n_e + i],
            )
        )
    return Dataset.from_units(units)


def test_validate_clean_dataset():
    assert validate(_toy()) == []


def test_validate_flags_treated_observational_in_incomplete_mode():
    units = [
        UnitRecord(SampleTag.EXP, np.array([0.0]), treatment=1),
        UnitRecord(SampleTag.OBS, np.array([1.0]), treatment=1, outcome=0),
    ]
    ds = Dataset.from_units(units)
    msgs = validate(ds)
    assert any("incomplete" in m for m in msgs)


def test_validate_flags_missing_observational_units():
    units = [UnitRecord(SampleTag.EXP, np.array([0.0]), treatment=1)]
    ds = Dataset.from_units(units)
    assert any("observational" in m for m in validate(ds))


def test_split_is_deterministic_and_a_partition():
    ds = _toy(6, 6)
    f1 = split_folds(ds, 3, seed=7)
    f2 = split_folds(ds, 3, seed=7)
    assert np.array_equal(f1, f2)
    assert sorted(np.unique(f1)) == [0, 1, 2]
    assert len(f1) == ds.n


def test_split_respects_clusters():
    units = [
        UnitRecord(SampleTag.EXP, np.array([0.0]), treatment=1, cluster="a"),
        UnitRecord(SampleTag.EXP, np.array([1.0]), treatment=0, cluster="a"),
        UnitRecord(SampleTag.OBS, np.array([2.0]), outcome=1, cluster="a"),
        UnitRecord(SampleTag.EXP, np.array([3.0]), treatment=1, cluster="b"),
        UnitRecord(SampleTag.OBS, np.array([4.0]), outcome=0, cluster="b"),
        UnitRecord(SampleTag.OBS, np.array([5.0]), outcome=1, cluster="b"),
    ]
    ds = Dataset.from_units(units)
    fold = split_folds(ds, 2, seed=1)
    clusters = np.asarray([u.cluster for u in units])
    for label in ("a", "b"):
        members = fold[clusters == label]
        assert len(set(members.tolist())) == 1  # never straddles folds
    assert set(fold.tolist()) == {0, 1}


def test_split_infeasible_when_one_sample_missing_everywhere():
    units = [
        UnitRecord(SampleTag.EXP, np.array([float(i)]), treatment=i % 2)
        for i in range(3)
    ] + [UnitRecord(SampleTag.OBS, np.array([9.0]), outcome=1)]
    ds = Dataset.from_units(units)
    # the lone observational unit cannot be in both folds at once for 3 folds
    with pytest.raises(InfeasibleSplit):
        split_folds(ds, 3, seed=0, max_retries=20)


def test_embedding_width_feature_block():
    """A 4050-wide feature block (luminosity + pretrained embedding layout)
    loads with the right dimension."""
    rng = np.random.default_rng(0)
    p, n = 4050, 60
    header = "sample,treatment,outcome," + ",".join(f"r_{j+1}" for j in range(p))
    rows = []
    for i in range(n):
        tag = "e" if i % 2 == 0 else "o"
        t = str(i % 2) if tag == "e" else ""
        y = "" if tag == "e" else str(i % 2)
        feats = ",".join(f"{v:.4f}" for v in rng.standard_normal(p))
        rows.append(f"{tag},{t},{y},{feats}")
    ds = load_csv(io.StringIO(header + "\n" + "\n".join(rows) + "\n"))
    assert ds.rsv_dim == 4050 and ds.n == n


def test_each_fold_has_both_memberships():
    ds = _toy(10, 10)
    fold = split_folds(ds, 2, seed=3)
    for f in range(2):
        assert ds.has_e[fold == f].any()
        assert ds.has_o[fold == f].any()
