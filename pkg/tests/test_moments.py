import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsvcausal.data import Dataset, SampleTag, UnitRecord
from rsvcausal.errors import ZeroCount
from rsvcausal.moments import (
    MarginalCounts,
    marginal_counts,
    sigma2_expansion,
    variation,
    variation_complete,
)


def _unit(tag, treatment=None, outcome=None):
    return UnitRecord(tag, np.zeros(1), treatment=treatment, outcome=outcome)


def _ds(units, **kw):
    return Dataset.from_units(units, **kw)


def test_counts_four_exclusive_units():
    ds = _ds(
        [
            _unit(SampleTag.EXP, treatment=1),
            _unit(SampleTag.EXP, treatment=0),
            _unit(SampleTag.OBS, outcome=1),
            _unit(SampleTag.OBS, outcome=0),
        ]
    )
    c = marginal_counts(ds)
    assert c.p_d1e == c.p_d0e == 0.25
    assert c.p_yo[0] == c.p_yo[1] == 0.25


def test_counts_zero_event_raises():
    ds = _ds(
        [
            _unit(SampleTag.EXP, treatment=1),
            _unit(SampleTag.EXP, treatment=0),
            _unit(SampleTag.OBS, outcome=0),
        ]
    )
    with pytest.raises(ZeroCount):
        marginal_counts(ds)


def test_dual_membership_unit_feeds_both_samples():
    ds = _ds(
        [
            _unit(SampleTag.BOTH, treatment=1, outcome=0),
            _unit(SampleTag.EXP, treatment=0),
            _unit(SampleTag.OBS, outcome=1),
            _unit(SampleTag.OBS, outcome=0),
        ]
    )
    c = marginal_counts(ds)
    assert c.p_d1e == 0.25  # the dual unit is the treated experimental member
    assert c.p_yo[0] == 0.5  # and also an outcome-0 observational member


def _counts(p_d1e, p_d0e, p_y1o, p_y0o):
    return MarginalCounts(
        p_d1e=p_d1e,
        p_d0e=p_d0e,
        p_yo=np.array([p_y0o, p_y1o]),
        k_outcomes=2,
        reference=0,
        n=100,
    )


def test_variation_treated_unit():
    c = _counts(0.5, 0.25, 0.125, 0.125)
    v = variation(_unit(SampleTag.EXP, treatment=1), c)
    assert v.delta_e == 2.0
    assert np.all(v.delta_o == 0.0)


def test_variation_observational_outcome_zero():
    c = _counts(0.5, 0.25, 0.125, 0.25)
    v = variation(_unit(SampleTag.OBS, outcome=0), c)
    assert v.delta_e == 0.0
    assert v.delta_o[0] == -4.0


def test_variation_three_categories_reference_pinning():
    # categories 0,1,2 with reference 2; probabilities (0.2, 0.2, 0.1)
    c = MarginalCounts(
        p_d1e=0.2,
        p_d0e=0.3,
        p_yo=np.array([0.2, 0.2, 0.1]),
        k_outcomes=3,
        reference=2,
        n=100,
    )
    v = variation(_unit(SampleTag.OBS, outcome=0), c)
    assert np.allclose(v.delta_o, [5.0, 0.0])
    v_ref = variation(_unit(SampleTag.OBS, outcome=2), c)
    assert np.allclose(v_ref.delta_o, [-10.0, -10.0])


def _complete_counts():
    return MarginalCounts(
        p_d1e=0.25,
        p_d0e=0.25,
        p_yo=np.array([0.2, 0.3]),
        k_outcomes=2,
        reference=0,
        n=100,
        p_ydo=np.array([[0.1, 0.1], [0.15, 0.15]]),  # [y][d]
    )


def test_variation_complete_treated_experimental():
    c = _complete_counts()
    v = variation_complete(_unit(SampleTag.EXP, treatment=1), 1, c)
    assert v.delta_e == 4.0
    assert np.all(v.delta_o == 0.0)


def test_variation_complete_shared_reference_event():
    c = _complete_counts()
    unit = _unit(SampleTag.OBS, treatment=1, outcome=0)
    v = variation_complete(unit, 1, c)
    assert v.delta_e == pytest.approx(-10.0)
    assert v.delta_o[0] == pytest.approx(-10.0)


def test_variation_complete_other_arm_is_silent():
    c = _complete_counts()
    unit = _unit(SampleTag.OBS, treatment=0, outcome=1)
    v = variation_complete(unit, 1, c)
    assert v.delta_e == 0.0
    assert np.all(v.delta_o == 0.0)


@given(
    p=st.tuples(*[st.floats(0.05, 0.45) for _ in range(4)]),
    theta=st.floats(-3.0, 3.0),
    kind=st.integers(0, 3),
)
@settings(max_examples=400, deadline=None)
def test_variance_expansion_matches_square_exactly(p, theta, kind):
    """Exclusive events make the closed form equal the literal square."""
    total = sum(p)
    p_d1e, p_d0e, p_y1o, p_y0o = (v / total for v in p)
    c = _counts(p_d1e, p_d0e, p_y1o, p_y0o)
    unit = [
        _unit(SampleTag.EXP, treatment=1),
        _unit(SampleTag.EXP, treatment=0),
        _unit(SampleTag.OBS, outcome=1),
        _unit(SampleTag.OBS, outcome=0),
    ][kind]
    v = variation(unit, c)
    direct = (v.delta_e - v.delta_o[0] * theta) ** 2
    closed = sigma2_expansion(v.delta_e, v.delta_o[0], theta, unit, c)
    assert closed == pytest.approx(direct, rel=1e-12)


def test_variance_expansion_drops_cross_term_for_dual_units():
    c = _counts(0.25, 0.25, 0.25, 0.25)
    unit = _unit(SampleTag.BOTH, treatment=1, outcome=1)
    v = variation(unit, c)
    theta = 0.7
    direct = (v.delta_e - v.delta_o[0] * theta) ** 2
    closed = sigma2_expansion(v.delta_e, v.delta_o[0], theta, unit, c)
    cross = -2.0 * theta * v.delta_e * v.delta_o[0]
    assert closed == pytest.approx(direct - cross, rel=1e-12)


def test_fold_means_of_variation_are_zero():
    rng = np.random.default_rng(5)
    units = []
    for _ in range(40):
        if rng.random() < 0.5:
            units.append(_unit(SampleTag.EXP, treatment=int(rng.integers(0, 2))))
        else:
            units.append(_unit(SampleTag.OBS, outcome=int(rng.integers(0, 2))))
    ds = _ds(units)
    c = marginal_counts(ds)
    vals = [variation(u, c) for u in ds.units]
    assert np.mean([v.delta_e for v in vals]) == pytest.approx(0.0, abs=1e-12)
    assert np.mean([v.delta_o[0] for v in vals]) == pytest.approx(0.0, abs=1e-12)


def test_stratified_counts_condition_on_the_covariate():
    units = [
        UnitRecord(SampleTag.EXP, np.zeros(1), treatment=1, covariate="u"),
        UnitRecord(SampleTag.EXP, np.zeros(1), treatment=0, covariate="u"),
        UnitRecord(SampleTag.OBS, np.zeros(1), outcome=1, covariate="u"),
        UnitRecord(SampleTag.OBS, np.zeros(1), outcome=0, covariate="u"),
        UnitRecord(SampleTag.EXP, np.zeros(1), treatment=1, covariate="v"),
        UnitRecord(SampleTag.EXP, np.zeros(1), treatment=1, covariate="v"),
        UnitRecord(SampleTag.EXP, np.zeros(1), treatment=0, covariate="v"),
        UnitRecord(SampleTag.OBS, np.zeros(1), outcome=1, covariate="v"),
        UnitRecord(SampleTag.OBS, np.zeros(1), outcome=0, covariate="v"),
        UnitRecord(SampleTag.OBS, np.zeros(1), outcome=0, covariate="v"),
    ]
    ds = _ds(units)
    c = marginal_counts(ds, stratify=True)
    assert set(c.by_stratum) == {"u", "v"}
    assert c.by_stratum["u"].p_d1e == pytest.approx(0.25)
    assert c.by_stratum["v"].p_d1e == pytest.approx(2 / 6)
    assert c.by_stratum["v"].p_yo[0] == pytest.approx(2 / 6)


def test_single_membership_units_have_orthogonal_contrasts():
    c = _counts(0.25, 0.25, 0.25, 0.25)
    for unit in (
        _unit(SampleTag.EXP, treatment=1),
        _unit(SampleTag.EXP, treatment=0),
        _unit(SampleTag.OBS, outcome=1),
        _unit(SampleTag.OBS, outcome=0),
    ):
        v = variation(unit, c)
        assert v.delta_e * v.delta_o[0] == 0.0
