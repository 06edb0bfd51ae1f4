import numpy as np
import pytest

from rsvcausal.data import Dataset, SampleTag, UnitRecord, split_folds
from rsvcausal.dgp import DgpSpec, MissingPattern, gen_calibrated
from rsvcausal.diagnostics import (
    _first_pc,
    relevance_test,
    specification_test,
    stability_export,
    write_stability_csv,
)
from rsvcausal.estimate import EstimateConfig, ratio_terms, state_from_h, ate_design


def test_relevance_strong_signal_excludes_zero():
    ds = gen_calibrated(DgpSpec(n=2000, theta_shift=0.2, seed=1))
    stat, ci, weak = relevance_test(ds, EstimateConfig(bootstrap=300, seed=1))
    assert not weak
    assert ci[0] > 0.0 or ci[1] < 0.0


def test_relevance_stat_is_zero_for_constant_representation():
    ds = gen_calibrated(DgpSpec(n=600, theta_shift=0.2, seed=2))
    fold = split_folds(ds, 2, seed=0)
    te = fold == 0
    state = state_from_h(ate_design(2, 0), ds, te, np.ones(int(te.sum())))
    _, den, _, _, _ = ratio_terms(state)
    assert den[0, 0] == pytest.approx(0.0, abs=1e-10)


def test_specification_test_scale_indifference():
    """Doubling a representation changes nothing: the difference is exactly 0."""
    ds = gen_calibrated(DgpSpec(n=1200, theta_shift=0.2, seed=3))
    rng = np.random.default_rng(0)
    h = rng.standard_normal(ds.n) + 2.0
    out = specification_test(
        ds,
        EstimateConfig(bootstrap=150, seed=3),
        rep_a=h,
        rep_b=2.0 * h,
    )
    assert out["diff"] == 0.0
    assert out["p_value"] == 1.0


def test_specification_test_antisymmetry():
    ds = gen_calibrated(DgpSpec(n=1200, theta_shift=0.2, seed=4))
    cfg = EstimateConfig(bootstrap=150, seed=4)
    ab = specification_test(ds, cfg, rep_a="learned", rep_b="pred_y")
    ba = specification_test(ds, cfg, rep_a="pred_y", rep_b="learned")
    assert ab["diff"] == pytest.approx(-ba["diff"], abs=1e-12)


def test_first_pc_of_single_feature_is_the_standardized_feature():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((500, 1)) * 3.0 + 1.0
    pc = _first_pc(X)
    z = (X[:, 0] - X[:, 0].mean()) / X[:, 0].std()
    assert np.allclose(pc, z / z.std(), atol=1e-10)


def test_stability_densities_normalized_and_gap_detects_shift():
    aligned = gen_calibrated(
        DgpSpec(n=4000, theta_shift=0.2, seed=6, missing_pattern=MissingPattern.SPLIT)
    )
    shifted = gen_calibrated(
        DgpSpec(
            n=4000,
            theta_shift=0.2,
            seed=6,
            missing_pattern=MissingPattern.SPLIT,
            stability_shift=2.0,
        )
    )
    curves_a, gaps_a, _ = stability_export(aligned, use_full_labels=True)
    curves_s, gaps_s, _ = stability_export(shifted, use_full_labels=True)
    for data in curves_a.values():
        mass = np.trapezoid(data["density"], data["grid"])
        assert mass == pytest.approx(1.0, abs=1e-6)
        assert np.all(data["density"] >= 0.0)
    common = set(gaps_a) & set(gaps_s)
    assert common
    assert np.mean([gaps_s[k] for k in common]) > 2.0 * np.mean(
        [gaps_a[k] for k in common]
    )


def test_stability_skips_small_cells_with_notice():
    units = [
        UnitRecord(SampleTag.BOTH, np.array([float(i)]), treatment=0, outcome=i % 2)
        for i in range(10)
    ] + [UnitRecord(SampleTag.OBS, np.array([float(i)]), outcome=i % 2) for i in range(10)]
    ds = Dataset.from_units(units)
    curves, gaps, notes = stability_export(ds)
    assert notes  # every cell is under the minimum size
    assert curves == {} and gaps == {}


def test_stability_csv_format(tmp_path):
    ds = gen_calibrated(
        DgpSpec(n=3000, theta_shift=0.2, seed=7, missing_pattern=MissingPattern.SPLIT)
    )
    curves, _, _ = stability_export(ds, use_full_labels=True)
    out = tmp_path / "stability.csv"
    write_stability_csv(curves, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "cell,grid_point,density"
    assert len(lines) == 1 + 256 * len(curves)
