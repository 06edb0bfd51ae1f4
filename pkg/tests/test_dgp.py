import numpy as np
import pytest

from rsvcausal.dgp import (
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
    sample_finite,
)
from rsvcausal.errors import InvalidSpec, SupportTooLarge


def test_same_seed_reproduces_bytes():
    a = gen_calibrated(DgpSpec(n=500, theta_shift=0.2, seed=7))
    b = gen_calibrated(DgpSpec(n=500, theta_shift=0.2, seed=7))
    assert np.array_equal(a.rsv, b.rsv)
    assert np.array_equal(a.treatment, b.treatment)
    assert np.array_equal(a.outcome, b.outcome)


def test_marginal_calibration_within_three_sigma():
    spec = DgpSpec(n=20_000, theta_shift=0.2, seed=8)
    ds = gen_calibrated(spec)
    d = ds.meta["full_treatment"]
    y = ds.meta["full_outcome"]
    for arm, p in ((0, 0.25), (1, 0.25 - 0.07 + 0.2)):
        share = y[d == arm].mean()
        n_arm = (d == arm).sum()
        assert abs(share - p) <= 3 * np.sqrt(p * (1 - p) / n_arm)


def test_delete_treated_pattern_tags():
    ds = gen_calibrated(DgpSpec(n=800, theta_shift=0.0, seed=9))
    d = ds.meta["full_treatment"]
    assert np.all(ds.has_e)
    assert np.array_equal(ds.has_o, d == 0)
    assert np.all(ds.outcome[d == 1] == -1)  # no treated unit keeps an outcome


def test_invalid_probability_rejected():
    with pytest.raises(InvalidSpec):
        gen_calibrated(DgpSpec(n=100, theta_shift=0.9))  # p1 > 1
    with pytest.raises(InvalidSpec):
        gen_adversarial(DgpSpec(kind="adversarial", a=1.2, b=0.5))


def test_adversarial_metadata_closed_forms():
    for a, b in [(0.6, 0.2), (0.2, 0.6), (0.5, 0.5)]:
        ds = gen_adversarial(DgpSpec(kind="adversarial", n=100, a=a, b=b, seed=1))
        assert ds.meta["theta_true"] == pytest.approx(b - a)
        assert ds.meta["surrogate_bias"] == pytest.approx((a - b) / (a + 1))


def test_oracle_dual_computation_equality():
    for seed in range(12):
        oracle = population_oracle(random_finite_population(seed))
        assert oracle.identity_gap <= 1e-12


def test_oracle_flags_irrelevant_features():
    pop = FinitePopulation(
        p_e=0.5,
        p_d1_e=0.5,
        py_d=np.array([[0.6, 0.4], [0.4, 0.6]]),
        py_o=np.array([0.5, 0.5]),
        r_given_y=np.array([[0.5, 0.5], [0.5, 0.5]]),  # feature carries nothing
        support=np.array([[0.0], [1.0]]),
    )
    oracle = population_oracle(pop)
    assert oracle.irrelevant
    assert np.allclose(oracle.co, 0.0)


def test_oracle_rejects_huge_support():
    m = 10_001
    pop = FinitePopulation(
        p_e=0.5,
        p_d1_e=0.5,
        py_d=np.array([[0.5, 0.5], [0.4, 0.6]]),
        py_o=np.array([0.5, 0.5]),
        r_given_y=np.full((2, m), 1.0 / m),
        support=np.zeros((m, 1)),
    )
    with pytest.raises(SupportTooLarge):
        population_oracle(pop)


def test_iv_generator_truth_by_stratum_enumeration():
    spec = DgpSpec(kind="iv", n=10, late=0.3, seed=0)
    ds = gen_iv(spec)
    # brute force: only compliers contribute to the instrument contrast
    p0 = {0: 0.3, 1: 0.5, 2: 0.35}
    p1 = {0: 0.3 + spec.late, 1: 0.55, 2: 0.65}
    shares = {0: spec.complier_share, 1: spec.always_share}
    shares[2] = 1 - sum(shares.values())
    alpha1 = shares[0] * p1[0] + shares[1] * p1[1] + shares[2] * p0[2]
    alpha0 = shares[0] * p0[0] + shares[1] * p1[1] + shares[2] * p0[2]
    beta_diff = shares[0]
    assert ds.meta["late_true"] == pytest.approx((alpha1 - alpha0) / beta_diff)


def test_iv_zero_compliers_flagged_weak():
    ds = gen_iv(DgpSpec(kind="iv", n=100, complier_share=0.0, always_share=0.5, seed=0))
    assert ds.meta["weak_instrument"]


def test_did_truth_is_drift_free():
    for drift in (0.0, 0.1, 0.2):
        ds = gen_did(DgpSpec(kind="did", n=100, att=0.2, drift=drift, seed=0))
        assert ds.meta["att_true"] == pytest.approx(0.2)


def test_sampled_finite_population_matches_marginals():
    pop = adversarial_population(0.6, 0.2)
    ds = sample_finite(pop, n=30_000, seed=3)
    # observational outcome share converges to the population pmf
    y_o = ds.outcome[ds.has_o]
    assert y_o.mean() == pytest.approx(0.6, abs=0.02)
    assert ds.meta["theta_true"] == pytest.approx(-0.4)


def test_split_pattern_supports_stability_violation():
    base = DgpSpec(n=2000, theta_shift=0.2, seed=4, missing_pattern=MissingPattern.SPLIT)
    ds0 = gen_calibrated(base)
    base_shift = DgpSpec(
        n=2000,
        theta_shift=0.2,
        seed=4,
        missing_pattern=MissingPattern.SPLIT,
        stability_shift=2.0,
    )
    ds2 = gen_calibrated(base_shift)
    gap0 = ds0.rsv[ds0.has_o, 0].mean() - ds0.rsv[ds0.has_e, 0].mean()
    gap2 = ds2.rsv[ds2.has_o, 0].mean() - ds2.rsv[ds2.has_e, 0].mean()
    assert gap2 - gap0 == pytest.approx(2.0, abs=0.05)
