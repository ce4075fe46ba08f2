from fractions import Fraction

import numpy as np
import pytest

from expdesign.core import CompletelyRandomized, CovariateMatrix, StrataPartition, Stratified, make_rng
from expdesign.errors import DesignError, PositivityError
from expdesign.oracle import enumerate_pairings
from expdesign.robust import AdditiveModelSpec
from expdesign.simulation import (
    Additive,
    FactorPanel,
    Linear,
    McReport,
    adaptive_two_stage_mc,
    draw_science_table,
    factor_fixture,
    loading_constants,
    run_replications,
    stopping_rule_simulation,
    summarize,
    synth_bias_study,
)
from expdesign.stochastic import optimal_matched_pairs, pairing_objective


def test_draw_examples(rng):
    m = AdditiveModelSpec(np.array([1.0, -2.0, 0.5]), 0.0, 3.0, 1.0)
    t = draw_science_table(Additive(m), rng)
    assert np.array_equal(t.y1, 3.0 + m.g) and np.array_equal(t.y0, 1.0 + m.g)
    x = CovariateMatrix(rng.normal(size=(5, 2)))
    t = draw_science_table(Linear(2.5, np.array([1.0, -1.0]), x, 0.0), rng)
    assert np.allclose(t.y1 - t.y0, 2.5)
    t = draw_science_table(Linear(2.5, np.array([1.0, -1.0]), x, 1.0, "rademacher"), rng)
    assert np.allclose(t.y1 - t.y0, 2.5)
    alpha = np.array([[0.0, 1.0, 2.0], [5.0, 6.0, 7.0]])
    fp = FactorPanel(alpha, np.zeros((2, 3, 1)), np.zeros((2, 3, 2)), np.ones((4, 2)), CovariateMatrix(np.ones((4, 1))))
    Y1, Y0 = draw_science_table(fp, rng)
    assert np.array_equal(Y1, np.tile(alpha[1], (4, 1))) and np.array_equal(Y0, np.tile(alpha[0], (4, 1)))


def test_noise_validation():
    with pytest.raises(DesignError):
        Additive(AdditiveModelSpec(np.ones(2)), noise="cauchy")
    with pytest.raises(DesignError):
        Linear(1.0, np.ones(2), CovariateMatrix(np.ones((3, 1))))


@pytest.mark.parametrize("kind", ["gaussian", "rademacher"])
def test_noise_moments(kind):
    sigma = 2.0
    m = AdditiveModelSpec(np.zeros(10**6), sigma**2)
    e = draw_science_table(Additive(m, kind), make_rng(11)).y1
    assert abs(e.mean()) <= 4 * sigma / 1e3
    assert e.var() == pytest.approx(sigma**2, rel=0.01)


def test_report_identity_and_errors():
    r = summarize([0.0, 2.0, 4.0], [1.0, 1.0, 1.0], seed=5)
    assert r.mse == pytest.approx(r.variance + r.bias**2)
    assert r.bias == pytest.approx(1.0) and r.seed == 5
    with pytest.raises(DesignError):
        summarize([1.0], [1.0], seed=0)
    with pytest.raises(DesignError):
        McReport(10, 0, 0.0, 1.0, 1.0, 5.0, 0.1, 0.1, 0)


def test_dm_unbiased_under_crd():
    m = AdditiveModelSpec(np.linspace(-2, 2, 10), 1.0, 1.5, 0.0)
    r = run_replications(Additive(m), CompletelyRandomized(10, 5), "dm", "sample", 10**5, seed=1)
    assert abs(r.bias) <= 4 * r.mc_standard_error
    assert r.excluded == 0
    assert abs(r.mse - (r.variance + r.bias**2)) <= 1e-9 * max(1.0, r.mse)


def test_optimal_pairs_beat_worst_pairing():
    g = np.array([6.0, -1.0, 4.0, 0.5, 3.0, -3.0])
    m = AdditiveModelSpec(g / 2, 0.25)
    best = optimal_matched_pairs(g / 2).partition
    worst = max(enumerate_pairings(6), key=lambda p: pairing_objective(g, p))
    a = run_replications(Additive(m), Stratified.balanced(best), "dm", "sample", 20_000, seed=2)
    b = run_replications(Additive(m), Stratified.balanced(worst), "dm", "sample", 20_000, seed=3)
    gap = b.mse - a.mse
    assert gap > 4 * np.hypot(a.mse_standard_error, b.mse_standard_error)


def test_linear_noiseless_ols_exact(rng):
    x = CovariateMatrix(np.column_stack([np.ones(8), rng.normal(size=8)]))
    r = run_replications(Linear(1.25, np.array([0.5, 2.0]), x, 0.0), CompletelyRandomized(8, 4), "ols", "population", 50)
    assert r.bias == pytest.approx(0.0, abs=1e-12) and r.variance == pytest.approx(0.0, abs=1e-20)


def test_degenerate_replications_counted():
    from expdesign.core import Bernoulli

    m = AdditiveModelSpec(np.zeros(2), 1.0)
    r = run_replications(Additive(m), Bernoulli.uniform(2), "dm", "population", 2000, seed=4)
    assert 0 < r.excluded < 2000 and r.replications + r.excluded == 2000
    assert abs(r.excluded / 2000 - 0.5) < 0.05


def test_seed_determinism_across_workers():
    m = AdditiveModelSpec(np.arange(6.0), 0.5)
    d = Stratified.balanced(StrataPartition(((0, 1), (2, 3), (4, 5)), 6))
    a = run_replications(Additive(m), d, "ipw", "sample", 3000, seed=9, workers=1)
    b = run_replications(Additive(m), d, "ipw", "sample", 3000, seed=9, workers=4)
    assert a == b
    c = run_replications(Additive(m), d, "ipw", "sample", 3000, seed=10)
    assert c != a


def test_stopping_rule():
    two_thirds = Fraction(2, 3)
    r = stopping_rule_simulation(two_thirds, 200, 5000, seed=0)
    assert r.stop_fraction > 0
    assert r.min_stopped_value >= two_thirds and r.conditional_mean_exact >= two_thirds
    # horizon 1: a path stops exactly when its first draw is 1, with running mean 1
    r = stopping_rule_simulation(two_thirds, 1, 4000, seed=1)
    assert r.conditional_mean_exact == 1
    assert abs(r.stop_fraction - 0.5) < 4 * 0.5 / np.sqrt(4000)
    r = stopping_rule_simulation(Fraction(3, 2), 50, 100)
    assert r.stop_fraction == 0 and r.conditional_mean_exact is None and np.isnan(r.conditional_mean)
    assert stopping_rule_simulation(0.6, 20, 3000, seed=2, workers=1) == stopping_rule_simulation(0.6, 20, 3000, seed=2, workers=3)
    with pytest.raises(DesignError):
        stopping_rule_simulation(0, 10, 10)


def test_adaptive_example():
    r = adaptive_two_stage_mc(0.5, 10**5, seed=3)
    assert abs(r.mean - 7 / 16) <= 4 * r.mc_standard_error
    r = adaptive_two_stage_mc(0.5, 10**5, seed=3, estimator="ipw", explore=0.1)
    assert abs(r.bias) <= 4 * r.mc_standard_error
    with pytest.raises(PositivityError):
        adaptive_two_stage_mc(0.5, 100, estimator="ipw")
    assert adaptive_two_stage_mc(0.5, 2500, 1, workers=1) == adaptive_two_stage_mc(0.5, 2500, 1, workers=4)


def test_factor_fixture_constants():
    for T0 in (50, 100, 200):
        c = loading_constants(factor_fixture(T0=T0), T0)
        assert c["zeta_lower"] == pytest.approx(1.0)
        assert c["beta_bar"] == 1.0 and c["lambda_bar"] == 1.0
    with pytest.raises(DesignError):
        factor_fixture(T0=51)


def test_synth_study_small():
    dgp = factor_fixture(n=8, T0=10, T_post=2, sigma=0.5)
    a = synth_bias_study(dgp, 10, reps=40, seed=1)
    b = synth_bias_study(dgp, 10, reps=40, seed=1, workers=4)
    assert np.array_equal(a.bias, b.bias) and a.c == b.c
    assert a.bias.shape == (2,)
    assert np.all(np.abs(a.bias) <= a.bound + 3 * a.standard_error)
    assert a.bound_noise_term <= a.bound
