import itertools


import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expdesign.core import Bernoulli, CompletelyRandomized, DesignPmf, Explicit, ScienceTable
from expdesign.errors import DesignError, PositivityError
from expdesign.estimators import dm_estimate, ipw_estimate
from expdesign.oracle import all_assignments, exact_risk, expand_design
from expdesign.robust import (
    AdditiveModelSpec,
    BoxUncertainty,
    additive_crd_risk,
    additive_dm_loss,
    bernoulli_worst_case_risk,
    grid_worst_case_risk,
    minimax_bernoulli,
    optimal_crd_split,
    reduced_bernoulli_objective,
    symmetric_grid_scan,
    symmetrize,
    symmetrize_bruteforce,
)


def random_pmf(rng, n, support_size=None):
    codes = rng.choice(1 << n, size=support_size or rng.integers(1, 1 << n), replace=False)
    sup = all_assignments(n)[np.sort(codes)]
    probs = rng.dirichlet(np.ones(len(codes)))
    return DesignPmf(sup, probs)


def ipw_risk_by_loop(p, t):
    """Direct sum over {0,1}^n of P(w) * (ipw - ate)^2."""
    ate = float(np.mean(t.y1 - t.y0))
    total = 0.0
    for w in itertools.product((0, 1), repeat=t.n):
        w = np.array(w)
        prob = np.prod(np.where(w == 1, p, 1 - p))
        total += prob * (ipw_estimate(t.observed(w), w, p) - ate) ** 2
    return total


class TestAdditiveCrd:
    def test_examples(self):
        assert additive_crd_risk(2, 2, AdditiveModelSpec(np.ones(4), 1.0)) == pytest.approx(1.0)
        assert additive_crd_risk(1, 1, AdditiveModelSpec(np.array([1.0, -1.0]))) == pytest.approx(4.0)
        for n1 in range(1, 5):
            assert additive_crd_risk(n1, 5 - n1, AdditiveModelSpec(np.full(5, 3.0))) == pytest.approx(0.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(DesignError):
            additive_crd_risk(1, 0, AdditiveModelSpec(np.ones(1)))
        with pytest.raises(DesignError):
            additive_crd_risk(2, 2, AdditiveModelSpec(np.ones(3)))
        with pytest.raises(DesignError):
            AdditiveModelSpec(np.array([1.0, np.nan]))
        with pytest.raises(DesignError):
            AdditiveModelSpec(np.ones(2), sigma2=-1)

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_closed_form_matches_enumeration(self, n, seed):
        rng = np.random.default_rng(seed)
        m = AdditiveModelSpec(rng.normal(size=n), rng.uniform(0, 2), 0.3, -0.2)
        n1 = int(rng.integers(1, n))
        got = additive_crd_risk(n1, n - n1, m)
        ref = exact_risk(CompletelyRandomized(n, n1), lambda w: float(additive_dm_loss(w, m)))
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-12)

    def test_dm_loss_matches_single_draw_without_noise(self):
        m = AdditiveModelSpec(np.array([1.0, 2.0, 5.0]), 0.0, 1.0, 0.0)
        w = np.array([1, 0, 0])
        y1 = m.alpha1 + m.g
        y0 = m.alpha0 + m.g
        t = ScienceTable(y1, y0)
        assert additive_dm_loss(w, m) == pytest.approx((dm_estimate(t.observed(w), w) - m.tau) ** 2)
        with pytest.raises(DesignError):
            additive_dm_loss(np.zeros(3), m)


class TestSplit:
    def test_examples(self):
        assert optimal_crd_split(6) == (3, 3)
        assert optimal_crd_split(2) == (1, 1)
        with pytest.raises(DesignError, match="requires even n"):
            optimal_crd_split(5)

    def test_balanced_split_is_best(self, rng):
        for _ in range(20):
            m = AdditiveModelSpec(rng.normal(size=8), rng.uniform(0, 1))
            n1, n0 = optimal_crd_split(8)
            best = additive_crd_risk(n1, n0, m)
            assert all(best <= additive_crd_risk(k, 8 - k, m) + 1e-12 for k in range(1, 8))


class TestSymmetrize:
    def test_point_mass(self):
        point = DesignPmf(np.array([[1, 0, 0]]), np.array([1.0]))
        out = symmetrize(point)
        crd = expand_design(CompletelyRandomized(3, 1))
        assert out.support.tolist() == crd.support.tolist()
        assert np.allclose(out.probs, crd.probs)

    def test_crd_fixed_point(self):
        crd = expand_design(CompletelyRandomized(5, 2))
        out = symmetrize(crd)
        assert out.support.tolist() == crd.support.tolist()
        assert np.allclose(out.probs, crd.probs)

    def test_cap(self):
        with pytest.raises(DesignError):
            symmetrize(Bernoulli.uniform(9))

    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_orbit_formula_matches_permutation_sum(self, n, seed):
        pmf = random_pmf(np.random.default_rng(seed), n)
        a, b = symmetrize(pmf), symmetrize_bruteforce(pmf)
        assert a.support.tolist() == b.support.tolist()
        assert np.allclose(a.probs, b.probs, atol=1e-12)
        assert a.probs.sum() == pytest.approx(1.0)

    @given(st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_output_is_permutation_invariant(self, n, seed):
        out = symmetrize(random_pmf(np.random.default_rng(seed), n))
        for perm in itertools.permutations(range(n)):
            for w, p in zip(out.support, out.probs):
                assert out.prob_of(w[list(perm)]) == pytest.approx(p, abs=1e-12)

    @given(st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_symmetrization_never_raises_grid_worst_case(self, n, seed):
        rng = np.random.default_rng(seed)
        sup = all_assignments(n)
        sup = sup[(sup.sum(axis=1) > 0) & (sup.sum(axis=1) < n)]
        pick = rng.choice(len(sup), size=rng.integers(1, len(sup) + 1), replace=False)
        pmf = DesignPmf(sup[np.sort(pick)], rng.dirichlet(np.ones(len(pick))))
        grid = rng.normal(size=3)
        sigma2 = rng.uniform(0, 1)
        before = grid_worst_case_risk(pmf, grid, sigma2)
        after = grid_worst_case_risk(symmetrize(pmf), grid, sigma2)
        assert after <= before + 1e-10

    def test_grid_worst_case_by_loop(self):
        pmf = expand_design(CompletelyRandomized(3, 1))
        grid = (-1.0, 0.5)
        ref = 0.0
        for g in itertools.product(grid, repeat=3):
            m = AdditiveModelSpec(np.array(g), 0.2)
            ref = max(ref, float(np.dot(pmf.probs, additive_dm_loss(pmf.support, m))))
        assert grid_worst_case_risk(pmf, grid, 0.2) == pytest.approx(ref)

    def test_bruteforce_uses_all_permutations(self):
        # a single point mass spreads evenly over its orbit of C(4,2)=6 vectors
        point = DesignPmf(np.array([[1, 1, 0, 0]]), np.array([1.0]))
        out = symmetrize_bruteforce(point)
        assert len(out.probs) == 6 and np.allclose(out.probs, 1 / 6)


class TestBernoulli:
    def test_reduced_objective_examples(self):
        b = 1.7
        p = np.array([0.3, 0.5, 0.8])
        t = ScienceTable(np.full(3, b), np.full(3, b))
        assert reduced_bernoulli_objective(p, t) == pytest.approx(b**2 / 9 * np.sum(1 / (p * (1 - p))))
        t = ScienceTable([2.0, 4.0], [1.0, 1.0])
        assert reduced_bernoulli_objective([0.5, 0.5], t) == pytest.approx(ipw_risk_by_loop(np.full(2, 0.5), t), abs=1e-12)
        y0 = np.array([1.0, -2.0, 0.5])
        assert reduced_bernoulli_objective(p, ScienceTable(-y0 * p / (1 - p), y0)) == pytest.approx(0.0, abs=1e-12)

    def test_positivity(self):
        t = ScienceTable([1.0, 1.0], [0.0, 0.0])
        with pytest.raises(PositivityError):
            reduced_bernoulli_objective([0.0, 0.5], t)
        with pytest.raises(PositivityError):
            bernoulli_worst_case_risk([0.5, 1.0], BoxUncertainty(1))
        with pytest.raises(DesignError):
            BoxUncertainty(0)

    @given(st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_reduced_objective_is_exact_ipw_risk(self, n, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.05, 0.95, size=n)
        t = ScienceTable(rng.normal(size=n), rng.normal(size=n))
        assert reduced_bernoulli_objective(p, t) == pytest.approx(ipw_risk_by_loop(p, t), rel=1e-10, abs=1e-12)

    def test_reduced_objective_matches_exact_risk_oracle(self, rng):
        n = 5
        p = rng.uniform(0.1, 0.9, size=n)
        t = ScienceTable(rng.normal(size=n), rng.normal(size=n))
        ate = float(np.mean(t.y1 - t.y0))
        ref = exact_risk(Bernoulli(p), lambda w: (ipw_estimate(t.observed(w), w, p) - ate) ** 2)
        assert reduced_bernoulli_objective(p, t) == pytest.approx(ref, rel=1e-10)

    def test_worst_case_examples(self):
        assert bernoulli_worst_case_risk(np.full(10, 0.5), BoxUncertainty(1)) == pytest.approx(0.4)
        assert bernoulli_worst_case_risk([0.5, 0.5], BoxUncertainty(2)) == pytest.approx(8.0)
        p = np.r_[np.full(9, 0.5), 0.25]
        assert bernoulli_worst_case_risk(p, BoxUncertainty(1)) == pytest.approx((36 + 16 / 3) / 100)

    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_worst_case_dominates_tables_in_box(self, n, seed):
        rng = np.random.default_rng(seed)
        b = rng.uniform(0.5, 3)
        p = rng.uniform(0.05, 0.95, size=n)
        worst = bernoulli_worst_case_risk(p, BoxUncertainty(b))
        t = ScienceTable(rng.uniform(-b, b, n), rng.uniform(-b, b, n))
        assert reduced_bernoulli_objective(p, t) <= worst + 1e-12
        corner = ScienceTable(np.full(n, b), np.full(n, b))
        assert reduced_bernoulli_objective(p, corner) == pytest.approx(worst)

    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=8), st.randoms())
    def test_symmetric_in_p(self, p, r):
        q = list(p)
        r.shuffle(q)
        box = BoxUncertainty(1.3)
        assert bernoulli_worst_case_risk(q, box) == pytest.approx(bernoulli_worst_case_risk(p, box), rel=1e-12)

    def test_unimodal_along_diagonal(self):
        q = np.round(np.arange(1, 100) / 100, 12)
        _, risks = symmetric_grid_scan(6, BoxUncertainty(1), q)
        mid = int(np.argmin(risks))
        assert q[mid] == 0.5
        assert np.all(np.diff(risks[: mid + 1]) < 0)
        assert np.all(np.diff(risks[mid:]) > 0)

    def test_minimax(self):
        r = minimax_bernoulli(10, BoxUncertainty(1))
        assert np.all(r.optimal_p == 0.5) and r.worst_case_risk == pytest.approx(0.4)
        assert minimax_bernoulli(1, BoxUncertainty(1)).worst_case_risk == pytest.approx(4.0)
        q, risks = symmetric_grid_scan(4, BoxUncertainty(1))
        assert q[np.argmin(risks)] == 0.5
        assert np.sum(risks == risks.min()) == 1

    def test_minimax_beats_grid(self):
        box = BoxUncertainty(2.0)
        best = minimax_bernoulli(3, box).worst_case_risk
        grid = np.arange(1, 10) / 10
        for p in itertools.product(grid, repeat=3):
            assert bernoulli_worst_case_risk(p, box) >= best - 1e-12

    def test_explicit_design_risk(self):
        # exact_risk on an explicit Bernoulli pmf equals the closed form
        t = ScienceTable([1.0, -1.0, 0.5], [0.0, 2.0, 1.0])
        p = np.array([0.4, 0.5, 0.7])
        pmf = expand_design(Bernoulli(p))
        ate = float(np.mean(t.y1 - t.y0))
        ref = exact_risk(Explicit(pmf), lambda w: (ipw_estimate(t.observed(w), w, p) - ate) ** 2)
        assert reduced_bernoulli_objective(p, t) == pytest.approx(ref)
