import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expdesign.core import (
    Bernoulli,
    CompletelyRandomized,
    CovariateMatrix,
    DesignPmf,
    Explicit,
    PanelData,
    Permutation,
    ScienceTable,
    StrataPartition,
    Stratified,
    apply_permutation,
    as_assignment,
    make_rng,
    marginal_propensities,
    sample_ate,
)
from expdesign.errors import DesignError
from expdesign.oracle import expand_design


def test_permutation_example_from_relabeling():
    pi = Permutation.from_one_based([3, 1, 4, 5, 2])
    g = np.array([2, 4, 6, 8, 10])
    once = apply_permutation(pi, g)
    assert once.tolist() == [4, 10, 2, 6, 8]
    assert apply_permutation(pi, once).tolist() == [10, 8, 4, 2, 6]


def test_identity_permutation():
    v = np.array([3.0, -1.0, 2.5])
    assert np.array_equal(apply_permutation(Permutation.identity(3), v), v)


@given(st.integers(1, 9).flatmap(lambda n: st.permutations(list(range(n)))), st.integers(0, 2**32 - 1))
def test_permutation_round_trip(perm, seed):
    pi = Permutation(np.array(perm))
    v = np.random.default_rng(seed).normal(size=len(perm))
    back = apply_permutation(pi.inverse(), apply_permutation(pi, v))
    assert np.array_equal(back, v)


def test_permutation_rejects_non_bijection():
    with pytest.raises(DesignError):
        Permutation(np.array([0, 0, 1]))


@pytest.mark.parametrize(
    "y1, y0, expected",
    [([1.0, 2.0], [1.0, 2.0], 0.0), ([2.0, 4.0], [1.0, 1.0], 2.0), ([1.0, 0.0], [0.0, 1.0], 0.0)],
)
def test_sample_ate(y1, y0, expected):
    assert sample_ate(ScienceTable(y1, y0)) == expected


def test_science_table_validation():
    with pytest.raises(DesignError):
        ScienceTable([1.0, 2.0], [1.0])
    with pytest.raises(DesignError):
        ScienceTable([np.nan], [1.0])
    t = ScienceTable([5.0, 6.0], [1.0, 2.0])
    assert t.observed([1, 0]).tolist() == [5.0, 2.0]


def test_assignment_validation():
    with pytest.raises(DesignError):
        as_assignment([0, 2])
    with pytest.raises(DesignError):
        as_assignment([0, 1], n=3)


def test_marginal_propensity_examples():
    assert marginal_propensities(CompletelyRandomized(4, 2)).tolist() == [0.5] * 4
    assert np.allclose(marginal_propensities(Bernoulli([0.3, 0.7])), [0.3, 0.7])
    pmf = DesignPmf(np.array([[1, 0], [0, 1]]), np.array([0.5, 0.5]))
    assert marginal_propensities(Explicit(pmf)).tolist() == [0.5, 0.5]


def _random_design(rng, n):
    kind = rng.integers(0, 4)
    if kind == 0:
        return Bernoulli(rng.uniform(0.05, 0.95, size=n))
    if kind == 1:
        return CompletelyRandomized(n, int(rng.integers(1, n)))
    if kind == 2 and n >= 4:
        cut = int(rng.integers(2, n - 1))
        perm = rng.permutation(n)
        part = StrataPartition((tuple(perm[:cut]), tuple(perm[cut:])), n)
        return Stratified(part, (CompletelyRandomized(cut, 1), Bernoulli(np.full(n - cut, 0.3))))
    sup = np.unique(rng.integers(0, 2, size=(6, n)), axis=0)
    p = rng.random(sup.shape[0])
    return Explicit(DesignPmf(sup, p / p.sum()))


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_marginals_match_expanded_pmf(n, seed):
    d = _random_design(np.random.default_rng(seed), n)
    pmf = expand_design(d)
    direct = pmf.probs @ pmf.support.astype(float)
    assert np.allclose(marginal_propensities(d), direct, atol=1e-12, rtol=0)


def test_pmf_normalization_enforced():
    with pytest.raises(DesignError):
        DesignPmf(np.array([[1, 0], [0, 1]]), np.array([0.5, 0.6]))
    with pytest.raises(DesignError):
        DesignPmf(np.array([[1, 0], [1, 0]]), np.array([0.5, 0.5]))
    with pytest.raises(DesignError):
        DesignPmf(np.zeros((1, 21), dtype=int), np.array([1.0]))


@pytest.mark.parametrize(
    "strata, n",
    [(((0, 1), (1, 2)), 3), (((0, 1),), 3), (((0, 5),), 3), (((), (0, 1, 2)), 3)],
)
def test_partition_rejects_bad_covers(strata, n):
    with pytest.raises(DesignError):
        StrataPartition(strata, n)


def test_partition_helpers():
    p = StrataPartition.from_one_based([[1, 3], [2, 4]], 4)
    assert p.sizes == (2, 2)
    assert p.labels().tolist() == [0, 1, 0, 1]
    assert p.one_based() == [[1, 3], [2, 4]]
    assert p.canonical() == StrataPartition(((3, 1), (0, 2)), 4).canonical()


def test_bernoulli_and_crd_validation():
    with pytest.raises(DesignError):
        Bernoulli([0.0, 0.5])
    with pytest.raises(DesignError):
        CompletelyRandomized(4, 0)
    with pytest.raises(DesignError):
        Stratified.balanced(StrataPartition(((0, 1, 2),), 3))


def test_covariates_and_panel():
    x = CovariateMatrix([1.0, 2.0, 3.0])
    assert (x.n, x.d, x.labels) == (3, 1, ("x1",))
    with pytest.raises(DesignError):
        PanelData(np.zeros((2, 4)), 4)
    p = PanelData(np.arange(8.0).reshape(2, 4), 2)
    assert p.pre.tolist() == [[0.0, 1.0], [4.0, 5.0]]


def test_rng_streams_are_reproducible_and_distinct():
    a = make_rng(7, 3).random(5)
    assert np.array_equal(a, make_rng(7, 3).random(5))
    assert not np.array_equal(a, make_rng(7, 4).random(5))
    assert not np.array_equal(a, make_rng(8, 3).random(5))
