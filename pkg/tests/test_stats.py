from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from portfolio_pursuit.stats import ALTERNATIVES, cles, cohens_d, mann_whitney_u, midranks


def enumerated_p(a, b, alternative):
    """Permutation p-value by listing every relabelling of the pooled sample."""
    pooled = np.concatenate([a, b])
    ranks = sps.rankdata(pooled)
    n1 = len(a)
    observed = ranks[:n1].sum()
    sums = np.array([ranks[list(c)].sum() for c in itertools.combinations(range(len(pooled)), n1)])
    le = np.mean(sums <= observed + 1e-9)
    ge = np.mean(sums >= observed - 1e-9)
    if alternative == "greater":
        return ge
    if alternative == "less":
        return le
    return min(1.0, 2 * min(le, ge))


samples = st.lists(st.integers(0, 6), min_size=1, max_size=5)


@given(samples, samples, st.sampled_from(ALTERNATIVES))
def test_exact_matches_enumeration(a, b, alternative):
    a, b = np.array(a, float), np.array(b, float)
    _, p = mann_whitney_u(a, b, alternative, method="exact")
    if np.all(np.concatenate([a, b]) == a[0]):
        assert p == 1.0
    else:
        assert p == pytest.approx(enumerated_p(a, b, alternative), abs=1e-12)


def test_smallest_separated_samples():
    u, p = mann_whitney_u([1, 2], [3, 4], "less")
    assert u == 0.0 and p == pytest.approx(1 / 6, abs=1e-15)
    assert mann_whitney_u([3, 4], [1, 2], "greater")[1] == pytest.approx(1 / 6, abs=1e-15)
    assert mann_whitney_u([1, 2], [3, 4])[1] == pytest.approx(1 / 3, abs=1e-15)


def test_identical_samples():
    x = [1.0, 4.0, 2.5, 7.0]
    assert mann_whitney_u(x, x)[1] == 1.0


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.lists(st.floats(-100, 100), min_size=2, max_size=8),
       st.floats(0.01, 1000), st.floats(-50, 50))
def test_monotone_transform_invariance(a, b, scale, shift):
    a, b = np.array(a), np.array(b)
    u1, p1 = mann_whitney_u(a, b)
    u2, p2 = mann_whitney_u(a * scale + shift, b * scale + shift)
    # an affine map can merge or split near-equal values in floating point
    if np.array_equal(midranks(np.concatenate([a, b])),
                      midranks(np.concatenate([a * scale + shift, b * scale + shift]))):
        assert (u1, p1) == (u2, p2)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("alternative", ALTERNATIVES)
def test_normal_close_to_exact_for_moderate_samples(seed, alternative):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(0.3, 1, 15), rng.normal(0, 1, 15)
    _, pe = mann_whitney_u(a, b, alternative, method="exact")
    _, pn = mann_whitney_u(a, b, alternative, method="normal")
    assert abs(pe - pn) < 0.02


@pytest.mark.parametrize("alternative", ALTERNATIVES)
def test_against_scipy(alternative):
    rng = np.random.default_rng(11)
    a, b = rng.integers(0, 8, 12).astype(float), rng.integers(0, 8, 9).astype(float)
    u, p = mann_whitney_u(a, b, alternative, method="normal")
    ref = sps.mannwhitneyu(a, b, alternative=alternative, method="asymptotic", use_continuity=True)
    assert u == ref.statistic
    assert p == pytest.approx(ref.pvalue, rel=1e-9)
    a, b = rng.normal(size=7), rng.normal(size=6)
    ref = sps.mannwhitneyu(a, b, alternative=alternative, method="exact")
    assert mann_whitney_u(a, b, alternative, method="exact")[1] == pytest.approx(ref.pvalue, rel=1e-12)


def test_auto_switches_at_size_limit():
    rng = np.random.default_rng(12)
    a, b = rng.normal(size=10), rng.normal(size=10)
    assert mann_whitney_u(a, b) == mann_whitney_u(a, b, method="exact")
    a = np.append(a, 0.1)
    assert mann_whitney_u(a, b) == mann_whitney_u(a, b, method="normal")


@pytest.mark.parametrize("bad", [dict(alternative="bigger"), dict(method="bootstrap")])
def test_bad_options(bad):
    with pytest.raises(ValueError):
        mann_whitney_u([1.0, 2.0], [3.0, 0.5], **bad)


@pytest.mark.parametrize("a, b", [([], [1.0]), ([1.0], [np.nan])])
def test_bad_samples(a, b):
    with pytest.raises(ValueError):
        mann_whitney_u(a, b)


def test_midranks_ties():
    assert midranks(np.array([3.0, 1.0, 3.0, 2.0])).tolist() == [3.5, 1.0, 3.5, 2.0]


# -- effect sizes --------------------------------------------------------------


@pytest.mark.parametrize("a, b, expected", [([5, 6], [1, 2], 1.0), ([1, 2], [1, 2], 0.5), ([1, 3], [2], 0.5),
                                            ([1, 2], [5, 6], 0.0)])
def test_cles_fixtures(a, b, expected):
    assert cles(a, b) == expected


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=10), st.lists(st.integers(-5, 5), min_size=1, max_size=10))
def test_cles_complement_and_u(a, b):
    assert cles(a, b) + cles(b, a) == pytest.approx(1.0, abs=1e-15)
    u, _ = mann_whitney_u(a, b)
    assert cles(a, b) == pytest.approx(u / (len(a) * len(b)), abs=1e-12)


def test_cohens_d_fixture():
    assert cohens_d([2, 4], [1, 3]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_cohens_d_antisymmetric_and_scale_free():
    rng = np.random.default_rng(13)
    a, b = rng.normal(1, 2, 9), rng.normal(0, 2, 12)
    assert cohens_d(a, b) == pytest.approx(-cohens_d(b, a), abs=1e-14)
    assert cohens_d(3 * a + 1, 3 * b + 1) == pytest.approx(cohens_d(a, b), rel=1e-12)


def test_cohens_d_against_pooled_t():
    rng = np.random.default_rng(14)
    a, b = rng.normal(1, 2, 9), rng.normal(0, 2, 12)
    t = sps.ttest_ind(a, b, equal_var=True).statistic
    assert cohens_d(a, b) == pytest.approx(t * math.sqrt(1 / 9 + 1 / 12), rel=1e-12)


@pytest.mark.parametrize("a, b", [([1, 1], [1, 1]), ([2], [1, 3])])
def test_cohens_d_degenerate(a, b):
    with pytest.raises(ValueError):
        cohens_d(a, b)
