import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.spatial.distance import jensenshannon

from mhgan.metrics import (
    UNASSIGNED,
    ModeAssignment,
    assign_modes,
    binned_kl,
    high_quality_rate,
    jensen_shannon,
    kolmogorov_sf,
    ks_multivariate,
    ks_two_sample,
    mode_jsd,
    roc_auc,
    within_mode_std,
)
from mhgan.mixtures import GaussianMixture, make_grid25
from mhgan.models import imperfect_grid_generator

from oracles import jsd_by_summation

GRID = make_grid25()


def assignment(counts):
    counts = np.asarray(counts)
    return ModeAssignment(np.zeros(0, int), np.zeros(0), counts)


# -- assignment -----------------------------------------------------------------

def test_sample_at_mean_gets_that_mode():
    a = assign_modes(GRID.means, GRID)
    assert np.array_equal(a.labels, np.arange(25))
    assert np.all(a.distances == 0)


def test_threshold_is_four_sigma():
    mu = GRID.means[7]
    a = assign_modes([mu + [0.21, 0], mu + [0.2, 0], mu + [0, -0.199]], GRID)
    assert list(a.labels) == [UNASSIGNED, 7, 7]


def test_ties_go_to_lowest_index():
    m = GaussianMixture.from_components([[0.0, 0.0], [0.2, 0.0]], 0.05)
    assert assign_modes([[0.1, 0.0]], m).labels[0] == 0


def test_counts_sum_to_sample_count():
    x = imperfect_grid_generator((), 0.3).sample(3000, np.random.default_rng(0))
    a = assign_modes(x, GRID)
    assert a.total == 3000 and len(a.counts) == 26
    assert a.counts[-1] == np.sum(a.labels == UNASSIGNED)


def test_translation_equivariance():
    rng = np.random.default_rng(1)
    x = rng.uniform(-2.5, 2.5, (2000, 2))
    shift = np.array([3.7, -1.25])
    moved = GaussianMixture(GRID.means + shift, GRID.sigmas, GRID.weights)
    a, b = assign_modes(x, GRID), assign_modes(x + shift, moved)
    # only points sitting on the 4-sigma boundary can flip through rounding
    assert np.mean(a.labels != b.labels) < 1e-3


def test_assign_dimension_mismatch():
    with pytest.raises(ValueError):
        assign_modes(np.zeros((3, 3)), GRID)


# -- high quality rate --------------------------------------------------------------

def test_hq_trivial_cases():
    assert high_quality_rate(assign_modes(GRID.means, GRID)) == 1.0
    assert high_quality_rate(assign_modes([[10.0, 10.0]] * 5, GRID)) == 0.0
    with pytest.raises(ValueError):
        high_quality_rate(assign_modes(np.zeros((0, 2)), GRID))


def test_hq_true_grid():
    x = GRID.sample(10_000, np.random.default_rng(2))
    assert high_quality_rate(assign_modes(x, GRID)) >= 0.999


def test_hq_bridge_generator():
    x = imperfect_grid_generator((), 0.1).sample(10_000, np.random.default_rng(3))
    assert high_quality_rate(assign_modes(x, GRID)) == pytest.approx(0.9, abs=0.02)


# -- JSD --------------------------------------------------------------------------

def test_jsd_uniform_is_zero():
    assert mode_jsd(assignment([4] * 25 + [0])) == 0.0


def test_jsd_single_mode():
    counts = [100] + [0] * 25
    ref = [1 / 25] * 25 + [0]
    assert mode_jsd(assignment(counts)) == pytest.approx(jsd_by_summation(counts, ref), rel=1e-12)
    # midpoint puts 13/25 on the occupied mode and 1/50 on the others
    hand = 0.5 * np.log(25 / 13) + 0.5 * (np.log(1 / 13) / 25 + 24 / 25 * np.log(2))
    assert mode_jsd(assignment(counts)) == pytest.approx(hand, rel=1e-12)


def test_jsd_all_unassigned_is_ln2():
    assert mode_jsd(assignment([0] * 25 + [10])) == pytest.approx(np.log(2), rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=26, max_size=26).filter(lambda c: sum(c) > 0),
       st.lists(st.integers(0, 50), min_size=26, max_size=26).filter(lambda c: sum(c) > 0))
def test_jsd_symmetric_bounded_and_matches_summation(p, q):
    v = jensen_shannon(p, q)
    assert v == pytest.approx(jensen_shannon(q, p), rel=1e-12, abs=1e-15)
    assert -1e-15 <= v <= np.log(2) + 1e-15
    assert v == pytest.approx(jsd_by_summation(p, q), rel=1e-9, abs=1e-12)


def test_jsd_agrees_with_scipy():
    rng = np.random.default_rng(4)
    p, q = rng.uniform(size=26), rng.uniform(size=26)
    # scipy returns the square root of the divergence
    assert jensen_shannon(p, q) == pytest.approx(jensenshannon(p, q) ** 2, rel=1e-10)


# -- within-mode std ------------------------------------------------------------------

def test_within_mode_std_true_grid():
    x = GRID.sample(100_000, np.random.default_rng(5))
    assert within_mode_std(x, assign_modes(x, GRID), GRID) == pytest.approx(0.05, abs=0.003)


def test_within_mode_std_two_samples_at_mean():
    x = np.array([GRID.means[3], GRID.means[3]])
    assert within_mode_std(x, assign_modes(x, GRID), GRID) == 0.0


def test_within_mode_std_hand_value():
    mu = GRID.means[12]
    x = np.array([mu + [0.05, 0], mu - [0.05, 0]])
    # RMS radial distance 0.05 spread over two axes
    assert within_mode_std(x, assign_modes(x, GRID), GRID) == pytest.approx(0.05 / np.sqrt(2))


def test_within_mode_std_count_weighted():
    a, b = GRID.means[0], GRID.means[1]
    x = np.array([a, a, b + [0.1, 0], b - [0.1, 0], b + [0.1, 0], b - [0.1, 0]])
    # mode 0 contributes 0 with weight 2, mode 1 contributes 0.1/sqrt2 with weight 4
    expected = 4 * 0.1 / np.sqrt(2) / 6
    assert within_mode_std(x, assign_modes(x, GRID), GRID) == pytest.approx(expected)


def test_within_mode_std_needs_assigned_samples():
    x = np.array([[10.0, 10.0], GRID.means[0]])
    with pytest.raises(ValueError):
        within_mode_std(x, assign_modes(x, GRID), GRID)


# -- KS -----------------------------------------------------------------------------

def test_ks_identical_and_disjoint():
    a = np.arange(1000) / 1000
    assert ks_two_sample(a, a) == (0.0, 1.0)
    stat, p = ks_two_sample(a, a + 10)
    assert stat == 1.0 and p < 1e-100


def test_ks_statistic_matches_scipy():
    rng = np.random.default_rng(6)
    for _ in range(20):
        a = rng.normal(size=rng.integers(5, 400))
        b = rng.normal(0.2, 1.3, size=rng.integers(5, 400))
        ref = stats.ks_2samp(a, b, method="asymp")
        stat, p = ks_two_sample(a, b)
        assert stat == pytest.approx(ref.statistic, abs=1e-15)
        # scipy's asymptotic p-value uses the same limiting distribution
        ne = len(a) * len(b) / (len(a) + len(b))
        assert p == pytest.approx(stats.kstwobign.sf(np.sqrt(ne) * stat), abs=1e-12)


def test_ks_with_ties():
    a = np.array([0, 0, 1, 1, 2.0])
    b = np.array([0, 1, 1, 1, 1.0])
    assert ks_two_sample(a, b)[0] == pytest.approx(stats.ks_2samp(a, b, method="asymp").statistic)


def test_kolmogorov_sf_against_scipy():
    for lam in (0.3, 0.5, 0.8, 1.0, 1.36, 1.63, 2.0, 3.0):
        assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-12)
    assert kolmogorov_sf(0.0) == 1.0
    assert kolmogorov_sf(0.05) == pytest.approx(1.0, abs=1e-12)


def test_ks_null_calibration():
    passed = 0
    for seed in range(500):
        rng = np.random.default_rng(seed)
        passed += ks_two_sample(rng.normal(size=5000), rng.normal(size=5000))[1] > 0.01
    assert passed >= 0.98 * 500


def test_ks_rejects_empty():
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


def test_ks_multivariate_bonferroni():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(500, 2))
    b = rng.normal(size=(500, 2))
    b[:, 1] += 0.5
    stat, p = ks_multivariate(a, b)
    s1, p1 = ks_two_sample(a[:, 1], b[:, 1])
    assert stat == s1 and p == pytest.approx(min(1, 2 * p1))
    assert ks_multivariate(a[:, 0], b[:, 0]) == ks_two_sample(a[:, 0], b[:, 0])
    with pytest.raises(ValueError):
        ks_multivariate(a, b[:, :1])


# -- AUC, binned KL ---------------------------------------------------------------------

def test_auc_matches_pair_counting():
    rng = np.random.default_rng(8)
    s = np.round(rng.normal(size=300), 1)
    y = rng.integers(0, 2, 300)
    pos, neg = s[y == 1], s[y == 0]
    pairs = (pos[:, None] > neg[None, :]).mean() + 0.5 * (pos[:, None] == neg[None, :]).mean()
    assert roc_auc(s, y) == pytest.approx(pairs, rel=1e-12)
    assert roc_auc([0.1, 0.9], [0, 1]) == 1.0
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


def test_binned_kl_small_for_matching_samples():
    x = np.random.default_rng(9).normal(size=20_000)
    edges = np.linspace(-4, 4, 41)
    assert 0 <= binned_kl(x, stats.norm.cdf, edges) < 0.005
    assert binned_kl(x + 1, stats.norm.cdf, edges) > 0.3
