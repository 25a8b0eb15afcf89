import numpy as np
import pytest

from inv2inv.errors import DomainError, ShapeError
from inv2inv.metrics import (MetricReport, gmm_recovery_stats, psnr, shape_l2,
                             sliced_wasserstein, wasserstein_1d)
from inv2inv.rng import CounterStream
from inv2inv.score import GaussianMixture


# --- shape_l2 -------------------------------------------------------------

def test_shape_l2_examples(stream):
    a = stream.uniform((1, 8, 8))
    assert shape_l2(a, a) == 0.0
    assert shape_l2(np.ones((1, 4, 4)), -np.ones((1, 4, 4))) == pytest.approx(2.0, abs=1e-15)
    b = stream.uniform((1, 8, 8))
    brute = (sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / 64) ** 0.5
    assert shape_l2(a, b) == pytest.approx(brute, rel=1e-13)


def test_shape_l2_is_a_metric(stream):
    for _ in range(20):
        a, b, c = stream.uniform((3, 1, 6, 6))
        assert shape_l2(a, b) == shape_l2(b, a)
        assert shape_l2(a, c) <= shape_l2(a, b) + shape_l2(b, c) + 1e-15


def test_shape_l2_errors():
    with pytest.raises(ShapeError):
        shape_l2(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)))
    with pytest.raises(ShapeError):
        shape_l2(np.zeros((3, 4, 4)), np.zeros((3, 4, 4)))


# --- psnr -----------------------------------------------------------------

def test_psnr_examples():
    a = np.zeros((3, 4, 4))
    assert psnr(a, a) == 100.0
    # constant offset 0.2 -> MSE 0.04 -> 20 dB
    assert psnr(a, a + 0.2) == pytest.approx(20.0, abs=1e-12)
    assert psnr(-np.ones((3, 4, 4)), np.ones((3, 4, 4))) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ShapeError):
        psnr(a, np.zeros((1, 4, 4)))


def test_psnr_symmetric_and_monotone(stream):
    a, b = stream.uniform((2, 3, 4, 4)) * 2 - 1
    assert psnr(a, b) == psnr(b, a)
    vals = [psnr(np.zeros(10), np.full(10, d)) for d in np.linspace(0.01, 2.0, 50)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


# --- sliced Wasserstein ---------------------------------------------------

def test_sliced_wasserstein_examples(stream):
    x = stream.normal((300, 3))
    assert sliced_wasserstein(x, x) == 0.0
    assert sliced_wasserstein(np.zeros((5, 1)), np.full((7, 1), 1.7)) == pytest.approx(1.7)
    shift = np.array([3.0, -1.0, 0.5])
    y = stream.normal((300, 3))
    assert sliced_wasserstein(x + shift, y + shift) == pytest.approx(sliced_wasserstein(x, y),
                                                                      abs=1e-10)
    assert sliced_wasserstein(x, y) >= 0.0


def test_one_dimensional_case_is_sorted_w1(stream):
    u, v = stream.normal(200), stream.normal(200) + 0.3
    brute = np.mean(np.abs(np.sort(u) - np.sort(v)))
    assert sliced_wasserstein(u, v, projections=1) == pytest.approx(brute, rel=1e-13)


def test_unequal_sizes_use_quantile_functions():
    # {0, 1} vs {0, 0.5, 1}: quantile functions differ by 0.5 on a third of [0, 1]
    assert wasserstein_1d([0.0, 1.0], [0.0, 0.5, 1.0]) == pytest.approx(1 / 6)


def test_sliced_wasserstein_errors():
    with pytest.raises(DomainError):
        sliced_wasserstein(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        sliced_wasserstein(np.zeros((3, 2)), np.zeros((3, 3)))


# --- mixture recovery -----------------------------------------------------

def test_exact_draws_recover_weights(gmm2d):
    x = gmm2d.sample(50_000, CounterStream(12, 80))
    rep = gmm_recovery_stats(x, gmm2d)
    assert rep.weight_error <= 0.02
    assert rep.counts.sum() == 50_000


def test_single_component_mean_within_3se():
    gm = GaussianMixture([1.0], [[1.0, -2.0]], [0.5])
    x = gm.sample(4000, CounterStream(13, 80))
    rep = gmm_recovery_stats(x, gm)
    se = np.sqrt(0.5 / 4000)
    assert np.all(np.abs(rep.means[0] - gm.means[0]) <= 3 * se)
    assert rep.weights[0] == 1.0


def test_label_permutation_invariance(gmm2d):
    x = gmm2d.sample(5000, CounterStream(14, 80))
    perm = [2, 0, 1]
    gp = GaussianMixture(gmm2d.weights[perm], gmm2d.means[perm], gmm2d.variances[perm])
    a, b = gmm_recovery_stats(x, gmm2d), gmm_recovery_stats(x, gp)
    np.testing.assert_array_equal(a.weights[perm], b.weights)
    np.testing.assert_array_equal(a.means[perm], b.means)
    assert a.covariance_error == pytest.approx(b.covariance_error, rel=1e-12)


def test_recovery_rejects_empty(gmm2d):
    with pytest.raises(DomainError):
        gmm_recovery_stats(np.zeros((0, 2)), gmm2d)


# --- report ---------------------------------------------------------------

def test_metric_report_csv(tmp_path):
    rep = MetricReport()
    rep.add("a", 0.1, 20.0)
    rep.add("b", 0.3, 10.0)
    agg = rep.aggregate()
    assert agg["count"] == 2.0
    assert agg["shape_l2_mean"] == pytest.approx(0.2)
    assert agg["psnr_std"] == pytest.approx(np.std([20.0, 10.0], ddof=1))
    rep.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "name,shape_l2,psnr"
    assert lines[1] == "a,0.1,20.0"
    assert lines[-1].startswith("mean,0.2")
