import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from nngp_limit import nonlinearity as nl
from nngp_limit.distributions import RngStream
from nngp_limit.errors import ConfigError, InsufficientDataError, NonPositiveValueError
from nngp_limit.experiments import sample_gaussian_outputs
from nngp_limit.kernel import QuadratureRule, kernel_forward
from nngp_limit.network import InputSet, NetworkConfig, SampleEnsemble, default_inputs, sample_ensemble
from nngp_limit.stats import (
    CfProbeSet,
    ConvergencePoint,
    cf_distance,
    cross_neuron_cov,
    empirical_covariance,
    excess_cumulants,
    exact_mean,
    gaussian_cf,
    loglog_slope,
    pooled_covariance,
    sample_covariance,
)

K_TEST = np.array([[1.0, 0.4, 0.1], [0.4, 0.8, 0.3], [0.1, 0.3, 1.5]])


def _ensemble_from(z):
    return SampleEnsemble(len(z), {1: z}, 0)


def test_exact_mean_is_correctly_rounded():
    x = np.array([1e16, 1.0, -1e16, 1.0])
    assert exact_mean(x) == 0.5
    assert np.mean(x) != 0.5


def test_covariance_of_direct_gaussian():
    z = np.random.default_rng(1).standard_normal((10**5, 1, 2))
    cov, se = empirical_covariance(_ensemble_from(z), 1, 0)
    assert np.all(np.abs(cov - np.eye(2)) < 4 * se)


def test_covariance_two_trials():
    cov, _ = empirical_covariance(_ensemble_from(np.array([[[0.0]], [[2.0]]])), 1, 0)
    assert cov[0, 0] == 2.0
    with pytest.raises(InsufficientDataError):
        sample_covariance(np.zeros((1, 2)))


def test_covariance_linear_network_closed_form():
    Cb, Cw = 0.2, 1.3
    cfg = NetworkConfig(1, (2, 5, 1), Cw, Cb, nl.IDENTITY)
    X = default_inputs().points
    ens = sample_ensemble(cfg, default_inputs(), 20000, [2], 4)
    cov, se = empirical_covariance(ens, 2, 0)
    expected = Cb * (1 + Cw) + Cw**2 / 2 * X @ X.T
    assert np.all(np.abs(cov - expected) < 4 * se)


@given(z=arrays(np.float64, (20, 3), elements=st.floats(-10, 10)))
def test_covariance_symmetric_nonnegative_diagonal(z):
    cov, se = sample_covariance(z)
    assert np.array_equal(cov, cov.T)
    assert np.all(np.diag(cov) >= 0) and np.all(se >= 0)


def test_cumulants_of_normal_and_rademacher():
    g = np.random.default_rng(2).standard_normal(10**5)
    c = excess_cumulants(g)
    assert abs(c.k3) < 5 * c.se_k3 and abs(c.k4) < 5 * c.se_k4
    r = np.random.default_rng(3).choice([-1.0, 1.0], 10**5)
    c = excess_cumulants(r)
    assert abs(c.k4 + 2) < 5 * c.se_k4


def test_k_statistics_by_hand():
    x = np.array([-1.0, 0.0, 1.0, 2.0, -3.0, 0.5, 4.0, -0.5, 1.5, -2.0])
    n = x.size
    s1, s2, s3, s4 = (np.sum(x**p) for p in range(1, 5))
    k3 = (n * n * s3 - 3 * n * s2 * s1 + 2 * s1**3) / (n * (n - 1) * (n - 2))
    k4 = ((n**3 + n**2) * s4 - 4 * (n**2 + n) * s3 * s1 - 3 * (n**2 - n) * s2**2
          + 12 * n * s2 * s1**2 - 6 * s1**4) / (n * (n - 1) * (n - 2) * (n - 3))
    c = excess_cumulants(x)
    assert c.k3 == pytest.approx(k3, rel=1e-12)
    assert c.k4 == pytest.approx(k4, rel=1e-12)
    assert c.k3 == pytest.approx(sps.kstat(x, 3), rel=1e-12)
    assert c.k4 == pytest.approx(sps.kstat(x, 4), rel=1e-12)


def test_three_point_sample_is_too_small():
    # k4 has an (n - 3) denominator; three points cannot define it
    with pytest.raises(InsufficientDataError):
        excess_cumulants([-1.0, 0.0, 1.0])
    assert sps.kstat([-1.0, 0.0, 1.0], 3) == 0.0


def test_cumulant_se_calibration():
    """Across replicate normal samples, the spread of k4 matches its reported SE."""
    rng = np.random.default_rng(4)
    reps = [excess_cumulants(rng.standard_normal(2000)) for _ in range(300)]
    k4 = np.array([c.k4 for c in reps])
    se = np.mean([c.se_k4 for c in reps])
    assert 0.8 < k4.std(ddof=1) / se < 1.2


def test_probes_reproducible_and_bounded():
    a = CfProbeSet.generate(32, 2, 3, seed=5)
    b = CfProbeSet.generate(32, 2, 3, seed=5)
    assert np.array_equal(a.probes, b.probes)
    assert np.all(np.sqrt((a.probes**2).sum(axis=(1, 2))) <= 3.0 + 1e-12)


def test_cf_zero_probe_is_exact():
    Z = np.random.default_rng(0).standard_normal((200, 2, 3))
    probes = CfProbeSet(np.zeros((1, 2, 3)), 0)
    d, _ = cf_distance(Z, K_TEST, probes)
    assert d == 0.0
    assert gaussian_cf(K_TEST, probes.probes)[0] == 1.0


def test_cf_distance_oracle_is_zero():
    Z = sample_gaussian_outputs(K_TEST, 20000, 2, RngStream(6, 0))
    d, se = cf_distance(Z, K_TEST, CfProbeSet.generate(32, 2, 3, 7))
    assert d < 5 * se


def test_cf_distance_linear_network_gaussian_only_in_the_limit():
    """A deep linear network is Gaussian given its random conditional covariance,
    i.e. a scale mixture of Gaussians: clearly non-Gaussian at width 4, much
    closer at width 256."""
    inputs = default_inputs()
    probes = CfProbeSet.generate(32, 2, 3, 9)
    d = {}
    for n in (4, 256):
        cfg = NetworkConfig(2, (2, n, n, 2), 1.5, 0.1, nl.IDENTITY)
        K = kernel_forward(inputs.points, cfg)[-1]
        d[n] = cf_distance(sample_ensemble(cfg, inputs, 5000, [3], 8).layer(3), K, probes)
    assert d[4][0] > 10 * d[4][1]
    assert d[4][0] - d[256][0] > 5 * math.hypot(d[4][1], d[256][1])


def test_cf_distance_detects_wrong_kernel():
    Z = sample_gaussian_outputs(K_TEST, 20000, 2, RngStream(6, 0))
    d, se = cf_distance(Z, 1.3 * K_TEST, CfProbeSet.generate(32, 2, 3, 7))
    assert d > 10 * se


def test_cf_distance_needs_trials():
    with pytest.raises(InsufficientDataError):
        cf_distance(np.zeros((99, 1, 1)), np.eye(1), CfProbeSet.generate(2, 1, 1, 0))


@given(scale=st.floats(0.0, 50.0), seed=st.integers(0, 2**32))
def test_cf_distance_bounded(scale, seed):
    Z = scale * np.random.default_rng(seed).standard_cauchy((100, 1, 2))
    d, se = cf_distance(Z, np.eye(2), CfProbeSet.generate(8, 1, 2, seed))
    assert 0.0 <= d <= 2.0 and se >= 0


def test_cross_neuron_cov_linear_network():
    cfg = NetworkConfig(1, (2, 6, 2), 1.0, 0.1, nl.IDENTITY)
    Z = sample_ensemble(cfg, InputSet([[1.0, 0.5]]), 20000, [2], 10).layer(2)
    c, se = cross_neuron_cov(Z, "identity", 0)
    assert abs(c) < 4 * se


def test_cross_neuron_cov_decays_with_width():
    out = {}
    for n, M in ((16, 20000), (512, 4000)):
        cfg = NetworkConfig(1, (2, n, 2), 1.0, 0.0, nl.TANH)
        out[n] = cross_neuron_cov(sample_ensemble(cfg, default_inputs(), M, [2], 11).layer(2), "square", 0)
    (c16, s16), (c512, s512) = out[16], out[512]
    assert abs(c16) - abs(c512) > 2 * math.hypot(s16, s512)


def test_cross_neuron_cov_independent_oracle():
    Z = np.random.default_rng(12).standard_normal((10**4, 2, 1))
    for f in ("identity", "square", "tanh", "abs"):
        c, se = cross_neuron_cov(Z, f, 0)
        assert abs(c) < 4 * se


def test_cross_neuron_cov_errors():
    with pytest.raises(ConfigError):
        cross_neuron_cov(np.zeros((200, 1, 2)))
    with pytest.raises(ConfigError):
        cross_neuron_cov(np.zeros((200, 2, 2)), "cube")


def test_slope_examples():
    assert loglog_slope([2, 4, 8], [1 / 2, 1 / 4, 1 / 8]).slope == pytest.approx(-1.0, abs=1e-12)
    assert loglog_slope([2, 4, 8], [3.0, 3.0, 3.0]).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NonPositiveValueError):
        loglog_slope([2, 4, 8], [1.0, 0.0, 1.0])
    with pytest.raises(ConfigError):
        loglog_slope([2, 4], [1.0, 1.0])


@given(seed=st.integers(0, 2**32))
def test_slope_with_five_percent_noise(seed):
    n = np.array([16, 32, 64, 128, 256, 512], dtype=float)
    v = (1 / n) * (1 + 0.05 * np.random.default_rng(seed).standard_normal(6))
    fit = loglog_slope(n, v, 0.05 * v)
    assert -1.15 <= fit.slope <= -0.85
    assert fit.ci_low <= fit.slope <= fit.ci_high


def test_convergence_point_se_nonnegative():
    with pytest.raises(ValueError):
        ConvergencePoint(8, "x", 1.0, -0.1)


@given(seed=st.integers(0, 2**32))
def test_estimators_invariant_under_trial_reordering(seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((150, 2, 3)) ** 3
    perm = rng.permutation(150)
    probes = CfProbeSet.generate(4, 2, 3, 1)
    assert np.array_equal(pooled_covariance(Z)[0], pooled_covariance(Z[perm])[0])
    assert np.array_equal(sample_covariance(Z[:, 0])[1], sample_covariance(Z[perm, 0])[1])
    assert excess_cumulants(Z[:, 0, 0]) == excess_cumulants(Z[perm, 0, 0])
    assert cf_distance(Z, K_TEST, probes) == cf_distance(Z[perm], K_TEST, probes)
    assert cross_neuron_cov(Z, "tanh", 1, min_trials=10) == cross_neuron_cov(Z[perm], "tanh", 1, min_trials=10)


def test_oracle_path_is_statistically_zero():
    M = 20000
    Z = sample_gaussian_outputs(K_TEST, M, 2, RngStream(13, 0))
    cov, se = pooled_covariance(Z)
    assert np.all(np.abs(cov - K_TEST) < 5 * se)
    for i in range(2):
        for a in range(3):
            c = excess_cumulants(Z[:, i, a])
            assert abs(c.k3) < 5 * c.se_k3 and abs(c.k4) < 5 * c.se_k4
    d, dse = cf_distance(Z, K_TEST, CfProbeSet.generate(32, 2, 3, 14))
    assert d < 5 * dse
