import math

import numpy as np
import pytest

from burgulence.errors import ConfigurationError, GridMismatchError
from burgulence.field import PeriodicField, lp_norm, sobolev_norm, to_spectral
from burgulence.forcing import (
    KickDistribution,
    KickStream,
    apply_kick,
    estimate_moment,
    sample_kick,
)

DIST = KickDistribution()
# Closed form 2 * (1/3) * (1 - 4^-8) for A = 1, K_max = 8.
I0 = 2.0 / 3.0 * (1 - 4.0**-8)


def test_closed_form_i0():
    assert DIST.moment(0) == pytest.approx(I0, rel=1e-14)
    assert I0 == pytest.approx(0.666657, abs=1e-6)


def test_closed_form_i1_single_mode():
    d = KickDistribution(1.0, 1)
    assert d.moment(1) == pytest.approx(2 * (2 * math.pi) ** 2 * 0.25, rel=1e-14)
    assert d.moment(1) == pytest.approx(19.739, abs=1e-3)


def test_validation():
    with pytest.raises(ConfigurationError):
        KickDistribution(-1.0)
    with pytest.raises(ConfigurationError):
        KickDistribution(1.0, 0)
    with pytest.raises(ConfigurationError):
        KickDistribution(1.0, 8, "gaussian")


def test_nontriviality():
    assert DIST.is_nontrivial and not KickDistribution(0.0).is_nontrivial


class TestSampleKick:
    def test_deterministic(self):
        s = KickStream(7, 3, DIST)
        a = sample_kick(s, 5, 256)
        b = sample_kick(KickStream(7, 3, DIST), 5, 256)
        assert np.array_equal(a.samples, b.samples)

    def test_distinct_streams(self):
        a = sample_kick(KickStream(7, 3, DIST), 5, 256).samples
        assert not np.array_equal(a, sample_kick(KickStream(7, 4, DIST), 5, 256).samples)
        assert not np.array_equal(a, sample_kick(KickStream(7, 3, DIST), 6, 256).samples)
        assert not np.array_equal(a, sample_kick(KickStream(8, 3, DIST), 5, 256).samples)

    def test_band_limited_and_bounded(self):
        z = sample_kick(KickStream(1, 0, DIST), 1, 256)
        spec = to_spectral(z)
        assert np.max(np.abs(spec.coeffs[9:])) < 1e-15
        c = DIST.scales
        assert np.all(np.abs(spec.a[1:9]) <= c * math.sqrt(3) * (1 + 1e-12))
        assert np.all(np.abs(spec.b[1:9]) <= c * math.sqrt(3) * (1 + 1e-12))
        assert abs(z.samples.mean()) < 1e-15

    def test_grid_independent_coefficients(self):
        s = KickStream(1, 0, DIST)
        a = to_spectral(sample_kick(s, 2, 64))
        b = to_spectral(sample_kick(s, 2, 1024))
        assert np.allclose(a.a[1:9], b.a[1:9], atol=1e-15)

    def test_grid_too_small(self):
        with pytest.raises(ConfigurationError):
            sample_kick(KickStream(1, 0, KickDistribution(1.0, 8)), 1, 16)

    def test_index_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            sample_kick(KickStream(1, 0, DIST), 0, 64)

    def test_rademacher_law(self):
        d = KickDistribution(1.0, 4, "rademacher")
        spec = to_spectral(sample_kick(KickStream(2, 0, d), 1, 64))
        assert np.allclose(np.abs(spec.a[1:5]), d.scales)


class TestApplyKick:
    def test_identities(self, rng):
        u = PeriodicField.from_samples(rng.standard_normal(64))
        zero = PeriodicField.zeros(64)
        assert np.allclose(apply_kick(u, zero).samples, u.samples, rtol=0, atol=1e-15)
        assert np.allclose(apply_kick(zero, u).samples, u.samples, rtol=0, atol=1e-15)

    def test_energy_identity(self, rng):
        u = PeriodicField.from_samples(rng.standard_normal(128))
        z = sample_kick(KickStream(3, 1, DIST), 1, 128)
        lhs = lp_norm(apply_kick(u, z), 2) ** 2 - lp_norm(u, 2) ** 2
        rhs = 2 * np.mean(u.samples * z.samples) + lp_norm(z, 2) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_operator(self, rng):
        u = PeriodicField.from_samples(rng.standard_normal(32))
        z = PeriodicField.from_samples(rng.standard_normal(32))
        assert np.array_equal((u + z).samples, apply_kick(u, z).samples)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            apply_kick(PeriodicField.zeros(32), PeriodicField.zeros(64))


class TestMoments:
    def test_i0_estimate(self):
        est = estimate_moment(DIST, 0, 100_000, seed=11)
        assert est.value == pytest.approx(I0, rel=0.01)
        assert abs(est.value - I0) < 5 * est.stderr

    def test_i1_estimate_single_mode(self):
        d = KickDistribution(1.0, 1)
        est = estimate_moment(d, 1, 100_000, seed=12)
        assert est.value == pytest.approx(19.739, rel=0.01)

    def test_degenerate(self):
        est = estimate_moment(KickDistribution(0.0), 0, 1000, seed=1)
        assert est.value == 0.0 and est.stderr == 0.0

    def test_needs_samples(self):
        with pytest.raises(ConfigurationError):
            estimate_moment(DIST, 0, 10, seed=1)

    def test_per_mode_means_vanish(self):
        rng = np.random.default_rng(99)
        a, b = DIST.sample_coefficients(rng, 100_000)
        for arr in (a, b):
            se = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
            assert np.all(np.abs(arr.mean(axis=0)) < 4 * se)

    def test_a1_mean_clt_band(self):
        rng = np.random.default_rng(5)
        a, _ = DIST.sample_coefficients(rng, 100_000)
        assert abs(a[:, 0].mean()) < 3 * DIST.scales[0] / math.sqrt(100_000)

    def test_exponential_moment_finite(self):
        rng = np.random.default_rng(6)
        a, b = DIST.sample_coefficients(rng, 100_000)
        k = np.arange(1, 9)
        h2 = np.sum((2 * np.pi * k) ** 4 * (a * a + b * b), axis=1)
        alpha = 1.0 / (2.0 * h2.mean())
        assert np.isfinite(np.mean(np.exp(alpha * h2)))
        h1 = np.sqrt(np.sum((2 * np.pi * k) ** 2 * (a * a + b * b), axis=1))
        assert h1.max() <= DIST.norm_bound(1)

    def test_norm_bound_on_sampled_kick(self):
        z = sample_kick(KickStream(4, 2, DIST), 3, 256)
        assert sobolev_norm(z, 1, 2) <= DIST.norm_bound(1)
