"""Property-based checks of algebraic invariants."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from burgulence.diagnostics import energy_spectrum, fit_power_law, gamma, layer_window
from burgulence.field import (
    PeriodicField,
    derivative,
    lp_norm,
    random_band_limited,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from burgulence.flux import builtin_flux, shifted_flux
from burgulence.forcing import KickDistribution, KickStream, apply_kick, sample_kick

seeds = st.integers(0, 2**32 - 1)
sizes = st.sampled_from([16, 32, 64, 128])


@given(seeds, sizes)
def test_round_trip_and_parseval(seed, n):
    rng = np.random.default_rng(seed)
    u = PeriodicField.from_samples(rng.standard_normal(n))
    spec = to_spectral(u)
    assert np.max(np.abs(to_physical(spec).samples - u.samples)) < 1e-12
    assert math.isclose(np.sum(spec.mode_energy()), lp_norm(u, 2) ** 2, rel_tol=1e-10)


@given(seeds, st.integers(1, 12), st.integers(0, 4))
def test_derivative_composes(seed, k_max, m):
    u = random_band_limited(64, k_max, np.random.default_rng(seed))
    spec = to_spectral(u)
    # The Nyquist mode is dropped by odd orders, so compare below it.
    once = derivative(derivative(spec, m), 1).coeffs[:-1]
    direct = derivative(spec, m + 1).coeffs[:-1]
    assert np.allclose(once, direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


@given(seeds, st.integers(1, 20))
def test_w11_dominates_sup(seed, k_max):
    u = random_band_limited(128, k_max, np.random.default_rng(seed))
    assert lp_norm(u, math.inf) <= 0.5 * sobolev_norm(u, 1, 1) * (1 + 1e-8)


@given(seeds, st.floats(1.0, 8.0), st.floats(1.0, 8.0))
def test_lp_monotone_in_p(seed, p, q):
    u = random_band_limited(64, 8, np.random.default_rng(seed))
    lo, hi = sorted((p, q))
    assert lp_norm(u, lo) <= lp_norm(u, hi) * (1 + 1e-12)


@given(seeds, st.integers(1, 1000), st.integers(1, 200))
@settings(max_examples=50)
def test_kick_energy_identity(seed, r, i):
    rng = np.random.default_rng(seed)
    u = PeriodicField.from_samples(rng.standard_normal(64))
    z = sample_kick(KickStream(seed, r, KickDistribution()), i, 64)
    lhs = lp_norm(apply_kick(u, z), 2) ** 2 - lp_norm(u, 2) ** 2
    rhs = 2 * np.mean(u.samples * z.samples) + lp_norm(z, 2) ** 2
    assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-13)


@given(seeds, st.integers(0, 50), st.integers(1, 50))
@settings(max_examples=30)
def test_kick_reproducible(seed, r, i):
    d = KickDistribution()
    a = sample_kick(KickStream(seed, r, d), i, 64).samples
    b = sample_kick(KickStream(seed, r, d), i, 64).samples
    assert np.array_equal(a, b)


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.floats(0.01, 100.0))
def test_fit_recovers_scaled_slope(noise, c):
    nus = np.array([0.05, 0.02, 0.01, 0.005, 0.002])
    q = c * nus**-1.3
    a = fit_power_law(nus, q)
    assert math.isclose(a.slope, -1.3, abs_tol=1e-10)
    noisy = q * np.exp(0.01 * np.array(noise))
    b = fit_power_law(nus, noisy)
    assert abs(b.slope - fit_power_law(nus, 5.0 * noisy).slope) <= 1e-12
    assert 0.0 <= b.r_squared <= 1.0


@given(st.integers(0, 6), st.one_of(st.floats(1.0, 20.0), st.just(math.inf)))
def test_gamma_nonnegative(m, p):
    g = gamma(m, p)
    assert g >= 0 and g <= m


@given(st.floats(1e-3, 0.5), st.floats(0.5, 2.0), st.floats(0.05, 0.45))
def test_layer_window_inside_definition(nu, s, theta):
    try:
        lo, hi = layer_window(nu, s, theta, 10**9)
    except ValueError:
        return
    assert lo >= nu ** (-s + theta) * (1 - 1e-9)
    assert hi < nu ** (-s - theta) * (1 + 1e-9)


@given(seeds)
@settings(max_examples=25)
def test_spectrum_parseval(seed):
    rng = np.random.default_rng(seed)
    fields = [PeriodicField.from_samples(rng.standard_normal(32)) for _ in range(3)]
    sp = energy_spectrum(fields)
    assert math.isclose(2 * sp.energy.sum(), np.mean([lp_norm(f, 2) ** 2 for f in fields]),
                        rel_tol=1e-10)


@given(st.floats(-3, 3), st.floats(-5, 5))
def test_shifted_flux_convexity(b, y):
    f = builtin_flux("quartic")
    g = shifted_flux(f, b)
    assert g.fpp(y) >= f.sigma - 1e-12
