r"""Zero-mean periodic fields on the unit circle and their norms.

A field is sampled at :math:`x_j = j/N`, :math:`j = 0, \dots, N-1`. Spectral
coefficients follow the complex convention

.. math::

    u(x) = \sum_k c_k e^{2\pi i k x}, \qquad c_k = \frac{1}{N}\sum_j u(x_j) e^{-2\pi i k x_j},

stored for :math:`k = 0, \dots, N/2`. The real coefficients

.. math::

    a_k = \sqrt{2}\int_0^1 \cos(2\pi k x)\,u(x)\,dx, \qquad
    b_k = \sqrt{2}\int_0^1 \sin(2\pi k x)\,u(x)\,dx

are related by :math:`a_k = \sqrt{2}\,\mathrm{Re}\,c_k`,
:math:`b_k = -\sqrt{2}\,\mathrm{Im}\,c_k`, so that
:math:`|u|_2^2 = \sum_{k \ge 1} (a_k^2 + b_k^2)`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from burgulence.errors import ConfigurationError, DomainError

MIN_GRID_SIZE = 16
MAX_DERIVATIVE = 8
MEAN_TOL = 1e-12


def check_grid_size(n):
    """Raise ConfigurationError unless ``n`` is a power of two >= 16."""
    n = int(n)
    if n < MIN_GRID_SIZE or n & (n - 1):
        raise ConfigurationError(
            f"grid size must be a power of two >= {MIN_GRID_SIZE}, got {n}"
        )
    return n


def grid(n):
    """Uniform grid ``x_j = j/n`` on [0, 1)."""
    return np.arange(check_grid_size(n)) / n


def _parse_p(p):
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "oo"):
            return np.inf
        p = float(p)
    p = float(p)
    if not p >= 1.0:
        raise DomainError(f"L_p exponent must lie in [1, inf], got {p}")
    return p


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Real zero-mean samples of a function on S^1."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ConfigurationError("samples must be one-dimensional")
        check_grid_size(samples.size)
        # Absolute tolerance, relaxed proportionally for fields larger than O(1).
        scale = max(1.0, float(np.max(np.abs(samples)))) if samples.size else 1.0
        mean = float(np.mean(samples))
        if abs(mean) > MEAN_TOL * scale:
            raise ConfigurationError(f"field mean {mean:.3e} is not zero")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_samples(cls, values, project=True):
        """Build a field, optionally subtracting the mean first."""
        values = np.array(values, dtype=float)
        if project:
            values = values - values.mean()
        return cls(values)

    @classmethod
    def from_function(cls, func, n, project=True):
        """Sample ``func`` on the ``n``-point grid."""
        return cls.from_samples(func(grid(n)), project=project)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(check_grid_size(n)))

    @property
    def grid_size(self):
        return self.samples.size

    @property
    def x(self):
        return grid(self.grid_size)

    def __add__(self, other):
        from burgulence.forcing import apply_kick

        return apply_kick(self, other)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.samples, dtype=dtype)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex coefficients ``c_k``, ``k = 0..N/2``, of a real periodic field."""

    coeffs: np.ndarray
    grid_size: int

    def __post_init__(self):
        n = check_grid_size(self.grid_size)
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.shape != (n // 2 + 1,):
            raise ConfigurationError(
                f"expected {n // 2 + 1} coefficients for N={n}, got {coeffs.shape}"
            )
        coeffs[0] = 0.0
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "grid_size", n)

    @property
    def wavenumbers(self):
        return np.arange(self.grid_size // 2 + 1)

    @property
    def a(self):
        """Cosine coefficients a_k (index 0 is the mean and is always 0)."""
        return np.sqrt(2.0) * self.coeffs.real

    @property
    def b(self):
        """Sine coefficients b_k."""
        return -np.sqrt(2.0) * self.coeffs.imag

    @property
    def uhat(self):
        """``a_k + i b_k``; note ``|uhat_k|^2 = 2 |c_k|^2``."""
        return self.a + 1j * self.b

    def mode_energy(self):
        """``a_k^2 + b_k^2`` per mode, with the Nyquist mode counted once."""
        return mode_weights(self.grid_size) * np.abs(self.coeffs) ** 2


def mode_weights(n):
    """Parseval weights for one-sided coefficients: 2 for 0 < k < N/2, else 1."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 0.0
    w[-1] = 1.0
    return w


def to_spectral(field):
    """Forward transform of a PeriodicField."""
    n = field.grid_size
    return SpectralField(sfft.rfft(field.samples) / n, n)


def to_physical(spec):
    """Inverse transform of a SpectralField."""
    n = spec.grid_size
    values = sfft.irfft(spec.coeffs * n, n)
    return PeriodicField.from_samples(values, project=True)


def spectral_multiplier(n, order):
    """``(2 pi i k)^order`` for k = 0..N/2, Nyquist dropped for odd orders."""
    k = np.arange(n // 2 + 1)
    mult = (2j * np.pi * k) ** order
    if order % 2:
        mult[-1] = 0.0
    return mult


def derivative(spec, n):
    """n-th derivative in spectral space."""
    n = int(n)
    if n < 0 or n > MAX_DERIVATIVE:
        raise DomainError(f"derivative order must be in [0, {MAX_DERIVATIVE}], got {n}")
    if n == 0:
        return spec
    return SpectralField(spec.coeffs * spectral_multiplier(spec.grid_size, n), spec.grid_size)


def lp_norm_samples(samples, p):
    """L_p norm of raw grid samples by the rectangle rule."""
    p = _parse_p(p)
    samples = np.asarray(samples, dtype=float)
    if np.isinf(p):
        return float(np.max(np.abs(samples)))
    if p == 1.0:
        return float(np.mean(np.abs(samples)))
    if p == 2.0:
        return float(np.sqrt(np.mean(samples * samples)))
    return float(np.mean(np.abs(samples) ** p) ** (1.0 / p))


def lp_norm(field, p):
    """L_p norm ``|u|_p`` of a PeriodicField; ``p = inf`` gives the grid max."""
    return lp_norm_samples(field.samples, p)


def derivative_samples(field, m):
    """Grid samples of the m-th derivative."""
    if m == 0:
        return field.samples
    spec = derivative(to_spectral(field), m)
    return sfft.irfft(spec.coeffs * field.grid_size, field.grid_size)


def sobolev_norm(field, m, p):
    """``|u|_{m,p} = |u^{(m)}|_p``; for p=2 this is the H^m norm."""
    m = int(m)
    if m < 0 or m > MAX_DERIVATIVE:
        raise DomainError(f"Sobolev order must be in [0, {MAX_DERIVATIVE}], got {m}")
    p = _parse_p(p)
    return lp_norm_samples(derivative_samples(field, m), p)


def hm_norm_sq(spec, m):
    """``||u||_m^2 = sum_k (2 pi k)^{2m} (a_k^2 + b_k^2)`` from coefficients."""
    k = spec.wavenumbers
    return float(np.sum((2 * np.pi * k) ** (2 * m) * spec.mode_energy()))


def random_band_limited(n, k_max, rng, amplitude=1.0):
    """Random zero-mean field with modes 1..k_max, used by tests and examples."""
    n = check_grid_size(n)
    if not 1 <= k_max < n // 2:
        raise ConfigurationError(f"k_max must lie in [1, N/2), got {k_max}")
    coeffs = np.zeros(n // 2 + 1, dtype=complex)
    kk = np.arange(1, k_max + 1)
    coeffs[1:k_max + 1] = amplitude * (
        rng.standard_normal(k_max) + 1j * rng.standard_normal(k_max)
    ) / kk
    return to_physical(SpectralField(coeffs, n))
