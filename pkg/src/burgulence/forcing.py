"""Random kicks ``zeta_i`` added to the solution at integer times.

A kick has real Fourier coefficients ``a_k = c_k xi``, ``b_k = c_k xi'`` for
``k <= K_max`` with ``c_k = A 2^{-k}`` and ``xi, xi'`` i.i.d. from a bounded,
zero-mean, unit-variance law. Kick ``i`` of realization ``r`` is drawn from a
Philox generator whose key depends on ``(master_seed, r)`` and whose counter
starts at ``i``, so kicks are reproducible and independent of evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from burgulence.errors import ConfigurationError, GridMismatchError
from burgulence.field import PeriodicField, check_grid_size

LAWS = ("uniform", "rademacher")


@dataclass(frozen=True)
class KickDistribution:
    """Law of a single kick."""

    amplitude: float = 1.0
    k_max: int = 8
    law: str = "uniform"

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ConfigurationError(f"kick amplitude must be >= 0, got {self.amplitude}")
        if int(self.k_max) < 1:
            raise ConfigurationError(f"k_max must be >= 1, got {self.k_max}")
        if self.law not in LAWS:
            raise ConfigurationError(f"unknown scalar law {self.law!r}; expected one of {LAWS}")

    @property
    def scales(self):
        """Per-mode amplitudes ``c_k = A 2^{-k}``, k = 1..K_max."""
        return self.amplitude * 2.0 ** -np.arange(1, self.k_max + 1)

    @property
    def is_nontrivial(self):
        """Whether ``P(zeta == 0) < 1``."""
        return self.amplitude > 0

    def scalar_bound(self):
        """Almost-sure bound on ``|xi|``."""
        return np.sqrt(3.0) if self.law == "uniform" else 1.0

    def draw_scalars(self, rng, size):
        if self.law == "uniform":
            s3 = np.sqrt(3.0)
            return rng.uniform(-s3, s3, size)
        return rng.choice(np.array([-1.0, 1.0]), size)

    def sample_coefficients(self, rng, size=None):
        """Draw ``(a, b)`` arrays of shape ``(K_max,)`` or ``(size, K_max)``."""
        shape = (2, self.k_max) if size is None else (2, size, self.k_max)
        xi = self.draw_scalars(rng, shape)
        return self.scales * xi[0], self.scales * xi[1]

    def moment(self, m):
        """Closed form ``I_m = E ||zeta||_m^2 = sum_k 2 c_k^2 (2 pi k)^{2m}``."""
        k = np.arange(1, self.k_max + 1)
        return float(np.sum(2.0 * self.scales**2 * (2 * np.pi * k) ** (2 * m)))

    def norm_bound(self, m):
        """Deterministic bound on ``||zeta||_m``: ``sum_k (2 pi k)^m c_k sqrt(2) |xi|_max``."""
        k = np.arange(1, self.k_max + 1)
        return float(np.sum((2 * np.pi * k) ** m * self.scales) * np.sqrt(2.0) * self.scalar_bound())


@dataclass(frozen=True)
class KickStream:
    """Kicks for one realization."""

    master_seed: int
    realization_id: int
    distribution: KickDistribution

    def key(self):
        seq = np.random.SeedSequence([int(self.master_seed), int(self.realization_id)])
        return seq.generate_state(2, dtype=np.uint64)

    def generator(self, i):
        """Independent generator for kick ``i``.

        The kick index occupies its own counter word, so draws for kick ``i``
        never reach the counter range of kick ``i + 1``.
        """
        counter = np.array([0, int(i), 0, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=self.key()))


def coefficients_to_rfft(a, b, n):
    """Unnormalised rfft array of the field with real coefficients ``a_k, b_k``."""
    out = np.zeros(n // 2 + 1, dtype=complex)
    k_max = len(a)
    out[1:k_max + 1] = (np.asarray(a) - 1j * np.asarray(b)) * (n / np.sqrt(2.0))
    return out


def kick_rfft(stream, i, n):
    """rfft array of kick ``i``; shared by :func:`sample_kick` and the simulator."""
    n = check_grid_size(n)
    dist = stream.distribution
    if n < 4 * dist.k_max:
        raise ConfigurationError(f"grid N={n} too small for K_max={dist.k_max} (need N >= 4 K_max)")
    if i < 1:
        raise ConfigurationError(f"kick index must be >= 1, got {i}")
    a, b = dist.sample_coefficients(stream.generator(i))
    return coefficients_to_rfft(a, b, n)


def sample_kick(stream, i, n):
    """Kick ``zeta_i`` of the stream on an ``n``-point grid."""
    return PeriodicField.from_samples(sfft.irfft(kick_rfft(stream, i, n), n))


def apply_kick(u, kick):
    """``u + zeta`` pointwise."""
    if u.grid_size != kick.grid_size:
        raise GridMismatchError(f"grid sizes differ: {u.grid_size} vs {kick.grid_size}")
    return PeriodicField.from_samples(u.samples + kick.samples)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    n_samples: int


def estimate_moment(dist, m, n_samples, seed):
    """Monte-Carlo estimate of ``I_m = E ||zeta||_m^2`` with its standard error."""
    if n_samples < 1000:
        raise ConfigurationError("moment estimation needs at least 1000 samples")
    if dist.amplitude == 0:
        return MomentEstimate(0.0, 0.0, n_samples)
    rng = np.random.default_rng(seed)
    a, b = dist.sample_coefficients(rng, n_samples)
    k = np.arange(1, dist.k_max + 1)
    sq = np.sum((2 * np.pi * k) ** (2 * m) * (a * a + b * b), axis=1)
    return MomentEstimate(float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_samples)), n_samples)
