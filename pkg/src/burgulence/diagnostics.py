"""Ensemble statistics, power-law fits, energy spectra and intermittency measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

from burgulence.errors import DomainError, GridMismatchError
from burgulence.field import derivative_samples, to_spectral

MINUS, INTERIOR, PLUS = -1, 0, 1
STATISTICS = ("instant", "sup")


def gamma(m, p):
    """Scaling exponent ``max(0, m - 1/p)`` of ``|u|_{m,p}``."""
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return max(0.0, m - inv_p)


@dataclass(frozen=True, eq=False)
class NormSeries:
    """Time series of one quantity for one realization.

    At a kick time the pre-kick value carries ``side = -1`` and the post-kick
    value ``side = +1``; entries are ordered by ``(time, side)``.
    """

    times: np.ndarray
    sides: np.ndarray
    values: np.ndarray
    descriptor: tuple = ("", 0, 2.0)
    realization_id: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        sides = np.asarray(self.sides, dtype=np.int8)
        values = np.asarray(self.values, dtype=float)
        if not (times.shape == sides.shape == values.shape):
            raise ValueError("times, sides and values must have equal shapes")
        key = times + 1e-9 * sides
        if np.any(np.diff(key) <= 0):
            raise ValueError("series entries must be strictly ordered by (time, side)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "values", values)

    def window_mask(self, t0, t1):
        """Entries in ``[t0, t1]``: post-kick value at ``t0``, pre-kick value at ``t1``."""
        t, s = self.times, self.sides
        start = (t > t0) | ((t == t0) & (s >= 0))
        stop = (t < t1) | ((t == t1) & (s <= 0))
        return start & stop

    def interval_mask(self, k):
        """Entries of the kick interval ``[k, k+1)``, including the pre-kick limit at ``k+1``."""
        t, s = self.times, self.sides
        return ((t > k) | ((t == k) & (s >= 0))) & ((t < k + 1) | ((t == k + 1) & (s < 0)))

    def time_average(self, t0, t1, power=1):
        mask = self.window_mask(t0, t1)
        if mask.sum() < 2:
            raise DomainError(f"fewer than two samples in [{t0}, {t1}]")
        return float(np.trapezoid(self.values[mask] ** power, self.times[mask]) / (t1 - t0))

    def sup_over_interval(self, k, power=1):
        mask = self.interval_mask(k)
        if not mask.any():
            raise DomainError(f"no samples in [{k}, {k + 1})")
        return float(np.max(self.values[mask]) ** power)


@dataclass(frozen=True)
class TimeAverage:
    """Reducer: ``(1/T) int_t^{t+T} value^power``."""

    t: float
    T: float
    power: int = 1

    def __call__(self, series):
        return series.time_average(self.t, self.t + self.T, self.power)


@dataclass(frozen=True)
class SupOverInterval:
    """Reducer: ``sup_{[k, k+1)} value^power``, averaged over several ``k`` if given."""

    k: int | tuple
    power: int = 1

    def __call__(self, series):
        ks = (self.k,) if np.isscalar(self.k) else tuple(self.k)
        return float(np.mean([series.sup_over_interval(k, self.power) for k in ks]))


def mean_and_stderr(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise DomainError("need at least two realizations")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def ensemble_mean(series_set, reducer):
    """Reduce each realization's series, then average across realizations.

    Returns ``(mean, standard_error)``. All series must share one time grid.
    """
    series_set = list(series_set)
    if len(series_set) < 2:
        raise DomainError("ensemble_mean needs at least two realizations")
    ref = series_set[0]
    for s in series_set[1:]:
        if s.times.shape != ref.times.shape or not (
            np.array_equal(s.times, ref.times) and np.array_equal(s.sides, ref.sides)
        ):
            raise GridMismatchError("realizations are not on a common time grid")
    return mean_and_stderr([reducer(s) for s in series_set])


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit ``log q = slope * log nu + intercept``."""

    nus: np.ndarray
    quantities: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float

    def predict(self, nu):
        return np.exp(self.intercept) * np.asarray(nu, dtype=float) ** self.slope


def fit_power_law(nus, quantities):
    """Fit ``quantity ~ C nu^slope`` on log-log axes."""
    nus = np.asarray(nus, dtype=float)
    q = np.asarray(quantities, dtype=float)
    if nus.shape != q.shape or nus.ndim != 1:
        raise DomainError("nus and quantities must be 1-d arrays of equal length")
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise DomainError("all quantities must be positive and finite for a log-log fit")
    if np.any(nus <= 0):
        raise DomainError("viscosities must be positive")
    if np.unique(nus).size < 4:
        raise DomainError("need at least four distinct nu values")
    if nus.max() / nus.min() < 10.0 * (1 - 1e-12):
        raise DomainError("nu values must span at least one decade")
    x = np.log(nus)
    y = np.log(q)
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (slope * x + intercept)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst <= 1e-300 else max(0.0, 1.0 - ssr / sst)
    dof = x.size - 2
    stderr = math.sqrt(ssr / dof / sxx) if dof > 0 else float("nan")
    return ScalingFit(nus, q, slope, intercept, r2, stderr)


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Time-and-ensemble averaged mode energies ``E_k = <|uhat^k|^2> / 2``, k = 1..N/2.

    ``resolved_k_max`` is the largest wavenumber the solver actually evolves
    (the dealiasing cutoff for simulated spectra, N/2 otherwise).
    """

    energy: np.ndarray
    grid_size: int
    time_window: tuple = (float("nan"), float("nan"))
    ensemble_size: int = 1
    n_samples: int = 1
    resolved_k_max: int | None = None
    wavenumbers: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        energy = np.asarray(self.energy, dtype=float)
        if energy.shape != (self.grid_size // 2,):
            raise ValueError(f"expected {self.grid_size // 2} mode energies")
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "wavenumbers", np.arange(1, self.grid_size // 2 + 1))
        if self.resolved_k_max is None:
            object.__setattr__(self, "resolved_k_max", self.grid_size // 2)

    def at(self, k):
        return float(self.energy[int(k) - 1])

    @property
    def mean_sq_coefficient(self):
        """``<|uhat^k|^2> = 2 E_k``."""
        return 2.0 * self.energy


def mode_energy_sum(samples_or_field):
    """``a_k^2 + b_k^2`` for k = 1..N/2 from a field (Nyquist counted once)."""
    spec = to_spectral(samples_or_field)
    return spec.mode_energy()[1:]


def energy_spectrum(states, time_window=(float("nan"), float("nan")), ensemble_size=1,
                    resolved_k_max=None):
    """Average ``(a_k^2 + b_k^2)/2`` over sampled fields."""
    states = list(states)
    if not states:
        raise DomainError("energy_spectrum needs at least one sampled state")
    n = states[0].grid_size
    total = np.zeros(n // 2)
    for st in states:
        if st.grid_size != n:
            raise GridMismatchError("sampled states have different grid sizes")
        total += mode_energy_sum(st)
    return SpectrumEstimate(0.5 * total / len(states), n, tuple(time_window), ensemble_size,
                            len(states), resolved_k_max)


def combine_spectra(spectra):
    """Sample-weighted average of per-realization spectra on a common grid."""
    spectra = list(spectra)
    if not spectra:
        raise DomainError("no spectra to combine")
    n = spectra[0].grid_size
    if any(s.grid_size != n for s in spectra):
        raise GridMismatchError("spectra have different grid sizes")
    weights = np.array([s.n_samples for s in spectra], dtype=float)
    energy = np.sum([w * s.energy for w, s in zip(weights, spectra)], axis=0) / weights.sum()
    return SpectrumEstimate(energy, n, spectra[0].time_window, len(spectra),
                            int(weights.sum()), spectra[0].resolved_k_max)


def layer_window(nu, s, theta, k_max):
    """Integer wavenumbers in ``[nu^{-s+theta}, nu^{-s-theta}) ∩ [1, k_max]``."""
    lo = nu ** (-s + theta)
    hi = nu ** (-s - theta)
    # Guard against pow() landing a hair above an exact integer edge.
    k_lo = max(1, math.ceil(lo * (1 - 1e-12)))
    k_hi = min(int(k_max), math.ceil(hi * (1 - 1e-12)) - 1)
    if k_hi < k_lo:
        raise DomainError(
            f"empty layer window [{lo:.4g}, {hi:.4g}) within [1, {k_max}] "
            f"for nu={nu}, s={s}, theta={theta}"
        )
    return k_lo, k_hi


def layer_average(spec, nu, s, theta=0.25):
    """``F_{s,theta}``: mean of ``<|uhat^k|^2>`` over the layer window."""
    k_lo, k_hi = layer_window(nu, s, theta, spec.resolved_k_max)
    return float(np.mean(spec.mean_sq_coefficient[k_lo - 1:k_hi]))


def spectral_slope(spec, k_lo, k_hi):
    """Mean of the local slope ``d log E_k / d log k`` over ``k_lo <= k <= k_hi``."""
    k_lo, k_hi = int(math.ceil(k_lo)), int(math.floor(k_hi))
    if k_hi - k_lo < 2 or k_hi > spec.grid_size // 2:
        raise DomainError(f"invalid slope window [{k_lo}, {k_hi}]")
    e = spec.energy[k_lo - 1:k_hi]
    if np.any(e <= 0):
        raise DomainError("spectrum has non-positive entries in the slope window")
    k = np.arange(k_lo, k_hi + 1, dtype=float)
    return float(np.mean(np.gradient(np.log(e), np.log(k))))


def intermittency_stats(fields, times=None):
    """``(sup_t max_x u_x, time-average of int u_x^2)`` over samples of one interval."""
    fields = list(fields)
    if not fields:
        return 0.0, 0.0
    max_ux = []
    h1 = []
    for f in fields:
        ux = derivative_samples(f, 1)
        max_ux.append(float(ux.max()))
        h1.append(float(np.mean(ux * ux)))
    h1 = np.asarray(h1)
    if times is None or len(fields) < 2:
        mean_h1 = float(h1.mean())
    else:
        times = np.asarray(times, dtype=float)
        mean_h1 = float(np.trapezoid(h1, times) / (times[-1] - times[0]))
    return max(max_ux), mean_h1


def spectrum_from_coefficients(mode_energy_sum_k, n_samples, grid_size, **kw):
    """Build a SpectrumEstimate from accumulated ``sum (a_k^2 + b_k^2)`` (k = 1..N/2)."""
    return SpectrumEstimate(0.5 * np.asarray(mode_energy_sum_k) / max(n_samples, 1),
                            grid_size, n_samples=n_samples, **kw)


__all__ = [
    "INTERIOR",
    "MINUS",
    "PLUS",
    "NormSeries",
    "ScalingFit",
    "SpectrumEstimate",
    "SupOverInterval",
    "TimeAverage",
    "combine_spectra",
    "energy_spectrum",
    "ensemble_mean",
    "fit_power_law",
    "gamma",
    "intermittency_stats",
    "layer_average",
    "layer_window",
    "mean_and_stderr",
    "mode_energy_sum",
    "spectral_slope",
    "spectrum_from_coefficients",
]
