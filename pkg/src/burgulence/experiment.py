"""Kicked-trajectory simulation, ensemble orchestration and persistence.

A realization starts from ``u0`` at ``t = 0``, evolves freely on ``[0, 1)``,
and receives kick ``zeta_i`` at each integer ``1 <= i < T_total``. Norms are
recorded every ``sample_dt``; at a kick time both the pre-kick value
``u_i^-`` (side -1) and the post-kick value ``u_i`` (side +1) are stored.
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from burgulence import __version__
from burgulence.diagnostics import (
    INTERIOR,
    MINUS,
    PLUS,
    NormSeries,
    SpectrumEstimate,
    SupOverInterval,
    TimeAverage,
    combine_spectra,
    ensemble_mean,
    fit_power_law,
    gamma,
    layer_average,
    layer_window,
)
from burgulence.errors import ConfigurationError, DomainError, InstabilityError
from burgulence.field import (
    PeriodicField,
    check_grid_size,
    lp_norm_samples,
    spectral_multiplier,
)
from burgulence.flux import BUILTIN_NAMES, builtin_flux
from burgulence.forcing import KickDistribution, KickStream, kick_rfft
from burgulence.integrator import (
    DissipationLedger,
    integrate_spectral,
    propagator,
    resolution_for,
    sample_grid,
)

log = logging.getLogger(__name__)

SCHEMA = "burgulence-config/1"
# Bump when a change alters simulated numbers; invalidates cached realizations.
SOLVER_REVISION = 1


@dataclass(frozen=True)
class NormSpec:
    m: int
    p: float
    statistic: str = "instant"

    def __post_init__(self):
        if self.statistic not in ("instant", "sup"):
            raise ConfigurationError(f"unknown statistic {self.statistic!r}")
        if not 0 <= self.m <= 8:
            raise ConfigurationError(f"norm order m={self.m} out of range")
        if not self.p >= 1:
            raise ConfigurationError(f"norm exponent p={self.p} must be >= 1")

    @classmethod
    def parse(cls, text):
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise ConfigurationError(f"bad norm spec {text!r}; expected m:p[:statistic]")
        p = float("inf") if parts[1].strip().lower() in ("inf", "infinity") else float(parts[1])
        stat = parts[2].strip() if len(parts) == 3 else "instant"
        return cls(int(parts[0]), p, stat)

    def __str__(self):
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        return f"{self.m}:{p}:{self.statistic}"

    @property
    def label(self):
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        return f"m{self.m}_p{p}_{self.statistic}"

    @property
    def power(self):
        """Moment used for aggregation: squared norms for time averages."""
        return 2 if self.statistic == "instant" else 1

    @property
    def expected_slope(self):
        return -self.power * gamma(self.m, self.p)


DEFAULT_NORMS = (
    NormSpec(1, 2.0, "instant"),
    NormSpec(2, 2.0, "instant"),
    NormSpec(1, 1.0, "sup"),
    NormSpec(0, 2.0, "instant"),
    NormSpec(1, float("inf"), "instant"),
)
DEFAULT_TOLERANCES = (0.2, 0.4, 0.15, 0.2, 0.4)


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of an ensemble run. Serialised as flat ``key = value`` text."""

    flux: str = "classical"
    kick_amplitude: float = 1.0
    kick_k_max: int = 8
    kick_law: str = "uniform"
    nu_sweep: tuple = (0.05, 0.02, 0.01, 0.005, 0.002)
    T_total: int = 12
    t_start_measure: float = 2.0
    ensemble_size: int = 50
    master_seed: int = 20100101
    resolution_min: int = 256
    resolution_factor: float = 8.0
    grid_size: int = 0
    norms: tuple = DEFAULT_NORMS
    fit_tolerances: tuple = DEFAULT_TOLERANCES
    sample_dt: float = 0.05
    spectrum_dt: float = 0.25
    safety: float = 0.4
    max_dt: float = 1.5e-4
    u0: str = "zero"
    layer_s: tuple = (1.0, 1.5)
    layer_theta: float = 0.25
    dissipation_tol: float = 1e-5
    max_principle_tol: float = 1e-3
    kick_tol: float = 1e-10
    max_failed_fraction: float = 0.01
    output_dir: str = "runs/default"
    workers: int = 0

    def __post_init__(self):
        if self.flux not in BUILTIN_NAMES:
            raise ConfigurationError(f"flux must be one of {BUILTIN_NAMES}, got {self.flux!r}")
        if self.t_start_measure < 2:
            raise ConfigurationError("t_start_measure must be >= 2")
        if self.T_total <= self.t_start_measure or int(self.T_total) != self.T_total:
            raise ConfigurationError("T_total must be an integer exceeding t_start_measure")
        if any(not 0 < nu <= 1 for nu in self.nu_sweep) or not self.nu_sweep:
            raise ConfigurationError("every nu must lie in (0, 1]")
        if self.ensemble_size < 2:
            raise ConfigurationError("ensemble_size must be >= 2")
        if not self.max_dt > 0:
            raise ConfigurationError("max_dt must be positive")
        if len(self.fit_tolerances) != len(self.norms):
            raise ConfigurationError("fit_tolerances must align with norms")
        per = 1.0 / self.sample_dt
        if abs(per - round(per)) > 1e-9:
            raise ConfigurationError("sample_dt must divide the kick period")
        stride = self.spectrum_dt / self.sample_dt
        if abs(stride - round(stride)) > 1e-9:
            raise ConfigurationError("spectrum_dt must be a multiple of sample_dt")
        if self.grid_size:
            check_grid_size(self.grid_size)
        parse_initial(self.u0, 16)
        KickDistribution(self.kick_amplitude, self.kick_k_max, self.kick_law)

    @property
    def kick_distribution(self):
        return KickDistribution(self.kick_amplitude, self.kick_k_max, self.kick_law)

    def grid_size_for(self, nu):
        if self.grid_size:
            return self.grid_size
        return resolution_for(nu, self.resolution_min, self.resolution_factor)

    @property
    def samples_per_interval(self):
        return int(round(1.0 / self.sample_dt))

    @property
    def spectrum_stride(self):
        return int(round(self.spectrum_dt / self.sample_dt))


_TUPLE_FLOAT = {"nu_sweep", "fit_tolerances", "layer_s"}
_KEY_ALIASES = {
    "kick.amplitude": "kick_amplitude",
    "kick.k_max": "kick_k_max",
    "kick.law": "kick_law",
}


def _format_value(name, value):
    if name == "norms":
        return ", ".join(str(n) for n in value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config):
    """Canonical text form; also the input to :func:`config_hash`."""
    lines = [f"schema = {SCHEMA}"]
    inverse = {v: k for k, v in _KEY_ALIASES.items()}
    for f in fields(config):
        lines.append(f"{inverse.get(f.name, f.name)} = {_format_value(f.name, getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text, **overrides):
    """Parse flat ``key = value`` text (``#`` comments allowed)."""
    values = {}
    schema = None
    known = {f.name: f for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "schema":
            schema = value
            continue
        name = _KEY_ALIASES.get(key, key)
        if name not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[name] = _coerce(name, value, known[name].default)
    if schema != SCHEMA:
        raise ConfigurationError(f"config schema must be {SCHEMA!r}, got {schema!r}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def _coerce(name, value, default):
    try:
        if name == "norms":
            return tuple(NormSpec.parse(v) for v in value.split(",") if v.strip())
        if name in _TUPLE_FLOAT:
            return tuple(float(v) for v in value.split(",") if v.strip())
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(float(value)) if float(value).is_integer() else int(value)
        if isinstance(default, float):
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {value!r}") from exc


def load_config(path, **overrides):
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


def config_hash(config):
    return hashlib.sha256(dump_config(config).encode()).hexdigest()


def parse_initial(desc, n):
    """Initial condition from a descriptor: ``zero`` or ``sine:AMPLITUDE``."""
    desc = desc.strip().lower()
    if desc == "zero":
        return PeriodicField.zeros(n)
    if desc.startswith("sine:"):
        amp = float(desc.split(":", 1)[1])
        return PeriodicField.from_function(lambda x: amp * np.sin(2 * np.pi * x), n)
    raise ConfigurationError(f"unknown initial condition {desc!r}; use 'zero' or 'sine:A'")


def resample(u, n):
    """Band-limited resampling of a field onto an ``n``-point grid."""
    if u.grid_size == n:
        return u
    m = min(u.grid_size, n) // 2
    coeffs = sfft.rfft(u.samples) / u.grid_size
    out = np.zeros(n // 2 + 1, dtype=complex)
    out[:m] = coeffs[:m]
    return PeriodicField.from_samples(sfft.irfft(out * n, n))


@dataclass(frozen=True)
class Violation:
    nu: float
    realization_id: int
    t: float
    invariant: str
    value: float


@dataclass
class TrajectoryRecord:
    """Everything measured along one realization."""

    nu: float
    realization_id: int
    grid_size: int
    times: np.ndarray
    sides: np.ndarray
    norm_values: dict
    max_ux: np.ndarray
    min_ux: np.ndarray
    spectrum_sum: np.ndarray
    spectrum_count: int
    ledgers: list
    kick_residuals: np.ndarray
    violations: list
    failed: bool = False
    error: str = ""
    n_steps: int = 0
    wall_seconds: float = 0.0
    cpu_seconds: float = 0.0

    def series(self, spec):
        key = (spec.m, spec.p)
        return NormSeries(self.times, self.sides, self.norm_values[key],
                          (spec.statistic, spec.m, spec.p), self.realization_id)

    def signed_series(self, name):
        values = {"max_ux": self.max_ux, "min_ux": self.min_ux}[name]
        return NormSeries(self.times, self.sides, values, (name, 1, float("inf")),
                          self.realization_id)

    def spectrum(self, window, resolved_k_max=None):
        energy = 0.5 * self.spectrum_sum / max(self.spectrum_count, 1)
        return SpectrumEstimate(energy, self.grid_size, window, 1, self.spectrum_count,
                                resolved_k_max)

    # Cache round trip.
    def save(self, path):
        ledger_arr = np.array([[lg.interval_index, lg.A, lg.energy_in, lg.energy_out]
                               for lg in self.ledgers]).reshape(-1, 4)
        norm_keys = np.array([[k[0], k[1]] for k in self.norm_values], dtype=float).reshape(-1, 2)
        norm_vals = np.array([self.norm_values[k] for k in self.norm_values]).reshape(
            len(self.norm_values), -1)
        viol = json.dumps([asdict(v) for v in self.violations])
        tmp = Path(str(path) + ".tmp.npz")
        np.savez(tmp, nu=self.nu, realization_id=self.realization_id, grid_size=self.grid_size,
                 times=self.times, sides=self.sides, norm_keys=norm_keys, norm_vals=norm_vals,
                 max_ux=self.max_ux, min_ux=self.min_ux, spectrum_sum=self.spectrum_sum,
                 spectrum_count=self.spectrum_count, ledgers=ledger_arr,
                 kick_residuals=self.kick_residuals, violations=viol, failed=self.failed,
                 error=self.error, n_steps=self.n_steps, wall_seconds=self.wall_seconds,
                 cpu_seconds=self.cpu_seconds)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            keys = [(int(m), float(p)) for m, p in z["norm_keys"]]
            norm_values = {k: z["norm_vals"][i].copy() for i, k in enumerate(keys)}
            ledgers = [DissipationLedger(int(r[0]), float(r[1]), float(r[2]), float(r[3]))
                       for r in z["ledgers"]]
            viol = [Violation(**v) for v in json.loads(str(z["violations"]))]
            return cls(float(z["nu"]), int(z["realization_id"]), int(z["grid_size"]),
                       z["times"].copy(), z["sides"].copy(), norm_values, z["max_ux"].copy(),
                       z["min_ux"].copy(), z["spectrum_sum"].copy(), int(z["spectrum_count"]),
                       ledgers, z["kick_residuals"].copy(), viol, bool(z["failed"]),
                       str(z["error"]), int(z["n_steps"]), float(z["wall_seconds"]),
                       # older cache entries carry only wall time
                       float(z["cpu_seconds"]) if "cpu_seconds" in z else float(z["wall_seconds"]))


def _default_kicks(config, realization_id):
    stream = KickStream(config.master_seed, realization_id, config.kick_distribution)
    return lambda i, n: kick_rfft(stream, i, n)


def simulate_realization(config, nu, realization_id, u0=None, kicks=None):
    """Run one kicked trajectory on ``[0, T_total]``.

    ``u0`` overrides the configured initial condition and is resampled to the
    grid for ``nu``. ``kicks(i, n)`` may replace the random stream; it returns
    the unnormalised rfft array of kick ``i`` (or None for no kick).
    """
    t_wall = time.perf_counter()
    t_cpu = time.process_time()
    n = config.grid_size_for(nu)
    flux = builtin_flux(config.flux)
    prop = propagator(n, nu, flux)
    if u0 is None:
        u0 = parse_initial(config.u0, n)
    u0 = resample(u0, n)
    if kicks is None:
        kicks = _default_kicks(config, realization_id)

    norm_keys = sorted({(s.m, s.p) for s in config.norms})
    orders = sorted({m for m, _ in norm_keys} | {1})
    multipliers = {m: spectral_multiplier(n, m) for m in orders}
    per = config.samples_per_interval
    stride = config.spectrum_stride
    n_int = int(config.T_total)
    n_rec = n_int * (per + 1)
    times = np.empty(n_rec)
    sides = np.zeros(n_rec, dtype=np.int8)
    norm_values = {k: np.full(n_rec, np.nan) for k in norm_keys}
    max_ux = np.full(n_rec, np.nan)
    min_ux = np.full(n_rec, np.nan)
    spectrum_sum = np.zeros(n // 2)
    weights = np.full(n // 2, 2.0)
    weights[-1] = 1.0
    spectrum_count = 0
    ledgers = []
    kick_res = []
    violations = []
    bound = 2.0 / flux.sigma * (1.0 + config.max_principle_tol)
    cursor = [0]
    n_steps = 0

    def record(t, uh, side, interval):
        nonlocal spectrum_count
        idx = cursor[0]
        cursor[0] += 1
        times[idx] = t
        sides[idx] = side
        derivs = {m: sfft.irfft(uh * multipliers[m], n) for m in orders}
        for m, p in norm_keys:
            norm_values[(m, p)][idx] = lp_norm_samples(derivs[m], p)
        ux = derivs[1]
        max_ux[idx] = ux.max()
        min_ux[idx] = ux.min()
        if interval >= 1 and t - interval >= 0.5 and max_ux[idx] > bound:
            violations.append(Violation(nu, realization_id, float(t), "max_principle",
                                        float(max_ux[idx])))
        offset = round((t - interval) / config.sample_dt)
        if (t >= config.t_start_measure and side >= 0 and offset < per
                and offset % stride == 0):
            c = uh[1:] / n
            spectrum_sum[:] += weights * (c.real**2 + c.imag**2)
            spectrum_count += 1

    uh = prop.from_grid(np.asarray(u0.samples))
    failed = False
    error = ""
    try:
        for i in range(n_int):
            if i >= 1:
                zh = kicks(i, n)
                if zh is not None:
                    u_minus = prop.to_grid(uh)
                    zeta = sfft.irfft(zh, n)
                    u_plus = u_minus + zeta
                    lhs = np.mean(u_plus * u_plus) - np.mean(u_minus * u_minus)
                    rhs = 2.0 * np.mean(u_minus * zeta) + np.mean(zeta * zeta)
                    scale = max(np.mean(u_plus * u_plus), np.mean(u_minus * u_minus), 1e-300)
                    res = abs(lhs - rhs) / scale
                    kick_res.append(res)
                    if res > config.kick_tol:
                        violations.append(Violation(nu, realization_id, float(i),
                                                    "kick_bookkeeping", float(res)))
                    uh = prop.from_grid(u_plus)
            grid_t = sample_grid(float(i), float(i + 1), config.sample_dt)
            record(grid_t[0], uh, PLUS, i)
            energy_in = prop.energy(uh)

            def on_sample(t, coeffs, _i=i):
                record(t, coeffs, MINUS if t == _i + 1 else INTERIOR, _i)

            uh, A, steps = integrate_spectral(prop, uh, float(i), float(i + 1), config.safety,
                                              grid_t[1:], on_sample, config.max_dt)
            n_steps += steps
            ledger = DissipationLedger(i, A, energy_in, prop.energy(uh))
            ledgers.append(ledger)
            if ledger.residual > config.dissipation_tol:
                violations.append(Violation(nu, realization_id, float(i),
                                            "dissipation_identity", float(ledger.residual)))
    except InstabilityError as exc:
        failed = True
        error = str(exc)
        violations.append(Violation(nu, realization_id, float(exc.t), "instability", float(exc.dt)))

    return TrajectoryRecord(
        nu=float(nu), realization_id=int(realization_id), grid_size=n, times=times,
        sides=sides, norm_values=norm_values, max_ux=max_ux, min_ux=min_ux,
        spectrum_sum=spectrum_sum, spectrum_count=spectrum_count, ledgers=ledgers,
        kick_residuals=np.asarray(kick_res, dtype=float), violations=violations,
        failed=failed, error=error, n_steps=n_steps,
        wall_seconds=time.perf_counter() - t_wall,
        cpu_seconds=time.process_time() - t_cpu,
    )


# Config fields that do not influence a single realization's numbers.
_NON_PHYSICAL = {"nu_sweep", "ensemble_size", "output_dir", "workers", "fit_tolerances",
                 "layer_s", "layer_theta", "max_failed_fraction"}


def realization_key(config, nu, realization_id, u0_desc=None):
    payload = {f.name: _format_value(f.name, getattr(config, f.name))
               for f in fields(config) if f.name not in _NON_PHYSICAL}
    payload.update(nu=repr(float(nu)), realization_id=int(realization_id),
                   grid=config.grid_size_for(nu), u0=u0_desc or config.u0,
                   revision=SOLVER_REVISION, version=__version__)
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:32]


def _simulate_task(args):
    config, nu, r, u0_desc = args
    u0 = parse_initial(u0_desc, config.grid_size_for(nu)) if u0_desc else None
    return simulate_realization(config, nu, r, u0=u0)


def simulate_ensemble(config, nu_values=None, realizations=None, u0_desc=None,
                      workers=None, cache_dir=None):
    """Simulate ``(nu, r)`` pairs, reusing cached realizations when available.

    Returns ``{nu: [TrajectoryRecord, ...]}`` ordered by realization id.
    """
    nu_values = tuple(config.nu_sweep if nu_values is None else nu_values)
    realizations = range(config.ensemble_size) if realizations is None else realizations
    u0_desc = u0_desc or config.u0
    cache = Path(cache_dir) if cache_dir else None
    if cache:
        cache.mkdir(parents=True, exist_ok=True)
    results = {}
    pending = []
    for nu in nu_values:
        for r in realizations:
            if cache:
                path = cache / f"{realization_key(config, nu, r, u0_desc)}.npz"
                if path.exists():
                    try:
                        results[(nu, r)] = TrajectoryRecord.load(path)
                        continue
                    except (OSError, ValueError, KeyError):
                        log.warning("discarding unreadable cache entry %s", path)
            pending.append((config, nu, r, u0_desc))
    # Most expensive tasks first keeps the pool busy at the end.
    pending.sort(key=lambda a: -a[0].grid_size_for(a[1]))
    workers = workers or config.workers or os.cpu_count() or 1

    def store(task, rec):
        results[(task[1], task[2])] = rec
        if cache:
            rec.save(cache / f"{realization_key(config, task[1], task[2], u0_desc)}.npz")
        log.info("nu=%g r=%d done in %.1fs (%d steps)", rec.nu, rec.realization_id,
                 rec.wall_seconds, rec.n_steps)

    if workers <= 1 or len(pending) <= 1:
        for task in pending:
            store(task, _simulate_task(task))
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_simulate_task, task): task for task in pending}
            for fut in cf.as_completed(futures):
                store(futures[fut], fut.result())
    return {nu: [results[(nu, r)] for r in realizations] for nu in nu_values}


@dataclass
class NuSummary:
    """Aggregated statistics at one viscosity."""

    nu: float
    grid_size: int
    n_realizations: int
    n_failed: int
    norm_stats: dict
    max_ux_sup: float
    min_ux_mean: tuple
    h1_mean: tuple
    spectrum: SpectrumEstimate
    layers: dict
    compute_seconds: float


@dataclass
class RunManifest:
    config_hash: str
    config_text: str
    seeds: dict
    resolution: dict
    output_digest: str
    files: dict
    failed: list
    violations: int
    wall_clock: dict
    success: bool
    fits_within_bands: bool

    def to_text(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summaries: dict
    fits: dict
    violations: list
    manifest: RunManifest
    records: dict = field(repr=False, default_factory=dict)


def measurement_window(config):
    return float(config.t_start_measure), float(config.T_total)


def late_half_mask(times, sides):
    """Samples with ``t`` in ``[k + 1/2, k + 1)`` for some ``k >= 1``, plus pre-kick limits."""
    frac = times - np.floor(times)
    late = (times >= 1.0) & (frac >= 0.5 - 1e-12)
    pre_kick = (sides == MINUS) & (times >= 2.0)
    return late | pre_kick


def summarize(config, nu, records):
    """Aggregate one viscosity's realizations (failed ones excluded)."""
    good = [r for r in records if not r.failed]
    t0, t1 = measurement_window(config)
    ks = tuple(range(int(math.ceil(t0)), int(config.T_total)))
    stats = {}
    for spec in config.norms:
        series = [r.series(spec) for r in good]
        if spec.statistic == "instant":
            reducer = TimeAverage(t0, t1 - t0, spec.power)
        else:
            reducer = SupOverInterval(ks, spec.power)
        stats[spec] = ensemble_mean(series, reducer)
    max_sup = max(float(np.max(r.max_ux[late_half_mask(r.times, r.sides)])) for r in good)
    min_ux = ensemble_mean([r.signed_series("min_ux") for r in good], TimeAverage(t0, t1 - t0))
    h1 = ensemble_mean([r.series(NormSpec(1, 2.0)) for r in good], TimeAverage(t0, t1 - t0, 2))
    n = records[0].grid_size
    k_res = int(math.ceil(n / 3.0)) - 1
    spectrum = combine_spectra([r.spectrum((t0, t1), k_res) for r in good])
    layers = {}
    for s in config.layer_s:
        try:
            window = layer_window(nu, s, config.layer_theta, k_res)
            layers[s] = (window, layer_average(spectrum, nu, s, config.layer_theta))
        except DomainError:
            layers[s] = (None, float("nan"))
    return NuSummary(nu, n, len(good), len(records) - len(good), stats, max_sup, min_ux, h1,
                     spectrum, layers, float(sum(r.cpu_seconds for r in records)))


def _fmt(x):
    return f"{float(x):.16e}"


def _csv_bytes(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode("utf-8")


def _nu_tag(nu):
    return f"{nu:g}"


def build_outputs(config, summaries, fits, violations, records):
    """Render every CSV output as bytes, keyed by file name."""
    out = {}
    nus = sorted(summaries, reverse=True)
    for spec in config.norms:
        rows = [(summaries[nu].nu, *summaries[nu].norm_stats[spec], summaries[nu].n_realizations)
                for nu in nus]
        out[f"scaling_{spec.label}.csv"] = _csv_bytes(["nu", "mean", "stderr", "n_realizations"], rows)
    for nu in nus:
        sp = summaries[nu].spectrum
        out[f"spectrum_nu{_nu_tag(nu)}.csv"] = _csv_bytes(
            ["k", "E_k"], [(int(k), float(e)) for k, e in zip(sp.wavenumbers, sp.energy)])
    layer_rows = []
    for nu in nus:
        for s, (window, value) in summaries[nu].layers.items():
            lo, hi = window if window else ("", "")
            layer_rows.append((float(nu), float(s), float(config.layer_theta), lo, hi, float(value)))
    out["layer_averages.csv"] = _csv_bytes(["nu", "s", "theta", "k_lo", "k_hi", "F"], layer_rows)
    out["intermittency.csv"] = _csv_bytes(
        ["nu", "sup_max_ux", "mean_min_ux", "stderr_min_ux", "mean_h1_sq", "stderr_h1_sq"],
        [(float(nu), summaries[nu].max_ux_sup, *summaries[nu].min_ux_mean, *summaries[nu].h1_mean)
         for nu in nus])
    fit_rows = []
    for name, (fit, expected, tol) in fits.items():
        ok = int(fit is not None and abs(fit.slope - expected) <= tol)
        if fit is None:
            fit_rows.append((name, "", "", "", "", float(expected), float(tol), 0))
        else:
            fit_rows.append((name, fit.slope, fit.slope_stderr, fit.intercept, fit.r_squared,
                             float(expected), float(tol), ok))
    out["fits.csv"] = _csv_bytes(["quantity", "slope", "slope_stderr", "intercept", "r_squared",
                                  "expected_slope", "tolerance", "within_band"], fit_rows)
    ledger_rows = []
    for nu in nus:
        for rec in records[nu]:
            for lg in rec.ledgers:
                ledger_rows.append((float(nu), rec.realization_id, lg.interval_index, lg.A,
                                    lg.energy_in, lg.energy_out, lg.residual))
    out["dissipation.csv"] = _csv_bytes(
        ["nu", "realization", "interval", "A", "energy_in", "energy_out", "residual"], ledger_rows)
    out["violations.csv"] = _csv_bytes(
        ["nu", "realization", "t", "invariant", "value"],
        [(v.nu, v.realization_id, v.t, v.invariant, v.value) for v in violations])
    return out


def compute_fits(config, summaries):
    fits = {}
    nus = sorted(summaries)
    for spec, tol in zip(config.norms, config.fit_tolerances):
        try:
            fit = fit_power_law(nus, [summaries[nu].norm_stats[spec][0] for nu in nus])
        except DomainError:
            fit = None
        fits[spec.label] = (fit, spec.expected_slope, tol)
    return fits


def run_experiment(config, out_dir=None, workers=None, cache_dir=None, write=True):
    """Simulate every ``(nu, realization)`` pair, aggregate, and persist outputs."""
    started = time.time()
    records = simulate_ensemble(config, workers=workers, cache_dir=cache_dir)
    violations = [v for nu in records for rec in records[nu] for v in rec.violations]
    failed = [(nu, rec.realization_id, rec.error) for nu in records for rec in records[nu]
              if rec.failed]
    too_many_failed = any(
        sum(r.failed for r in recs) > config.max_failed_fraction * len(recs)
        for recs in records.values())
    summaries = {nu: summarize(config, nu, recs) for nu, recs in records.items()}
    fits = compute_fits(config, summaries) if len(summaries) >= 4 else {}
    fits_ok = all(f is not None and abs(f.slope - e) <= t for f, e, t in fits.values())
    outputs = build_outputs(config, summaries, fits, violations, records)

    digest = hashlib.sha256()
    for name in sorted(outputs):
        digest.update(name.encode())
        digest.update(outputs[name])
    manifest = RunManifest(
        config_hash=config_hash(config),
        config_text=dump_config(config),
        seeds={"master_seed": int(config.master_seed),
               "philox_keys": {str(r): [int(x) for x in KickStream(
                   config.master_seed, r, config.kick_distribution).key()]
                   for r in range(config.ensemble_size)}},
        resolution={f"{nu:g}": config.grid_size_for(nu) for nu in config.nu_sweep},
        output_digest=digest.hexdigest(),
        files={name: hashlib.sha256(data).hexdigest() for name, data in sorted(outputs.items())},
        failed=[[float(a), int(b), c] for a, b, c in failed],
        violations=len(violations),
        wall_clock={
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "elapsed_seconds": time.time() - started,
            "compute_seconds": {f"{nu:g}": s.compute_seconds for nu, s in summaries.items()},
            "host": platform.node(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        success=not violations and not too_many_failed,
        fits_within_bands=fits_ok,
    )
    if write:
        out = Path(out_dir or config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in outputs.items():
            (out / name).write_bytes(data)
        (out / "config.cfg").write_text(dump_config(config), encoding="utf-8")
        (out / "manifest.json").write_text(manifest.to_text(), encoding="utf-8")
    return ExperimentResult(config, summaries, fits, violations, manifest, records)


@dataclass
class IndependenceRow:
    nu: float
    quantity: str
    mean_a: float
    stderr_a: float
    mean_b: float
    stderr_b: float

    @property
    def combined_stderr(self):
        return math.hypot(self.stderr_a, self.stderr_b)

    @property
    def agrees(self):
        diff = abs(self.mean_a - self.mean_b)
        return diff == 0.0 or diff < 3.0 * self.combined_stderr


def independence_check(config, u0_a, u0_b, workers=None, cache_dir=None):
    """Compare measurement-window statistics of two initial conditions.

    ``u0_a`` / ``u0_b`` are PeriodicFields (resampled per viscosity) or
    descriptors such as ``"zero"`` and ``"sine:3"``.
    """
    t0, t1 = measurement_window(config)
    ks = tuple(range(int(math.ceil(t0)), int(config.T_total)))

    def run(u0):
        if isinstance(u0, str):
            return simulate_ensemble(config, u0_desc=u0, workers=workers, cache_dir=cache_dir)
        return {nu: [simulate_realization(config, nu, r, u0=u0)
                     for r in range(config.ensemble_size)] for nu in config.nu_sweep}

    rec_a, rec_b = run(u0_a), run(u0_b)
    rows = []
    for nu in config.nu_sweep:
        for spec in config.norms:
            if spec.statistic == "instant":
                reducer = TimeAverage(t0, t1 - t0, spec.power)
            else:
                reducer = SupOverInterval(ks, spec.power)
            a = ensemble_mean([r.series(spec) for r in rec_a[nu] if not r.failed], reducer)
            b = ensemble_mean([r.series(spec) for r in rec_b[nu] if not r.failed], reducer)
            rows.append(IndependenceRow(nu, spec.label, a[0], a[1], b[0], b[1]))
    return rows


def write_config(path, config):
    Path(path).write_text(dump_config(config), encoding="utf-8")


def default_config(**overrides):
    return replace(ExperimentConfig(), **overrides)
