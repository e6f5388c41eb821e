r"""Reference solutions for kick-free intervals.

``cole_hopf`` is exact for the classical flux ``f(u) = u^2``. With ``v = 2u``
the equation becomes ``v_t + v v_x = nu v_xx`` and

.. math::

    v = -2\nu \frac{\varphi_x}{\varphi}, \qquad
    \varphi_t = \nu \varphi_{xx}, \qquad
    \varphi(0, x) = \exp\Big(-\frac{1}{2\nu}\int_0^x v(0, y)\,dy\Big),

so ``u = -nu phi_x / phi``. The heat equation is solved mode by mode, which
leaves only transform round-off.

``fd_reference`` is a brute-force second-order finite-difference solver
(conservative central differences, explicit RK4) for any flux.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numba
import numpy as np
import scipy.fft as sfft

from burgulence.errors import ContractError, InstabilityError, OracleError
from burgulence.field import PeriodicField, check_grid_size

GOLDEN_NAME = "cole_hopf_sin_nu0.1_t0.5_N512.csv"
GOLDEN_PARAMS = {"nu": 0.1, "t": 0.5, "grid_size": 512, "n_modes": 4096}


def cole_hopf(u0, nu, t, n_modes=4096, flux=None):
    """Exact classical-flux solution at time ``t`` sampled on ``u0``'s grid."""
    if flux is not None and not flux.is_classical:
        raise ContractError(f"Cole-Hopf applies to the classical flux only, got {flux.name!r}")
    n = u0.grid_size
    n_modes = check_grid_size(n_modes)
    if n_modes < n:
        raise ContractError(f"n_modes={n_modes} must be >= grid size {n}")
    if not (nu > 0 and t >= 0):
        raise ContractError("need nu > 0 and t >= 0")

    coeffs = sfft.rfft(u0.samples) / n
    k = np.arange(n // 2 + 1)
    anti = np.zeros(n_modes // 2 + 1, dtype=complex)
    anti[1:n // 2] = coeffs[1:n // 2] / (2j * np.pi * k[1:n // 2])
    primitive = sfft.irfft(anti * n_modes, n_modes)
    primitive -= primitive[0]

    log_phi = -primitive / nu
    log_phi -= log_phi.max()
    phi0 = np.exp(log_phi)

    kf = np.arange(n_modes // 2 + 1)
    phi_hat = sfft.rfft(phi0) * np.exp(-nu * (2 * np.pi * kf) ** 2 * t)
    phi = sfft.irfft(phi_hat, n_modes)
    dphi_hat = 2j * np.pi * kf * phi_hat
    dphi_hat[-1] = 0.0
    phi_x = sfft.irfft(dphi_hat, n_modes)
    if not np.all(np.isfinite(phi)) or phi.min() <= 0.0:
        raise OracleError(
            f"Cole-Hopf potential not positive (min {phi.min():.3e}); nu*t too extreme"
        )
    u = -nu * phi_x / phi
    mean = float(u.mean())
    if abs(mean) > 1e-8:
        raise OracleError(f"Cole-Hopf output mean {mean:.3e} exceeds 1e-8")
    return PeriodicField.from_samples(u[:: n_modes // n])


# Flux kinds understood by the compiled kernel.
_KERNEL_FLUX = {"linear": 0, "classical": 1, "quartic": 2}


@numba.njit(cache=True)
def _kernel_flux(u, kind):
    if kind == 0:
        return np.zeros_like(u)
    if kind == 1:
        return u * u
    return u * u + u**4 / 12.0


@numba.njit(cache=True)
def _kernel_speed(u, kind):
    s = 0.0
    for j in range(u.size):
        if kind == 0:
            v = 0.0
        elif kind == 1:
            v = abs(2.0 * u[j])
        else:
            v = abs(2.0 * u[j] + u[j] ** 3 / 3.0)
        if v > s:
            s = v
    return s


@numba.njit(cache=True)
def _kernel_rhs(u, kind, nu, dx, out):
    n = u.size
    f = _kernel_flux(u, kind)
    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = nu / (dx * dx)
    for j in range(n):
        jp = j + 1 if j + 1 < n else 0
        jm = j - 1
        out[j] = -(f[jp] - f[jm]) * inv2dx + (u[jp] - 2.0 * u[j] + u[jm]) * invdx2


@numba.njit(cache=True)
def _kernel_grad_sq(u, dx):
    n = u.size
    s = 0.0
    for j in range(n):
        jp = j + 1 if j + 1 < n else 0
        d = (u[jp] - u[j]) / dx
        s += d * d
    return s * dx


@numba.njit(cache=True)
def _kernel_run(u, kind, nu, t_end):
    n = u.size
    dx = 1.0 / n
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    t = 0.0
    A = 0.0
    g_prev = _kernel_grad_sq(u, dx)
    diff_dt = dx * dx / (2.0 * nu)
    steps = 0
    while t_end - t > 1e-14:
        speed = _kernel_speed(u, kind)
        adv_dt = dx / speed if speed > 0.0 else np.inf
        dt = 0.2 * min(adv_dt, diff_dt)
        if dt > t_end - t:
            dt = t_end - t
        _kernel_rhs(u, kind, nu, dx, k1)
        for j in range(n):
            tmp[j] = u[j] + 0.5 * dt * k1[j]
        _kernel_rhs(tmp, kind, nu, dx, k2)
        for j in range(n):
            tmp[j] = u[j] + 0.5 * dt * k2[j]
        _kernel_rhs(tmp, kind, nu, dx, k3)
        for j in range(n):
            tmp[j] = u[j] + dt * k3[j]
        _kernel_rhs(tmp, kind, nu, dx, k4)
        for j in range(n):
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        g = _kernel_grad_sq(u, dx)
        if not math.isfinite(g):
            return u, A, t, dt, False
        A += nu * dt * (g_prev + g)
        g_prev = g
        t += dt
        steps += 1
    return u, A, t, 0.0, True


def _numpy_run(u, flux, nu, t_end):
    n = u.size
    dx = 1.0 / n

    def rhs(w):
        f = flux.eval_f(w)
        return -(np.roll(f, -1) - np.roll(f, 1)) / (2 * dx) + nu * (
            np.roll(w, -1) - 2 * w + np.roll(w, 1)
        ) / dx**2

    def grad_sq(w):
        return float(np.sum(((np.roll(w, -1) - w) / dx) ** 2) * dx)

    t = 0.0
    A = 0.0
    g_prev = grad_sq(u)
    while t_end - t > 1e-14:
        speed = float(np.max(np.abs(flux.eval_fp(u))))
        adv = dx / speed if speed > 0 else np.inf
        dt = min(0.2 * min(adv, dx * dx / (2 * nu)), t_end - t)
        a = rhs(u)
        b = rhs(u + 0.5 * dt * a)
        c = rhs(u + 0.5 * dt * b)
        d = rhs(u + dt * c)
        u = u + dt / 6 * (a + 2 * b + 2 * c + d)
        g = grad_sq(u)
        if not math.isfinite(g):
            return u, A, t, dt, False
        A += nu * dt * (g_prev + g)
        g_prev = g
        t += dt
    return u, A, t, 0.0, True


@dataclass(frozen=True)
class FDResult:
    """Fine-grid run: final fine-grid samples and the discrete energy balance."""

    fine: np.ndarray
    A: float
    energy_in: float
    energy_out: float

    @property
    def residual(self):
        return abs(self.A - (self.energy_in - self.energy_out)) / max(self.A, 1e-12)


def fd_run(u0_fine, nu, t, flux):
    """Run the finite-difference solver on the grid of ``u0_fine``."""
    u = np.array(u0_fine, dtype=float)
    e_in = float(np.mean(u * u))
    kind = _KERNEL_FLUX.get(flux.name)
    if kind is not None:
        out, A, t_reached, dt, ok = _kernel_run(u, kind, float(nu), float(t))
    else:
        out, A, t_reached, dt, ok = _numpy_run(u, flux, float(nu), float(t))
    if not ok:
        raise InstabilityError(t_reached, dt, nu, u.size)
    return FDResult(out, A, e_in, float(np.mean(out * out)))


def _refine(u0, n_fine):
    """Band-limited interpolation of ``u0`` onto a finer grid."""
    n = u0.grid_size
    coeffs = sfft.rfft(u0.samples) / n
    fine = np.zeros(n_fine // 2 + 1, dtype=complex)
    fine[: n // 2] = coeffs[: n // 2]
    return sfft.irfft(fine * n_fine, n_fine)


def fd_reference(u0, nu, t, flux, n_fine, return_result=False):
    """Finite-difference solution at time ``t``, subsampled onto ``u0``'s grid.

    ``u0`` is interpolated spectrally onto the ``n_fine`` grid. With
    ``return_result=True`` the FDResult (fine field plus energy balance) is
    returned alongside the coarse field.
    """
    n = u0.grid_size
    n_fine = check_grid_size(n_fine)
    if n_fine < n or n_fine % n:
        raise ContractError(f"n_fine={n_fine} must be a multiple of the grid size {n}")
    result = fd_run(_refine(u0, n_fine), nu, t, flux)
    coarse = PeriodicField.from_samples(result.fine[:: n_fine // n])
    if return_result:
        return coarse, result
    return coarse


def write_profile_csv(path, field):
    """Write ``(x, u)`` rows with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "u"])
        for x, u in zip(field.x, field.samples):
            writer.writerow([f"{x:.16e}", f"{u:.16e}"])


def read_profile_csv(path):
    """Inverse of :func:`write_profile_csv`."""
    with Path(path).open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return PeriodicField.from_samples([float(r["u"]) for r in rows], project=False)


def golden_profile():
    """Stored Cole-Hopf profile for ``u0 = sin(2 pi x)``, nu = 0.1, t = 0.5, N = 512."""
    ref = resources.files("burgulence") / "data" / GOLDEN_NAME
    with resources.as_file(ref) as path:
        return read_profile_csv(path)


def sine_initial(n, amplitude=1.0):
    return PeriodicField.from_function(lambda x: amplitude * np.sin(2 * np.pi * x), n)


def generate_golden(path, cross_check_n_fine=4096):
    """Recompute the golden profile and cross-check it against ``fd_reference``.

    Returns the L_inf distance between the two oracles.
    """
    from burgulence.flux import builtin_flux

    p = GOLDEN_PARAMS
    u0 = sine_initial(p["grid_size"])
    ref = cole_hopf(u0, p["nu"], p["t"], n_modes=p["n_modes"])
    fd = fd_reference(u0, p["nu"], p["t"], builtin_flux("classical"), cross_check_n_fine)
    write_profile_csv(path, ref)
    return float(np.max(np.abs(ref.samples - fd.samples)))
