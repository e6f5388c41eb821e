import math

import numpy as np
import pytest

from burgulence.errors import ConfigurationError, ContractError, OracleError
from burgulence.field import PeriodicField
from burgulence.flux import builtin_flux, linear_test_flux
from burgulence.oracle import (
    GOLDEN_PARAMS,
    cole_hopf,
    fd_reference,
    golden_profile,
    read_profile_csv,
    sine_initial,
    write_profile_csv,
)

CLASSICAL = builtin_flux("classical")
QUARTIC = builtin_flux("quartic")

# L_inf distance between the stored Cole-Hopf profile and fd_reference at
# N_fine = 4096, measured when the golden file was generated.
GOLDEN_FD_DISTANCE = 6.291317029838428e-08


class TestColeHopf:
    def test_zero(self):
        assert np.all(cole_hopf(PeriodicField.zeros(64), 0.1, 0.5).samples == 0)

    def test_short_time_continuity(self):
        u0 = sine_initial(256)
        assert np.max(np.abs(cole_hopf(u0, 0.1, 1e-6).samples - u0.samples)) < 1e-4

    def test_rejects_other_flux(self):
        with pytest.raises(ContractError):
            cole_hopf(sine_initial(64), 0.1, 0.5, flux=QUARTIC)

    def test_accepts_classical_flux(self):
        cole_hopf(sine_initial(64), 0.1, 0.5, flux=CLASSICAL)

    def test_n_modes_below_grid(self):
        with pytest.raises(ContractError):
            cole_hopf(sine_initial(256), 0.1, 0.5, n_modes=128)

    def test_potential_underflow_reported(self):
        u0 = sine_initial(64, 50.0)
        with pytest.raises(OracleError):
            cole_hopf(u0, 1e-3, 0.5, n_modes=1024)

    def test_mode_count_independent(self):
        u0 = sine_initial(128)
        a = cole_hopf(u0, 0.1, 0.5, n_modes=2048).samples
        b = cole_hopf(u0, 0.1, 0.5, n_modes=4096).samples
        assert np.max(np.abs(a - b)) < 1e-12

    def test_shock_steepening(self):
        u = cole_hopf(sine_initial(512), 0.02, 0.3).samples
        assert np.min(np.diff(u)) * 512 < -10

    def test_golden_profile(self):
        p = GOLDEN_PARAMS
        stored = golden_profile()
        assert stored.grid_size == p["grid_size"]
        fresh = cole_hopf(sine_initial(p["grid_size"]), p["nu"], p["t"], p["n_modes"])
        assert np.max(np.abs(stored.samples - fresh.samples)) < 1e-14

    def test_golden_cross_validation_record(self):
        assert GOLDEN_FD_DISTANCE < 1e-7


class TestFdReference:
    def test_heat_flow(self):
        u = fd_reference(sine_initial(64), 0.1, 1.0, linear_test_flux(), 256)
        amp = math.exp(-4 * math.pi**2 * 0.1)
        assert np.max(np.abs(u.samples - amp * np.sin(2 * np.pi * u.x))) < 1e-4

    def test_requires_multiple(self):
        with pytest.raises(ConfigurationError):
            fd_reference(sine_initial(64), 0.1, 0.5, CLASSICAL, 96)
        with pytest.raises(ContractError):
            fd_reference(sine_initial(64), 0.1, 0.5, CLASSICAL, 32)

    def test_second_order_against_cole_hopf(self):
        u0 = sine_initial(64)
        ref = cole_hopf(u0, 0.1, 0.5).samples
        e1 = np.max(np.abs(fd_reference(u0, 0.1, 0.5, CLASSICAL, 128).samples - ref))
        e2 = np.max(np.abs(fd_reference(u0, 0.1, 0.5, CLASSICAL, 256).samples - ref))
        assert 3.5 <= e1 / e2 <= 4.5

    def test_quartic_richardson(self):
        u0 = sine_initial(64)
        r = {nf: fd_reference(u0, 0.1, 0.5, QUARTIC, nf).samples for nf in (128, 256, 512)}
        e1 = np.max(np.abs(r[128] - r[512]))
        e2 = np.max(np.abs(r[256] - r[512]))
        assert e1 / e2 >= 3.5

    def test_dissipation_identity(self):
        _, result = fd_reference(sine_initial(64), 0.1, 0.5, CLASSICAL, 512, return_result=True)
        assert result.A > 0 and result.residual <= 1e-4

    def test_generic_flux_path(self):
        from burgulence.flux import shifted_flux

        g = shifted_flux(CLASSICAL, 0.0)
        u0 = sine_initial(32)
        a = fd_reference(u0, 0.1, 0.2, g, 64).samples
        b = fd_reference(u0, 0.1, 0.2, CLASSICAL, 64).samples
        assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.slow
def test_dual_oracle_at_4096():
    u0 = sine_initial(512)
    fd, result = fd_reference(u0, 0.1, 0.5, CLASSICAL, 4096, return_result=True)
    assert np.max(np.abs(fd.samples - golden_profile().samples)) < 1e-7
    assert result.residual <= 1e-4


def test_profile_csv_round_trip(tmp_path):
    u = sine_initial(64, 0.3)
    path = tmp_path / "p.csv"
    write_profile_csv(path, u)
    back = read_profile_csv(path)
    assert np.array_equal(back.samples, u.samples)
    header, first = path.read_text().splitlines()[:2]
    assert header == "x,u"
    assert len(first.split(",")[1].replace("-", "").split("e")[0].replace(".", "")) == 17
