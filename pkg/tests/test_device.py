import math

import numpy as np
import pytest
from scipy import special

from paramgate import device as dv
from paramgate.exceptions import InfeasibleTarget, SingularityError

TWO_PI = 2 * np.pi


def test_bus_coupling_equal_detuning():
    assert dv.bus_mediated_coupling(3.0, 5.0, 7.0, 7.0) == pytest.approx(15.0 / 7.0)


def test_bus_coupling_table_s3_pair():
    g = dv.bus_mediated_coupling(dv.mhz(17.3), dv.mhz(22.8), dv.mhz(-480.0), dv.mhz(-421.6))
    assert dv.to_mhz(g) == pytest.approx(-0.8787, abs=5e-4)


def test_bus_coupling_cancellation_and_pole():
    assert dv.bus_mediated_coupling(1.0, 2.0, 3.0, -3.0) == 0.0
    with pytest.raises(SingularityError):
        dv.bus_mediated_coupling(1.0, 2.0, 0.0, 1.0)


def test_bus_coupling_symmetry():
    a = dv.bus_mediated_coupling(1.3, 2.1, -4.0, -7.5)
    b = dv.bus_mediated_coupling(2.1, 1.3, -7.5, -4.0)
    assert a == pytest.approx(b, rel=1e-15)


def test_bessel_matches_scipy():
    for n in (0, 1, 2):
        for x in np.linspace(0, 12, 49):
            assert dv.bessel_j(n, x) == pytest.approx(special.jv(n, x), rel=1e-12, abs=1e-14)


def test_effective_coupling_limits():
    eps = 1e-6
    assert dv.effective_coupling(1.0, [eps], 0) / eps == pytest.approx(0.5, rel=1e-9)
    assert dv.effective_coupling(1.0, [1.8412], 0) == pytest.approx(0.5819, abs=1e-4)
    assert abs(dv.effective_coupling(1.0, [1.0, 2.404825557695773], 0)) < 1e-12


def test_effective_coupling_monotone():
    vals = [dv.effective_coupling(1.0, [e], 0) for e in np.linspace(0, dv.J1_PEAK_ARG, 200)]
    assert np.all(np.diff(vals) > 0)


def test_dispersive_shift_examples():
    h, a, d = dv.mhz(15.2), dv.mhz(-204.3), dv.mhz(-286.1)
    assert dv.to_mhz(dv.dispersive_shift(h, a, d)) == pytest.approx(-0.336, abs=2e-3)
    assert dv.dispersive_shift(h, 0.0, d) == 0.0
    big = dv.dispersive_shift(h, -1e18, d)
    assert big == pytest.approx(h * h / d, rel=1e-6)
    chi = dv.dispersive_shift(h, a, d)
    assert dv.coupling_from_dispersive_shift(chi, a, d) == pytest.approx(h, rel=1e-12)
    with pytest.raises(SingularityError):
        dv.dispersive_shift(h, a, -a)


def test_gate_time_examples():
    g = TWO_PI * 0.390625e6
    assert dv.gate_time(g) == pytest.approx(320e-9, rel=1e-12)
    assert dv.gate_time(g, 1) == pytest.approx(5 * dv.gate_time(g))
    assert dv.gate_time(g, 0, "iswap") == pytest.approx(2 * dv.gate_time(g))
    with pytest.raises(ValueError):
        dv.gate_time(0.0)


def test_w_state_time_two_qubits_is_entangler_time():
    g = TWO_PI * 0.4e6
    assert dv.w_state_time(g, 1) == pytest.approx(dv.gate_time(g))


def test_calibrate_single_tone_closed_form(s3):
    sub = s3.subset([1])
    g = abs(sub.couplings()[0])
    eps = dv.calibrate_amplitudes(sub, [1], 0.3 * g)
    assert special.jv(1, eps[0]) == pytest.approx(0.3, rel=1e-9)


def test_calibrate_symmetric_pairs():
    dev = dv.DeviceParams(dv.ghz([5.0, 5.1, 5.1]), dv.mhz([-200] * 3), dv.ghz(5.5), dv.mhz([20] * 3),
                          np.ones(3), np.ones(3), np.zeros(2))
    g = abs(dev.couplings()[0])
    eps = dv.calibrate_amplitudes(dev, [1, 2], 0.2 * g)
    assert eps[0] == pytest.approx(eps[1], rel=1e-10)


def test_calibrate_reproduces_target(s3):
    g = s3.couplings()
    target = 0.8 * dv.max_equal_coupling(g)
    eps = dv.calibrate_amplitudes(s3, [1, 2, 3], target)
    geff = np.abs(dv.effective_couplings(g, eps))
    assert np.allclose(geff / target, 1, atol=1e-6)
    assert np.all(eps <= dv.J1_PEAK_ARG)


def test_calibrate_ratios_follow_detunings(s3):
    # eps_j = Omega_j / nu_j, so Omega ratios grow with the detunings as in the 1:3:4 drive
    g = s3.couplings()
    eps = dv.calibrate_amplitudes(s3, [1, 2, 3], 0.5 * dv.max_equal_coupling(g))
    omegas = eps * np.abs(s3.detunings)
    r = omegas / omegas[0]
    assert 1 < r[1] < r[2]


def test_calibrate_infeasible_reports_max(s3):
    g = s3.couplings()
    mx = dv.max_equal_coupling(g)
    with pytest.raises(InfeasibleTarget) as exc:
        dv.calibrate_amplitudes(s3, [1, 2, 3], 1.5 * mx)
    assert exc.value.feasible_max == pytest.approx(mx)


def test_device_validation():
    with pytest.raises(ValueError):
        dv.DeviceParams(dv.ghz([5.0, 5.1]), dv.mhz([-200, -200]), dv.ghz(5.5), dv.mhz([20, 20]),
                        np.array([10e-6, 10e-6]), np.array([30e-6, 10e-6]), np.zeros(1))
    with pytest.warns(UserWarning):
        dv.DeviceParams(dv.ghz([5.0, 5.1]), dv.mhz([-200, -200]), dv.ghz(5.2), dv.mhz([40, 20]),
                        np.ones(2), np.ones(2), np.zeros(1))


def test_tphi_relation(s3):
    expected = 1 / (1 / s3.t2echo - 1 / (2 * s3.t1))
    assert np.allclose(s3.tphi, expected)


def test_drive_validation():
    with pytest.raises(ValueError):
        dv.DriveConfig((dv.Tone(1, 1.0, 2.0), dv.Tone(1, 1.0, 3.0)), 1e-7)
    with pytest.raises(ValueError):
        dv.DriveConfig((dv.Tone(1, -1.0, 2.0),), 1e-7)
    with pytest.raises(ValueError):
        dv.DriveConfig((dv.Tone(1, 1.0, 2.0),), 0.0)


def test_quadratic_flux_map_inverse():
    fm = dv.QuadraticFluxMap(TWO_PI * 5e9, -TWO_PI * 2e9, -TWO_PI * 5e9)
    phi = np.linspace(-0.05, 0.1, 31)
    assert np.allclose(fm.inverse(fm(phi)), phi, atol=1e-6)
    assert fm.is_monotone(-0.1, 0.1)
    assert not fm.is_monotone(-0.5, 0.1)


def test_transmon_slope_matches_finite_difference():
    fmax = dv.ghz(5.1941)
    f = dv.ghz(5.0408)
    phi = dv.transmon_flux(f, fmax)
    h = 1e-7
    fd = (dv.transmon_frequency(phi + h, fmax) - dv.transmon_frequency(phi - h, fmax)) / (2 * h)
    assert dv.transmon_flux_slope(f, fmax) == pytest.approx(abs(fd), rel=1e-6)


def test_effective_hamiltonian_iswap(s3):
    # evolving the effective model for the iswap time gives iSWAP up to local Z phases
    sub = s3.subset([1])
    drive = dv.drive_from_epsilons(sub, [1], [1.0], 1e-7)
    from paramgate import dynamics

    h, scheme = dynamics.effective_hamiltonian(sub, drive, levels=2)
    geff = dynamics.effective_couplings_of(sub, drive)[0]
    t = dv.gate_time(geff, 0, "iswap")
    w, v = np.linalg.eigh(h)
    u = v @ np.diag(np.exp(-1j * w * t)) @ v.conj().T
    mags = np.abs(u)
    assert np.allclose(mags, [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], atol=1e-9)
    assert math.isclose(abs(u[1, 2] * u[2, 1]), 1, rel_tol=1e-12)
