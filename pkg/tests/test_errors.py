import json
import math

import numpy as np
import pytest

from paramgate import errors as er
from paramgate.exceptions import CompletenessError, NyquistError

A_PHI = 2.45e-6**2


def test_prefactors():
    assert er.DECOHERENCE_PREFACTOR == {2: 2 / 5, 3: 4 / 9, 4: 8 / 17}
    for n, a in er.DECOHERENCE_PREFACTOR.items():
        assert er.prefactor(2**n) == pytest.approx(a)


def test_analytic_infidelity_example():
    t1 = np.full(2, 20e-6)
    tphi = np.full(2, 30e-6)
    eps = er.analytic_decoherence_infidelity(2, 320e-9, t1, tphi)
    assert eps == pytest.approx(0.4 * 320e-9 * 2 * (1 / 20e-6 + 1 / 30e-6))
    assert er.analytic_decoherence_infidelity(3, 0.0, np.ones(3), np.ones(3)) == 0.0
    with pytest.raises(ValueError):
        er.analytic_decoherence_infidelity(5, 1e-7, np.ones(5), np.ones(5))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_analytic_matches_kraus(n):
    t1 = np.full(n, 20e-6)
    tphi = np.full(n, 30e-6)
    t = 320e-9
    analytic = er.analytic_decoherence_infidelity(n, t, t1, tphi)
    exact = 1 - er.kraus_average_fidelity(er.register_decoherence_kraus(t, t1, tphi))
    assert exact == pytest.approx(analytic, rel=0.05)


def test_single_qubit_channel_forms():
    p1, pphi = 0.1, 0.05
    ops = er.damping_kraus(p1, pphi)
    assert len(ops) == 4
    assert np.allclose(sum(k.conj().T @ k for k in ops), np.eye(2))
    rho = np.array([[0.3, 0.2], [0.2, 0.7]], dtype=complex)
    out = sum(k @ rho @ k.conj().T for k in ops)
    assert out[1, 1].real == pytest.approx(0.7 * (1 - p1))
    assert abs(out[0, 1]) == pytest.approx(0.2 * math.sqrt(1 - p1) * (1 - 2 * pphi))


def test_damping_limits():
    assert er.kraus_average_fidelity(er.damping_kraus(0.0, 0.0)) == pytest.approx(1.0)
    # full relaxation maps everything to |0>: F = (2 + 1) / 6
    assert er.kraus_average_fidelity(er.damping_kraus(1.0, 0.0)) == pytest.approx(0.5)
    # complete dephasing: F = 2/3
    assert er.kraus_average_fidelity(er.damping_kraus(0.0, 0.5)) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        er.damping_kraus(1.2, 0.0)


def test_damping_probabilities():
    assert er.damping_probabilities(1.0, np.inf, np.inf) == (0.0, 0.0)
    p1, pphi = er.damping_probabilities(1e-6, 1e-6, 2e-6)
    assert p1 == pytest.approx(1 - math.exp(-1))
    assert pphi == pytest.approx(0.5 * (1 - math.exp(-0.5)))


def test_completeness_error():
    with pytest.raises(CompletenessError):
        er.kraus_average_fidelity([0.5 * np.eye(2)])
    # leaky channels are allowed when checking is off
    assert er.kraus_average_fidelity([0.5 * np.eye(2)], check=False) == pytest.approx(1.5 / 6)


def test_embed_kraus_positions():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    (op,) = er.embed_kraus([x], 1, 3)
    assert np.allclose(op, np.kron(np.kron(np.eye(2), x), np.eye(2)))


def test_choi_round_trip():
    ops = er.register_decoherence_kraus(1e-6, [10e-6, 20e-6], [15e-6, 40e-6])
    back = er.choi_to_kraus(er.kraus_to_choi(ops), 4)
    assert np.allclose(er.kraus_to_choi(back), er.kraus_to_choi(ops), atol=1e-12)
    weights = [np.linalg.norm(k) for k in back]
    assert weights == sorted(weights, reverse=True)


def test_quasi_static_sigma_example():
    sigma = er.quasi_static_sigma(A_PHI, 320e-9)
    assert sigma * 1e6 == pytest.approx(12.0, abs=0.1)
    assert er.quasi_static_sigma_quadrature(A_PHI, 320e-9) == pytest.approx(sigma, rel=1e-10)
    slope = 2 * np.pi * 2.8e9
    assert er.quasi_static_sigma(A_PHI, 320e-9, slope=slope) == pytest.approx(sigma * slope)
    with pytest.raises(ValueError):
        er.quasi_static_sigma(A_PHI, 1e5)


def test_flux_trace_psd_slope():
    dt = 1e-9
    x = np.zeros(2**16)
    psd = 0
    for seed in range(8):
        f, p = er.periodogram(er.flux_trace(A_PHI, x.size * dt, dt, seed=seed), dt)
        psd = psd + p / 8
    band = (f > 1e5) & (f < 1e8)
    slope = np.polyfit(np.log(f[band]), np.log(psd[band]), 1)[0]
    assert -1.2 <= slope <= -0.8
    # absolute level within a factor of two of A_Phi / f
    ratio = np.median(psd[band] * f[band]) / A_PHI
    assert 0.5 < ratio < 2


def test_flux_trace_linearity_and_zero():
    a = er.flux_trace(A_PHI, 1e-6, 1e-9, seed=3)
    b = er.flux_trace(4 * A_PHI, 1e-6, 1e-9, seed=3)
    assert np.allclose(b, 2 * a)
    assert not np.any(er.flux_trace(0.0, 1e-6, 1e-9, seed=3))
    with pytest.raises(NyquistError):
        er.flux_trace(A_PHI, 1e-6, 1e-9, f_high=1e9)


def test_echo_round_trip():
    slope = 2 * np.pi * 2.8252e9
    rate = er.flux_amplitude_to_echo_rate(2.45e-6, slope)
    assert er.echo_to_flux_amplitude(rate, slope) == pytest.approx(2.45e-6, rel=1e-14)
    with pytest.raises(ValueError):
        er.echo_to_flux_amplitude(rate, 0.0)


def test_noise_model_channels(s3):
    nm = er.NoiseModel.from_device(s3)
    assert nm.has_decoherence and nm.zz is not None and nm.flux is not None
    off = nm.without("decoh")
    assert off.t1 is None and off.tphi is None and off.flux is not None
    assert nm.without("flux").flux is None
    with pytest.raises(ValueError):
        nm.without("cosmic rays")
    with pytest.raises(ValueError):
        er.NoiseModel(t1=[-1.0])


def test_error_budget_serialization():
    b = er.ErrorBudget(0.97, 0.02, 1e-4, 2e-4, "mc", label="dev")
    back = er.ErrorBudget.from_dict(json.loads(b.to_json()))
    assert back == b
    table = er.format_budget_table([b])
    assert "dev" in table and "97.00%" in table
