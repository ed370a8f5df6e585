import csv
from dataclasses import replace

import numpy as np
import pytest

from conftest import pair_device
from paramgate import device as dv
from paramgate import dynamics as dy
from paramgate import errors
from paramgate.exceptions import DimensionMismatch
from paramgate.qops import LevelScheme, QuantumState, partial_trace


def _fock(spec, occ):
    return QuantumState.fock(spec.scheme, occ)


@pytest.mark.parametrize("frame", ["lab", "rotating"])
def test_resonant_exchange_period(frame):
    d = pair_device(0.0)
    g = abs(d.couplings()[0])
    spec = dy.HamiltonianSpec(d, None, frame=frame, levels=2)
    t = np.linspace(0, 3 * np.pi / g, 301)
    tr = dy.evolve(spec, _fock(spec, (1, 0)), t)
    # populations oscillate at 2g, i.e. the swap period is pi / g
    assert dy.swap_frequency(t, tr.populations[:, 0]) == pytest.approx(2 * g, rel=1e-2)
    assert tr.half_swap_time(0, 1) == pytest.approx(np.pi / (4 * g), rel=1e-6)
    assert tr.populations[:, 0].min() < 1e-6


def test_undriven_detuned_exchange_is_suppressed(s3):
    sub = s3.subset([1])
    spec = dy.HamiltonianSpec(sub, None, levels=3)
    tr = dy.evolve(spec, _fock(spec, (1, 0)), np.linspace(0, 1e-6, 101))
    g, delta = abs(sub.couplings()[0]), abs(sub.detunings[0])
    assert np.ptp(tr.populations[:, 0]) <= 1.05 * (2 * g / delta) ** 2


def test_zero_amplitude_drive_matches_undriven(s3):
    sub = s3.subset([1])
    drive = dv.drive_from_epsilons(sub, [1], [0.0], 2e-7)
    t = np.linspace(0, 2e-7, 21)
    a = dy.evolve(dy.HamiltonianSpec(sub, drive), _fock(dy.HamiltonianSpec(sub), (1, 0)), t)
    b = dy.evolve(dy.HamiltonianSpec(sub), _fock(dy.HamiltonianSpec(sub), (1, 0)), t)
    assert np.allclose(a.populations, b.populations, atol=1e-8)


def test_norm_preserved_under_drive(s3):
    sub = s3.subset([1, 2])
    eps = dv.calibrate_amplitudes(sub, [1, 2], 0.5 * dv.max_equal_coupling(sub.couplings()))
    drive = dv.drive_from_epsilons(sub, [1, 2], eps, 4e-7)
    spec = dy.HamiltonianSpec(sub, drive)
    tr = dy.evolve(spec, _fock(spec, (1, 0, 0)), np.linspace(0, 4e-7, 41), store_states=True)
    assert np.allclose(tr.occupations.sum(axis=1), 1, atol=1e-7)
    for st in tr.states:
        assert np.linalg.norm(st.ket) == pytest.approx(1, abs=1e-7)


def test_lindblad_trace_and_decay():
    t1 = 20e-6
    d = pair_device(0.0, t1=t1)
    noise = errors.NoiseModel(t1=d.t1)
    spec = dy.HamiltonianSpec(d, None, levels=2)
    t = np.linspace(0, 30e-6, 31)
    tr = dy.evolve(spec, _fock(spec, (1, 0)), t, collapse=noise, store_states=True)
    for st in tr.states:
        rho = st.density
        assert np.trace(rho).real == pytest.approx(1, abs=1e-7)
        assert np.allclose(rho, rho.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(rho).min() > -1e-8
    # hopping conserves excitations, so equal-rate damping gives a pure exponential
    assert np.allclose(tr.occupations.sum(axis=1), np.exp(-t / t1), atol=1e-6)


def test_initial_state_scheme_checked(s3):
    sub = s3.subset([1])
    spec = dy.HamiltonianSpec(sub, None, levels=3)
    wrong = QuantumState.fock(LevelScheme((2, 2)), (1, 0))
    with pytest.raises(DimensionMismatch):
        dy.evolve(spec, wrong, [0.0, 1e-9])


def test_tone_target_checked(s3):
    sub = s3.subset([1])
    with pytest.raises(DimensionMismatch):
        dy.HamiltonianSpec(sub, dv.DriveConfig((dv.Tone(0, 1.0, 1.0),), 1e-7))


def test_flux_waveform_validation():
    with pytest.raises(ValueError):
        dy.FluxWaveform(0.0, np.zeros(3))
    w = dy.FluxWaveform(1e-9, [0.0, 2.0])
    assert w(0.5e-9) == pytest.approx(1.0)


def test_phase_shift_leaves_populations(s3):
    # the drive phase only rotates the effective coupling, so populations are
    # unchanged exactly in the effective model and up to fast terms in the full one
    sub = s3.subset([1])
    eps = dv.calibrate_amplitudes(sub, [1], 0.5 * abs(sub.couplings()[0]))
    t = np.linspace(0, 3e-7, 16)
    eff, full = [], []
    for phase in (-np.pi / 2, 0.7):
        drive = dv.drive_from_epsilons(sub, [1], eps, 3e-7, phases=[phase])
        spec = dy.HamiltonianSpec(sub, drive)
        full.append(dy.evolve(spec, _fock(spec, (1, 0)), t).populations)
        ket = _fock(dy.HamiltonianSpec(sub, levels=2), (1, 0))
        eff.append(dy.evolve_effective(sub, drive, ket, t).populations)
    assert np.allclose(eff[0], eff[1], atol=1e-12)
    assert np.allclose(full[0], full[1], atol=0.03)


def test_effective_model_tracks_full_model(s3):
    sub = s3.subset([1])
    g = abs(sub.couplings()[0])
    eps = dv.calibrate_amplitudes(sub, [1], 0.5 * g)
    geff = 0.5 * g
    t_swap = np.pi / (2 * geff)
    drive = dv.drive_from_epsilons(sub, [1], eps, t_swap)
    t = np.linspace(0, t_swap, 11)
    spec = dy.HamiltonianSpec(sub, drive)
    full = dy.evolve(spec, _fock(spec, (1, 0)), t)
    eff = dy.evolve_effective(sub, drive, _fock(dy.HamiltonianSpec(sub, levels=2), (1, 0)), t)
    assert np.max(np.abs(full.populations - eff.populations)) < 0.03
    assert full.populations[-1, 1] > 0.97


def test_chevron_resonance_and_far_detuning(s3):
    sub = s3.subset([1])
    g = abs(sub.couplings()[0])
    eps = dv.calibrate_amplitudes(sub, [1], 0.5 * g)
    drive = dv.drive_from_epsilons(sub, [1], eps, 1e-6)
    spec = dy.HamiltonianSpec(sub, drive, levels=2)
    offsets = 2 * np.pi * 1e6 * np.array([-0.6, -0.3, 0.0, 0.3, 0.6])
    durations = np.linspace(0, 1.2e-6, 61)
    cmap = dy.chevron_scan(spec, offsets, durations, _fock(spec, (1, 0)))
    # the calibrated frequency is already on resonance within a fraction of g_eff
    assert abs(cmap.resonance_offset) < 0.25 * g
    assert cmap.depth[2] > 0.95
    far = dy.chevron_scan(spec, [2 * np.pi * 10e6], durations, _fock(spec, (1, 0)))
    assert far.depth[0] < 0.1


def test_generate_w_state_pair_noiseless(s3):
    res = dy.generate_w_state(s3, 1)
    assert res.fidelity >= 0.9999


def test_generate_w_state_three_qubits_equal_populations(s3):
    res = dy.generate_w_state(s3, 2)
    assert res.fidelity > 0.999
    rho = res.state.density
    occ = res.state.scheme.occupations()
    pops = [np.real(np.sum(np.diag(rho)[occ[:, j] == 1])) for j in range(3)]
    assert np.allclose(pops, 1 / 3, atol=5e-3)


def test_gate_process_noiseless_sqrt_iswap(s3):
    sub = s3.subset([1])
    g = abs(sub.couplings()[0])
    geff = 0.5 * g
    eps = dv.calibrate_amplitudes(sub, [1], geff)
    t_gate = dv.gate_time(geff)
    drive = dv.drive_from_epsilons(sub, [1], eps, t_gate)
    t_opt = dy.optimal_gate_time(sub, drive, "gate", None, levels=3)
    res = dy.gate_process(sub, drive, t_opt)
    assert res.average_fidelity > 0.995
    assert 0 <= res.leakage < 1e-3
    assert len(res.state_fidelities) == 36
    assert res.mean_state_fidelity > 0.99
    u = res.unitary()
    # magnitudes of sqrt(iSWAP) do not depend on local Z phases
    assert np.allclose(np.abs(u), np.abs(dy.SQRT_ISWAP), atol=0.05)


def test_trajectory_csv(tmp_path, s3):
    sub = s3.subset([1])
    spec = dy.HamiltonianSpec(sub, None, levels=2)
    tr = dy.evolve(spec, _fock(spec, (1, 0)), np.linspace(0, 1e-8, 3))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time_ns", "pop_q0", "pop_q1"]
    assert float(rows[-1][1]) == tr.populations[-1, 0]
