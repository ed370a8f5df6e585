import numpy as np
import pytest

from paramgate import tomography as tm
from paramgate.exceptions import DimensionMismatch, UnderdeterminedError
from paramgate.qops import LevelScheme, QuantumState, random_density, w_state

S2 = 1 / np.sqrt(2)
KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([S2, S2], dtype=complex),
    "+i": np.array([S2, 1j * S2], dtype=complex),
}


def _rho(ket):
    return np.outer(ket, ket.conj())


def test_settings_count():
    assert len(tm.full_settings(2)) == 9
    assert len(set(tm.full_settings(3))) == 27


@pytest.mark.parametrize("label,pauli", [("0", "Z"), ("+", "X"), ("+i", "Y")])
def test_pauli_eigenstates_measure_plus_one(label, pauli):
    data = tm.simulate_measurements(_rho(KETS[label]), shots=2000, seed=1)
    assert data.expectation(pauli) == pytest.approx(1.0)


def test_pre_rotations_are_unitary_and_map_eigenstates():
    for b, u in tm.PRE_ROTATIONS.items():
        assert np.allclose(u.conj().T @ u, np.eye(2))
    p = tm.born_probabilities(_rho(KETS["+"]), [("X",)])
    assert np.allclose(p, [[0, 1]], atol=1e-15)


def test_bell_correlations():
    bell = np.array([1, 0, 0, 1], dtype=complex) * S2
    data = tm.simulate_measurements(_rho(bell), shots=4000, seed=2)
    assert data.expectation("ZZ") == pytest.approx(1.0)
    assert data.expectation("XX") == pytest.approx(1.0)
    assert data.expectation("YY") == pytest.approx(-1.0)
    assert abs(data.expectation("ZI")) < 0.05


def test_counts_are_reproducible():
    rho = random_density(4, np.random.default_rng(0))
    a = tm.simulate_measurements(rho, shots=500, seed=7)
    b = tm.simulate_measurements(rho, shots=500, seed=7)
    assert np.array_equal(a.counts, b.counts)
    assert np.all(a.counts.sum(axis=1) == 500)


def test_mle_pure_state_exact_probabilities():
    rng = np.random.default_rng(3)
    ket = rng.normal(size=4) + 1j * rng.normal(size=4)
    ket /= np.linalg.norm(ket)
    rho = _rho(ket)
    data = tm.simulate_measurements(rho, shots=200000, seed=4)
    res = tm.mle_reconstruct(data)
    assert tm.state_fidelity(res.rho, ket) > 0.995


def test_mle_bell_and_likelihood_monotone():
    bell = np.array([0, 1, 1, 0], dtype=complex) * S2
    data = tm.simulate_measurements(_rho(bell), shots=5000, seed=5)
    res = tm.mle_reconstruct(data)
    assert tm.state_fidelity(res.rho, bell) > 0.99
    assert np.all(np.diff(res.history) >= -1e-9 * abs(res.history[-1]))
    w = np.linalg.eigvalsh(res.rho.density)
    assert w.min() > -1e-12
    assert np.trace(res.rho.density).real == pytest.approx(1.0)


def test_mle_mixed_state():
    rho = random_density(4, np.random.default_rng(6), rank=4)
    data = tm.simulate_measurements(rho, shots=100000, seed=6)
    res = tm.mle_reconstruct(data)
    assert tm.state_fidelity(res.rho, rho) > 0.995


def test_linear_inversion_is_exact_for_exact_frequencies():
    rho = random_density(4, np.random.default_rng(8))
    settings = tm.full_settings(2)
    probs = tm.born_probabilities(rho, settings)
    shots = 10**9
    counts = np.round(probs * shots).astype(np.int64)
    counts[:, 0] += shots - counts.sum(axis=1)
    data = tm.TomographyDataset(2, settings, counts, shots)
    assert np.allclose(tm.linear_inversion(data), rho, atol=1e-6)


def test_underdetermined():
    rho = np.eye(4) / 4
    data = tm.simulate_measurements(rho, settings=[("Z", "Z"), ("X", "X")], shots=100, seed=0)
    with pytest.raises(UnderdeterminedError):
        tm.mle_reconstruct(data)


def test_fidelity_properties():
    rng = np.random.default_rng(9)
    a = random_density(4, rng)
    b = random_density(4, rng)
    assert tm.state_fidelity(a, a) == pytest.approx(1.0, abs=1e-7)
    assert tm.state_fidelity(a, b) == pytest.approx(tm.state_fidelity(b, a), abs=1e-7)
    assert 0 <= tm.state_fidelity(a, b) <= 1
    ket = KETS["0"]
    assert tm.state_fidelity(np.eye(2) / 2, ket) == pytest.approx(S2)
    assert tm.squared_fidelity(np.eye(2) / 2, ket) == pytest.approx(0.5)
    # orthogonal states
    assert tm.state_fidelity(_rho(KETS["0"]), _rho(KETS["1"])) == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(DimensionMismatch):
        tm.state_fidelity(np.eye(2) / 2, np.eye(4) / 4)
    with pytest.raises(ValueError):
        tm.state_fidelity(np.diag([1.5, -0.5]), np.eye(2) / 2)


def test_virtual_z_recovers_phases():
    psi = w_state(3)
    psi = psi.ket if isinstance(psi, QuantumState) else psi
    angles = np.array([0.4, -1.1, 2.0])
    rotated = tm.apply_virtual_z(_rho(psi), angles)
    assert tm.state_fidelity(rotated, psi) < 0.9
    res = tm.virtual_z_correction(rotated, psi)
    assert res.fidelity == pytest.approx(1.0, abs=1e-8)
    # populations are untouched
    assert np.allclose(np.diag(res.rho), np.diag(rotated))
    rho_al, _ = res
    assert tm.state_fidelity(rho_al, psi) == pytest.approx(1.0, abs=1e-8)


def test_virtual_z_flat_objective():
    res = tm.virtual_z_correction(np.diag([1.0, 0, 0, 0]), np.array([1, 0, 0, 0], dtype=complex))
    assert res.flat
    assert np.allclose(res.angles, 0)


def test_align_pure_matches_search():
    psi = w_state(2)
    psi = psi.ket if isinstance(psi, QuantumState) else psi
    rho = 0.9 * tm.apply_virtual_z(_rho(psi), [0.3, -0.7]) + 0.1 * np.eye(4) / 4
    f_search = tm.virtual_z_correction(rho, psi).fidelity
    _, _, f_closed = tm.align_pure(rho, psi)
    assert f_closed == pytest.approx(f_search, abs=1e-7)


def test_leakage_projection_and_warning():
    scheme = LevelScheme((3, 3))
    rho = np.zeros((9, 9), dtype=complex)
    rho[scheme.basis_index((0, 1)), scheme.basis_index((0, 1))] = 0.9
    rho[scheme.basis_index((2, 0)), scheme.basis_index((2, 0))] = 0.1
    with pytest.warns(UserWarning):
        data = tm.simulate_measurements(QuantumState(scheme, density=rho), shots=100, seed=0)
    assert data.leakage == pytest.approx(0.1)
    assert data.warnings
    assert data.expectation("IZ") == pytest.approx(-1.0)


def test_dataset_json_round_trip(tmp_path):
    data = tm.simulate_measurements(np.eye(4) / 4, shots=100, seed=1)
    path = tmp_path / "data.json"
    data.save(path)
    back = tm.TomographyDataset.load(path)
    assert back.settings == data.settings
    assert np.array_equal(back.counts, data.counts)
    with pytest.raises(ValueError):
        tm.TomographyDataset(1, [("Z",), ("Z",)], [[1, 0], [0, 1]], 1)


def test_density_csv_round_trip(tmp_path):
    rho = random_density(4, np.random.default_rng(11))
    re, im = tmp_path / "re.csv", tmp_path / "im.csv"
    tm.write_density_csv(rho, re, im)
    assert np.array_equal(tm.read_density_csv(re, im), rho)
