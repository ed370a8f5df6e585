import numpy as np
import pytest

from paramgate import qops
from paramgate.exceptions import DimensionMismatch, InvalidTruncation
from paramgate.qops import LevelScheme, QuantumState


def test_ladder_d2():
    a, ad = qops.ladder_ops(2)
    assert np.array_equal(a.data, [[0, 1], [0, 0]])
    assert np.array_equal(ad.data, [[0, 0], [1, 0]])


def test_ladder_d3_entries_and_number():
    a, ad = qops.ladder_ops(3)
    assert a.data[1, 2] == pytest.approx(np.sqrt(2))
    assert np.allclose((ad @ a).data, np.diag([0, 1, 2]), atol=1e-15)


def test_ladder_commutator_truncation():
    a, ad = qops.ladder_ops(3)
    comm = (a @ ad - ad @ a).data
    assert np.allclose(comm, np.diag([1, 1, -2]))


def test_ladder_rejects_d1():
    with pytest.raises(InvalidTruncation):
        qops.ladder_ops(1)
    with pytest.raises(InvalidTruncation):
        LevelScheme([3, 1])
    with pytest.raises(InvalidTruncation):
        LevelScheme([])


def test_embed_identity():
    s = LevelScheme([2, 2])
    assert np.array_equal(qops.embed(np.eye(2), 0, s).data, np.eye(4))


def test_embed_rank_and_dim():
    a, _ = qops.ladder_ops(3)
    op = qops.embed(a, 1, LevelScheme([2, 3]))
    assert op.data.shape == (6, 6)
    assert np.linalg.matrix_rank(op.data) == 4  # rank(I2) * rank(a3) = 2 * 2


def test_embed_distinct_modes_commute():
    s = LevelScheme([3, 3])
    a, ad = qops.ladder_ops(3)
    x, y = qops.embed(a, 0, s), qops.embed(ad, 1, s)
    assert np.allclose((x @ y - y @ x).data, 0)


def test_embed_errors():
    s = LevelScheme([2, 3])
    a, _ = qops.ladder_ops(3)
    with pytest.raises(DimensionMismatch):
        qops.embed(a, 0, s)
    with pytest.raises(DimensionMismatch):
        qops.embed(a, 2, s)


def test_embed_homomorphism(rng):
    s = LevelScheme([2, 3, 2])
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    lhs = qops.embed(a @ b, 1, s).data
    rhs = qops.embed(a, 1, s).data @ qops.embed(b, 1, s).data
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_expectation_examples():
    s1 = LevelScheme([3])
    n = qops.number_op(3)
    assert qops.expectation(QuantumState.fock(s1, [0]), n) == 0
    assert qops.expectation(QuantumState.fock(s1, [1]), n) == pytest.approx(1)
    s = LevelScheme([2, 2])
    ket = np.zeros(4, dtype=complex)
    ket[s.basis_index([0, 1])] = 1 / np.sqrt(2)
    ket[s.basis_index([1, 0])] = 1j / np.sqrt(2)
    n1 = qops.embed(qops.number_op(2), 1, s)
    val = qops.expectation(QuantumState(s, ket=ket), n1)
    assert isinstance(val, float)
    assert val == pytest.approx(0.5)


def test_expectation_scheme_mismatch():
    st = QuantumState.fock(LevelScheme([2, 2]), [0, 0])
    with pytest.raises(DimensionMismatch):
        qops.expectation(st, qops.number_op(4))


def test_partial_trace_product():
    s = LevelScheme([2, 2])
    red = qops.partial_trace(QuantumState.fock(s, [0, 1]), [1])
    assert np.allclose(red.density, [[0, 0], [0, 1]])


def test_partial_trace_bell_and_w():
    s = LevelScheme([2, 2])
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    red = qops.partial_trace(QuantumState(s, ket=bell), [0])
    assert np.allclose(red.density, np.eye(2) / 2)
    w3 = qops.w_state(3)
    assert np.allclose(qops.partial_trace(w3, [2]).density, np.diag([2 / 3, 1 / 3]))


def test_partial_trace_invalid():
    st = QuantumState.fock(LevelScheme([2, 2]), [0, 0])
    with pytest.raises(DimensionMismatch):
        qops.partial_trace(st, [])
    with pytest.raises(DimensionMismatch):
        qops.partial_trace(st, [3])


def test_state_validation():
    s = LevelScheme([2])
    with pytest.raises(ValueError):
        QuantumState(s, ket=[1, 1])
    with pytest.raises(ValueError):
        QuantumState(s, density=np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        QuantumState(s, density=np.array([[0.5, 0.6], [0.6, 0.5]]))
    with pytest.raises(DimensionMismatch):
        QuantumState(s, ket=[1, 0, 0])


def test_excitation_subspace_and_projection():
    s = LevelScheme([3, 3])
    idx = qops.excitation_subspace(s, 1)
    assert sorted(idx.tolist()) == [0, 1, 3]
    ket = np.zeros(9, dtype=complex)
    ket[s.basis_index([0, 1])] = np.sqrt(0.9)
    ket[s.basis_index([0, 2])] = np.sqrt(0.1)
    proj, leak = qops.project_to_qubits(QuantumState(s, ket=ket))
    assert leak == pytest.approx(0.1)
    assert np.trace(proj.density).real == pytest.approx(1)
