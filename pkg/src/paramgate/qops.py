"""Truncated bosonic operators and state containers.

Every mode (transmon) is a truncated oscillator. Mode 0 is the common
qubit, modes 1..n are the computational qubits. Matrices are dense.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .exceptions import DimensionMismatch, InvalidTruncation

HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
PSD_TOL = -1e-8


@dataclass(frozen=True)
class LevelScheme:
    """Per-mode truncation levels."""

    dims: tuple[int, ...]

    def __init__(self, dims):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise InvalidTruncation("a level scheme needs at least one mode")
        if any(d < 2 for d in dims):
            raise InvalidTruncation(f"every mode needs >= 2 levels, got {dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def uniform(cls, n_modes, d=3):
        return cls((d,) * n_modes)

    @property
    def dim(self):
        return int(np.prod(self.dims))

    @property
    def n_modes(self):
        return len(self.dims)

    def basis_index(self, occupations):
        """Flat index of the Fock state ``|n_0 n_1 ...>`` (mode 0 most significant)."""
        occupations = tuple(occupations)
        if len(occupations) != self.n_modes:
            raise DimensionMismatch(f"expected {self.n_modes} occupations, got {len(occupations)}")
        return int(np.ravel_multi_index(occupations, self.dims))

    def occupations(self):
        """Array (dim, n_modes) of Fock occupations of each basis state."""
        return np.array(list(itertools.product(*(range(d) for d in self.dims))), dtype=int)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    data: np.ndarray
    scheme: LevelScheme

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DimensionMismatch(f"operator must be square, got shape {data.shape}")
        if data.shape[0] != self.scheme.dim:
            raise DimensionMismatch(
                f"operator dimension {data.shape[0]} != scheme dimension {self.scheme.dim}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dag(self):
        return OperatorMatrix(self.data.conj().T, self.scheme)

    def __matmul__(self, other):
        _check_same_scheme(self.scheme, other.scheme)
        return OperatorMatrix(self.data @ other.data, self.scheme)

    def __add__(self, other):
        _check_same_scheme(self.scheme, other.scheme)
        return OperatorMatrix(self.data + other.data, self.scheme)

    def __sub__(self, other):
        _check_same_scheme(self.scheme, other.scheme)
        return OperatorMatrix(self.data - other.data, self.scheme)

    def __mul__(self, scalar):
        return OperatorMatrix(self.data * scalar, self.scheme)

    __rmul__ = __mul__

    def is_hermitian(self, tol=HERMITIAN_TOL):
        return bool(np.allclose(self.data, self.data.conj().T, atol=tol, rtol=0))


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A ket or a density matrix on a level scheme.

    Exactly one of ``ket`` / ``density`` is set. Validation is done on
    construction; pass ``check=False`` for intermediate, unnormalised data.
    """

    scheme: LevelScheme
    ket: np.ndarray | None = None
    density: np.ndarray | None = None
    check: bool = True

    def __post_init__(self):
        if (self.ket is None) == (self.density is None):
            raise ValueError("give exactly one of ket or density")
        dim = self.scheme.dim
        if self.ket is not None:
            ket = np.asarray(self.ket, dtype=complex).reshape(-1)
            if ket.size != dim:
                raise DimensionMismatch(f"ket has {ket.size} entries, scheme needs {dim}")
            if self.check and abs(np.linalg.norm(ket) - 1) > 1e-9:
                raise ValueError(f"ket norm {np.linalg.norm(ket)} is not 1")
            ket.setflags(write=False)
            object.__setattr__(self, "ket", ket)
        else:
            rho = np.asarray(self.density, dtype=complex)
            if rho.shape != (dim, dim):
                raise DimensionMismatch(f"density has shape {rho.shape}, scheme needs {(dim, dim)}")
            if self.check:
                validate_density(rho)
            rho.setflags(write=False)
            object.__setattr__(self, "density", rho)

    @classmethod
    def fock(cls, scheme, occupations):
        ket = np.zeros(scheme.dim, dtype=complex)
        ket[scheme.basis_index(occupations)] = 1.0
        return cls(scheme, ket=ket)

    @property
    def is_ket(self):
        return self.ket is not None

    def to_density(self):
        if self.is_ket:
            return QuantumState(self.scheme, density=np.outer(self.ket, self.ket.conj()))
        return self

    @property
    def rho(self):
        """Density matrix as a plain array."""
        return self.to_density().density


def validate_density(rho, herm_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    if not np.allclose(rho, rho.conj().T, atol=herm_tol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"density trace {tr} is not 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < psd_tol:
        raise ValueError(f"density has negative eigenvalue {lo}")


def _check_same_scheme(a, b):
    if a != b:
        raise DimensionMismatch(f"scheme mismatch: {a.dims} vs {b.dims}")


def ladder_ops(d):
    """Annihilation and creation operators of a ``d``-level oscillator."""
    if d < 2:
        raise InvalidTruncation(f"need d >= 2, got {d}")
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)
    scheme = LevelScheme((d,))
    return OperatorMatrix(a, scheme), OperatorMatrix(a.conj().T, scheme)


def number_op(d):
    return OperatorMatrix(np.diag(np.arange(d, dtype=complex)), LevelScheme((d,)))


def embed(op, mode, scheme):
    """Place a single-mode operator at ``mode`` with identities elsewhere."""
    if not 0 <= mode < scheme.n_modes:
        raise DimensionMismatch(f"mode {mode} out of range for {scheme.n_modes} modes")
    local = op.data if isinstance(op, OperatorMatrix) else np.asarray(op, dtype=complex)
    if local.shape != (scheme.dims[mode],) * 2:
        raise DimensionMismatch(
            f"operator of size {local.shape[0]} cannot act on a {scheme.dims[mode]}-level mode")
    factors = [np.eye(d, dtype=complex) for d in scheme.dims]
    factors[mode] = local
    return OperatorMatrix(reduce(np.kron, factors), scheme)


def mode_ops(scheme):
    """Annihilation operators of every mode, embedded in the full space."""
    return [embed(ladder_ops(d)[0], m, scheme) for m, d in enumerate(scheme.dims)]


def expectation(state, op):
    """<psi|op|psi> or Tr(rho op). Real for Hermitian ``op``."""
    _check_same_scheme(state.scheme, op.scheme)
    if state.is_ket:
        val = np.vdot(state.ket, op.data @ state.ket)
    else:
        val = np.trace(state.density @ op.data)
    if op.is_hermitian():
        return float(val.real)
    return complex(val)


def partial_trace(state, keep):
    """Reduced density matrix over the modes listed in ``keep``."""
    scheme = state.scheme
    keep = sorted(set(int(k) for k in keep))
    if not keep or any(not 0 <= k < scheme.n_modes for k in keep):
        raise DimensionMismatch(f"invalid keep set {keep} for {scheme.n_modes} modes")
    n = scheme.n_modes
    rho = state.rho.reshape(scheme.dims * 2)
    drop = [m for m in range(n) if m not in keep]
    # einsum labels: row indices 0..n-1, column indices n..2n-1; traced modes share a label
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    cols = letters[n:]
    for m in drop:
        cols[m] = letters[m]
    out = [letters[m] for m in keep] + [cols[m] for m in keep]
    spec = "".join(letters[:n]) + "".join(cols) + "->" + "".join(out)
    sub_dims = tuple(scheme.dims[m] for m in keep)
    d = int(np.prod(sub_dims))
    reduced = np.einsum(spec, rho).reshape(d, d)
    return QuantumState(LevelScheme(sub_dims), density=reduced, check=False)


def excitation_subspace(scheme, max_excitations):
    """Indices of basis states with total occupation <= ``max_excitations``.

    Hamiltonians built from exchange terms and number operators, with
    relaxation/dephasing collapse operators, never leave this subspace.
    """
    occ = scheme.occupations().sum(axis=1)
    return np.flatnonzero(occ <= max_excitations)


def qubit_subspace(scheme):
    """Indices of basis states with every mode in {0, 1}."""
    occ = scheme.occupations()
    return np.flatnonzero((occ <= 1).all(axis=1))


def project_to_qubits(state):
    """Project onto the {0,1}^n subspace and renormalise.

    Returns (density on a 2^n qubit scheme, leakage probability).
    """
    idx = qubit_subspace(state.scheme)
    rho = state.rho[np.ix_(idx, idx)]
    kept = float(np.trace(rho).real)
    leakage = 1.0 - kept
    scheme = LevelScheme((2,) * state.scheme.n_modes)
    if kept <= 0:
        raise ValueError("state has no weight in the qubit subspace")
    rho = rho / kept
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(scheme, density=rho, check=False), leakage


def w_state(n_modes, phases=None):
    """Equal-weight single-excitation state over ``n_modes`` qubits."""
    scheme = LevelScheme((2,) * n_modes)
    ket = np.zeros(scheme.dim, dtype=complex)
    phases = np.zeros(n_modes) if phases is None else np.asarray(phases, dtype=float)
    for m in range(n_modes):
        occ = [0] * n_modes
        occ[m] = 1
        ket[scheme.basis_index(occ)] = np.exp(1j * phases[m]) / np.sqrt(n_modes)
    return QuantumState(scheme, ket=ket)


def random_density(dim, rng, rank=None):
    """Random density matrix (Ginibre ensemble) for property tests."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_ket(dim, rng):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)
