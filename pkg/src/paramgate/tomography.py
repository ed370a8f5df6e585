"""Pauli-basis state tomography: measurement simulation, MLE, fidelity, virtual-Z alignment."""
from __future__ import annotations

import csv
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .exceptions import DimensionMismatch, UnderdeterminedError
from .qops import LevelScheme, QuantumState, project_to_qubits

LEAKAGE_WARN = 0.05

# pre-rotations mapping the +1 eigenstate of each basis onto |1> (X, Y) or |0> (Z)
_S2 = 1 / math.sqrt(2)
Y_HALF = np.array([[_S2, -_S2], [_S2, _S2]], dtype=complex)  # exp(-i pi/4 Y)
X_MINUS_HALF = np.array([[_S2, 1j * _S2], [1j * _S2, _S2]], dtype=complex)  # exp(+i pi/4 X)
PRE_ROTATIONS = {"X": Y_HALF, "Y": X_MINUS_HALF, "Z": np.eye(2, dtype=complex)}
# eigenvalue carried by outcome bit 0 in each basis
_BIT0_EIGENVALUE = {"X": -1, "Y": -1, "Z": +1}


def full_settings(n_qubits):
    """All 3^n Pauli-basis settings, e.g. ('X', 'Z')."""
    return [tuple(s) for s in itertools.product("ZXY", repeat=n_qubits)]


@dataclass
class TomographyDataset:
    n_qubits: int
    settings: list
    counts: np.ndarray
    shots: int
    leakage: float = 0.0
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.settings = [tuple(s) for s in self.settings]
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(set(self.settings)) != len(self.settings):
            raise ValueError("tomography settings must be distinct")
        if self.counts.shape != (len(self.settings), 2**self.n_qubits):
            raise DimensionMismatch(f"counts shape {self.counts.shape} does not match settings")
        if np.any(self.counts.sum(axis=1) != self.shots):
            raise ValueError("counts per setting must sum to shots")

    def frequencies(self):
        return self.counts / self.shots

    def to_dict(self):
        return {
            "n_qubits": self.n_qubits,
            "shots": int(self.shots),
            "settings": ["".join(s) for s in self.settings],
            "counts": self.counts.tolist(),
            "leakage": self.leakage,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(n_qubits=data["n_qubits"], settings=[tuple(s) for s in data["settings"]],
                   counts=np.array(data["counts"]), shots=data["shots"],
                   leakage=data.get("leakage", 0.0), warnings=data.get("warnings", []))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def expectation(self, paulis):
        """<P> for a Pauli string over {I, X, Y, Z} estimated from matching settings."""
        vals = []
        for s, row in zip(self.settings, self.frequencies()):
            if all(p == "I" or p == b for p, b in zip(paulis, s)):
                total = 0.0
                for k, f in enumerate(row):
                    bits = [(k >> (self.n_qubits - 1 - q)) & 1 for q in range(self.n_qubits)]
                    sign = 1
                    for q, p in enumerate(paulis):
                        if p != "I":
                            sign *= _BIT0_EIGENVALUE[p] * (-1) ** bits[q]
                    total += sign * f
                vals.append(total)
        if not vals:
            raise ValueError(f"no setting measures {paulis}")
        return float(np.mean(vals))


def _setting_unitary(setting):
    u = np.eye(1, dtype=complex)
    for b in setting:
        u = np.kron(u, PRE_ROTATIONS[b])
    return u


def measurement_projectors(settings):
    """POVM elements U^+ |k><k| U, shape (n_settings, 2^n, d, d)."""
    out = []
    for s in settings:
        u = _setting_unitary(s)
        # rows of u are <k|U; projector = (u[k])^+ (u[k])
        out.append(np.einsum("ki,kj->kij", u.conj(), u))
    return np.array(out)


def born_probabilities(rho, settings):
    proj = measurement_projectors(settings)
    p = np.einsum("skij,ji->sk", proj, rho).real
    return np.clip(p, 0, None)


def _as_qubit_density(rho):
    if isinstance(rho, QuantumState):
        if all(d == 2 for d in rho.scheme.dims):
            return rho.rho, 0.0, rho.scheme.n_modes
        proj, leak = project_to_qubits(rho)
        return proj.density, leak, rho.scheme.n_modes
    rho = np.asarray(rho, dtype=complex)
    n = int(round(math.log2(rho.shape[0])))
    return rho, 0.0, n


def simulate_measurements(rho, settings=None, shots=10000, seed=None):
    """Multinomial counts after ideal pre-rotations.

    Higher transmon levels are projected out first; the removed weight is
    reported as ``leakage`` (a warning is attached above 5%).
    """
    rho, leakage, n = _as_qubit_density(rho)
    settings = full_settings(n) if settings is None else [tuple(s) for s in settings]
    probs = born_probabilities(rho, settings)
    probs = probs / probs.sum(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    streams = rng.spawn(len(settings))
    counts = np.array([r.multinomial(shots, p) for r, p in zip(streams, probs)])
    notes = []
    if leakage > LEAKAGE_WARN:
        msg = f"leakage {leakage:.3f} out of the qubit subspace"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    return TomographyDataset(n, settings, counts, shots, leakage=leakage, warnings=notes)


@dataclass
class ReconstructionResult:
    rho: QuantumState
    log_likelihood: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _log_likelihood(rho, proj, counts):
    p = np.einsum("skij,ji->sk", proj, rho).real
    mask = counts > 0
    return float(np.sum(counts[mask] * np.log(np.clip(p[mask], 1e-300, None))))


def mle_reconstruct(data, max_iter=2000, tol=1e-10, rho0=None):
    """Maximum-likelihood density matrix by the diluted R rho R iteration.

    Each accepted step increases the likelihood; on a decrease the step is
    diluted by half and retried.
    """
    proj = measurement_projectors(data.settings)
    d = 2**data.n_qubits
    flat = proj.reshape(-1, d * d)
    if np.linalg.matrix_rank(flat, tol=1e-10) < d * d:
        raise UnderdeterminedError("measurement settings are not informationally complete")
    counts = data.counts.astype(float)
    n_set = len(data.settings)
    freqs = counts / counts.sum(axis=1, keepdims=True)
    rho = np.eye(d, dtype=complex) / d if rho0 is None else np.array(rho0, dtype=complex)
    ll = _log_likelihood(rho, proj, counts)
    history = [ll]
    eye = np.eye(d)
    converged = False
    dilution = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        p = np.einsum("skij,ji->sk", proj, rho).real
        ratio = np.where(freqs > 0, freqs / np.clip(p, 1e-300, None), 0.0)
        r = np.einsum("sk,skij->ij", ratio, proj) / n_set
        while True:
            m = (eye + dilution * r) / (1 + dilution)
            cand = m @ rho @ m.conj().T
            cand = cand / np.trace(cand).real
            cand = 0.5 * (cand + cand.conj().T)
            ll_new = _log_likelihood(cand, proj, counts)
            if ll_new >= ll - 1e-12 * abs(ll) or dilution < 1e-8:
                break
            dilution *= 0.5
        gain = ll_new - ll
        if gain < 0:
            # stagnated at numerical precision; keep the previous iterate
            converged = True
            break
        rho, ll = cand, ll_new
        history.append(ll)
        if gain < tol:
            converged = True
            break
    scheme = LevelScheme((2,) * data.n_qubits)
    return ReconstructionResult(QuantumState(scheme, density=rho, check=False), ll, it,
                                converged, history)


def linear_inversion(data):
    """Unconstrained least-squares estimate (not necessarily PSD)."""
    proj = measurement_projectors(data.settings)
    d = 2**data.n_qubits
    a = proj.reshape(-1, d * d)
    # p_sk = Tr(P rho) = sum_ij P_ij rho_ji
    a = proj.transpose(0, 1, 3, 2).reshape(-1, d * d)
    f = data.frequencies().reshape(-1)
    vec, *_ = np.linalg.lstsq(a, f.astype(complex), rcond=None)
    rho = vec.reshape(d, d)
    return 0.5 * (rho + rho.conj().T)


# --- fidelity --------------------------------------------------------------

def _density(x):
    if isinstance(x, QuantumState):
        return x.rho
    x = np.asarray(x, dtype=complex)
    return np.outer(x, x.conj()) if x.ndim == 1 else x


def _pure_vector(x):
    if isinstance(x, QuantumState) and x.is_ket:
        return x.ket
    x = np.asarray(getattr(x, "density", x) if isinstance(x, QuantumState) else x)
    if x.ndim == 1:
        return x
    return None


def _psd_sqrt(rho):
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w.min() < -1e-8:
        raise ValueError(f"input is not positive semidefinite (eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def state_fidelity(rho, sigma, convention="sqrt"):
    """Uhlmann fidelity Tr sqrt(sqrt(rho) sigma sqrt(rho)).

    ``convention='squared'`` returns its square. Kets are accepted for
    either argument and use the pure-state shortcut.
    """
    psi = _pure_vector(sigma)
    other = rho
    if psi is None:
        psi = _pure_vector(rho)
        other = sigma
    if psi is not None:
        r = _density(other)
        if r.shape[0] != psi.size:
            raise DimensionMismatch("fidelity arguments differ in dimension")
        if np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() < -1e-8:
            raise ValueError("input is not positive semidefinite")
        f2 = float(np.clip(np.vdot(psi, r @ psi).real, 0, None))
        f = math.sqrt(f2)
    else:
        a, b = _density(rho), _density(sigma)
        if a.shape != b.shape:
            raise DimensionMismatch("fidelity arguments differ in dimension")
        sa = _psd_sqrt(a)
        _psd_sqrt(b)
        m = sa @ b @ sa
        f = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (m + m.conj().T)), 0, None))))
    f = min(f, 1.0)
    return f * f if convention == "squared" else f


def squared_fidelity(rho, sigma):
    return state_fidelity(rho, sigma, convention="squared")


# --- virtual Z -------------------------------------------------------------

def z_phases(angles):
    """Diagonal of the product of diag(1, e^{i theta_q}) over qubits."""
    diag = np.ones(1, dtype=complex)
    for a in angles:
        diag = np.kron(diag, np.array([1.0, np.exp(1j * a)]))
    return diag


def apply_virtual_z(rho, angles):
    z = z_phases(angles)
    return rho * np.outer(z, z.conj())


@dataclass
class VirtualZResult:
    rho: np.ndarray
    angles: np.ndarray
    fidelity: float
    flat: bool
    converged: bool

    def __iter__(self):
        # unpacks as (rho_aligned, angles)
        return iter((self.rho, self.angles))


_GOLDEN = (math.sqrt(5) - 1) / 2


def _golden_max(f, a, b, tol=1e-9, max_iter=200):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def virtual_z_correction(rho, target, sweeps=6, grid=16, polish=True):
    """Per-qubit Z rotations maximising the fidelity with ``target``.

    Coordinate-wise golden-section search (bracketed on a coarse grid),
    then a Nelder-Mead polish. Populations are untouched.
    """
    r = _density(rho)
    n = int(round(math.log2(r.shape[0])))
    psi = _pure_vector(target)
    sigma = None if psi is not None else _density(target)

    def fid(angles):
        return state_fidelity(apply_virtual_z(r, angles), psi if psi is not None else sigma)

    angles = np.zeros(n)
    best = fid(angles)
    start = best
    span = 0.0
    step = 2 * np.pi / grid
    for _ in range(sweeps):
        before = best
        for q in range(n):
            def fq(a, q=q):
                trial = angles.copy()
                trial[q] = a
                return fid(trial)

            pts = angles[q] + step * np.arange(grid) - np.pi
            vals = np.array([fq(a) for a in pts])
            span = max(span, vals.max() - vals.min())
            k = int(np.argmax(vals))
            a_best, f_best = _golden_max(fq, pts[k] - step, pts[k] + step)
            if f_best > best:
                angles[q], best = a_best, f_best
        if best - before < 1e-13:
            break
    flat = span < 1e-12
    if flat:
        angles = np.zeros(n)
        best = start
    converged = True
    if polish and not flat:
        res = optimize.minimize(lambda a: -fid(a), angles, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        converged = bool(res.success)
        if -res.fun > best:
            angles, best = res.x, -res.fun
    angles = (np.asarray(angles) + np.pi) % (2 * np.pi) - np.pi
    return VirtualZResult(apply_virtual_z(r, angles), angles, best, flat, converged)


def align_pure(rho, psi, iters=50):
    """Virtual-Z angles for a pure target by closed-form coordinate ascent.

    For a pure target the objective restricted to one angle is
    a + Re(c e^{i theta}); each coordinate update is exact.
    """
    r = _density(rho)
    d = r.shape[0]
    n = int(round(math.log2(d)))
    bits = (np.arange(d)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    angles = np.zeros(n)
    for _ in range(iters):
        old = angles.copy()
        for q in range(n):
            z = np.exp(1j * (bits @ angles))
            u = psi.conj() * z
            # objective = u^T r u^*; shifting theta_q by t multiplies the bit-q part by e^{it}
            on = bits[:, q] == 1
            a_vec = np.where(on, 0, u)
            b_vec = np.where(on, u, 0)
            cross = np.dot(b_vec, r @ a_vec.conj())
            angles[q] -= np.angle(cross)
        if np.max(np.abs(angles - old)) < 1e-13:
            break
    angles = (angles + np.pi) % (2 * np.pi) - np.pi
    aligned = apply_virtual_z(r, angles)
    return aligned, angles, state_fidelity(aligned, psi)


# --- export ----------------------------------------------------------------

def basis_labels(n_qubits):
    return ["".join(b) for b in itertools.product("01", repeat=n_qubits)]


def write_density_csv(rho, path_real, path_imag):
    """Real and imaginary parts, rows/columns in lexicographic basis order."""
    r = _density(rho)
    n = int(round(math.log2(r.shape[0])))
    labels = basis_labels(n)
    for path, part in ((path_real, r.real), (path_imag, r.imag)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + labels)
            for lab, row in zip(labels, part):
                w.writerow([lab] + [repr(float(v)) for v in row])


def read_density_csv(path_real, path_imag):
    parts = []
    for path in (path_real, path_imag):
        with open(path) as fh:
            rows = list(csv.reader(fh))[1:]
        parts.append(np.array([[float(v) for v in row[1:]] for row in rows]))
    return parts[0] + 1j * parts[1]
