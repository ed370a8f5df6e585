"""Cross-entropy benchmarking of a two-qubit gate with random single-qubit layers."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .exceptions import DegenerateDistribution

P_FLOOR = 1e-12

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)

SQRT_ISWAP = np.array([[1, 0, 0, 0],
                       [0, 1 / math.sqrt(2), 1j / math.sqrt(2), 0],
                       [0, 1j / math.sqrt(2), 1 / math.sqrt(2), 0],
                       [0, 0, 0, 1]], dtype=complex)


def rz(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rxy(theta, phi):
    """Rotation by ``theta`` about the equatorial axis at azimuth ``phi``."""
    axis = math.cos(phi) * _X + math.sin(phi) * _Y
    return math.cos(theta / 2) * _I2 - 1j * math.sin(theta / 2) * axis


@dataclass(frozen=True)
class XebGateSet:
    """64 gates Rz(m pi/8) Rxy(pi/2, n pi/8); gate (n, m) sits at index 8n + m."""

    gates: np.ndarray

    def __len__(self):
        return len(self.gates)

    def gate(self, n, m):
        return self.gates[8 * n + m]

    @staticmethod
    def label(index):
        n, m = divmod(int(index), 8)
        return f"Rz({m}pi/8)Rxy(pi/2,{n}pi/8)"


def build_gate_set():
    gates = np.array([rz(m * np.pi / 8) @ rxy(np.pi / 2, n * np.pi / 8)
                      for n in range(8) for m in range(8)])
    gates.setflags(write=False)
    return XebGateSet(gates)


def _entropy(p, q):
    return -np.sum(p * np.log2(q), axis=-1)


def xeb_fidelity(p_exp, p_th, return_flag=False):
    """(H(uni, th) - H(exp, th)) / (H(uni, th) - H(th, th)), logs base 2.

    Entries of ``p_th`` below 1e-12 are floored and the distribution
    renormalised; ``return_flag=True`` also returns whether that happened.
    """
    p_exp = np.asarray(p_exp, dtype=float)
    p_th = np.asarray(p_th, dtype=float)
    if p_exp.shape != p_th.shape:
        raise ValueError("distributions differ in shape")
    if np.any(p_th.sum(axis=-1) <= 0):
        raise DegenerateDistribution("ideal distribution has no weight")
    floored = bool(np.any(p_th < P_FLOOR))
    if floored:
        p_th = np.maximum(p_th, P_FLOOR)
        p_th = p_th / p_th.sum(axis=-1, keepdims=True)
    uni = np.full_like(p_th, 1.0 / p_th.shape[-1])
    h_uni = _entropy(uni, p_th)
    denom = h_uni - _entropy(p_th, p_th)
    if np.any(np.abs(denom) < 1e-15):
        raise DegenerateDistribution("ideal distribution is uniform; XEB fidelity undefined")
    f = (h_uni - _entropy(p_exp, p_th)) / denom
    f = float(f) if np.ndim(f) == 0 else f
    return (f, floored) if return_flag else f


def advanced_phase(phi0, delta, t_cycle, k):
    """Drive phase of cycle ``k``: phi0 + k Delta t_cycle, reduced to [0, 2 pi).

    Restarting the tone with this phase makes every cycle see the same
    coupling phase, so a single simulated channel serves all cycles.
    """
    return float(np.mod(phi0 + k * delta * t_cycle, 2 * np.pi))


def corrected_channel(process):
    """Undo the local Z rotations found when aligning a simulated gate.

    ``process`` is a :class:`~paramgate.dynamics.GateProcessResult`; the
    returned table approximates sqrt(iSWAP) itself, as after virtual-Z
    compensation on hardware.
    """
    a = process.angles
    zpost = np.kron([1, np.exp(1j * a[0])], [1, np.exp(1j * a[1])])
    zpre = np.kron([1, np.exp(1j * a[2])], [1, np.exp(1j * a[3])])
    lam = process.channel
    lam = np.einsum("i,j,ijab->ijab", zpre.conj(), zpre, lam)
    return np.einsum("a,ijab,b->ijab", zpost.conj(), lam, zpost)


def _apply_channel(lam, rho):
    return np.einsum("ij,ijab->ab", rho, lam)


@dataclass
class DecayFit:
    amplitude: float
    base: float
    covariance: np.ndarray
    base_stderr: float
    log_space: bool = True
    flagged: bool = False


def fit_decay(depths, fidelities):
    """Fit F(m) = A p^m; log-space least squares, linear-space fallback if any F <= 0."""
    m = np.asarray(depths, dtype=float)
    f = np.asarray(fidelities, dtype=float)
    if m.size < 3:
        raise ValueError("need at least three depths")
    if np.all(f > 0):
        x = np.column_stack([np.ones_like(m), m])
        y = np.log(f)
        coef, *_ = np.linalg.lstsq(x, y, rcond=None)
        resid = y - x @ coef
        dof = max(m.size - 2, 1)
        s2 = float(resid @ resid) / dof
        cov_log = s2 * np.linalg.inv(x.T @ x)
        a, p = math.exp(coef[0]), math.exp(coef[1])
        jac = np.diag([a, p])
        cov = jac @ cov_log @ jac
        return DecayFit(a, p, cov, math.sqrt(cov[1, 1]), True, False)
    p0 = [max(f[0], 1e-3), 0.9]
    popt, pcov = optimize.curve_fit(lambda mm, a, p: a * p**mm, m, f, p0=p0,
                                    bounds=([0, 0], [np.inf, 1.5]))
    return DecayFit(float(popt[0]), float(popt[1]), pcov, float(math.sqrt(max(pcov[1, 1], 0))),
                    False, True)


@dataclass
class XebRun:
    depths: np.ndarray
    fidelities: np.ndarray  # (n_depths, n_seq)
    p_th: list = field(default_factory=list)
    p_exp: list = field(default_factory=list)
    fit: DecayFit | None = None
    reference: "XebRun | None" = None
    floored: bool = False

    @property
    def mean(self):
        return self.fidelities.mean(axis=1)

    def summary(self):
        out = {"depths": self.depths.tolist(), "mean_fidelity": self.mean.tolist()}
        if self.fit is not None:
            out.update(amplitude=self.fit.amplitude, base=self.fit.base,
                       base_stderr=self.fit.base_stderr, log_space=self.fit.log_space)
        if self.reference is not None and self.reference.fit is not None and self.fit is not None:
            out["gate_fidelity_estimate"] = self.fit.base / self.reference.fit.base
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["depth", "seq_index", "F"])
            for m, row in zip(self.depths, self.fidelities):
                for k, f in enumerate(row):
                    w.writerow([int(m), k, repr(float(f))])


MAX_REDRAWS = 100


def _ideal_probs(picks, m, gs, u_gate, final_layer):
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1
    for k in range(m):
        psi = u_gate @ (np.kron(gs.gates[picks[k, 0]], gs.gates[picks[k, 1]]) @ psi)
    if final_layer:
        psi = np.kron(gs.gates[picks[m, 0]], gs.gates[picks[m, 1]]) @ psi
    return np.abs(psi) ** 2


def _is_uniform(p, tol=1e-9):
    return bool(np.max(np.abs(p - 1 / p.size)) < tol)


def run_xeb(depths, n_seq=20, gate=SQRT_ISWAP, channel=None, depolarizing=0.0, shots=None,
            seed=0, reference=False, final_layer=True, gate_set=None):
    """XEB over random circuits on two qubits.

    One cycle is a random gate from the 64-element set on each qubit
    followed by the two-qubit gate. Ideal probabilities always use the
    ideal ``gate``; the "experimental" evolution uses ``channel`` (a
    Lambda(|i><j|) table, e.g. from the dynamics module) when given, then
    a global depolarizing channel of strength ``depolarizing`` per cycle.
    ``shots=None`` uses exact probabilities, otherwise multinomial samples.
    ``reference=True`` also runs single-qubit-only cycles. Sequences whose
    ideal output is exactly uniform (common for single-qubit-only cycles)
    carry no XEB information and are redrawn.
    """
    depths = np.asarray(depths, dtype=int)
    if depths.size == 0 or np.any(depths < 1) or np.any(np.diff(depths) <= 0):
        raise ValueError("depths must be positive and strictly increasing")
    gs = build_gate_set() if gate_set is None else gate_set
    children = np.random.SeedSequence(seed).spawn(depths.size * n_seq + 1)
    fids = np.zeros((depths.size, n_seq))
    p_th_all, p_exp_all = [], []
    floored_any = False
    u_gate = np.asarray(gate, dtype=complex)
    for a, m in enumerate(depths):
        for s in range(n_seq):
            rng = np.random.default_rng(children[a * n_seq + s])
            for _ in range(MAX_REDRAWS):
                picks = rng.integers(0, len(gs), size=(m + int(final_layer), 2))
                if not _is_uniform(_ideal_probs(picks, m, gs, u_gate, final_layer)):
                    break
            else:
                raise DegenerateDistribution("could not draw a sequence with non-uniform output")
            psi = np.zeros(4, dtype=complex)
            psi[0] = 1
            rho = np.outer(psi, psi.conj())
            for k in range(m):
                layer = np.kron(gs.gates[picks[k, 0]], gs.gates[picks[k, 1]])
                psi = u_gate @ (layer @ psi)
                rho = layer @ rho @ layer.conj().T
                if channel is None:
                    rho = u_gate @ rho @ u_gate.conj().T
                else:
                    rho = _apply_channel(channel, rho)
                if depolarizing:
                    rho = (1 - depolarizing) * rho + depolarizing * np.trace(rho) * np.eye(4) / 4
            if final_layer:
                layer = np.kron(gs.gates[picks[m, 0]], gs.gates[picks[m, 1]])
                psi = layer @ psi
                rho = layer @ rho @ layer.conj().T
            p_th = np.abs(psi) ** 2
            p_exp = np.clip(np.real(np.diag(rho)), 0, None)
            p_exp = p_exp / p_exp.sum()
            if shots is not None:
                p_exp = rng.multinomial(shots, p_exp) / shots
            f, fl = xeb_fidelity(p_exp, p_th, return_flag=True)
            floored_any |= fl
            fids[a, s] = f
            p_th_all.append(p_th)
            p_exp_all.append(p_exp)
    if floored_any:
        warnings.warn("ideal probabilities below 1e-12 were floored", stacklevel=2)
    run = XebRun(depths, fids, p_th_all, p_exp_all, floored=floored_any)
    if depths.size >= 3:
        run.fit = fit_decay(depths, run.mean)
    if reference:
        ref_seed = int(children[-1].generate_state(1)[0])
        run.reference = run_xeb(depths, n_seq, gate=np.eye(4), channel=None,
                                depolarizing=depolarizing, shots=shots, seed=ref_seed,
                                reference=False, final_layer=final_layer, gate_set=gs)
    return run
