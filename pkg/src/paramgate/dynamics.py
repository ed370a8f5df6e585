"""Time evolution of the driven transmon star: Schrodinger and Lindblad propagation,
chevron scans, W-state generation and gate-process extraction.

The simulated Hamiltonian (rotating frame of every qubit) is

    H(t) = sum_j alpha_j/2 n_j(n_j - 1)
         + sum_j g_j (a_0 a_j^+ e^{i Delta_j t} + h.c.)
         + [env(t) sum_k Omega_k sin(nu_k t + phi_k) + delta(t)] n_0
         + sum_j xi_j n_0 n_j            (static ZZ, optional)

It conserves the total excitation number; relaxation only lowers it and
dephasing keeps it. Evolution is therefore restricted, without
approximation, to basis states with at most as many excitations as the
initial state. A W-state run over n qubits is (n+1)-dimensional whatever
the truncation.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize

from . import device as dev
from .exceptions import DimensionMismatch, IntegrationError
from .qops import LevelScheme, QuantumState, w_state
from .tomography import align_pure

RTOL = 1e-9
ATOL = 1e-11


@dataclass(frozen=True)
class FluxWaveform:
    """Sampled frequency offset (rad/s) of the common qubit, starting at t = 0."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def __call__(self, t):
        return np.interp(t, self.dt * np.arange(self.values.size), self.values)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Everything needed to build H(t).

    ``frame='lab'`` keeps the bare qubit frequencies on the diagonal and a
    static exchange; ``'rotating'`` (default) moves each qubit to its own
    frame so the exchange carries e^{i Delta_j t}. ``time_offset`` shifts
    the coupling phases, as when a pulse starts later in a sequence.
    """

    device: dev.DeviceParams
    drive: dev.DriveConfig | None = None
    frame: str = "rotating"
    include_zz: bool = False
    flux_trace: FluxWaveform | None = None
    levels: int | tuple = 3
    time_offset: float = 0.0

    def __post_init__(self):
        if self.frame not in ("rotating", "lab"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.drive is not None:
            for tone in self.drive.tones:
                if not 1 <= tone.target < self.device.n_qubits:
                    raise DimensionMismatch(f"tone target {tone.target} is not a computational qubit")
            if self.flux_trace is not None and self.drive.tones:
                nu_max = max(t.freq for t in self.drive.tones) / (2 * np.pi)
                if 1 / self.flux_trace.dt < 2 * nu_max:
                    raise ValueError("flux trace sample rate is below twice the highest drive frequency")

    @property
    def scheme(self):
        n = self.device.n_qubits
        if isinstance(self.levels, int):
            return LevelScheme.uniform(n, self.levels)
        if len(self.levels) != n:
            raise DimensionMismatch("levels must list one truncation per qubit")
        return LevelScheme(self.levels)


@dataclass
class Trajectory:
    times: np.ndarray
    populations: np.ndarray  # P(n_j = 1), shape (T, n_qubits)
    occupations: np.ndarray  # <n_j>
    states: list | None = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ns"] + [f"pop_q{j}" for j in range(self.populations.shape[1])])
            for t, row in zip(self.times, self.populations):
                w.writerow([repr(float(t * 1e9))] + [repr(float(p)) for p in row])

    def half_swap_time(self, a=0, b=1):
        """First time populations of qubits ``a`` and ``b`` cross (linear interpolation)."""
        diff = self.populations[:, a] - self.populations[:, b]
        s = np.sign(diff)
        hits = np.flatnonzero(s[:-1] * s[1:] < 0)
        if hits.size == 0:
            return None
        k = hits[0]
        t0, t1 = self.times[k], self.times[k + 1]
        return float(t0 + (t1 - t0) * diff[k] / (diff[k] - diff[k + 1]))

    def equal_sharing_time(self, qubits=None):
        """Sample time minimising the spread of the listed populations."""
        qubits = list(range(self.populations.shape[1])) if qubits is None else list(qubits)
        p = self.populations[:, qubits]
        spread = p.max(axis=1) - p.min(axis=1)
        return float(self.times[int(np.argmin(spread[1:]) + 1)])


# --- model assembly --------------------------------------------------------

class _Model:
    """H(t) and dissipators restricted to an excitation-number subspace."""

    def __init__(self, spec, noise=None, max_exc=1, offset_batch=None, open_envelope=False):
        self.spec = spec
        device = spec.device
        scheme = spec.scheme
        n = device.n_qubits
        self.scheme = scheme
        self.n = n
        occ_all = scheme.occupations()
        self.full_index = np.flatnonzero(occ_all.sum(axis=1) <= max_exc)
        occ = occ_all[self.full_index]
        self.occ = occ
        d = len(occ)
        self.d = d
        lookup = {tuple(o): k for k, o in enumerate(occ)}

        alpha = device.anharmonicities
        static = 0.5 * (occ * (occ - 1)) @ alpha
        if spec.frame == "lab":
            static = static + occ @ device.qubit_freqs
        zz = None
        if noise is not None and noise.zz is not None:
            zz = noise.zz
        elif spec.include_zz:
            zz = device.zz_strengths
        if zz is not None:
            static = static + occ[:, 0] * (occ[:, 1:] @ np.asarray(zz, dtype=float))
        self.static = static
        self.n0 = occ[:, 0].astype(float)

        # exchange a_0 a_j^+
        g = device.couplings()
        self.coupling_mats = []
        self.coupling_freqs = []
        for j in range(1, n):
            c = np.zeros((d, d), dtype=complex)
            for l, o in enumerate(occ):
                if o[0] == 0 or o[j] + 1 >= scheme.dims[j]:
                    continue
                new = list(o)
                new[0] -= 1
                new[j] += 1
                k = lookup.get(tuple(new))
                if k is not None:
                    c[k, l] = math.sqrt(o[0] * (o[j] + 1))
            self.coupling_mats.append(g[j - 1] * c)
            self.coupling_freqs.append(0.0 if spec.frame == "lab" else device.detunings[j - 1])
        self.coupling_freqs = np.array(self.coupling_freqs)

        # dissipation
        self.jumps = []
        k_diag = np.zeros(d)
        deph = np.zeros((d, d))
        if noise is not None and noise.t1 is not None:
            for j in range(n):
                rate = 1.0 / noise.t1[j]
                a = np.zeros((d, d), dtype=complex)
                for l, o in enumerate(occ):
                    if o[j] == 0:
                        continue
                    new = list(o)
                    new[j] -= 1
                    a[lookup[tuple(new)], l] = math.sqrt(o[j])
                self.jumps.append(math.sqrt(rate) * a)
                k_diag += rate * occ[:, j]
        if noise is not None and noise.tphi is not None:
            for j in range(n):
                if not np.isfinite(noise.tphi[j]):
                    continue
                gamma = 2.0 / noise.tphi[j]
                nj = occ[:, j]
                deph -= 0.5 * gamma * (nj[:, None] - nj[None, :]) ** 2
        self.k_diag = k_diag
        self.deph = deph
        self.dissipative = bool(self.jumps) or bool(np.any(deph))

        drive = spec.drive
        if drive is not None and drive.tones:
            self.amps = np.array([t.amplitude for t in drive.tones])
            self.freqs = np.array([t.freq for t in drive.tones])
            self.phases = np.array([t.phase for t in drive.tones])
        else:
            self.amps = np.zeros(0)
            self.freqs = np.zeros(0)
            self.phases = np.zeros(0)
        self.open_envelope = open_envelope
        self.offsets = None if offset_batch is None else np.asarray(offset_batch, dtype=float)

    # -- time-dependent pieces
    def envelope(self, t):
        drive = self.spec.drive
        if drive is None:
            return 0.0
        if self.open_envelope:
            if drive.ramp == 0:
                return 1.0
            return 0.5 * (1 - math.cos(math.pi * min(t / drive.ramp, 1.0)))
        return float(drive.envelope(t))

    def drive_shift(self, t):
        val = 0.0
        if self.amps.size:
            env = self.envelope(t)
            if env:
                val = env * float(np.dot(self.amps, np.sin(self.freqs * t + self.phases)))
        if self.spec.flux_trace is not None:
            val += float(self.spec.flux_trace(t))
        return val

    def coupling(self, t):
        h = np.zeros((self.d, self.d), dtype=complex)
        tt = t + self.spec.time_offset
        for c, w in zip(self.coupling_mats, self.coupling_freqs):
            h += np.exp(1j * w * tt) * c
        return h + h.conj().T

    def diag(self, t):
        """Diagonal of H (without the -iK/2 part); shape (d,) or (B, d)."""
        base = self.static + self.drive_shift(t) * self.n0
        if self.offsets is None:
            return base
        return base[None, :] + self.offsets[:, None] * self.n0[None, :]

    # -- right-hand sides
    def rhs_ket(self, t, psi):
        # psi: (M, d)
        hc = self.coupling(t)
        return -1j * (self.diag(t) * psi + psi @ hc.T)

    def rhs_rho(self, t, rho):
        # rho: (M, d, d)
        hc = self.coupling(t)
        heff = self.diag(t) - 0.5j * self.k_diag
        if heff.ndim == 1:
            left = heff[None, :, None]
            right = heff.conj()[None, None, :]
        else:
            left = heff[:, :, None]
            right = heff.conj()[:, None, :]
        out = -1j * (left * rho - rho * right + hc @ rho - rho @ hc)
        for a in self.jumps:
            out += a @ rho @ a.conj().T
        if np.any(self.deph):
            out += self.deph * rho
        return out

    # -- subspace helpers
    def qubit_block_index(self):
        """(subspace indices, qubit-register indices) of states with every n_j <= 1."""
        mask = (self.occ <= 1).all(axis=1)
        sub = np.flatnonzero(mask)
        weights = 2 ** np.arange(self.n - 1, -1, -1)
        return sub, self.occ[mask] @ weights

    def embed_ket(self, ket_full):
        return np.asarray(ket_full, dtype=complex)[self.full_index]

    def lift(self, x):
        dim = self.scheme.dim
        if x.ndim == 1:
            out = np.zeros(dim, dtype=complex)
            out[self.full_index] = x
        else:
            out = np.zeros((dim, dim), dtype=complex)
            out[np.ix_(self.full_index, self.full_index)] = x
        return out


def _rk4(fun, y0, times, max_step):
    out = np.empty((len(times), y0.size), dtype=complex)
    y = y0.copy()
    t = 0.0
    for k, target in enumerate(times):
        span = target - t
        if span > 0:
            steps = max(1, int(math.ceil(span / max_step)))
            h = span / steps
            for _ in range(steps):
                k1 = fun(t, y)
                k2 = fun(t + h / 2, y + h / 2 * k1)
                k3 = fun(t + h / 2, y + h / 2 * k2)
                k4 = fun(t + h, y + h * k3)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
        out[k] = y
    return out


def _max_rate(model):
    rates = [np.abs(model.static).max(), np.abs(model.coupling_freqs).max(initial=0.0)]
    if model.amps.size:
        rates.append(float(np.sum(model.amps)))
        rates.append(float(model.freqs.max()))
    return max(max(rates), 1.0)


def _propagate(model, y0, times, density, method="DOP853", rtol=RTOL, atol=ATOL, max_step=None):
    """Integrate a batch of kets (M, d) or densities (M, d, d); returns (T, M, ...)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing from 0")
    shape = y0.shape
    if density:
        def fun(t, y):
            return model.rhs_rho(t, y.reshape(shape)).ravel()
    else:
        def fun(t, y):
            return model.rhs_ket(t, y.reshape(shape)).ravel()
    y0 = np.ascontiguousarray(y0, dtype=complex).ravel()
    if method == "rk4":
        step = max_step if max_step is not None else 0.05 / _max_rate(model)
        out = _rk4(fun, y0, times, step)
        return out.reshape((len(times),) + shape)
    t_end = float(times[-1])
    if t_end == 0:
        return np.broadcast_to(y0, (1,) + y0.shape).reshape((1,) + shape).copy()
    kwargs = {}
    if max_step is not None:
        kwargs["max_step"] = max_step
    sol = integrate.solve_ivp(fun, (0.0, t_end), y0, method=method, t_eval=times,
                              rtol=rtol, atol=atol, **kwargs)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"integration failed: {sol.message}", time=t_fail)
    return sol.y.T.reshape((len(times),) + shape)


def _excitations_of(state):
    occ = state.scheme.occupations().sum(axis=1)
    if state.is_ket:
        w = np.abs(state.ket) ** 2
    else:
        w = np.abs(np.diag(state.density))
    support = w > 1e-14
    return int(occ[support].max()) if support.any() else 0


def _populations(model, rho_diag):
    # rho_diag: (T, d) real
    pops = np.stack([(rho_diag * (model.occ[:, j] == 1)).sum(axis=1) for j in range(model.n)], axis=1)
    occs = rho_diag @ model.occ
    return pops, occs


def _sample_offset(noise, duration, seed):
    from .errors import quasi_static_sigma

    rng = np.random.default_rng(seed)
    sigma = quasi_static_sigma(noise.flux.a_phi, duration, noise.flux.f_low, slope=noise.flux.slope)
    return float(rng.normal(0.0, sigma))


def evolve(spec, initial, t_grid, collapse=None, seed=None, store_states=False,
           method="DOP853", rtol=RTOL, atol=ATOL, max_step=None):
    """Propagate ``initial`` over ``t_grid`` (s, strictly increasing from 0).

    With ``collapse`` carrying T1/Tphi the Lindblad equation is solved with
    collapse operators sqrt(1/T1) a_j and sqrt(2/Tphi) n_j. Flux noise in
    ``collapse`` is realised once per call from ``seed``: a quasi-static
    offset, or a 1/f trace in 'trace' mode. ``method='rk4'`` selects the
    fixed-step integrator.
    """
    if initial.scheme != spec.scheme:
        raise DimensionMismatch(f"initial state scheme {initial.scheme.dims} != {spec.scheme.dims}")
    t_grid = np.asarray(t_grid, dtype=float)
    if collapse is not None and collapse.flux is not None:
        if collapse.flux.mode == "trace" and spec.flux_trace is None:
            from .errors import flux_trace

            t_end = max(float(t_grid[-1]), 1e-9)
            dt = 0.25e-9
            if spec.drive is not None and spec.drive.tones:
                nu = max(t.freq for t in spec.drive.tones) / (2 * np.pi)
                dt = min(dt, 0.25 / nu)
            f_high = min(collapse.flux.f_high, 0.5 / dt)
            trace = flux_trace(collapse.flux.a_phi, t_end + 2 * dt, dt, collapse.flux.f_low,
                               f_high=f_high, seed=seed)
            spec = replace(spec, flux_trace=FluxWaveform(dt, trace * collapse.flux.slope))
        offsets = None
        if collapse.flux.mode == "quasi-static":
            offsets = [_sample_offset(collapse, max(float(t_grid[-1]), 1e-9), seed)]
    else:
        offsets = None
    n_exc = _excitations_of(initial)
    model = _Model(spec, collapse, max_exc=n_exc, offset_batch=offsets)
    density = model.dissipative or not initial.is_ket
    if density:
        rho = initial.rho[np.ix_(model.full_index, model.full_index)]
        out = _propagate(model, rho[None], t_grid, True, method, rtol, atol, max_step)[:, 0]
        diag = np.real(np.einsum("tii->ti", out))
    else:
        psi = initial.ket[model.full_index]
        out = _propagate(model, psi[None], t_grid, False, method, rtol, atol, max_step)[:, 0]
        diag = np.abs(out) ** 2
    pops, occs = _populations(model, diag)
    states = None
    if store_states:
        if density:
            states = [QuantumState(model.scheme, density=model.lift(r), check=False) for r in out]
        else:
            states = [QuantumState(model.scheme, ket=model.lift(p), check=False) for p in out]
    return Trajectory(t_grid, pops, occs, states)


# --- effective (Bessel) model ----------------------------------------------

def effective_hamiltonian(device, drive, levels=2):
    """Time-independent exchange Hamiltonian of the resonant-drive frame.

    Each tone j contributes g_j J1(eps_j) prod_{k!=j} J0(eps_k) i e^{-i phi_j}
    a_0 a_j^+ + h.c.; the common phase exp(-i sum_k eps_k cos phi_k) on a_0
    from the frame transformation at t = 0 is included.
    """
    scheme = LevelScheme.uniform(device.n_qubits, levels) if isinstance(levels, int) else LevelScheme(levels)
    from .qops import embed, ladder_ops

    g = device.couplings()
    eps = drive.epsilons
    frame = np.exp(-1j * np.sum(eps * np.cos([t.phase for t in drive.tones])))
    a0 = embed(ladder_ops(scheme.dims[0])[0], 0, scheme).data
    h = np.zeros((scheme.dim, scheme.dim), dtype=complex)
    for k, tone in enumerate(drive.tones):
        j = tone.target
        geff = dev.effective_coupling(g[j - 1], eps, k)
        aj = embed(ladder_ops(scheme.dims[j])[0], j, scheme).data
        term = geff * frame * 1j * np.exp(-1j * tone.phase) * (a0 @ aj.conj().T)
        h += term + term.conj().T
    return h, scheme


def evolve_effective(device, drive, initial, t_grid, levels=2):
    """Exact propagation under :func:`effective_hamiltonian`; returns a Trajectory."""
    h, scheme = effective_hamiltonian(device, drive, levels)
    w, v = np.linalg.eigh(h)
    psi0 = v.conj().T @ initial.ket
    kets = np.array([v @ (np.exp(-1j * w * t) * psi0) for t in t_grid])
    occ = scheme.occupations()
    diag = np.abs(kets) ** 2
    pops = np.stack([(diag * (occ[:, j] == 1)).sum(axis=1) for j in range(scheme.n_modes)], axis=1)
    return Trajectory(np.asarray(t_grid), pops, diag @ occ,
                      [QuantumState(scheme, ket=k, check=False) for k in kets])


def effective_couplings_of(device, drive):
    """|g_eff| for each tone of ``drive``."""
    g = device.couplings()
    eps = drive.epsilons
    return np.array([abs(dev.effective_coupling(g[t.target - 1], eps, k))
                     for k, t in enumerate(drive.tones)])


# --- chevron ---------------------------------------------------------------

@dataclass
class ChevronMap:
    offsets: np.ndarray  # rad/s, added to every tone frequency
    durations: np.ndarray
    populations: np.ndarray  # (n_offsets, n_durations)
    resonance_offset: float
    depth: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["offset_MHz", "duration_ns", "population"])
            for o, row in zip(self.offsets, self.populations):
                for t, p in zip(self.durations, row):
                    w.writerow([repr(float(o / (2 * np.pi * 1e6))), repr(float(t * 1e9)),
                                repr(float(p))])


def chevron_scan(spec, freq_offsets, durations, initial, target=1, collapse=None):
    """Population of ``target`` versus tone-frequency offset and pulse length.

    Each offset is one continuous run with the drive left on; the exchange
    depth at an offset is the peak-to-peak swing of the target population.
    The resonance is the depth maximum, refined by a parabola through the
    three best neighbouring samples.
    """
    freq_offsets = np.asarray(freq_offsets, dtype=float)
    durations = np.asarray(durations, dtype=float)
    if freq_offsets.size == 0 or durations.size == 0:
        raise ValueError("chevron grids must be non-empty")
    grid = durations if durations[0] == 0 else np.concatenate([[0.0], durations])
    pops = []
    for off in freq_offsets:
        tones = tuple(replace(t, freq=t.freq + off) for t in spec.drive.tones)
        drive = replace(spec.drive, tones=tones, duration=max(grid[-1], 2 * spec.drive.ramp))
        s = replace(spec, drive=drive)
        n_exc = _excitations_of(initial)
        model = _Model(s, collapse, max_exc=n_exc, open_envelope=True)
        if model.dissipative:
            rho = initial.rho[np.ix_(model.full_index, model.full_index)]
            out = _propagate(model, rho[None], grid, True)[:, 0]
            diag = np.real(np.einsum("tii->ti", out))
        else:
            psi = initial.ket[model.full_index]
            out = _propagate(model, psi[None], grid, False)[:, 0]
            diag = np.abs(out) ** 2
        p = _populations(model, diag)[0][:, target]
        pops.append(p[-durations.size:])
    pops = np.array(pops)
    depth = pops.max(axis=1) - pops.min(axis=1)
    k = int(np.argmax(depth))
    res = freq_offsets[k]
    if 0 < k < len(freq_offsets) - 1:
        y0, y1, y2 = depth[k - 1:k + 2]
        x0, x1, x2 = freq_offsets[k - 1:k + 2]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
        if a < 0:
            res = float(np.clip(-b / (2 * a), x0, x2))
    return ChevronMap(freq_offsets, durations, pops, float(res), depth)


def swap_frequency(times, population):
    """Dominant angular frequency of a population oscillation (zero-padded FFT peak + parabola)."""
    y = np.asarray(population, dtype=float) - np.mean(population)
    dt = times[1] - times[0]
    n = 16 * len(y)
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y)), n))
    spec[0] = 0
    k = int(np.argmax(spec))
    if 0 < k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        k = k + 0.5 * (a - c) / (a - 2 * b + c)
    return 2 * np.pi * k / (n * dt)


# --- scenario machinery ----------------------------------------------------

SQRT_ISWAP = np.array([[1, 0, 0, 0],
                       [0, 1 / math.sqrt(2), 1j / math.sqrt(2), 0],
                       [0, 1j / math.sqrt(2), 1 / math.sqrt(2), 0],
                       [0, 0, 0, 1]], dtype=complex)

_S2 = 1 / math.sqrt(2)
SIX_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([_S2, _S2], dtype=complex),
    "-": np.array([_S2, -_S2], dtype=complex),
    "+i": np.array([_S2, 1j * _S2], dtype=complex),
    "-i": np.array([_S2, -1j * _S2], dtype=complex),
}


def _levels_scheme(device, levels):
    return LevelScheme.uniform(device.n_qubits, levels) if isinstance(levels, int) else LevelScheme(levels)


def _scenario_kind(n_comp, inputs):
    if inputs == "auto":
        return "basis" if n_comp == 1 else "w"
    if inputs not in ("basis", "w"):
        raise ValueError(f"unknown input set {inputs!r}")
    return inputs


class _Scenario:
    """Batched evolution of a fixed set of initial operators and its scoring."""

    def __init__(self, device, drive, noise, scenario, levels=3, inputs="auto"):
        n_comp = device.n_qubits - 1
        self.kind = "gate" if scenario == "gate" else _scenario_kind(n_comp, inputs)
        if self.kind in ("gate", "basis") and device.n_qubits != 2:
            raise DimensionMismatch("gate and basis-input scenarios need exactly two qubits")
        self.device = device
        self.drive = drive
        self.noise = noise
        self.levels = levels
        self.n = device.n_qubits
        self.max_exc = 1 if self.kind == "w" else 2

    def model(self, drive, offsets=None, open_envelope=False):
        spec = HamiltonianSpec(self.device, drive, levels=self.levels)
        noise = self.noise
        if noise is not None and noise.flux is not None:
            noise = replace(noise, flux=None)
        return _Model(spec, noise, max_exc=self.max_exc, offset_batch=offsets,
                      open_envelope=open_envelope)

    def initial(self, model):
        """Initial operators (M, d, d) and labels."""
        sub, reg = model.qubit_block_index()
        pos = {int(r): int(s) for s, r in zip(sub, reg)}
        d = model.d
        if self.kind == "w":
            rho = np.zeros((1, d, d), dtype=complex)
            k = pos[1 << (self.n - 1)]
            rho[0, k, k] = 1
            return rho, [(1 << (self.n - 1), 1 << (self.n - 1))]
        pairs = [(i, j) for i in range(4) for j in range(i, 4)]
        ops = np.zeros((len(pairs), d, d), dtype=complex)
        for m, (i, j) in enumerate(pairs):
            ops[m, pos[i], pos[j]] = 1
        if self.kind == "basis":
            pairs = [(i, i) for i in range(4)]
            ops = np.zeros((4, d, d), dtype=complex)
            for i in range(4):
                ops[i, pos[i], pos[i]] = 1
        return ops, pairs

    def run(self, times, offsets=None, open_envelope=False, drive=None):
        """Qubit-register blocks of the evolved operators, shape (T, B, M, D, D)."""
        drive = self.drive if drive is None else drive
        b = 1 if offsets is None else len(offsets)
        model = self.model(drive, None if offsets is None else np.repeat(offsets, self._m_count()),
                           open_envelope)
        ops, pairs = self.initial(model)
        m = len(ops)
        batch = np.tile(ops, (b, 1, 1))
        out = _propagate(model, batch, times, True)
        sub, reg = model.qubit_block_index()
        dq = 2**self.n
        blocks = np.zeros((len(times), b * m, dq, dq), dtype=complex)
        blocks[:, :, reg[:, None], reg[None, :]] = out[:, :, sub[:, None], sub[None, :]]
        return blocks.reshape(len(times), b, m, dq, dq), pairs

    def pairs(self):
        if self.kind == "w":
            top = 1 << (self.n - 1)
            return [(top, top)]
        if self.kind == "basis":
            return [(i, i) for i in range(4)]
        return [(i, j) for i in range(4) for j in range(i, 4)]

    def _m_count(self):
        return {"w": 1, "basis": 4, "gate": 10}[self.kind]


def _channel_outputs(blocks, pairs):
    """Full 4x4 table Lambda(|i><j|) from the upper-triangle runs; (..., 4, 4, 4, 4)."""
    shape = blocks.shape[:-3]
    out = np.zeros(shape + (4, 4, 4, 4), dtype=complex)
    for m, (i, j) in enumerate(pairs):
        out[..., i, j, :, :] = blocks[..., m, :, :]
        if i != j:
            out[..., j, i, :, :] = np.conj(np.swapaxes(blocks[..., m, :, :], -1, -2))
    return out


def _zdiag(angles):
    return np.kron(np.array([1, np.exp(1j * angles[0])]), np.array([1, np.exp(1j * angles[1])]))


def _gate_overlap_terms(lam, u):
    """T[i, j] = <i| U^+ Lambda(|i><j|) U |j>, summed gives d^2 F_pro."""
    return np.einsum("ai,ijab,bj->ij", u.conj(), lam, u)


def _aligned_target(u, angles):
    # target Z_post U Z_pre with post angles first
    return _zdiag(angles[:2])[:, None] * u * _zdiag(angles[2:])[None, :]


def gate_fidelities(lam, target=SQRT_ISWAP, angles=None):
    """Average gate fidelity of the channel table ``lam`` (4,4,4,4) against ``target``.

    Kraus form F = (sum_k Tr(E_k^+ E_k) + sum_k |Tr(U^+ E_k)|^2) / (d(d+1)),
    with sum_k |Tr(U^+ E_k)|^2 = sum_ij <i|U^+ Lambda(|i><j|) U|j> and
    sum_k Tr(E_k^+ E_k) = Tr Lambda(I). Leakage makes Lambda non trace
    preserving and lowers both terms. Local Z rotations before and after
    the target are optimised unless ``angles`` is given.
    """
    d = 4
    trace_id = float(np.real(sum(np.trace(lam[i, i]) for i in range(d))))

    def f_pro(a):
        u = _aligned_target(target, a)
        return float(np.real(_gate_overlap_terms(lam, u).sum())) / d**2

    if angles is None:
        best = None
        for start in itertools.product((0.0, np.pi / 2, np.pi, -np.pi / 2), repeat=2):
            x0 = np.array([start[0], start[1], 0.0, 0.0])
            res = optimize.minimize(lambda a: -f_pro(a), x0, method="Nelder-Mead",
                                    options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000})
            if best is None or res.fun < best.fun:
                best = res
        angles = best.x
    fp = f_pro(angles)
    favg = (d * d * fp + trace_id) / (d * (d + 1))
    return favg, fp, np.asarray(angles)


def product_state_fidelities(lam, target, angles):
    """sqrt-convention fidelity of each of the 36 product inputs; dict label -> F."""
    u = _aligned_target(target, angles)
    out = {}
    for (la, a), (lb, b) in itertools.product(SIX_STATES.items(), repeat=2):
        psi = np.kron(a, b)
        rho = np.einsum("i,j,ijab->ab", psi, psi.conj(), lam)
        phi = u @ psi
        out[(la, lb)] = math.sqrt(max(float(np.real(np.vdot(phi, rho @ phi))), 0.0))
    return out


def _w_target(n):
    return w_state(n).ket


def _score_w(rho_q, n):
    """Aligned sqrt fidelity of a qubit-register block against W_n."""
    _, angles, f = align_pure(rho_q, _w_target(n))
    return f, angles


def _score_basis(blocks, angles=None):
    """Mean sqrt fidelity of the four basis inputs against sqrt(iSWAP) outputs.

    ``blocks`` (4, 4, 4); only the two post-gate Z angles matter here.
    """
    targets = [SQRT_ISWAP[:, i] for i in range(4)]

    def mean_f(a):
        z = _zdiag(a)
        tot = 0.0
        for rho, t in zip(blocks, targets):
            phi = z * t
            tot += math.sqrt(max(float(np.real(np.vdot(phi, rho @ phi))), 0.0))
        return tot / 4

    if angles is None:
        best = None
        for s in (0.0, np.pi / 2, np.pi, -np.pi / 2):
            res = optimize.minimize(lambda a: -mean_f(a), np.array([s, 0.0]), method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-14})
            if best is None or res.fun < best.fun:
                best = res
        angles = best.x
    return mean_f(angles), angles


def _scenario_score(scn, blocks, pairs, angles=None):
    """Fidelity (sqrt convention for states, average gate fidelity for gates)."""
    if scn.kind == "w":
        if angles is None:
            return _score_w(blocks[0], scn.n)
        z = np.ones(1)
        for a in angles:
            z = np.kron(z, np.array([1, np.exp(1j * a)]))
        phi = z.conj() * _w_target(scn.n)
        return math.sqrt(max(float(np.real(np.vdot(phi, blocks[0] @ phi))), 0.0)), angles
    if scn.kind == "basis":
        return _score_basis(blocks, angles)
    lam = _channel_outputs(blocks, pairs)
    favg, _, ang = gate_fidelities(lam, angles=angles)
    return favg, ang


def analytic_time(device, drive, kind):
    geff = effective_couplings_of(device, drive)
    if kind == "w":
        return dev.w_state_time(float(np.mean(geff)), device.n_qubits - 1)
    return dev.gate_time(float(np.mean(geff)), 0, "entangler")


def optimal_gate_time(device, drive, scenario, noise, n_comp=None, levels=3, window=0.05,
                      points=21, inputs="auto"):
    """Gate time maximising the scenario fidelity within +-window of the analytic time.

    Scores are taken along one continuous run with the drive left on; the
    best sample is refined by a parabola through its neighbours.
    """
    scn = _Scenario(device, drive, noise, scenario, levels, inputs)
    t0 = analytic_time(device, drive, scn.kind)
    times = t0 * np.linspace(1 - window, 1 + window, points)
    long_drive = drive.with_duration(max(times[-1], 2 * drive.ramp))
    blocks, pairs = scn.run(np.concatenate([[0.0], times]), open_envelope=True, drive=long_drive)
    scores = np.array([_scenario_score(scn, blocks[k + 1, 0], pairs)[0] for k in range(points)])
    k = int(np.argmax(scores))
    t_best = times[k]
    if 0 < k < points - 1:
        y0, y1, y2 = scores[k - 1:k + 2]
        h = times[1] - times[0]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            t_best = times[k] + 0.5 * h * (y0 - y2) / denom
    return float(t_best)


CHEB_NODES = 11


def _chebyshev_nodes(lo, hi, n):
    k = np.arange(n)
    return 0.5 * (lo + hi) - 0.5 * (hi - lo) * np.cos(np.pi * k / (n - 1))


def _barycentric(nodes, values, x):
    """Interpolate ``values`` (n, ...) given at Chebyshev extrema ``nodes`` onto ``x``."""
    n = len(nodes)
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    diff = x[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, rtol=0, atol=1e-300)
    diff = np.where(exact, 1.0, diff)
    c = w[None, :] / diff
    c = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), c)
    c = c / c.sum(axis=1, keepdims=True)
    return np.tensordot(c, values, axes=(1, 0))


def offset_response(scn, t_gate, offsets, drive, nodes=CHEB_NODES):
    """Register blocks at ``t_gate`` for every quasi-static offset, (B, M, D, D).

    The final state is an entire function of the offset; it is computed
    exactly at Chebyshev nodes spanning the sampled range and evaluated at
    each sample through the barycentric interpolant. Small sample sets are
    propagated directly.
    """
    offsets = np.asarray(offsets, dtype=float)
    lo, hi = offsets.min(), offsets.max()
    if len(offsets) <= nodes or hi - lo == 0:
        out, _ = scn.run(np.array([0.0, t_gate]), offsets=offsets, drive=drive)
        return out[1]
    grid = _chebyshev_nodes(lo, hi, nodes)
    at_nodes, _ = scn.run(np.array([0.0, t_gate]), offsets=grid, drive=drive)
    return _barycentric(grid, at_nodes[1], offsets)


def _evaluate(device, drive, t_gate, noise, scenario, levels, offsets, inputs="auto"):
    scn = _Scenario(device, drive, noise, scenario, levels, inputs)
    drive_t = drive.with_duration(t_gate)
    if offsets is None or len(offsets) == 0:
        blocks, pairs = scn.run(np.array([0.0, t_gate]), drive=drive_t)
        f, _ = _scenario_score(scn, blocks[1, 0], pairs)
        return f, 0.0
    pairs = scn.pairs()
    mc = offset_response(scn, t_gate, offsets, drive_t)  # (B, M, D, D)
    mean_blocks = mc.mean(axis=0)
    f, angles = _scenario_score(scn, mean_blocks, pairs)
    per = np.array([_scenario_score(scn, blk, pairs, angles)[0] for blk in mc])
    if scn.kind == "gate":
        # average gate fidelity is linear in the channel
        stderr = per.std(ddof=1) / math.sqrt(len(per))
    else:
        # sqrt fidelity of the averaged state: delta method on the squared values
        stderr = (per**2).std(ddof=1) / math.sqrt(len(per)) / (2 * max(f, 1e-12))
    return f, float(stderr)


def state_scenario_fidelity(device, drive, t_gate, noise, n_comp=None, levels=3, offsets=None,
                            inputs="auto"):
    """(fidelity, Monte-Carlo standard error) of the state-preparation scenario.

    Two qubits: mean over the basis inputs {|0>,|1>}^2 against the ideal
    sqrt(iSWAP) outputs. More qubits: W state over all qubits from |10...0>.
    Quasi-static ``offsets`` (rad/s) on the common qubit are averaged at the
    density-matrix level before virtual-Z alignment and scoring.
    """
    return _evaluate(device, drive, t_gate, noise, "state", levels, offsets, inputs)


def gate_scenario_fidelity(device, drive, t_gate, noise, n_comp=None, levels=3, offsets=None):
    """(average gate fidelity vs sqrt(iSWAP), Monte-Carlo standard error)."""
    return _evaluate(device, drive, t_gate, noise, "gate", levels, offsets)


# --- public W-state and gate helpers ---------------------------------------

@dataclass
class WStateResult:
    state: QuantumState
    fidelity: float
    drive: dev.DriveConfig
    angles: np.ndarray
    gate_time: float
    leakage: float = 0.0


def generate_w_state(device, n, noise=None, seed=None, levels=3, g_target=None, search=True,
                     window=0.05, points=21, ramp=2e-9):
    """Calibrate equal couplings, evolve |1 0...0> and score against W_{n+1}.

    ``n`` counts the computational qubits; the W state spans the common
    qubit and the first ``n`` computational qubits. Flux noise in ``noise``
    is realised as one quasi-static offset drawn from ``seed``.
    """
    if n < 1:
        raise ValueError("need at least one computational qubit")
    if device.n_qubits < n + 1:
        raise DimensionMismatch(f"device has {device.n_qubits} qubits, need {n + 1}")
    sub = device.subset(list(range(1, n + 1)))
    targets = list(range(1, n + 1))
    g = np.abs(sub.couplings())
    if g_target is None:
        g_target = dev.max_equal_coupling(g)
    eps = dev.calibrate_amplitudes(sub, targets, g_target)
    t0 = dev.w_state_time(g_target, n)
    drive = dev.drive_from_epsilons(sub, targets, eps, max(t0, 4 * ramp), ramp=ramp)
    det_noise = None if noise is None else replace(noise, flux=None)
    t_gate = t0
    if search:
        t_gate = optimal_gate_time(sub, drive, "state", det_noise, n, levels, window, points,
                                   inputs="w")
    drive = drive.with_duration(t_gate)
    offsets = None
    if noise is not None and noise.flux is not None:
        offsets = [_sample_offset(noise, t_gate, seed)]
    scn = _Scenario(sub, drive, det_noise, "state", levels, "w")
    model = scn.model(drive, offsets)
    rho0, _ = scn.initial(model)
    out = _propagate(model, rho0, np.array([0.0, t_gate]), True)[1, 0]
    sub_idx, reg = model.qubit_block_index()
    dq = 2 ** sub.n_qubits
    block = np.zeros((dq, dq), dtype=complex)
    block[np.ix_(reg, reg)] = out[np.ix_(sub_idx, sub_idx)]
    f, angles = _score_w(block, sub.n_qubits)
    leakage = 1.0 - float(np.real(np.trace(block)))
    full = model.lift(out)
    state = QuantumState(model.scheme, density=0.5 * (full + full.conj().T), check=False)
    return WStateResult(state, f, drive, angles, t_gate, leakage)


@dataclass
class GateProcessResult:
    channel: np.ndarray  # Lambda(|i><j|) on the two-qubit register, (4, 4, 4, 4)
    average_fidelity: float
    process_fidelity: float
    angles: np.ndarray
    state_fidelities: dict = field(default_factory=dict)
    leakage: float = 0.0

    @property
    def mean_state_fidelity(self):
        return float(np.mean(list(self.state_fidelities.values())))

    def subset_mean(self, labels):
        vals = [f for (a, b), f in self.state_fidelities.items() if a in labels and b in labels]
        return float(np.mean(vals))

    def unitary(self):
        """Closest unitary: top Kraus operator of the channel (valid when nearly unitary)."""
        from .errors import choi_to_kraus

        choi = np.einsum("ijab->iajb", self.channel).reshape(16, 16)
        kraus = choi_to_kraus(choi, 4)
        return kraus[0]


def gate_process(device, drive, t_gate, noise=None, levels=3, offsets=None):
    """Two-qubit channel at ``t_gate`` scored against sqrt(iSWAP) up to local Z.

    Reports the Kraus-formula average gate fidelity and the state fidelities
    of the 36 product inputs {0,1,+,-,+i,-i}^2 under the same alignment.
    ``offsets`` (rad/s) average the channel over quasi-static flux offsets.
    """
    if device.n_qubits != 2:
        raise DimensionMismatch("gate_process needs a two-qubit device")
    det_noise = None if noise is None else replace(noise, flux=None)
    scn = _Scenario(device, drive, det_noise, "gate", levels)
    drive_t = drive.with_duration(t_gate)
    if offsets is None:
        blocks, pairs = scn.run(np.array([0.0, t_gate]), drive=drive_t)
        blocks = blocks[1]
    else:
        pairs = scn.pairs()
        blocks = offset_response(scn, t_gate, offsets, drive_t)
    lam = _channel_outputs(blocks, pairs).mean(axis=0)
    favg, fpro, angles = gate_fidelities(lam)
    states = product_state_fidelities(lam, SQRT_ISWAP, angles)
    leak = 1.0 - float(np.real(sum(np.trace(lam[i, i]) for i in range(4)))) / 4
    return GateProcessResult(lam, favg, fpro, angles, states, leak)


def prepare_w_state(device, drive, t_gate, noise=None, levels=3, offsets=None):
    """Evolve |1 0...0> under ``drive`` for ``t_gate`` and return the full state.

    The density matrix lives on the transmon levels (leakage included) and
    is averaged over the quasi-static ``offsets`` when given. Flux noise in
    ``noise`` is otherwise ignored.
    """
    det_noise = None if noise is None else replace(noise, flux=None)
    scn = _Scenario(device, drive, det_noise, "state", levels, "w")
    drive_t = drive.with_duration(t_gate)
    model = scn.model(drive_t, None if offsets is None else np.asarray(offsets, dtype=float))
    rho0, _ = scn.initial(model)
    b = 1 if offsets is None else len(offsets)
    out = _propagate(model, np.tile(rho0, (b, 1, 1)), np.array([0.0, t_gate]), True)[1]
    full = model.lift(out.mean(axis=0))
    return QuantumState(model.scheme, density=0.5 * (full + full.conj().T), check=False)
