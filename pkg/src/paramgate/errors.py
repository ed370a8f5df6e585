"""Noise channels and error-budget analytics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate

from .exceptions import CompletenessError, NyquistError

DECOHERENCE_PREFACTOR = {2: 2 / 5, 3: 4 / 9, 4: 8 / 17}
F_LOW_DEFAULT = 1e-4


@dataclass(frozen=True)
class FluxNoise:
    """1/f flux noise on the common qubit.

    ``amplitude`` is sqrt(A_Phi) in flux quanta; ``slope`` is |d omega/d Phi|
    in rad/s per flux quantum.
    """

    amplitude: float
    slope: float
    f_low: float = F_LOW_DEFAULT
    mode: str = "quasi-static"
    f_high: float = 1e9

    def __post_init__(self):
        if self.f_low <= 0:
            raise ValueError("f_low must be positive")
        if self.mode not in ("quasi-static", "trace"):
            raise ValueError(f"unknown flux-noise mode {self.mode!r}")

    @property
    def a_phi(self):
        return self.amplitude**2


@dataclass(frozen=True)
class NoiseModel:
    """Noise channels switched on for a simulation.

    ``t1`` / ``tphi`` of ``None`` disable relaxation / dephasing; ``zz`` of
    ``None`` disables the static ZZ terms; ``flux`` of ``None`` disables flux
    noise. Nothing else is added implicitly.
    """

    t1: np.ndarray | None = None
    tphi: np.ndarray | None = None
    zz: np.ndarray | None = None
    flux: FluxNoise | None = None

    def __post_init__(self):
        for name in ("t1", "tphi", "zz"):
            v = getattr(self, name)
            if v is not None:
                v = np.atleast_1d(np.asarray(v, dtype=float)).copy()
                v.setflags(write=False)
                object.__setattr__(self, name, v)
        for name in ("t1", "tphi"):
            v = getattr(self, name)
            if v is not None and np.any(v <= 0):
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_device(cls, device, decoherence=True, zz=True, flux=True, f_low=F_LOW_DEFAULT):
        flux_model = None
        if flux and device.flux_noise_amp > 0 and device.flux_slope > 0:
            flux_model = FluxNoise(device.flux_noise_amp, device.flux_slope, f_low=f_low)
        return cls(
            t1=device.t1 if decoherence else None,
            tphi=device.tphi if decoherence else None,
            zz=device.zz_strengths if zz else None,
            flux=flux_model,
        )

    @property
    def has_decoherence(self):
        return self.t1 is not None or self.tphi is not None

    def without(self, channel):
        """Copy with one channel ('decoh', 'zz' or 'flux') switched off."""
        if channel == "decoh":
            return replace(self, t1=None, tphi=None)
        if channel == "zz":
            return replace(self, zz=None)
        if channel == "flux":
            return replace(self, flux=None)
        raise ValueError(f"unknown channel {channel!r}")


# --- closed-form decoherence --------------------------------------------------

def analytic_decoherence_infidelity(n_qubits, t_gate, t1, tphi):
    """alpha * t_gate * sum_q (1/T1_q + 1/Tphi_q), alpha = 2/5, 4/9, 8/17."""
    if n_qubits not in DECOHERENCE_PREFACTOR:
        raise ValueError(
            f"no tabulated prefactor for {n_qubits} qubits; "
            "build the channel and use kraus_average_fidelity instead")
    if t_gate < 0:
        raise ValueError("t_gate must be >= 0")
    t1 = np.asarray(t1, dtype=float)[:n_qubits]
    tphi = np.asarray(tphi, dtype=float)[:n_qubits]
    return DECOHERENCE_PREFACTOR[n_qubits] * t_gate * float(np.sum(1 / t1 + 1 / tphi))


def prefactor(d):
    """First-order infidelity prefactor d / (2 (d + 1)) of a single-qubit channel in dimension d."""
    return d / (2 * (d + 1))


def kraus_average_fidelity(kraus_ops, d=None, check=True, tol=1e-8):
    """Average fidelity (sum_k Tr(E_k^+ E_k) + |Tr E_k|^2) / (d (d + 1)).

    For trace-preserving channels this is (d + sum_k |Tr E_k|^2) / (d (d + 1)).
    Set ``check=False`` for trace-decreasing (leaky) channels.
    """
    ops = [np.asarray(getattr(k, "data", k), dtype=complex) for k in kraus_ops]
    d = ops[0].shape[0] if d is None else d
    gram = sum(k.conj().T @ k for k in ops)
    if check and not np.allclose(gram, np.eye(d), atol=tol, rtol=0):
        raise CompletenessError("Kraus operators do not sum to the identity")
    tr_gram = float(np.trace(gram).real)
    return (tr_gram + sum(abs(np.trace(k)) ** 2 for k in ops)) / (d * (d + 1))


def amplitude_damping_kraus(p1):
    return [np.array([[1, 0], [0, math.sqrt(1 - p1)]], dtype=complex),
            np.array([[0, math.sqrt(p1)], [0, 0]], dtype=complex)]


def phase_damping_kraus(pphi):
    return [math.sqrt(1 - pphi) * np.eye(2, dtype=complex),
            math.sqrt(pphi) * np.diag([1, -1]).astype(complex)]


def damping_kraus(p1, pphi):
    """Single-qubit relaxation followed by dephasing, as four composed Kraus operators."""
    for name, p in (("p1", p1), ("pphi", pphi)):
        if not 0 <= p <= 1:
            raise ValueError(f"{name} = {p} outside [0, 1]")
    return [b @ a for a in amplitude_damping_kraus(p1) for b in phase_damping_kraus(pphi)]


def damping_probabilities(t, t1, tphi):
    """(p1, pphi) = (1 - exp(-t/T1), (1 - exp(-t/Tphi)) / 2)."""
    p1 = 0.0 if not np.isfinite(t1) else 1 - math.exp(-t / t1)
    pphi = 0.0 if not np.isfinite(tphi) else 0.5 * (1 - math.exp(-t / tphi))
    return p1, pphi


def embed_kraus(kraus, qubit, n_qubits):
    """Single-qubit Kraus operators acting on ``qubit`` of an n-qubit register."""
    out = []
    for k in kraus:
        factors = [np.eye(2, dtype=complex)] * n_qubits
        factors[qubit] = k
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        out.append(op)
    return out


def compose_channels(first, second):
    """Kraus set of ``second`` applied after ``first``."""
    return [b @ a for a in first for b in second]


def register_decoherence_kraus(t, t1, tphi):
    """Independent relaxation + dephasing on every qubit of a register."""
    n = len(t1)
    ops = [np.eye(2**n, dtype=complex)]
    for q in range(n):
        p1, pphi = damping_probabilities(t, t1[q], tphi[q])
        ops = compose_channels(ops, embed_kraus(damping_kraus(p1, pphi), q, n))
    return ops


def kraus_to_choi(kraus):
    d = kraus[0].shape[0]
    choi = np.zeros((d * d, d * d), dtype=complex)
    for k in kraus:
        v = k.reshape(-1, order="F")
        choi += np.outer(v, v.conj())
    return choi


def choi_to_kraus(choi, d_in, d_out=None, tol=1e-12):
    d_out = d_in if d_out is None else d_out
    w, v = np.linalg.eigh(0.5 * (choi + choi.conj().T))
    ops = []
    # largest weight first
    for val, vec in zip(w[::-1], v.T[::-1]):
        if val > tol:
            ops.append(math.sqrt(val) * vec.reshape(d_out, d_in, order="F"))
    return ops


# --- flux noise --------------------------------------------------------------

def quasi_static_sigma(a_phi, t_gate, f_low=F_LOW_DEFAULT, slope=None):
    """Standard deviation of the quasi-static flux offset.

    sigma^2 = int_{f_low}^{1/t_gate} A_Phi / f df = A_Phi ln(1 / (t_gate f_low)).
    Returns flux units, or rad/s when ``slope`` is given.
    """
    f_high = 1.0 / t_gate
    if f_high <= f_low:
        raise ValueError("1/t_gate must exceed f_low")
    sigma = math.sqrt(a_phi * math.log(f_high / f_low))
    return sigma if slope is None else sigma * abs(slope)


def quasi_static_sigma_quadrature(a_phi, t_gate, f_low=F_LOW_DEFAULT):
    """The same variance by numerical quadrature of the PSD (independent check)."""
    # substitute u = ln f so the integrand is flat
    val, _ = integrate.quad(lambda u: a_phi, math.log(f_low), math.log(1 / t_gate),
                            epsabs=0, epsrel=1e-13)
    return math.sqrt(val)


def flux_trace(a_phi, duration, dt, f_low=F_LOW_DEFAULT, f_high=None, seed=None):
    """Random waveform with one-sided PSD A_Phi / f between f_low and f_high.

    Spectral shaping of complex Gaussian noise in the Fourier domain.
    Bins below max(f_low, 1/duration) are empty.
    """
    nyquist = 0.5 / dt
    if f_high is None:
        f_high = min(1e9, nyquist)
    if f_high > nyquist * (1 + 1e-12):
        raise NyquistError(f"f_high {f_high:g} Hz above Nyquist {nyquist:g} Hz")
    n = int(round(duration / dt))
    if n < 2:
        raise ValueError("duration must span at least two samples")
    if a_phi == 0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    freqs = np.fft.rfftfreq(n, dt)
    psd = np.zeros_like(freqs)
    band = (freqs >= f_low) & (freqs <= f_high) & (freqs > 0)
    psd[band] = a_phi / freqs[band]
    # E|X_k|^2 = S(f) N / (2 dt) reproduces the one-sided periodogram 2 dt |X_k|^2 / N
    scale = np.sqrt(psd * n / (2 * dt))
    spec = scale * (rng.normal(size=freqs.size) + 1j * rng.normal(size=freqs.size)) / np.sqrt(2)
    if n % 2 == 0:
        spec[-1] = spec[-1].real * np.sqrt(2)
    return np.fft.irfft(spec, n=n)


def periodogram(x, dt):
    """One-sided periodogram (frequencies, PSD)."""
    n = len(x)
    spec = np.fft.rfft(x)
    psd = 2 * dt * np.abs(spec) ** 2 / n
    return np.fft.rfftfreq(n, dt), psd


def flux_amplitude_to_echo_rate(amplitude, slope):
    """Gamma_phi^E = sqrt(ln 2) |d omega / d Phi| sqrt(A_Phi)."""
    return math.sqrt(math.log(2)) * abs(slope) * amplitude


def echo_to_flux_amplitude(gamma_phi_e, slope):
    """sqrt(A_Phi) from the Gaussian echo-decay rate."""
    if slope == 0:
        raise ValueError("zero flux slope (sweet spot): flux noise amplitude is unextractable")
    return gamma_phi_e / (math.sqrt(math.log(2)) * abs(slope))


# --- error budget ------------------------------------------------------------

@dataclass
class ErrorBudget:
    total_fidelity: float
    eps_decoh: float
    eps_zz: float
    eps_flux: float
    method: str
    eps_flux_stderr: float = 0.0
    gate_time: float = 0.0
    convention: str = "sqrt"
    fidelities: dict = field(default_factory=dict)
    label: str = ""

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def table_row(self):
        return (f"{self.label:<24s} {100 * self.total_fidelity:8.2f}% {100 * self.eps_decoh:8.2f}% "
                f"{self.eps_zz:10.2e} {self.eps_flux:10.2e}")


def format_budget_table(budgets):
    header = f"{'Device':<24s} {'F_sim':>9s} {'e_decoh':>9s} {'e_ZZ':>10s} {'e_flux':>10s}"
    return "\n".join([header, "-" * len(header)] + [b.table_row() for b in budgets])


def error_budget(device, drive, scenario="state", mc_realizations=1000, seed=0,
                 n_comp=None, levels=3, search_window=0.05, search_points=21, label="",
                 inputs="auto", t_gate=None):
    """Per-channel infidelities by switching channels off one at a time.

    ``scenario`` is 'state' (W-state / two-qubit QST fidelity) or 'gate'
    (average gate fidelity against sqrt(iSWAP)). For states, ``inputs``
    picks the two-qubit basis-input average ('basis'), the W state from
    |10...0> ('w'), or 'auto' (basis for two qubits, W otherwise). Flux
    noise enters as Gaussian quasi-static offsets on the common qubit, one
    per realization. ``t_gate`` skips the gate-time search.
    """
    from . import dynamics

    full = NoiseModel.from_device(device)
    if n_comp is None:
        n_comp = len(drive.tones)
    rng = np.random.default_rng(seed)

    if scenario == "state":
        def evaluate(*args, **kw):
            return dynamics.state_scenario_fidelity(*args, inputs=inputs, **kw)
    elif scenario == "gate":
        evaluate = dynamics.gate_scenario_fidelity
    else:
        raise ValueError(f"unknown scenario {scenario!r}")

    # gate time from the deterministic channels, then held fixed
    if t_gate is None:
        t_gate = dynamics.optimal_gate_time(device, drive, scenario, full.without("flux"), n_comp,
                                            levels=levels, window=search_window,
                                            points=search_points, inputs=inputs)
    offsets = None
    if full.flux is not None and mc_realizations > 0:
        sigma = quasi_static_sigma(full.flux.a_phi, t_gate, full.flux.f_low, slope=full.flux.slope)
        offsets = rng.normal(0.0, sigma, size=mc_realizations)

    def run(noise):
        return evaluate(device, drive, t_gate, noise, n_comp, levels=levels,
                        offsets=offsets if noise.flux is not None else None)

    f_all, err_all = run(full)
    f_no_decoh, _ = run(full.without("decoh"))
    f_no_zz, _ = run(full.without("zz"))
    f_no_flux, _ = run(full.without("flux"))
    return ErrorBudget(
        total_fidelity=f_all,
        eps_decoh=f_no_decoh - f_all,
        eps_zz=f_no_zz - f_all,
        eps_flux=f_no_flux - f_all,
        eps_flux_stderr=err_all,
        method=scenario,
        gate_time=t_gate,
        fidelities={"all": f_all, "no_decoh": f_no_decoh, "no_zz": f_no_zz,
                    "no_flux": f_no_flux},
        label=label,
    )
