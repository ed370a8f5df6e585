"""Device parameters and closed-form coupling / timing formulas.

All frequencies are angular (rad/s) internally. Use :func:`mhz` and
:func:`ghz` to convert ordinary frequencies at the boundary.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, special

from .exceptions import InfeasibleTarget, SingularityError

TWO_PI = 2 * np.pi
J1_PEAK_ARG = 1.8411837813406593
J1_PEAK = 0.5818652242815

DISPERSIVE_WARN_RATIO = 0.15


def mhz(f):
    return TWO_PI * 1e6 * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * 1e6 * float(f)


def ghz(f):
    return TWO_PI * 1e9 * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * 1e9 * float(f)


def to_mhz(w):
    return np.asarray(w) / (TWO_PI * 1e6) if np.ndim(w) else float(w) / (TWO_PI * 1e6)


# --- Bessel functions -------------------------------------------------------

def bessel_j(n, x):
    """Bessel function of the first kind J_n(x) for integer ``n``."""
    out = special.jv(int(n), x)
    return float(out) if np.ndim(out) == 0 else out


def inverse_j1(y):
    """Smallest ``eps >= 0`` with J_1(eps) = y, for 0 <= y <= J1 peak."""
    if y < 0 or y > J1_PEAK + 1e-15:
        raise ValueError(f"J1 cannot reach {y}")
    if y == 0:
        return 0.0
    if y >= J1_PEAK:
        return J1_PEAK_ARG
    return optimize.brentq(lambda e: bessel_j(1, e) - y, 0.0, J1_PEAK_ARG, xtol=1e-15, rtol=1e-15)


# --- parameter records -----------------------------------------------------

@dataclass(frozen=True)
class DeviceParams:
    """Transmon ring parameters. Index 0 is the common (flux-tunable) qubit.

    ``zz_strengths`` has one entry per computational qubit (coupling to
    qubit 0). ``flux_slope`` is |d omega_0 / d Phi| in rad/s per flux quantum.
    """

    qubit_freqs: np.ndarray
    anharmonicities: np.ndarray
    bus_freq: float
    qubit_bus_couplings: np.ndarray
    t1: np.ndarray
    t2echo: np.ndarray
    zz_strengths: np.ndarray
    flux_noise_amp: float = 0.0
    flux_slope: float = 0.0
    sweet_spot_freq: float | None = None
    t_phi: np.ndarray | None = None

    def __post_init__(self):
        for name in ("qubit_freqs", "anharmonicities", "qubit_bus_couplings", "t1", "t2echo",
                     "zz_strengths"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.qubit_freqs.size
        for name in ("anharmonicities", "qubit_bus_couplings", "t1", "t2echo"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} needs {n} entries")
        if self.zz_strengths.size != n - 1:
            raise ValueError(f"zz_strengths needs {n - 1} entries (one per computational qubit)")
        if np.any(self.t1 <= 0) or np.any(self.t2echo <= 0):
            raise ValueError("coherence times must be positive")
        if np.any(self.t2echo > 2 * self.t1 * (1 + 1e-6)):
            raise ValueError("T2echo exceeds 2*T1")
        if self.t_phi is not None:
            tphi = np.atleast_1d(np.asarray(self.t_phi, dtype=float)).copy()
            tphi.setflags(write=False)
            object.__setattr__(self, "t_phi", tphi)
        ratio = np.abs(self.qubit_bus_couplings) / np.abs(self.qubit_freqs - self.bus_freq)
        if np.any(ratio >= DISPERSIVE_WARN_RATIO):
            warnings.warn(f"dispersive condition weak: h/|Delta| = {ratio.max():.3f}",
                          stacklevel=2)

    @property
    def n_qubits(self):
        return self.qubit_freqs.size

    @property
    def tphi(self):
        """Pure-dephasing times, 1/T_phi = 1/T2echo - 1/(2 T1), unless given explicitly."""
        if self.t_phi is not None:
            return self.t_phi
        rate = 1.0 / self.t2echo - 0.5 / self.t1
        with np.errstate(divide="ignore"):
            return np.where(rate > 0, 1.0 / np.maximum(rate, 1e-300), np.inf)

    @property
    def detunings(self):
        """Delta_j = omega_j - omega_0 for the computational qubits."""
        return self.qubit_freqs[1:] - self.qubit_freqs[0]

    def couplings(self):
        """Bus-mediated exchange couplings g_j between qubit 0 and qubit j >= 1."""
        h = self.qubit_bus_couplings
        d = self.qubit_freqs - self.bus_freq
        return np.array([bus_mediated_coupling(h[0], h[j], d[0], d[j])
                         for j in range(1, self.n_qubits)])

    def subset(self, qubits):
        """Restrict to qubit 0 plus the listed computational qubits (order kept)."""
        qubits = [0] + [q for q in qubits if q != 0]
        zz = [self.zz_strengths[q - 1] for q in qubits[1:]]
        return replace(
            self,
            qubit_freqs=self.qubit_freqs[qubits],
            anharmonicities=self.anharmonicities[qubits],
            qubit_bus_couplings=self.qubit_bus_couplings[qubits],
            t1=self.t1[qubits],
            t2echo=self.t2echo[qubits],
            zz_strengths=np.array(zz),
            t_phi=None if self.t_phi is None else self.t_phi[qubits],
        )


@dataclass(frozen=True)
class Tone:
    target: int
    amplitude: float
    freq: float
    phase: float = 0.0

    @property
    def epsilon(self):
        return self.amplitude / self.freq


@dataclass(frozen=True)
class DriveConfig:
    """Parametric flux-modulation tones applied to the common qubit.

    ``ramp`` is the cosine rise/fall time of the square envelope.
    """

    tones: tuple[Tone, ...]
    duration: float
    ramp: float = 2e-9

    def __post_init__(self):
        tones = tuple(self.tones)
        object.__setattr__(self, "tones", tones)
        targets = [t.target for t in tones]
        if len(set(targets)) != len(targets):
            raise ValueError(f"tone targets must be distinct, got {targets}")
        if any(t.amplitude < 0 for t in tones):
            raise ValueError("tone amplitudes must be non-negative")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.ramp < 0 or 2 * self.ramp > self.duration:
            raise ValueError("ramp must fit twice inside the duration")

    @property
    def epsilons(self):
        return np.array([t.epsilon for t in self.tones])

    def with_duration(self, duration):
        return replace(self, duration=duration)

    def envelope(self, t):
        """Square envelope with cosine ramps, in [0, 1]."""
        t = np.asarray(t, dtype=float)
        if self.ramp == 0:
            return np.where((t >= 0) & (t <= self.duration), 1.0, 0.0)
        up = 0.5 * (1 - np.cos(np.pi * np.clip(t / self.ramp, 0, 1)))
        down = 0.5 * (1 - np.cos(np.pi * np.clip((self.duration - t) / self.ramp, 0, 1)))
        return np.minimum(up, down)


# --- closed-form formulas --------------------------------------------------

def bus_mediated_coupling(h0, hj, delta0b, deltajb):
    """Second-order exchange coupling through a dispersive bus."""
    if delta0b == 0 or deltajb == 0:
        raise SingularityError("qubit-bus detuning is zero")
    return 0.5 * h0 * hj * (1.0 / delta0b + 1.0 / deltajb)


def effective_coupling(g_j, epsilons, j):
    """g_j * J1(eps_j) * prod_{k != j} J0(eps_k)."""
    eps = np.asarray(epsilons, dtype=float)
    if np.any(eps < 0):
        raise ValueError("modulation depths must be non-negative")
    others = np.prod([bessel_j(0, e) for k, e in enumerate(eps) if k != j]) if eps.size > 1 else 1.0
    return g_j * bessel_j(1, eps[j]) * others


def effective_couplings(g, epsilons):
    return np.array([effective_coupling(g[j], epsilons, j) for j in range(len(g))])


def dispersive_shift(h, alpha, delta_qb):
    """Transmon dispersive shift chi = h^2 alpha / (Delta (Delta + alpha)).

    ``alpha`` is the signed (negative) anharmonicity.
    """
    if delta_qb == 0 or delta_qb + alpha == 0:
        raise SingularityError("dispersive shift evaluated at a pole")
    return h * h * alpha / (delta_qb * (delta_qb + alpha))


def coupling_from_dispersive_shift(chi, alpha, delta_qb):
    """Inverse of :func:`dispersive_shift`; returns |h|."""
    if alpha == 0:
        raise SingularityError("zero anharmonicity gives no dispersive shift")
    if delta_qb == 0 or delta_qb + alpha == 0:
        raise SingularityError("dispersive shift evaluated at a pole")
    h2 = chi * delta_qb * (delta_qb + alpha) / alpha
    if h2 < 0:
        raise ValueError("chi has the wrong sign for these detunings")
    return math.sqrt(h2)


def gate_time(g_eff, n=0, kind="entangler"):
    """Duration for g_eff * t = (n + 1/4) pi (entangler) or (n + 1/2) pi (iswap)."""
    if g_eff <= 0:
        raise ValueError("g_eff must be positive")
    if n < 0:
        raise ValueError("n must be >= 0")
    quarter = {"entangler": 0.25, "iswap": 0.5}[kind]
    return (n + quarter) * np.pi / g_eff


def w_state_time(g_eff, n_comp):
    """First time a star-coupled system started on the hub reaches a W state.

    With equal couplings the hub amplitude is cos(sqrt(n) g t); the W state
    over ``n_comp + 1`` qubits needs cos^2 = 1/(n_comp + 1).
    """
    if g_eff <= 0:
        raise ValueError("g_eff must be positive")
    return math.acos(1 / math.sqrt(n_comp + 1)) / (g_eff * math.sqrt(n_comp))


_J1_GRID = np.linspace(0.0, J1_PEAK_ARG, 4097)
_J1_VALS = special.j1(_J1_GRID)


def _inverse_j1_vec(y):
    # table guess, then safeguarded Newton steps
    e = np.interp(y, _J1_VALS, _J1_GRID)
    for _ in range(4):
        slope = 0.5 * (special.j0(e) - special.jv(2, e))
        step = np.where(slope > 1e-8, (special.j1(e) - y) / np.maximum(slope, 1e-8), 0.0)
        e = np.clip(e - step, 0.0, J1_PEAK_ARG)
    return e


def _solve_equal(g_abs, g_target, iters=400):
    # damped fixed point: eps_j = J1^{-1}(g_target / (|g_j| prod_{k!=j} J0(eps_k)))
    eps = np.zeros(len(g_abs))
    for _ in range(iters):
        j0 = special.j0(eps)
        # eps stays below the first J0 zero, so dividing out the own factor is safe
        others = np.prod(j0) / j0
        y = g_target / (g_abs * others)
        if np.any(y > J1_PEAK):
            return None
        new = _inverse_j1_vec(y)
        if np.max(np.abs(new - eps)) < 1e-15:
            return new
        eps = 0.5 * eps + 0.5 * new
    # slow convergence means we sit at the fold; only accept an accurate answer
    if np.max(np.abs(effective_couplings(g_abs, eps) / g_target - 1)) > 1e-9:
        return None
    return eps


def max_equal_coupling(g):
    """Largest common |g_eff| reachable with every eps_j <= J1 peak."""
    g_abs = np.abs(np.asarray(g, dtype=float))
    lo, hi = 0.0, J1_PEAK * g_abs.min()
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        if _solve_equal(g_abs, mid) is not None:
            lo = mid
        else:
            hi = mid
    return lo


def calibrate_amplitudes(device, targets, g_target):
    """Modulation depths eps_j giving |g_{j,eff}| = g_target on every target.

    ``targets`` are computational-qubit indices (>= 1). Each eps_j stays in
    [0, 1.8412] so the solution is the unique one below the J1 peak.
    """
    g_all = device.couplings()
    g_abs = np.abs(np.array([g_all[t - 1] for t in targets]))
    feasible = max_equal_coupling(g_abs)
    if g_target > feasible * (1 + 1e-12):
        raise InfeasibleTarget(
            f"g_target {g_target:.6g} rad/s exceeds feasible maximum {feasible:.6g} rad/s",
            feasible_max=feasible)
    eps = _solve_equal(g_abs, g_target)
    if eps is None:
        raise InfeasibleTarget("no solution found", feasible_max=feasible)

    def resid(e):
        return effective_couplings(g_abs, np.clip(e, 0, J1_PEAK_ARG)) / g_target - 1.0

    sol = optimize.root(resid, eps, method="hybr", tol=1e-14)
    if sol.success and np.all(sol.x >= 0) and np.all(sol.x <= J1_PEAK_ARG):
        eps = sol.x
    if np.max(np.abs(resid(eps))) > 1e-6:
        raise InfeasibleTarget("calibration did not converge", feasible_max=feasible)
    return np.clip(eps, 0.0, J1_PEAK_ARG)


def drive_from_epsilons(device, targets, epsilons, duration, phases=None, ramp=2e-9,
                        freq_offsets=None):
    """Resonant tones nu_j = Delta_j (+ offset) with amplitudes eps_j * nu_j."""
    det = device.detunings
    phases = np.full(len(targets), -np.pi / 2) if phases is None else np.asarray(phases)
    offsets = np.zeros(len(targets)) if freq_offsets is None else np.asarray(freq_offsets)
    tones = []
    for k, (t, e) in enumerate(zip(targets, epsilons)):
        nu = abs(det[t - 1]) + offsets[k]
        tones.append(Tone(target=t, amplitude=float(e) * nu, freq=nu, phase=float(phases[k])))
    return DriveConfig(tones=tuple(tones), duration=duration, ramp=ramp)


# --- flux map utility ------------------------------------------------------

def transmon_frequency(flux, f_max):
    """Symmetric-SQUID transmon map omega(Phi) = omega_max sqrt|cos(pi Phi)|."""
    return f_max * np.sqrt(np.abs(np.cos(np.pi * np.asarray(flux))))


def transmon_flux(freq, f_max):
    """Inverse of :func:`transmon_frequency` on the branch 0 <= Phi <= 1/2."""
    ratio = np.clip(np.asarray(freq) / f_max, 0, 1)
    return np.arccos(ratio**2) / np.pi


def transmon_flux_slope(freq, f_max):
    """|d omega / d Phi| (per flux quantum) at the operating frequency ``freq``."""
    phi = transmon_flux(freq, f_max)
    c = np.cos(np.pi * phi)
    return float(f_max * np.pi * np.sin(np.pi * phi) / (2 * np.sqrt(c)))


@dataclass(frozen=True)
class QuadraticFluxMap:
    """omega(Phi) = omega_0 + slope * Phi + curvature * Phi^2 around an operating point."""

    omega0: float
    slope: float
    curvature: float = 0.0

    def __call__(self, flux):
        flux = np.asarray(flux, dtype=float)
        return self.omega0 + self.slope * flux + self.curvature * flux**2

    def inverse(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.curvature == 0:
            return (omega - self.omega0) / self.slope
        a, b, c = self.curvature, self.slope, self.omega0 - omega
        disc = b * b - 4 * a * c
        if np.any(disc < 0):
            raise ValueError("frequency outside the map's range")
        # root continuous with the linear inverse at small flux
        return (-b + np.sign(b) * np.sqrt(disc)) / (2 * a) if b != 0 else np.sqrt(-c / a)

    def is_monotone(self, lo, hi):
        # derivative slope + 2 curvature Phi keeps one sign over [lo, hi]
        d = np.array([self.slope + 2 * self.curvature * lo, self.slope + 2 * self.curvature * hi])
        return bool(np.all(d > 0) or np.all(d < 0))


# --- reference device --------------------------------------------------------

def table_s3_device(qubits=(0, 1, 2, 3), flux_noise_amp=2.45e-6):
    """Measured four-qubit device (off-sweet-spot values for Q0 and Q3)."""
    freqs = ghz([5.0408, 5.0992, 5.2056, 5.2347])
    dev = DeviceParams(
        qubit_freqs=freqs,
        anharmonicities=mhz([-209.8, -209.3, -210.2, -204.3]),
        bus_freq=ghz(5.5208),
        qubit_bus_couplings=mhz([17.3, 22.8, 18.2, 15.2]),
        t1=np.array([30.4, 31.7, 38.5, 33.2]) * 1e-6,
        t2echo=np.array([17.3, 44.1, 40.3, 16.6]) * 1e-6,
        zz_strengths=TWO_PI * np.array([26.2e3, 30.1e3, 28.0e3]),
        flux_noise_amp=flux_noise_amp,
        flux_slope=transmon_flux_slope(freqs[0], ghz(5.1941)),
        sweet_spot_freq=ghz(5.1941),
    )
    return dev.subset([q for q in qubits if q != 0])
