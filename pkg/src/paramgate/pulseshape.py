"""Flux-pulse distortion: Cryoscope synthesis/analysis and IIR/FIR pre-distortion design."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, signal

from .exceptions import DemodulationError, FilterError


@dataclass(frozen=True)
class FilterCoefficients:
    """Rational filter a0 y[n] = sum_i b_i x[n-i] - sum_{j>=1} a_j y[n-j]."""

    a: tuple
    b: tuple
    sample_rate: float = 1e9

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        b = tuple(float(v) for v in np.atleast_1d(self.b))
        if not a or not b:
            raise FilterError("tap lists must be non-empty")
        if a[0] == 0:
            raise FilterError("a0 must be non-zero")
        if not all(map(math.isfinite, a + b)):
            raise FilterError("taps must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def to_text(self):
        """Structured text record; floats in hex so parsing is bit-exact."""
        lines = [f"sample_rate {float(self.sample_rate).hex()}",
                 "a " + " ".join(v.hex() for v in self.a),
                 "b " + " ".join(v.hex() for v in self.b)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        fields = {}
        for line in text.strip().splitlines():
            key, *vals = line.split()
            fields[key] = [float.fromhex(v) for v in vals]
        return cls(tuple(fields["a"]), tuple(fields["b"]), fields["sample_rate"][0])

    @property
    def dc_gain(self):
        return sum(self.b) / sum(self.a)


def identity_filter(sample_rate=1e9):
    return FilterCoefficients((1.0,), (1.0,), sample_rate)


def apply_filter(x, coeffs):
    """Direct-form evaluation of the difference equation, zero initial conditions."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty waveform")
    if coeffs.a[0] == 0:
        raise FilterError("a0 must be non-zero")
    return signal.lfilter(np.array(coeffs.b), np.array(coeffs.a), x)


def cascade(*filters):
    """Series connection of rational filters (same sample rate)."""
    a, b = np.array([1.0]), np.array([1.0])
    for f in filters:
        a = np.convolve(a, f.a)
        b = np.convolve(b, f.b)
    return FilterCoefficients(tuple(a), tuple(b), filters[0].sample_rate)


def iir_invert_exponential(amplitude, tau, f_s):
    """One-pole IIR undoing a step response 1 + A exp(-t/tau).

    alpha = 1 - exp(-1/(f_s tau (1 + A))), k = A / ((1 + A)(1 - alpha));
    a = [1, alpha - 1], b = [1 - k + k alpha, -(1 - k)(1 - alpha)]. The
    filter has unit DC gain and is the identity at A = 0.
    """
    if not -1 < amplitude < 1:
        raise ValueError("|A| must be below 1")
    if tau <= 0 or f_s <= 0:
        raise ValueError("tau and f_s must be positive")
    alpha = 1 - math.exp(-1 / (f_s * tau * (1 + amplitude)))
    k = amplitude / ((1 + amplitude) * (1 - alpha))
    b0 = 1 - k + k * alpha
    b1 = -(1 - k) * (1 - alpha)
    return FilterCoefficients((1.0, alpha - 1), (b0, b1), f_s)


@dataclass(frozen=True)
class Ringing:
    amplitude: float
    freq: float  # Hz
    decay: float  # s


@dataclass(frozen=True)
class DistortionModel:
    """Flux-line step response s(t) = 1 + A e^{-t/tau} (+ a e^{-t/t_r} sin(2 pi f t))."""

    amplitude: float
    tau: float
    ringing: Ringing | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not abs(self.amplitude) < 1:
            raise ValueError("|A| must be below 1")

    def step_response(self, t):
        t = np.asarray(t, dtype=float)
        s = 1 + self.amplitude * np.exp(-t / self.tau)
        if self.ringing is not None:
            r = self.ringing
            s = s + r.amplitude * np.exp(-t / r.decay) * np.sin(2 * np.pi * r.freq * t)
        return np.where(t >= 0, s, 0.0)

    def impulse_response(self, n, f_s):
        s = self.step_response(np.arange(n) / f_s)
        return np.diff(s, prepend=0.0)

    def apply(self, x, f_s):
        """On-chip waveform for AWG samples ``x`` (causal, zero before the first sample)."""
        x = np.asarray(x, dtype=float)
        h = self.impulse_response(x.size, f_s)
        return np.convolve(x, h)[: x.size]


def savgol_derivative(y, window=9, order=2, dt=1.0):
    """Savitzky-Golay derivative; exact for polynomials up to ``order``."""
    if window % 2 == 0 or window < order + 2:
        raise ValueError("window must be odd and at least order + 2")
    y = np.asarray(y, dtype=float)
    if y.size < window:
        raise ValueError("series shorter than the window")
    return signal.savgol_filter(y, window, order, deriv=1, delta=dt, mode="interp")


@dataclass
class CryoscopeTrace:
    taus: np.ndarray  # pulse lengths (s), uniform grid
    phase: np.ndarray  # accumulated phase (rad)
    x: np.ndarray  # <sigma_x> = cos(phase)
    y: np.ndarray  # <sigma_y> = sin(phase)
    amplitude: float

    def __post_init__(self):
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("tau grid must be increasing")


def _detuning(freq_map, flux):
    return freq_map(flux) - freq_map(0.0)


def cryoscope_synthesize(model, amplitude, taus, freq_map, waveform=None, f_s=1e9, oversample=16,
                         predistort=None):
    """Accumulated qubit phase for flux pulses truncated at each tau.

    The AWG plays ``amplitude`` times ``waveform`` (a square pulse when
    None), optionally passed through ``predistort`` first. The distorted
    on-chip flux is linearly interpolated on a fine grid and its detuning
    integrated with the trapezoidal rule. Causality makes the truncated
    pulses share one integral.
    """
    taus = np.asarray(taus, dtype=float)
    n = int(math.ceil(taus[-1] * f_s)) + 2
    x = np.ones(n) if waveform is None else np.asarray(waveform, dtype=float)[:n]
    if x.size < n:
        x = np.concatenate([x, np.zeros(n - x.size)])
    x = amplitude * x
    if predistort is not None:
        for filt in predistort:
            x = apply_filter(x, filt)
    flux = model.apply(x, f_s) if model is not None else x
    lo, hi = float(flux.min()), float(flux.max())
    if hasattr(freq_map, "is_monotone") and not freq_map.is_monotone(min(lo, 0.0), max(hi, 0.0)):
        raise ValueError("frequency map is not monotone over the pulse range")
    fine = np.linspace(0, taus[-1], int(math.ceil(taus[-1] * f_s * oversample)) + 1)
    det = _detuning(freq_map, np.interp(fine, np.arange(n) / f_s, flux))
    cum = integrate.cumulative_trapezoid(det, fine, initial=0.0)
    phase = np.interp(taus, fine, cum)
    return CryoscopeTrace(taus, phase, np.cos(phase), np.sin(phase), amplitude)


def _dominant_frequency(z, dt):
    spec = np.abs(np.fft.fft(z))
    freqs = np.fft.fftfreq(z.size, dt)
    spec[0] = 0.0
    peak = spec.max()
    if peak <= 1e-9 * np.sqrt(z.size):
        raise DemodulationError("no dominant frequency in the Cryoscope signal")
    cand = np.flatnonzero(np.isclose(spec, peak, rtol=1e-12, atol=0))
    k = cand[np.argmin(np.abs(freqs[cand]))]
    return freqs[k]


def cryoscope_analyze(trace, freq_map, window=9):
    """On-chip flux versus time from a Cryoscope trace.

    Demodulates e^{i phi} at its dominant frequency, unwraps the residual
    phase, differentiates it with a second-order Savitzky-Golay filter and
    inverts the frequency map. Returns (times, flux).
    """
    taus = trace.taus
    dt = taus[1] - taus[0]
    z = trace.x + 1j * trace.y
    f_d = _dominant_frequency(z, dt)
    resid = np.unwrap(np.angle(z * np.exp(-2j * np.pi * f_d * taus)))
    det = savgol_derivative(resid, window, 2, dt) + 2 * np.pi * f_d
    flux = freq_map.inverse(freq_map(0.0) + det)
    return taus, flux


def fit_exponential(t, response, t_min=0.0):
    """Fit response(t) = 1 + A e^{-t/tau} for t >= t_min; returns (A, tau)."""
    t = np.asarray(t)
    r = np.asarray(response)
    m = t >= t_min
    a0 = float(r[m][0] - 1)
    tau0 = max((t[m][-1] - t[m][0]) / 5, 1e-9)
    popt, _ = optimize.curve_fit(lambda tt, a, tau: 1 + a * np.exp(-tt / tau), t[m], r[m],
                                 p0=[a0 if a0 else -0.05, tau0], maxfev=20000)
    return float(popt[0]), float(popt[1])


# --- CMA-ES ----------------------------------------------------------------

@dataclass
class CmaResult:
    x: np.ndarray
    f: float
    history: list = field(default_factory=list)
    converged: bool = False
    evaluations: int = 0

    def __iter__(self):
        return iter((self.x, self.f, self.history))


def cma_es_minimize(objective, x0, sigma0, budget=5000, seed=None, tol_x=1e-13, tol_f=1e-15,
                    popsize=None):
    """(mu/mu_w, lambda)-CMA-ES with the standard default strategy parameters.

    ``history`` holds the best value after each generation. Stops when the
    step size collapses (converged) or the evaluation budget runs out.
    """
    rng = np.random.default_rng(seed)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    lam = popsize or 4 + int(3 * math.log(n))
    mu = lam // 2
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1 / np.sum(w**2)
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chin = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    mean = x0.copy()
    sigma = float(sigma0)
    pc = np.zeros(n)
    ps = np.zeros(n)
    b = np.eye(n)
    d = np.ones(n)
    c = np.eye(n)
    inv_sqrt = np.eye(n)
    best_x, best_f = x0.copy(), float(objective(x0))
    evals = 1
    history = [best_f]
    eigen_at = 0
    gen = 0
    converged = False
    while evals + lam <= budget:
        gen += 1
        z = rng.standard_normal((lam, n))
        y = z @ (b * d).T
        xs = mean + sigma * y
        fs = np.array([objective(xi) for xi in xs], dtype=float)
        evals += lam
        order = np.argsort(fs, kind="stable")
        if fs[order[0]] < best_f:
            best_f, best_x = float(fs[order[0]]), xs[order[0]].copy()
        history.append(best_f)
        old = mean
        ysel = y[order[:mu]]
        yw = w @ ysel
        mean = old + sigma * yw
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (inv_sqrt @ yw)
        hsig = (np.linalg.norm(ps) / math.sqrt(1 - (1 - cs) ** (2 * gen)) / chin
                < 1.4 + 2 / (n + 1))
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * yw
        c = ((1 - c1 - cmu) * c
             + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * c)
             + cmu * (ysel.T * w) @ ysel)
        sigma *= math.exp((cs / damps) * (np.linalg.norm(ps) / chin - 1))
        if evals - eigen_at > lam / (c1 + cmu) / n / 10:
            eigen_at = evals
            c = np.triu(c) + np.triu(c, 1).T
            d2, b = np.linalg.eigh(c)
            d = np.sqrt(np.maximum(d2, 1e-300))
            inv_sqrt = b @ np.diag(1 / d) @ b.T
        if sigma * d.max() < tol_x:
            converged = True
            break
        if gen > 10 and np.ptp(history[-10:]) < tol_f and np.ptp(fs) < tol_f:
            converged = True
            break
    return CmaResult(best_x, best_f, history, converged, evals)


def fir_optimize(measured_response, target, n_taps=7, seed=None, budget=6000, sigma0=0.05,
                 f_s=1e9):
    """FIR taps minimising the MSE between the filtered response and ``target``.

    Taps are parametrised so their sum is exactly one (unit DC gain):
    b_0 = 1 - sum of the others. The search starts from the identity.
    """
    measured = np.asarray(measured_response, dtype=float)
    target = np.asarray(target, dtype=float)
    if measured.shape != target.shape:
        raise ValueError("response and target must have the same length")

    def taps(v):
        return np.concatenate([[1 - v.sum()], v])

    def mse(v):
        return float(np.mean((signal.lfilter(taps(v), [1.0], measured) - target) ** 2))

    res = cma_es_minimize(mse, np.zeros(n_taps - 1), sigma0, budget=budget, seed=seed)
    return FilterCoefficients((1.0,), tuple(taps(res.x)), f_s)


# --- calibration chain ---------------------------------------------------

def measure_step_response(model, freq_map, amplitude, taus, predistort=None, window=9, f_s=1e9):
    """Normalised on-chip step response as reconstructed by Cryoscope."""
    trace = cryoscope_synthesize(model, amplitude, taus, freq_map, f_s=f_s, predistort=predistort)
    return cryoscope_analyze(trace, freq_map, window)[1] / amplitude


@dataclass
class PredistortionDesign:
    iir: FilterCoefficients
    fir: FilterCoefficients
    fitted_amplitude: float
    fitted_tau: float
    raw_step: np.ndarray
    iir_step: np.ndarray

    @property
    def filters(self):
        return [self.iir, self.fir]


def design_predistortion(model, freq_map, amplitude, taus, n_taps=7, seed=0, window=9,
                         fit_start=20e-9, f_s=1e9):
    """Measure the step, fit and invert the exponential, then fit FIR taps to the residual."""
    raw = measure_step_response(model, freq_map, amplitude, taus, window=window, f_s=f_s)
    a_fit, tau_fit = fit_exponential(taus, raw, t_min=fit_start)
    iir = iir_invert_exponential(a_fit, tau_fit, f_s)
    after = measure_step_response(model, freq_map, amplitude, taus, [iir], window, f_s)
    fir = fir_optimize(after, np.ones_like(after), n_taps, seed=seed, f_s=f_s)
    return PredistortionDesign(iir, fir, a_fit, tau_fit, raw, after)


def sinusoid_check(model, freq_map, amplitude, taus, filters, freq=50e6, depth=0.25, window=9,
                   f_s=1e9):
    """Cryoscope response to amplitude (1 + depth sin(2 pi freq t)) through ``filters``.

    Returns (target, response, rms) in units of ``amplitude``; the RMS
    excludes window/2 samples at each edge.
    """
    target = 1 + depth * np.sin(2 * np.pi * freq * taus)
    trace = cryoscope_synthesize(model, amplitude, taus, freq_map, waveform=target, f_s=f_s,
                                 predistort=filters)
    resp = cryoscope_analyze(trace, freq_map, window)[1] / amplitude
    h = window // 2
    rms = float(np.sqrt(np.mean((resp[h:-h] - target[h:-h]) ** 2)))
    return target, resp, rms


# --- export ----------------------------------------------------------------

def write_waveform_csv(path, t, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns", "value"])
        for ti, v in zip(t, values):
            w.writerow([repr(float(ti * 1e9)), repr(float(v))])


def read_waveform_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(a), float(b)] for a, b in rows])
    return arr[:, 0] * 1e-9, arr[:, 1]
