"""Batch front end: ``python -m paramgate <command> --config PATH [--seed N] [--out DIR]``.

Each ``cmd_*`` function takes a :class:`ScenarioConfig` and returns a
summary dict; when ``out`` is given it also writes CSV arrays and a
``summary.json`` record there. Exit codes: 0 success, 2 validation error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import device as dev
from . import dynamics, errors, pulseshape, tomography, xeb
from .config import ScenarioConfig, bundled, bundled_names
from .exceptions import ConfigError, DimensionMismatch, InvalidTruncation, ParamGateError
from .qops import QuantumState

THREADS_ENV = "PARAMGATE_THREADS"


def _outdir(out):
    if out is None:
        return None
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_summary(out, summary):
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _basis_state(scheme, bits):
    if len(bits) != scheme.n_modes or set(bits) - {"0", "1"}:
        raise ConfigError(f"expected {scheme.n_modes} binary digits", "run.initial")
    ket = np.zeros(scheme.dim, dtype=complex)
    ket[np.ravel_multi_index([int(b) for b in bits], scheme.dims)] = 1
    return QuantumState(scheme, ket=ket)


def cmd_exchange(cfg, seed=0, out=None):
    run = cfg.run
    device, drive = cfg.device(), cfg.drive()
    spec = dynamics.HamiltonianSpec(device, drive, frame=run.get("frame", "rotating"),
                                    include_zz=run.get("include_zz", False),
                                    levels=run.get("levels", 3))
    psi0 = _basis_state(spec.scheme, run["initial"])
    times = np.linspace(0.0, drive.duration, run.get("n_points", 1001))
    noise = None
    if run.get("decoherence", False):
        noise = errors.NoiseModel.from_device(device, zz=False, flux=False)
    traj = dynamics.evolve(spec, psi0, times, collapse=noise, seed=seed)
    pair = run.get("pair", [0, 1])
    summary = {"command": "exchange", "n_qubits": device.n_qubits,
               "effective_couplings_MHz": (dynamics.effective_couplings_of(device, drive)
                                           / (2 * np.pi * 1e6)).tolist()}
    hs = traj.half_swap_time(*pair)
    summary["half_swap_time_ns"] = None if hs is None else hs * 1e9
    if device.n_qubits > 2:
        summary["equal_sharing_time_ns"] = traj.equal_sharing_time() * 1e9
    out = _outdir(out)
    if out is not None:
        traj.to_csv(out / "trajectory.csv")
    _write_summary(out, summary)
    return summary


def _switch_off(device, channels):
    """Device copy with the error channels not listed in ``channels`` removed."""
    allowed = {"decoh", "zz", "flux"}
    bad = set(channels) - allowed
    if bad:
        raise ConfigError(f"unknown channels {sorted(bad)}", "run.channels")
    if "decoh" not in channels:
        inf = np.full(device.n_qubits, math.inf)
        device = replace(device, t1=inf, t2echo=inf, t_phi=None)
    if "zz" not in channels:
        device = replace(device, zz_strengths=np.zeros(device.n_qubits - 1))
    if "flux" not in channels:
        device = replace(device, flux_noise_amp=0.0)
    return device


def cmd_budget(cfg, seed=0, out=None):
    run = cfg.run
    device, drive = cfg.device(), cfg.drive()
    if "channels" in run:
        device = _switch_off(device, run["channels"])
    t_gate = run.get("gate_time_ns")
    budget = errors.error_budget(
        device, drive, run["scenario"], mc_realizations=run.get("mc_realizations", 1000),
        seed=seed, levels=run.get("levels", 3), search_window=run.get("search_window", 0.05),
        search_points=run.get("search_points", 21), label=run.get("label", ""),
        inputs=run.get("inputs", "auto"), t_gate=None if t_gate is None else t_gate * 1e-9)
    summary = {"command": "budget", **budget.to_dict()}
    out = _outdir(out)
    if out is not None:
        (out / "budget.txt").write_text(errors.format_budget_table([budget]) + "\n")
    _write_summary(out, summary)
    return summary


def cmd_tomography(cfg, seed=0, out=None):
    run = cfg.run
    device, drive = cfg.device(), cfg.drive()
    levels = run.get("levels", 3)
    noise = errors.NoiseModel.from_device(device) if run.get("noise", True) else None
    det = None if noise is None else noise.without("flux")
    if "gate_time_ns" in run:
        t_gate = run["gate_time_ns"] * 1e-9
    else:
        t_gate = dynamics.optimal_gate_time(device, drive, "state", det, levels=levels,
                                            window=run.get("search_window", 0.05), inputs="w")
    rng = np.random.default_rng(seed)
    offsets = None
    if noise is not None and noise.flux is not None:
        sigma = errors.quasi_static_sigma(noise.flux.a_phi, t_gate, noise.flux.f_low,
                                          slope=noise.flux.slope)
        offsets = rng.normal(0.0, sigma, 32)
    state = dynamics.prepare_w_state(device, drive, t_gate, det, levels, offsets)
    target = dynamics.w_state(device.n_qubits).ket
    data = tomography.simulate_measurements(state, shots=run.get("shots", 10000),
                                            seed=int(rng.integers(2**63)))
    rec = tomography.mle_reconstruct(data, max_iter=run.get("max_iter", 2000))
    _, angles, f_rec = tomography.align_pure(rec.rho.rho, target)
    reg, leakage, _ = tomography._as_qubit_density(state)
    reg = reg / np.real(np.trace(reg))
    _, _, f_direct = tomography.align_pure(reg, target)
    summary = {"command": "tomography", "n_qubits": device.n_qubits, "gate_time_ns": t_gate * 1e9,
               "fidelity": f_rec, "direct_fidelity": f_direct, "leakage": leakage,
               "mle_iterations": rec.iterations, "mle_converged": rec.converged,
               "virtual_z_rad": list(map(float, angles)), "shots": data.shots}
    out = _outdir(out)
    if out is not None:
        data.save(out / "dataset.json")
        aligned = tomography.apply_virtual_z(rec.rho.rho, angles)
        tomography.write_density_csv(aligned, out / "rho_real.csv", out / "rho_imag.csv")
    _write_summary(out, summary)
    return summary


def cmd_xeb(cfg, seed=0, out=None):
    run = cfg.run
    channel = None
    if run.get("simulate_gate", False):
        device, drive = cfg.device(), cfg.drive()
        noise = errors.NoiseModel.from_device(device).without("flux")
        t_gate = run.get("gate_time_ns")
        t_gate = (dynamics.optimal_gate_time(device, drive, "gate", noise) if t_gate is None
                  else t_gate * 1e-9)
        channel = xeb.corrected_channel(dynamics.gate_process(device, drive, t_gate, noise))
    res = xeb.run_xeb(run["depths"], run.get("n_seq", 20), channel=channel,
                      depolarizing=run.get("depolarizing", 0.0), shots=run.get("shots"),
                      seed=seed, reference=run.get("reference", False))
    summary = {"command": "xeb", **res.summary()}
    out = _outdir(out)
    if out is not None:
        res.to_csv(out / "xeb.csv")
    _write_summary(out, summary)
    return summary


def _pulse_setup(run):
    d = run["distortion"]
    ringing = None
    if d.get("ringing_amp", 0.0):
        ringing = pulseshape.Ringing(d["ringing_amp"], d["ringing_freq_MHz"] * 1e6,
                                     d["ringing_decay_ns"] * 1e-9)
    model = pulseshape.DistortionModel(d["A"], d["tau_ns"] * 1e-9, ringing)
    fm = run["flux_map"]
    scale = 2 * np.pi * 1e9
    fmap = dev.QuadraticFluxMap(fm["f0_GHz"] * scale, fm["slope_GHz_per_Phi0"] * scale,
                                fm.get("curvature_GHz_per_Phi0sq", 0.0) * scale)
    f_s = run.get("sample_rate_GSps", 1.0) * 1e9
    taus = np.arange(run.get("n_samples", 600)) / f_s
    return model, fmap, f_s, taus


def cmd_cryoscope(cfg, seed=0, out=None):
    run = cfg.run
    model, fmap, f_s, taus = _pulse_setup(run)
    amp = run["amplitude_Phi0"]
    window = run.get("window", 9)
    trace = pulseshape.cryoscope_synthesize(model, amp, taus, fmap, f_s=f_s)
    t, flux = pulseshape.cryoscope_analyze(trace, fmap, window)
    a_fit, tau_fit = pulseshape.fit_exponential(t, flux / amp, t_min=20e-9)
    summary = {"command": "cryoscope", "fitted_A": a_fit, "fitted_tau_ns": tau_fit * 1e9,
               "true_A": model.amplitude, "true_tau_ns": model.tau * 1e9}
    out = _outdir(out)
    if out is not None:
        pulseshape.write_waveform_csv(out / "phase.csv", taus, trace.phase)
        pulseshape.write_waveform_csv(out / "reconstructed.csv", t, flux / amp)
    _write_summary(out, summary)
    return summary


def cmd_predistort(cfg, seed=0, out=None):
    run = cfg.run
    model, fmap, f_s, taus = _pulse_setup(run)
    amp = run["amplitude_Phi0"]
    window = run.get("window", 9)
    design = pulseshape.design_predistortion(
        model, fmap, amp, taus, n_taps=run.get("n_taps", 7), seed=seed, window=window,
        fit_start=run.get("fit_start_ns", 20.0) * 1e-9, f_s=f_s)
    freq = run.get("sine_freq_MHz", 50.0) * 1e6
    depth = run.get("sine_depth", 0.25)
    _, _, rms_raw = pulseshape.sinusoid_check(model, fmap, amp, taus, None, freq, depth, window, f_s)
    target, resp, rms = pulseshape.sinusoid_check(model, fmap, amp, taus, design.filters, freq,
                                                  depth, window, f_s)
    # the same analysis applied to an undistorted pulse isolates the correction residual
    _, ideal, _ = pulseshape.sinusoid_check(None, fmap, amp, taus, None, freq, depth, window, f_s)
    h = window // 2
    rms_vs_ideal = float(np.sqrt(np.mean((resp[h:-h] - ideal[h:-h]) ** 2)))
    summary = {"command": "predistort", "fitted_A": design.fitted_amplitude,
               "fitted_tau_ns": design.fitted_tau * 1e9, "fir_taps": list(design.fir.b),
               "rms_uncorrected": rms_raw, "rms_corrected": rms,
               "rms_corrected_vs_ideal_analysis": rms_vs_ideal}
    out = _outdir(out)
    if out is not None:
        idle = run.get("idle_ns", 4 * model.tau * 1e9) * 1e-9
        n_idle = int(round(idle * f_s))
        awg = amp * np.concatenate([np.zeros(n_idle), target, np.zeros(n_idle)])
        for filt in design.filters:
            awg = pulseshape.apply_filter(awg, filt)
        pulseshape.write_waveform_csv(out / "awg_waveform.csv", np.arange(awg.size) / f_s, awg)
        pulseshape.write_waveform_csv(out / "response.csv", taus, resp)
        (out / "iir.txt").write_text(design.iir.to_text())
        (out / "fir.txt").write_text(design.fir.to_text())
    _write_summary(out, summary)
    return summary


def project_case(device, amplitudes, phase=-np.pi / 2):
    """Sub-device and drive for one projection case (resonant tones nu_j = |Delta_j|)."""
    n_comp = len(amplitudes)
    sub = device.subset(list(range(1, n_comp + 1)))
    tones = tuple(dev.Tone(k + 1, dev.mhz(a), abs(float(sub.detunings[k])), phase)
                  for k, a in enumerate(amplitudes))
    return sub, dev.DriveConfig(tones, 100e-9)


def cmd_project(cfg, seed=0, out=None):
    """Peak W-state fidelities for each configured register size.

    The gate time is the fidelity maximum found by scanning a window around
    the first equal-sharing time of the effective model.
    """
    run = cfg.run
    device = cfg.device()
    scale = 1 / (2 * np.pi) if run.get("angular_amplitudes", False) else 1.0
    rows = []
    for i, case in enumerate(run["cases"]):
        amps = np.asarray(case["amplitudes_MHz"], dtype=float) * scale
        if len(amps) != case["n_qubits"] - 1:
            raise ConfigError("need one amplitude per computational qubit",
                              f"run.cases[{i}].amplitudes_MHz")
        if case["n_qubits"] > device.n_qubits:
            raise ConfigError("more qubits than the device has", f"run.cases[{i}].n_qubits")
        sub, drive = project_case(device, amps, run.get("phase_rad", -np.pi / 2))
        b = errors.error_budget(sub, drive, "state", mc_realizations=run.get("mc_realizations", 100),
                                seed=seed, levels=run.get("levels", 3),
                                search_window=run.get("search_window", 0.1),
                                search_points=run.get("search_points", 41), inputs="w",
                                label=f"{case['n_qubits']}Q W")
        row = b.to_dict()
        row["n_qubits"] = case["n_qubits"]
        row["effective_couplings_MHz"] = (dynamics.effective_couplings_of(sub, drive)
                                          / (2 * np.pi * 1e6)).tolist()
        rows.append(row)
    summary = {"command": "project", "cases": rows}
    out = _outdir(out)
    if out is not None:
        budgets = [errors.ErrorBudget.from_dict({k: v for k, v in r.items()
                                                 if k not in ("n_qubits", "effective_couplings_MHz")})
                   for r in rows]
        (out / "project.txt").write_text(errors.format_budget_table(budgets) + "\n")
    _write_summary(out, summary)
    return summary


COMMANDS = {
    "exchange": cmd_exchange,
    "budget": cmd_budget,
    "tomography": cmd_tomography,
    "xeb": cmd_xeb,
    "cryoscope": cmd_cryoscope,
    "predistort": cmd_predistort,
    "project": cmd_project,
}

VALIDATION_ERRORS = (ConfigError, DimensionMismatch, InvalidTruncation, ValueError, KeyError)
NUMERICAL_ERRORS = (ParamGateError, ArithmeticError, np.linalg.LinAlgError)


def load_config(ref):
    """A config file path, or the name of a bundled config."""
    if os.path.isfile(ref):
        return ScenarioConfig.load(ref)
    if ref in bundled_names():
        return bundled(ref)
    raise ConfigError(f"no such file or bundled config {ref!r}", "--config")


def run_config(cfg, seed=0, out=None):
    return COMMANDS[cfg.command](cfg, seed=seed, out=out)


def _parser():
    p = argparse.ArgumentParser(prog="paramgate", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS) + ["list"],
                   help="command to run; defaults to the one named in the config")
    p.add_argument("--config", action="append", default=[],
                   help="config file or bundled config name (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=int(os.environ.get(THREADS_ENV, "1")))
    return p


def _classify(exc):
    # NumPy/SciPy raise ValueError for some numerical faults too; errors from
    # the package's own validation carry precise types.
    if isinstance(exc, (ConfigError, DimensionMismatch, InvalidTruncation)):
        return 2
    if isinstance(exc, NUMERICAL_ERRORS):
        return 3
    if isinstance(exc, VALIDATION_ERRORS):
        return 2
    raise exc


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled_names()))
        return 0
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        cfgs = [load_config(c) for c in args.config]
        for ref, cfg in zip(args.config, cfgs):
            if args.command is not None and cfg.command != args.command:
                raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}", "command")
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return _classify(exc)

    def job(k):
        cfg = cfgs[k]
        out = args.out
        if out is not None and len(cfgs) > 1:
            out = os.path.join(out, Path(args.config[k]).stem)
        return run_config(cfg, args.seed, out)

    codes = []
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        futures = [pool.submit(job, k) for k in range(len(cfgs))]
        for ref, fut in zip(args.config, futures):
            try:
                summary = fut.result()
                print(json.dumps({"config": ref, **summary}, sort_keys=True))
                codes.append(0)
            except Exception as exc:  # noqa: BLE001
                print(f"error in {ref}: {exc}", file=sys.stderr)
                codes.append(_classify(exc))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
