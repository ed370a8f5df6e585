"""JSON scenario configs: schema validation and conversion to model objects.

Every key carries its unit as a suffix. Unknown keys are rejected and
errors name the offending field path, e.g. ``device.qubits[2].T1_us``.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import device as dev
from .exceptions import ConfigError

TWO_PI = 2 * np.pi

_NUM = (int, float)

QUBIT_KEYS = {
    "freq_GHz": (_NUM, True),
    "anharm_MHz": (_NUM, True),
    "qb_bus_coupling_MHz": (_NUM, True),
    "T1_us": (_NUM + (type(None),), True),
    "T2echo_us": (_NUM + (type(None),), True),
    "zz_kHz": (_NUM, False),
    "Tphi_us": (_NUM, False),
}
DEVICE_KEYS = {
    "qubits": (list, True),
    "bus": (dict, True),
    "flux_noise_uPhi0": (_NUM, False),
    "flux_slope_GHz_per_Phi0": (_NUM, False),
    "sweet_spot_GHz": (_NUM, False),
    "subset": (list, False),
}
BUS_KEYS = {"freq_GHz": (_NUM, True)}
TONE_KEYS = {
    "target": (int, True),
    "amplitude_MHz": (_NUM, True),
    "freq_MHz": (_NUM, True),
    "phase_rad": (_NUM, False),
}
DRIVE_KEYS = {
    "tones": (list, True),
    "duration_ns": (_NUM, True),
    "ramp_ns": (_NUM, False),
}
DISTORTION_KEYS = {
    "A": (_NUM, True),
    "tau_ns": (_NUM, True),
    "ringing_amp": (_NUM, False),
    "ringing_freq_MHz": (_NUM, False),
    "ringing_decay_ns": (_NUM, False),
}
FLUX_MAP_KEYS = {
    "f0_GHz": (_NUM, True),
    "slope_GHz_per_Phi0": (_NUM, True),
    "curvature_GHz_per_Phi0sq": (_NUM, False),
}
CASE_KEYS = {
    "n_qubits": (int, True),
    "amplitudes_MHz": (list, True),
}

RUN_KEYS = {
    "exchange": {
        "initial": (str, True),
        "n_points": (int, False),
        "levels": (int, False),
        "frame": (str, False),
        "include_zz": (bool, False),
        "decoherence": (bool, False),
        "pair": (list, False),
    },
    "budget": {
        "scenario": (str, True),
        "mc_realizations": (int, False),
        "inputs": (str, False),
        "levels": (int, False),
        "search_window": (_NUM, False),
        "search_points": (int, False),
        "gate_time_ns": (_NUM, False),
        "label": (str, False),
        "channels": (list, False),
    },
    "tomography": {
        "shots": (int, False),
        "noise": (bool, False),
        "gate_time_ns": (_NUM, False),
        "levels": (int, False),
        "max_iter": (int, False),
        "search_window": (_NUM, False),
    },
    "xeb": {
        "depths": (list, True),
        "n_seq": (int, False),
        "shots": (int, False),
        "depolarizing": (_NUM, False),
        "simulate_gate": (bool, False),
        "gate_time_ns": (_NUM, False),
        "reference": (bool, False),
    },
    "cryoscope": {
        "distortion": (dict, True),
        "flux_map": (dict, True),
        "amplitude_Phi0": (_NUM, True),
        "n_samples": (int, False),
        "sample_rate_GSps": (_NUM, False),
        "window": (int, False),
    },
    "predistort": {
        "distortion": (dict, True),
        "flux_map": (dict, True),
        "amplitude_Phi0": (_NUM, True),
        "n_samples": (int, False),
        "sample_rate_GSps": (_NUM, False),
        "window": (int, False),
        "n_taps": (int, False),
        "sine_freq_MHz": (_NUM, False),
        "sine_depth": (_NUM, False),
        "fit_start_ns": (_NUM, False),
        "idle_ns": (_NUM, False),
        "budget": (int, False),
    },
    "project": {
        "cases": (list, True),
        "mc_realizations": (int, False),
        "levels": (int, False),
        "search_window": (_NUM, False),
        "search_points": (int, False),
        "phase_rad": (_NUM, False),
        "angular_amplitudes": (bool, False),
    },
}
TOP_KEYS = {
    "command": (str, True),
    "description": (str, False),
    "device": (dict, False),
    "drive": (dict, False),
    "run": (dict, True),
}
NEEDS_DEVICE = {"exchange", "budget", "tomography", "project"}
NEEDS_DRIVE = {"exchange", "budget", "tomography"}


def _check(obj, schema, path):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    for key in obj:
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", f"{path}.{key}" if path else key)
    for key, (types, required) in schema.items():
        sub = f"{path}.{key}" if path else key
        if key not in obj:
            if required:
                raise ConfigError("missing required key", sub)
            continue
        val = obj[key]
        if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError("boolean not allowed here", sub)
        if not isinstance(val, types):
            raise ConfigError(f"wrong type {type(val).__name__}", sub)
        if isinstance(val, float) and not math.isfinite(val):
            raise ConfigError("value must be finite", sub)


def _positive(val, path):
    if val is not None and val <= 0:
        raise ConfigError("must be positive", path)


def validate(raw):
    """Check ``raw`` against the schema; raises ConfigError with the field path."""
    _check(raw, TOP_KEYS, "")
    cmd = raw["command"]
    if cmd not in RUN_KEYS:
        raise ConfigError(f"unknown command {cmd!r}", "command")
    if cmd in NEEDS_DEVICE and "device" not in raw:
        raise ConfigError("missing required key", "device")
    if cmd in NEEDS_DRIVE and "drive" not in raw:
        raise ConfigError("missing required key", "drive")
    if "device" in raw:
        d = raw["device"]
        _check(d, DEVICE_KEYS, "device")
        _check(d["bus"], BUS_KEYS, "device.bus")
        if len(d["qubits"]) < 2:
            raise ConfigError("need the common qubit and at least one more", "device.qubits")
        for i, q in enumerate(d["qubits"]):
            p = f"device.qubits[{i}]"
            _check(q, QUBIT_KEYS, p)
            for k in ("freq_GHz", "T1_us", "T2echo_us", "Tphi_us"):
                if k in q:
                    _positive(q[k], f"{p}.{k}")
        if d.get("flux_noise_uPhi0", 0) < 0:
            raise ConfigError("must be non-negative", "device.flux_noise_uPhi0")
        for i, q in enumerate(d.get("subset", [])):
            if not isinstance(q, int) or not 1 <= q < len(d["qubits"]):
                raise ConfigError("not a computational qubit index", f"device.subset[{i}]")
    if "drive" in raw:
        dr = raw["drive"]
        _check(dr, DRIVE_KEYS, "drive")
        _positive(dr["duration_ns"], "drive.duration_ns")
        for i, t in enumerate(dr["tones"]):
            p = f"drive.tones[{i}]"
            _check(t, TONE_KEYS, p)
            if t["amplitude_MHz"] < 0:
                raise ConfigError("must be non-negative", f"{p}.amplitude_MHz")
            _positive(t["freq_MHz"], f"{p}.freq_MHz")
    run = raw["run"]
    _check(run, RUN_KEYS[cmd], "run")
    if "distortion" in run:
        _check(run["distortion"], DISTORTION_KEYS, "run.distortion")
        _positive(run["distortion"]["tau_ns"], "run.distortion.tau_ns")
        if not abs(run["distortion"]["A"]) < 1:
            raise ConfigError("|A| must be below 1", "run.distortion.A")
    if "flux_map" in run:
        _check(run["flux_map"], FLUX_MAP_KEYS, "run.flux_map")
    if cmd == "project":
        for i, c in enumerate(run["cases"]):
            _check(c, CASE_KEYS, f"run.cases[{i}]")
    if cmd == "budget" and run["scenario"] not in ("state", "gate"):
        raise ConfigError("must be 'state' or 'gate'", "run.scenario")
    for k in ("mc_realizations", "shots", "n_seq", "n_points"):
        if k in run and run[k] < 0:
            raise ConfigError("must be non-negative", f"run.{k}")
    return raw


@dataclass
class ScenarioConfig:
    raw: dict

    @classmethod
    def from_dict(cls, raw):
        return cls(validate(copy.deepcopy(raw)))

    @classmethod
    def from_json(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_json(self):
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.raw == other.raw

    @property
    def command(self):
        return self.raw["command"]

    @property
    def run(self):
        return self.raw["run"]

    def device(self):
        return device_from_section(self.raw["device"])

    def drive(self):
        return drive_from_section(self.raw["drive"])


def _time_s(us):
    return math.inf if us is None else us * 1e-6


def device_from_section(d):
    qs = d["qubits"]
    freqs = dev.ghz([q["freq_GHz"] for q in qs])
    zz = [q.get("zz_kHz", 0.0) for q in qs[1:]]
    if "flux_slope_GHz_per_Phi0" in d:
        slope = TWO_PI * 1e9 * d["flux_slope_GHz_per_Phi0"]
    elif "sweet_spot_GHz" in d:
        slope = dev.transmon_flux_slope(freqs[0], dev.ghz(d["sweet_spot_GHz"]))
    else:
        slope = 0.0
    tphi = None
    if any("Tphi_us" in q for q in qs):
        tphi = np.array([_time_s(q.get("Tphi_us")) if "Tphi_us" in q else np.nan for q in qs])
        if np.any(np.isnan(tphi)):
            raise ConfigError("Tphi_us must be given for every qubit or none", "device.qubits")
    try:
        out = dev.DeviceParams(
            qubit_freqs=freqs,
            anharmonicities=dev.mhz([q["anharm_MHz"] for q in qs]),
            bus_freq=dev.ghz(d["bus"]["freq_GHz"]),
            qubit_bus_couplings=dev.mhz([q["qb_bus_coupling_MHz"] for q in qs]),
            t1=np.array([_time_s(q["T1_us"]) for q in qs]),
            t2echo=np.array([_time_s(q["T2echo_us"]) for q in qs]),
            zz_strengths=TWO_PI * 1e3 * np.array(zz, dtype=float),
            flux_noise_amp=d.get("flux_noise_uPhi0", 0.0) * 1e-6,
            flux_slope=slope,
            sweet_spot_freq=dev.ghz(d["sweet_spot_GHz"]) if "sweet_spot_GHz" in d else None,
            t_phi=tphi,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "device") from None
    if "subset" in d:
        out = out.subset(d["subset"])
    return out


def drive_from_section(dr):
    tones = tuple(dev.Tone(t["target"], dev.mhz(t["amplitude_MHz"]), dev.mhz(t["freq_MHz"]),
                           t.get("phase_rad", -np.pi / 2)) for t in dr["tones"])
    try:
        return dev.DriveConfig(tones, dr["duration_ns"] * 1e-9, dr.get("ramp_ns", 2.0) * 1e-9)
    except ValueError as exc:
        raise ConfigError(str(exc), "drive") from None


def device_section(device, flux_slope=True):
    """Inverse of :func:`device_from_section` (explicit values, no subset)."""
    n = device.n_qubits
    qubits = []
    for i in range(n):
        q = {
            "freq_GHz": float(device.qubit_freqs[i] / TWO_PI / 1e9),
            "anharm_MHz": float(device.anharmonicities[i] / TWO_PI / 1e6),
            "qb_bus_coupling_MHz": float(device.qubit_bus_couplings[i] / TWO_PI / 1e6),
            "T1_us": float(device.t1[i] * 1e6),
            "T2echo_us": float(device.t2echo[i] * 1e6),
        }
        if i > 0:
            q["zz_kHz"] = float(device.zz_strengths[i - 1] / TWO_PI / 1e3)
        if device.t_phi is not None:
            q["Tphi_us"] = float(device.t_phi[i] * 1e6)
        qubits.append(q)
    out = {"qubits": qubits, "bus": {"freq_GHz": float(device.bus_freq / TWO_PI / 1e9)},
           "flux_noise_uPhi0": float(device.flux_noise_amp * 1e6)}
    if flux_slope:
        out["flux_slope_GHz_per_Phi0"] = float(device.flux_slope / TWO_PI / 1e9)
    return out


def bundled_names():
    return sorted(p.name[:-5] for p in resources.files("paramgate.configs").iterdir()
                  if p.name.endswith(".json"))


def bundled(name):
    """Load a bundled config by name, e.g. ``bundled("table1_row1")``."""
    path = resources.files("paramgate.configs") / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no bundled config {name!r}", "config")
    return ScenarioConfig.from_json(path.read_text())
