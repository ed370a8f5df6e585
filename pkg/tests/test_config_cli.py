import copy
import csv
import json

import numpy as np
import pytest

from paramgate import cli
from paramgate.config import ScenarioConfig, bundled, bundled_names, validate
from paramgate.exceptions import ConfigError


def _raw(name):
    return copy.deepcopy(bundled(name).to_dict())


def test_bundled_configs_validate():
    names = bundled_names()
    for required in ("fig3_2q", "fig3_4q", "table1_row1", "table1_row4", "figS6", "cryoscope",
                     "predistort_figS5", "xeb_ideal"):
        assert required in names
    for name in names:
        validate(bundled(name).to_dict())


def test_unknown_key_reports_path():
    raw = _raw("fig3_2q")
    raw["device"]["qubits"][2]["T1_ms"] = 3.0
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict(raw)
    assert "device.qubits[2]" in str(exc.value)
    assert "T1_ms" in str(exc.value)


def test_bad_value_reports_path():
    raw = _raw("fig3_2q")
    raw["drive"]["duration_ns"] = -5
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict(raw)
    assert "drive.duration_ns" in str(exc.value)


def test_round_trip():
    for name in bundled_names():
        cfg = bundled(name)
        again = ScenarioConfig.from_json(cfg.to_json())
        assert again == cfg
        assert again.to_json() == cfg.to_json()


def test_device_section_units():
    dev = bundled("fig3_2q").device()
    assert dev.n_qubits == 2
    assert dev.qubit_freqs[0] == pytest.approx(2 * np.pi * 5.0408e9)


def test_list_command(capsys):
    assert cli.main(["list"]) == 0
    assert "figS6" in capsys.readouterr().out


def test_exit_code_validation(tmp_path, capsys):
    raw = _raw("cryoscope")
    raw["run"]["bogus"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw))
    assert cli.main(["cryoscope", "--config", str(path)]) == 2
    assert "run" in capsys.readouterr().err
    # command mismatch is a validation error as well
    assert cli.main(["xeb", "--config", "cryoscope"]) == 2
    assert cli.main(["cryoscope"]) == 2


def test_exit_code_numerical_failure(tmp_path):
    raw = _raw("cryoscope")
    raw["run"]["amplitude_Phi0"] = 0.0
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(raw))
    # a zero-amplitude pulse leaves nothing to demodulate
    assert cli.main(["cryoscope", "--config", str(path)]) == 3


def test_cryoscope_outputs_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["cryoscope", "--config", "cryoscope", "--seed", "3", "--out", str(out)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "summary.json" in files
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_xeb_ideal_is_one(tmp_path):
    summary = cli.run_config(bundled("xeb_ideal"), 0, tmp_path)
    assert np.allclose(summary["mean_fidelity"], 1.0)


def test_exchange_zero_drive_is_flat(tmp_path):
    raw = _raw("fig3_2q")
    raw["drive"]["tones"][0]["amplitude_MHz"] = 0.0
    raw["drive"]["duration_ns"] = 200
    raw["run"]["n_points"] = 101
    raw["run"]["decoherence"] = False
    summary = cli.run_config(ScenarioConfig.from_dict(raw), 0, tmp_path)
    assert summary["half_swap_time_ns"] is None
    rows = list(csv.reader(open(tmp_path / "trajectory.csv")))[1:]
    pops = np.array([[float(v) for v in r[1:]] for r in rows])
    assert np.ptp(pops, axis=0).max() < 1e-3


def test_multiple_configs_with_threads(tmp_path, capsys):
    code = cli.main(["--config", "xeb_ideal", "--config", "cryoscope", "--threads", "2",
                     "--out", str(tmp_path)])
    assert code == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert {l["config"] for l in lines} == {"xeb_ideal", "cryoscope"}
    assert (tmp_path / "cryoscope" / "summary.json").exists()
