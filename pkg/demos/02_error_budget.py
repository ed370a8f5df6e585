"""
Where the infidelity comes from
===============================

The error budget switches the noise channels off one at a time:
decoherence (T1 and pure dephasing), static ZZ and quasi-static 1/f flux
noise on the common qubit. Here we compare the two-qubit W-state budget
with the closed-form decoherence estimate and print a small table.
"""
import numpy as np

from paramgate import config, errors

cfg = config.bundled("table1_row1")
dev, drive = cfg.device(), cfg.drive()

# the closed form needs only the gate time and the coherence times
t_gate = drive.duration
print(f"closed-form decoherence infidelity at {t_gate * 1e9:.0f} ns: "
      f"{100 * errors.analytic_decoherence_infidelity(2, t_gate, dev.t1, dev.tphi):.3f}%")

# the flux channel is Monte-Carlo over Gaussian offsets with this width
sigma = errors.quasi_static_sigma(dev.flux_noise_amp**2, t_gate)
print(f"quasi-static flux sigma {sigma * 1e6:.2f} uPhi0 "
      f"-> {sigma * dev.flux_slope / (2e3 * np.pi):.1f} kHz on the common qubit")

# a reduced number of realizations keeps the demo quick; the stderr shows the cost
budget = errors.error_budget(dev, drive, "state", mc_realizations=200, seed=1, label="2Q W (Q0-Q1)")
print()
print(errors.format_budget_table([budget]))
print(f"\nflux contribution standard error {budget.eps_flux_stderr:.1e}")
print(f"gate time found by the local search {budget.gate_time * 1e9:.1f} ns")
