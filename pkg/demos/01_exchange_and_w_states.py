"""
Parametric exchange on a bus-coupled register
==============================================

Modulating the common qubit at the detuning to a partner turns the weak,
bus-mediated coupling into a resonant exchange of strength g J1(eps).
This walk-through builds the measured four-qubit device, compares the
full pulse-level simulation with the effective Bessel model and then
lets one drive entangle three qubits into a W state.
"""
import numpy as np

from paramgate import device as dv
from paramgate import dynamics as dy
from paramgate.qops import QuantumState

dev = dv.table_s3_device()
g = dev.couplings()
print("bus-mediated couplings (MHz):", np.round(dv.to_mhz(g), 3))
print("detunings to the common qubit (MHz):", np.round(dv.to_mhz(dev.detunings), 1))

# %%
# Two qubits: pick eps for half the bare coupling and watch |10> swap into |01>.
pair = dev.subset([1])
g1 = abs(pair.couplings()[0])
eps = dv.calibrate_amplitudes(pair, [1], 0.5 * g1)
t_swap = np.pi / g1  # full swap at pi / (2 g_eff)
drive = dv.drive_from_epsilons(pair, [1], eps, t_swap)
spec = dy.HamiltonianSpec(pair, drive, levels=3)
t = np.linspace(0, t_swap, 201)
full = dy.evolve(spec, QuantumState.fock(spec.scheme, (1, 0)), t)
eff = dy.evolve_effective(pair, drive, QuantumState.fock(dy.HamiltonianSpec(pair, levels=2).scheme, (1, 0)), t)
print(f"\neps = {eps[0]:.3f}, g_eff = {dv.to_mhz(0.5 * g1):.3f} MHz")
print(f"population moved after {t_swap * 1e9:.0f} ns: full {full.populations[-1, 1]:.4f}, "
      f"effective {eff.populations[-1, 1]:.4f}")
print(f"largest full/effective difference {np.max(np.abs(full.populations - eff.populations)):.4f}")
print(f"half-swap (sqrt(iSWAP)) time {full.half_swap_time() * 1e9:.1f} ns, "
      f"closed form {dv.gate_time(0.5 * g1) * 1e9:.1f} ns")

# %%
# Three qubits at once. With equal effective couplings the common qubit
# shares its excitation evenly; the closed-form time and a short local
# search give the W state.
res = dy.generate_w_state(dev, 2)
occ = res.state.scheme.occupations()
pops = [np.real(np.diag(res.state.density)[occ[:, j] == 1].sum()) for j in range(3)]
print(f"\nW3 after {res.gate_time * 1e9:.1f} ns: fidelity {res.fidelity:.5f}, populations {np.round(pops, 4)}")
print("tone amplitudes (MHz):", [round(tone.amplitude / (2e6 * np.pi), 2) for tone in res.drive.tones])
