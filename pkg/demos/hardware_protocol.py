"""Seven qubits, two first-order steps, 32768 shots: correlations with and without noise.

Run: python demos/hardware_protocol.py
"""

from kzising.noise import NoiseSpec, sample_ensemble
from kzising.schedule import KzSchedule, build_drive, reference_qubit
from kzising.statevector import correlation_exact, correlation_sampled, run_circuit, sample

L, N = 7, 32768
r = reference_qubit(L)

for T in (0.5, 0.75, 1.0):
    sched = KzSchedule(L, T, T / 2, order=1)  # two steps of length T/2
    circ = build_drive(sched)
    clean = sample(run_circuit(circ), N, seed=1)
    noisy = sample_ensemble(circ, NoiseSpec(0.08, master_seed=1, trajectories=1024), N)
    print(f"T={T}  gates={circ.gate_count}")
    for x in (1, 2, 3):
        a, b = correlation_sampled(clean, r, x), correlation_sampled(noisy, r, x)
        print(f"  x={x}  p=0: {a.value:+.4f} +- {a.stderr:.4f}   p=0.08: {b.value:+.4f} +- {b.stderr:.4f}")

# x=3 is outside the light cone of two steps, so it reads zero up to shot noise
exact = correlation_exact(run_circuit(build_drive(KzSchedule(L, 1.0, 0.5, 1))), r, 3).value
print(f"exact x=3 value at T=1: {exact:.1e}")
