"""Exact correlations of a small chain, rescaled with Ising exponents, and a coarse exponent scan.

Run: python demos/collapse_small.py   (about a minute)
"""

import numpy as np

from kzising.scaling import CollapseData, RescalingParams, exponent_scan, fit_scaling_function, rescale
from kzising.schedule import KzSchedule, build_drive, reference_qubit
from kzising.statevector import correlation_profile, run_circuit

L = 13
r = reference_qubit(L)
xs = range(2, 7)
Ts = [1.0, 1.1, 1.2, 1.3, 1.4, 1.5]

rows = []
for T in Ts:
    c = correlation_profile(run_circuit(build_drive(KzSchedule(L, T, 0.1, 2))), r, xs)
    rows += [(T, x, v) for x, v in zip(xs, c)]
a = np.array(rows)
data = CollapseData(a[:, 0], a[:, 1], a[:, 2])

params = RescalingParams(nu=1.0, eta=0.25, z=1.0)
X, Y, dY = rescale(data, params)
fit = fit_scaling_function(X, Y, dY, M=4)
print(f"collapse at nu=1, eta=1/4: chi2/dof = {fit.chi2_per_dof:.3g}, atilde = {fit.atilde:.3g}")
for Xi, Yi in sorted(zip(X, Y))[::5]:
    print(f"  X={Xi:.3f}  Y={Yi:+.4f}  F(X)={fit(Xi):+.4f}")

scan = exponent_scan(data, np.linspace(0.5, 1.5, 21), np.linspace(0.0, 0.5, 21))
print("scan argmin (nu, eta):", scan.argmin, " region cells:", int(scan.region.sum()),
      " contains (1, 0.25):", scan.contains(1.0, 0.25))
