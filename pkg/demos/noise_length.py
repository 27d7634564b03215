"""Noise-induced correlation length: ratio of noisy to noiseless correlations and xi(p).

Run: python demos/noise_length.py   (about a minute)
"""

import warnings

import numpy as np

from kzising.noise import NoiseSpec, xi_experiment
from kzising.scaling import extract_xi, fit_power_law
from kzising.schedule import KzSchedule

sched = KzSchedule(11, 2.0, 0.1, 2)
ps = [5e-4, 1e-3, 2e-3, 4e-3]
tab = xi_experiment(sched, NoiseSpec(0.0, master_seed=7, trajectories=400), p_grid=ps)

xi = []
for i, p in enumerate(tab.grid):
    keep = ~tab.excluded
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = extract_xi(tab.xs[keep], tab.ratio[i][keep], tab.stderr[i][keep], (1, 5), sched.T)
    xi.append(f.xi)
    print(f"p={p:.0e}  ratios={np.round(tab.ratio[i][keep], 3).tolist()}  xi={f.xi:.1f}")

pl = fit_power_law(ps, xi)
print(f"xi ~ p^k with k = {pl.exponent:.2f} +- {pl.exponent_stderr:.2f}")
