"""
Quantum Brownian motion
=======================

A harmonic oscillator coupled through its position to an Ohmic bath.
The time-dependent coefficients of the perturbative master equations all
start at zero; at high temperature they approach the diffusion and friction
constants of the Caldeira-Leggett equation, which can break positivity.
"""

import numpy as np

from nmqsd.experiments import caldeira_leggett_witness, random_density_matrices
from nmqsd.kernels import Ohmic, qbm_coeff_table
from nmqsd.linalg import ladder_ops
from nmqsd.master import MasterScheme, propagate
from nmqsd.qsd import qbm_model

eta, cutoff, kT = 0.1, 20.0, 50.0
kernel = Ohmic(eta, cutoff, kT)

# %%
table = qbm_coeff_table(kernel, np.array([0.0, 0.01, 0.05, 0.1, 0.25, 0.5]))
print("     t      g0R        g0I        g1R        g1I")
for row in table:
    print("  ".join(f"{v:9.4f}" for v in row))
print(f"high-T targets: g0R -> eta kT = {eta * kT}, g1I -> -eta/2 = {-eta / 2}")

# %%
# The zeroth-order equation has Lindblad form with a positive rate, so it
# keeps any initial state positive.

n_levels = 30
model = qbm_model(n_levels)
_, p = ladder_ops(n_levels)
scheme = MasterScheme.qbm(model, p, "zeroth", Ohmic(eta, cutoff, 0.0))
worst = min(
    propagate(scheme, rho0, 1e-3, 500, 10, top_levels=2)["min_eig"].min()
    for rho0 in random_density_matrices(5, n_levels, 6)
)
print(f"zeroth order, 5 random states: smallest eigenvalue {worst:.2e}")

# %%
# The Caldeira-Leggett equation is not of Lindblad form. A squeezed vacuum
# exposes it.

min_eig, state = caldeira_leggett_witness(n_levels, eta, kT=1.0)
print(f"Caldeira-Leggett: smallest eigenvalue {min_eig:.2e} for squeezing r={state['r']}, phase={state['phi']:.2f}")
