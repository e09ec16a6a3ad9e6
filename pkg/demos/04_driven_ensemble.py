"""
Trajectories for a driven, dephasing qubit
==========================================

H = (omega/2) sx, L = lam sz. There is no closed exact solution here, so
the stochastic ensemble is checked against the first-order master equation
it should reproduce. Trajectories are spread over two worker threads; the
result does not depend on the thread count.
"""

import numpy as np

from nmqsd.ensemble import compare, run_ensemble
from nmqsd.kernels import Coefficients, OrnsteinUhlenbeck
from nmqsd.linalg import pauli_basis, projector, two_level_state
from nmqsd.master import MasterScheme, propagate
from nmqsd.obar import FirstOrder
from nmqsd.qsd import driven_model, run_trajectory

sx, sy, sz, _, _ = pauli_basis()
model = driven_model(1.0, 1.0)
kernel = OrnsteinUhlenbeck(10.0)
psi0 = two_level_state(np.sqrt(3), 1)
dt, n_steps = 0.01, 300

# %%
# One trajectory first. Individual runs wander; only the average is physical.

one = run_trajectory(model, FirstOrder(model, Coefficients(kernel)), kernel, psi0, dt, n_steps, seed=7,
                     observables=[sz])
print("single trajectory <sz>:", np.round(one["obs"][::50, 0].real, 3))

# %%
acc = run_ensemble(model, psi0, dt, n_steps, 500, master_seed=1, method="first_order",
                   coeffs=Coefficients(kernel), kernel=kernel, observables=[sx, sy, sz], stride=30, threads=2)
ref = propagate(MasterScheme.first_order(model, Coefficients(kernel)), projector(psi0), dt, n_steps, 30, [sx, sy, sz])
rep = compare(acc, ref)
print("   t    <sz> ensemble     master")
for k, t in enumerate(acc.t):
    print(f"{t:5.2f}  {acc.mean[k, 2]:+.4f}+-{acc.stderr[k, 2]:.4f}  {ref['obs'][k, 2]:+.4f}")
print(f"max |z| over all components: {rep.max_abs_z:.2f}")
