"""
A decaying two-level atom with memory
=====================================

H = (omega/2) sz, L = lam sm. For an exponential bath this model has an
exact master equation, so it is the natural place to see how well the
first-order stochastic equation and the Markov approximation do.
"""

import numpy as np

from nmqsd.ensemble import compare, run_ensemble
from nmqsd.kernels import Coefficients, OrnsteinUhlenbeck
from nmqsd.linalg import pauli_basis, projector, two_level_state
from nmqsd.master import MasterScheme, propagate
from nmqsd.qsd import dissipative_model

sx, sy, sz, sp, sm = pauli_basis()
model = dissipative_model(omega=1.0, lam=1.0)
psi0 = two_level_state(1j, 1)          # excited amplitude i, ground amplitude 1
dt, n_steps, stride = 0.01, 300, 25

# %%
# Short memory (gamma = 10). Average 500 first-order trajectories and
# compare with the exact master equation.

kernel = OrnsteinUhlenbeck(10.0)
acc = run_ensemble(model, psi0, dt, n_steps, 500, master_seed=1, method="first_order",
                   coeffs=Coefficients(kernel), kernel=kernel, observables=[sx, sy, sz], stride=stride)
exact = propagate(MasterScheme.exact_dissipative(model, 1.0, 1.0, kernel), projector(psi0), dt, n_steps, stride, [sx, sy, sz])
rep = compare(acc, exact)

print("   t    <sx> QSD   +-SE     exact")
for k in range(0, len(acc.t), 2):
    print(f"{acc.t[k]:5.2f}  {acc.mean[k, 0]:+.4f}  {acc.stderr[k, 0]:.4f}  {exact['obs'][k, 0]:+.4f}")
print(f"max |z| = {rep.max_abs_z:.2f}, max trace distance = {rep.max_trace_distance:.4f}")

# %%
# Long memory (gamma = 1). The Markov (Lindblad) answer is now clearly off.
# The first-order equation is better, but its truncation error is visible
# next to the exact result.

kernel = OrnsteinUhlenbeck(1.0)
psi0 = two_level_state(3, 1)
refs = {
    "exact": MasterScheme.exact_dissipative(model, 1.0, 1.0, kernel),
    "first-order": MasterScheme.first_order(model, Coefficients(kernel)),
    "lindblad": MasterScheme.lindblad(model),
}
series = {name: propagate(s, projector(psi0), dt, n_steps, stride, [sx]) for name, s in refs.items()}
for name, s in series.items():
    gap = np.max(np.abs(s["obs"][:, 0] - series["exact"]["obs"][:, 0]))
    print(f"{name:12s} max |<sx> - exact| = {gap:.3f}")
