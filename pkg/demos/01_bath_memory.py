"""
Bath memory and colored noise
=============================

How the exponential correlation function feeds the memory coefficients
g0, g1, g2, and what the sampled noise looks like.
"""

import numpy as np

from nmqsd.kernels import Coefficients, OrnsteinUhlenbeck, coeff_g3_to_g6
from nmqsd.noise import sample_path

# %%
# An exponentially decaying correlation alpha(t, s) = (gamma/2) exp(-gamma |t - s|).
# Its memory time is 1/gamma.

kernel = OrnsteinUhlenbeck(gamma=10.0)
coeffs = Coefficients(kernel)

for t in (0.0, 0.05, 0.1, 0.3, 1.0):
    g0, g1, g2 = coeffs(t)
    print(f"t={t:4.2f}  g0={g0.real:.5f}  g1={g1.real:.6f}  g2={g2.real:.6f}")

# %%
# All three start at zero and settle to 1/2, 1/(2 gamma), 1/(4 gamma).
# The long-memory coefficients g1, g2 carry the non-Markovian correction.

print("long time:", np.round(np.real(coeffs(5.0)), 6), "expected", [0.5, 1 / 20, 1 / 40])

# %%
# The second-order coefficients are obtained by nested quadrature and
# scale like the square of the memory time.

for gamma in (10.0, 20.0):
    g3, g4, g5, g6 = coeff_g3_to_g6(OrnsteinUhlenbeck(gamma), 2.0)
    print(f"gamma={gamma:4.0f}  g3={g3.real:.6f}  g4={g4.real:.6f}  g5={g5.real:.6f}  g6={g6.real:.6f}")

# %%
# A sampled noise path: complex, unit-free, with E[z_t conj(z_s)] = alpha(t, s).

path = sample_path(kernel, dt=0.01, n_steps=5, seed=1)
print(np.round(path.values, 3))

paths = np.array([sample_path(kernel, 0.01, 50, seed=s).values for s in range(4000)])
lag = 5
emp = np.mean(paths[:, 20 + lag] * np.conj(paths[:, 20]))
print("empirical correlation at lag 0.05:", np.round(emp, 3), " target:", round(5 * np.exp(-0.5), 3))
