"""Perturbative non-Markovian quantum state diffusion.

Trajectory integrators driven by colored complex Gaussian noise, the
matching "post-Markov" master equations, and brute-force reference
solutions used to cross-check both.

Basis convention for two-level systems: index 0 is the excited state
``|+>``, index 1 is the ground state ``|->``. Oscillators use ascending Fock
index. hbar = 1 everywhere.
"""

from nmqsd.linalg import (
    anticommutator,
    commutator,
    dag,
    delta_op,
    expectation,
    ladder_ops,
    pauli_basis,
)
from nmqsd.kernels import (
    Delta,
    Ohmic,
    OrnsteinUhlenbeck,
    Tabulated,
    coeff_g0,
    coeff_g1,
    coeff_g2,
    coeff_g3_to_g6,
    eval_kernel,
)

__version__ = "0.1.0"
