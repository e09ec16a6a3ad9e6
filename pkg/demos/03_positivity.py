"""
When a master equation stops describing a state
================================================

For H = (omega/2) sx, L = lam sz with a slow bath, freezing the memory
coefficients at their long-time values gives a master equation whose Bloch
vector leaves the unit ball at short times. Keeping the coefficients time
dependent avoids it.
"""

import numpy as np

from nmqsd.kernels import Coefficients, OrnsteinUhlenbeck
from nmqsd.linalg import projector, two_level_state
from nmqsd.master import MasterScheme, propagate
from nmqsd.qsd import driven_model

gamma = 0.5
model = driven_model(omega=1.0, lam=1.0)
rho0 = projector(two_level_state(1, 0))

timed = propagate(MasterScheme.first_order(model, Coefficients(OrnsteinUhlenbeck(gamma))), rho0, 0.01, 1000, 20)
frozen = propagate(MasterScheme.first_order_longtime(model, gamma), rho0, 0.01, 1000, 20)

print("   t   |bloch| time-dependent   |bloch| frozen   min eig frozen")
for k in range(0, len(timed["t"]), 5):
    print(f"{timed['t'][k]:5.2f}   {timed['bloch_norm'][k]:.5f}                {frozen['bloch_norm'][k]:.5f}         "
          f"{frozen['min_eig'][k]:+.4f}")

k = int(np.argmax(frozen["bloch_norm"]))
print(f"frozen coefficients: largest Bloch norm {frozen['bloch_norm'][k]:.4f} at t = {frozen['t'][k]:.2f}")
print(f"time-dependent coefficients: largest Bloch norm {timed['bloch_norm'].max():.6f}")
