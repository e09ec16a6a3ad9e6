"""Noise-free approximations of the memory operator ``Obar(t)``.

``Obar(t) = int_0^t alpha(t,s) O(t,s) ds`` replaces the functional
derivative in the QSD equation. Four schemes are available:

* :class:`FirstOrder` - expansion to first order in the memory time,
  ``g0 L - i g1 [H, L] - g2 [L^dag, L] L``.
* :class:`SecondOrder` - adds the ``g3..g6`` terms (carries a caveat: the
  second derivative it rests on may be incomplete).
* :class:`FunctionalZeroth` - zeroth order of the expansion in powers of the
  noise, co-evolved for an OU kernel.
* :class:`ExactDissipative` - exact ``F(t) sigma_-`` for ``H = (w/2) sz``,
  ``L = lam sm`` with an OU kernel.

The first two are pure functions of ``t``; the last two own state and
are advanced with :func:`step_functional_zeroth` /
:func:`step_exact_dissipative`, or tabulated on a grid with :meth:`table`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nmqsd.kernels import OrnsteinUhlenbeck, coeff_g3_to_g6
from nmqsd.linalg import commutator, dag, pauli_basis, rk4_step


def obar_first_order(model, coeffs, t: float) -> np.ndarray:
    g0, g1, g2 = coeffs(t)
    H, L = model.H, model.L
    Ld = dag(L)
    return g0 * L - 1j * g1 * commutator(H, L) - g2 * commutator(Ld, L) @ L


def obar_second_order(model, coeffs, t: float, high=None) -> np.ndarray:
    """First-order operator plus the ``g3..g6`` corrections.

    ``high`` overrides ``(g3, g4, g5, g6)``; by default they are integrated
    from ``coeffs.kernel``.
    """
    if high is None:
        high = coeff_g3_to_g6(coeffs.kernel, t)
    g3, g4, g5, g6 = high
    H, L = model.H, model.L
    Ld = dag(L)
    HL = commutator(H, L)
    LdLL = commutator(Ld, L) @ L
    LdL = Ld @ L
    out = obar_first_order(model, coeffs, t)
    out = out - g3 * commutator(H, HL) - g4 * LdLL
    out = out + 1j * g5 * (commutator(H, LdLL) + commutator(Ld @ HL, L) + commutator(LdL, HL))
    out = out + g6 * (commutator(Ld @ LdLL, L) + commutator(LdL, LdLL))
    return out


class FirstOrder:
    """Stateless first-order scheme bound to a model and coefficient source."""

    def __init__(self, model, coeffs):
        self.model = model
        self.coeffs = coeffs

    def __call__(self, t: float) -> np.ndarray:
        return obar_first_order(self.model, self.coeffs, t)

    def prepare(self, times) -> None:
        self.coeffs.precompute(times)


class SecondOrder(FirstOrder):
    def __init__(self, model, coeffs):
        super().__init__(model, coeffs)
        self._high: dict[float, tuple] = {}

    def __call__(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._high:
            self._high[key] = coeff_g3_to_g6(self.coeffs.kernel, key)
        return obar_second_order(self.model, self.coeffs, t, self._high[key])


def _require_ou(kernel) -> OrnsteinUhlenbeck:
    if not isinstance(kernel, OrnsteinUhlenbeck):
        raise TypeError("this scheme is only defined for an Ornstein-Uhlenbeck kernel")
    return kernel


def functional_zeroth_rhs(model, gamma: float):
    """``dO/dt = (gamma/2) L - gamma O + [-iH, O] - [L^dag O, O]``."""
    H, L = model.H, model.L
    Ld = dag(L)

    def rhs(t, obar):
        return 0.5 * gamma * L - gamma * obar - 1j * commutator(H, obar) - commutator(Ld @ obar, obar)

    return rhs


def riccati_rhs(omega: float, lam: float, gamma: float):
    """``dF/dt = lam gamma/2 + (i omega - gamma) F + lam F^2``."""

    def rhs(t, f):
        return 0.5 * lam * gamma + (1j * omega - gamma) * f + lam * f * f

    return rhs


@dataclass
class FunctionalZeroth:
    """Co-evolved ``Obar_0(t)``; starts from zero."""

    model: object
    kernel: object
    t: float = 0.0
    obar: np.ndarray | None = None

    def __post_init__(self):
        _require_ou(self.kernel)
        if self.obar is None:
            self.obar = np.zeros_like(self.model.L, dtype=complex)

    def __call__(self, t: float) -> np.ndarray:
        if not np.isclose(t, self.t, rtol=0, atol=1e-12):
            raise ValueError(f"scheme is at t={self.t}, asked for t={t}")
        return self.obar

    def table(self, dt: float, n_steps: int) -> "TabulatedObar":
        """Tabulate on the half-step grid so RK4 midpoints are available."""
        rhs = functional_zeroth_rhs(self.model, self.kernel.gamma)
        values = [self.obar]
        obar, t = self.obar, self.t
        h = dt / 2
        for _ in range(2 * n_steps):
            obar = rk4_step(rhs, t, obar, h)
            t += h
            values.append(obar)
        return TabulatedObar(self.t, h, np.array(values))


@dataclass
class ExactDissipative:
    """Exact ``Obar(t) = F(t) sigma_-`` for the dissipative two-level model."""

    omega: float
    lam: float
    kernel: object
    t: float = 0.0
    F: complex = 0j

    def __post_init__(self):
        _require_ou(self.kernel)

    def __call__(self, t: float) -> np.ndarray:
        if not np.isclose(t, self.t, rtol=0, atol=1e-12):
            raise ValueError(f"scheme is at t={self.t}, asked for t={t}")
        return self.F * pauli_basis()[4]

    def table(self, dt: float, n_steps: int) -> "TabulatedObar":
        rhs = riccati_rhs(self.omega, self.lam, self.kernel.gamma)
        sm = pauli_basis()[4]
        vals = [self.F]
        f, t = self.F, self.t
        h = dt / 2
        for _ in range(2 * n_steps):
            f = rk4_step(rhs, t, f, h)
            t += h
            vals.append(f)
        vals = np.array(vals)
        return TabulatedObar(self.t, h, vals[:, None, None] * sm, scalars=vals)


@dataclass
class TabulatedObar:
    """``Obar`` sampled on a uniform grid ``t0 + k h``; exact-grid lookups only."""

    t0: float
    h: float
    values: np.ndarray
    scalars: np.ndarray | None = field(default=None)

    def index(self, t: float) -> int:
        x = (t - self.t0) / self.h
        k = int(round(x))
        if abs(x - k) > 1e-6 or not 0 <= k < len(self.values):
            raise ValueError(f"t={t} is not on the tabulated grid")
        return k

    def __call__(self, t: float) -> np.ndarray:
        return self.values[self.index(t)]

    def prepare(self, times) -> None:
        pass


def step_functional_zeroth(scheme: FunctionalZeroth, dt: float) -> FunctionalZeroth:
    """Advance ``Obar_0`` by one RK4 step; the first-order noise term is dropped."""
    kernel = _require_ou(scheme.kernel)
    rhs = functional_zeroth_rhs(scheme.model, kernel.gamma)
    obar = rk4_step(rhs, scheme.t, scheme.obar, dt)
    return FunctionalZeroth(scheme.model, kernel, scheme.t + dt, obar)


def step_exact_dissipative(scheme: ExactDissipative, dt: float) -> ExactDissipative:
    """Advance the Riccati function ``F`` by one RK4 step."""
    kernel = _require_ou(scheme.kernel)
    f = rk4_step(riccati_rhs(scheme.omega, scheme.lam, kernel.gamma), scheme.t, scheme.F, dt)
    return ExactDissipative(scheme.omega, scheme.lam, kernel, scheme.t + dt, f)


def riccati_fixed_point(omega: float, lam: float, gamma: float) -> complex:
    """Stable root of ``lam F^2 + (i omega - gamma) F + lam gamma/2 = 0``."""
    if lam == 0:
        return 0j
    roots = np.roots([lam, 1j * omega - gamma, 0.5 * lam * gamma])
    # linearization rate is (i omega - gamma) + 2 lam F; pick the decaying root
    rates = (1j * omega - gamma + 2 * lam * roots).real
    return complex(roots[np.argmin(rates)])
