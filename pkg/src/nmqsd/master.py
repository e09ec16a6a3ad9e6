"""Deterministic density-matrix propagators and positivity diagnostics.

Every propagator is a fixed-step RK4 integration of a right-hand side built
by one of the ``*_rhs`` factories. Schemes whose memory operator is itself
an ODE solution (functional zeroth order, exact dissipative model) evolve
``(rho, Obar)`` jointly so RK4 sees the coupled system.

Positivity is reported, never enforced.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from nmqsd.kernels import ConstantCoefficients, Ohmic, _ohmic_g01
from nmqsd.linalg import anticommutator, bloch_vector, commutator, dag, pauli_basis, rk4_step
from nmqsd.obar import functional_zeroth_rhs, riccati_rhs

TOP_LEVEL_THRESHOLD = 1e-3


def lindblad_rhs(model):
    H, L = model.H, model.L
    Ld = dag(L)
    LdL = Ld @ L

    def rhs(t, rho):
        return -1j * commutator(H, rho) + L @ rho @ Ld - 0.5 * anticommutator(LdL, rho)

    return rhs


def first_order_rhs(model, coeffs):
    """Right-hand side of the post-Markov master equation, term by term."""
    H, L = model.H, model.L
    Ld = dag(L)
    LdL = Ld @ L
    HL = commutator(H, L)
    LdH = commutator(Ld, H)
    C = commutator(Ld, L)
    CL = C @ L
    LdC = Ld @ C

    def rhs(t, rho):
        g0, g1, g2 = coeffs(t)
        out = -1j * commutator(H, rho)
        out = out + (g0 + np.conj(g0)) * (L @ rho @ Ld) - g0 * (LdL @ rho) - np.conj(g0) * (rho @ LdL)
        out = out + 1j * g1 * commutator(Ld, HL @ rho) - 1j * np.conj(g1) * commutator(rho @ LdH, L)
        out = out + g2 * commutator(Ld, CL @ rho) + np.conj(g2) * commutator(rho @ LdC, L)
        return out

    return rhs


def obar_master_rhs(model, obar):
    """``-i[H, rho] + [L, rho Obar^dag] + [Obar rho, L^dag]`` for a callable ``obar(t)``."""
    H, L = model.H, model.L
    Ld = dag(L)

    def rhs(t, rho):
        ob = obar(t)
        return -1j * commutator(H, rho) + commutator(L, rho @ dag(ob)) + commutator(ob @ rho, Ld)

    return rhs


def _coupled_rhs(model, obar_rhs):
    H, L = model.H, model.L
    Ld = dag(L)

    def rhs(t, y):
        rho, ob = y
        drho = -1j * commutator(H, rho) + commutator(L, rho @ dag(ob)) + commutator(ob @ rho, Ld)
        return drho, obar_rhs(t, ob)

    return rhs


class QBMCoefficients:
    """Memoized ``(g0R, g0I, g1R, g1I)`` for an Ohmic kernel."""

    def __init__(self, kernel: Ohmic):
        self.kernel = kernel
        self._cache: dict[float, tuple] = {}

    def precompute(self, times) -> None:
        times = np.array([t for t in np.asarray(times, dtype=float) if float(t) not in self._cache])
        if times.size == 0:
            return
        g0, g1 = _ohmic_g01(self.kernel, times)
        for t, a, b in zip(times, g0, g1):
            self._cache[float(t)] = (a.real, a.imag, b.real, b.imag)

    def __call__(self, t: float):
        key = float(t)
        if key not in self._cache:
            self.precompute([key])
        return self._cache[key]


QBM_VARIANTS = ("zeroth", "first", "caldeira_leggett")


def qbm_rhs(H, q, p, variant: str, coeffs=None, eta: float = 0.0, kT: float = 0.0):
    """Quantum Brownian motion right-hand sides.

    zeroth: ``-i[H,rho] - g0R [q,[q,rho]] - i g0I [q^2, rho]``
    first:  zeroth ``+ g1R [q,[p,rho]] + i g1I [q,{p,rho}]``
    caldeira_leggett: ``-i[H,rho] - i(eta/2)[q,{p,rho}] - eta kT [q,[q,rho]]``
    """
    if variant not in QBM_VARIANTS:
        raise ValueError(f"unknown QBM variant {variant!r}")
    q2 = q @ q

    if variant == "caldeira_leggett":
        def rhs(t, rho):
            return (
                -1j * commutator(H, rho)
                - 0.5j * eta * commutator(q, anticommutator(p, rho))
                - eta * kT * commutator(q, commutator(q, rho))
            )
        return rhs

    def rhs(t, rho):
        g0r, g0i, g1r, g1i = coeffs(t)
        out = -1j * commutator(H, rho) - g0r * commutator(q, commutator(q, rho)) - 1j * g0i * commutator(q2, rho)
        if variant == "first":
            out = out + g1r * commutator(q, commutator(p, rho)) + 1j * g1i * commutator(q, anticommutator(p, rho))
        return out

    return rhs


# -- single steps ---------------------------------------------------------------


def step_lindblad(rho, model, dt: float, t: float = 0.0):
    return rk4_step(lindblad_rhs(model), t, rho, dt)


def step_first_order_master(rho, model, coeffs, dt: float, t: float = 0.0):
    return rk4_step(first_order_rhs(model, coeffs), t, rho, dt)


def step_first_order_longtime(rho, model, gamma: float, dt: float, t: float = 0.0):
    return rk4_step(first_order_rhs(model, ConstantCoefficients.ou_long_time(gamma)), t, rho, dt)


def step_functional_zeroth_master(rho, model, obar, dt: float, t: float = 0.0):
    """``obar`` is a callable of time (e.g. a tabulated co-evolved operator)."""
    return rk4_step(obar_master_rhs(model, obar), t, rho, dt)


def step_qbm(rho, H, q, p, variant: str, coeffs, eta: float, kT: float, dt: float, t: float = 0.0):
    return rk4_step(qbm_rhs(H, q, p, variant, coeffs, eta, kT), t, rho, dt)


# -- schemes and propagation ------------------------------------------------------


@dataclass
class MasterScheme:
    """A named right-hand side plus any co-evolved auxiliary initial state."""

    name: str
    rhs: object
    time_dependent: bool
    aux0: object = None
    coeffs: object = None

    @classmethod
    def lindblad(cls, model):
        return cls("lindblad", lindblad_rhs(model), False)

    @classmethod
    def first_order(cls, model, coeffs):
        return cls("first_order", first_order_rhs(model, coeffs), True, coeffs=coeffs)

    @classmethod
    def first_order_longtime(cls, model, gamma: float):
        return cls("first_order_longtime", first_order_rhs(model, ConstantCoefficients.ou_long_time(gamma)), False)

    @classmethod
    def functional_zeroth(cls, model, kernel):
        rhs = _coupled_rhs(model, functional_zeroth_rhs(model, kernel.gamma))
        return cls("functional_zeroth", rhs, True, np.zeros_like(model.L))

    @classmethod
    def exact_dissipative(cls, model, omega: float, lam: float, kernel):
        sm = pauli_basis()[4]
        f_rhs = riccati_rhs(omega, lam, kernel.gamma)

        def obar_rhs(t, ob):
            # Obar stays on the sigma_- ray; evolve its single coefficient
            return f_rhs(t, ob[1, 0]) * sm

        return cls("exact_dissipative", _coupled_rhs(model, obar_rhs), True, np.zeros((2, 2), dtype=complex))

    @classmethod
    def qbm(cls, model, p, variant: str, kernel: Ohmic | None = None, eta: float | None = None, kT: float | None = None):
        coeffs = QBMCoefficients(kernel) if kernel is not None else None
        eta = kernel.eta if eta is None else eta
        kT = kernel.kT if kT is None else kT
        rhs = qbm_rhs(model.H, model.L, p, variant, coeffs, eta, kT)
        return cls(f"qbm_{variant}", rhs, variant != "caldeira_leggett", coeffs=coeffs)


@dataclass
class Diagnostics:
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    bloch_norm: float | None = None


def diagnostics(rho) -> Diagnostics:
    rho = np.asarray(rho)
    tr_err = float(abs(np.trace(rho) - 1))
    herm = float(np.max(np.abs(rho - dag(rho))))
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min())
    bloch = None
    if rho.shape == (2, 2):
        bloch = float(np.linalg.norm(bloch_vector(rho)))
    return Diagnostics(tr_err, herm, min_eig, bloch)


def propagate(scheme: MasterScheme, rho0, dt: float, n_steps: int, stride: int = 1, observables=(), top_levels: int = 0):
    """RK4-integrate ``scheme`` and sample every ``stride`` steps.

    Returns a dict with ``t``, ``rho`` (stack), ``obs`` (real parts of
    ``tr(rho A)``), ``trace_err``, ``herm_err``, ``min_eig`` and, for 2x2,
    ``bloch_norm``. With ``top_levels > 0`` also reports the population of
    the highest ``top_levels`` basis states and a ``trusted`` flag.
    """
    rho = np.asarray(rho0, dtype=complex)
    if scheme.coeffs is not None and hasattr(scheme.coeffs, "precompute"):
        scheme.coeffs.precompute(np.arange(2 * n_steps + 1) * (dt / 2))
    y = (rho, scheme.aux0) if scheme.aux0 is not None else rho
    out_idx = list(range(0, n_steps + 1, stride))
    if out_idx[-1] != n_steps:
        out_idx.append(n_steps)
    rhos = [rho]
    for k in range(n_steps):
        y = rk4_step(scheme.rhs, k * dt, y, dt)
        if (k + 1) in out_idx[1:]:
            r = y[0] if isinstance(y, tuple) else y
            if not np.all(np.isfinite(r)):
                raise FloatingPointError(f"non-finite density matrix at step {k + 1}")
            rhos.append(r)
    rhos = np.array(rhos)
    herm = 0.5 * (rhos + dag(rhos))
    res = {
        "t": dt * np.array(out_idx),
        "rho": rhos,
        "obs": np.array([[np.trace(r @ a).real for a in observables] for r in rhos]).reshape(len(rhos), len(observables)),
        "trace_err": np.abs(np.trace(rhos, axis1=1, axis2=2) - 1),
        "herm_err": np.max(np.abs(rhos - dag(rhos)), axis=(1, 2)),
        "min_eig": np.linalg.eigvalsh(herm).min(axis=1),
    }
    if rho.shape == (2, 2):
        res["bloch_norm"] = np.linalg.norm(bloch_vector(rhos), axis=1)
    if top_levels:
        pops = np.real(np.diagonal(rhos, axis1=1, axis2=2))[:, -top_levels:].sum(axis=1)
        res["top_population"] = pops
        res["trusted"] = bool(np.all(pops <= TOP_LEVEL_THRESHOLD))
    return res


def write_series_csv(path, series, names=()) -> None:
    """``t,obs...,trace_err,herm_err,min_eig[,bloch_norm]``."""
    cols = ["t", *names, "trace_err", "herm_err", "min_eig"]
    has_bloch = "bloch_norm" in series
    if has_bloch:
        cols.append("bloch_norm")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i, t in enumerate(series["t"]):
            row = [t, *series["obs"][i], series["trace_err"][i], series["herm_err"][i], series["min_eig"][i]]
            if has_bloch:
                row.append(series["bloch_norm"][i])
            writer.writerow(["%.12e" % v for v in row])
