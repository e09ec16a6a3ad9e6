"""Brute-force reference: system plus a discretized bosonic bath, evolved
unitarily and traced down to the system.

The bath correlation induced by modes ``(omega_k, g_k)`` is
``sum_k g_k^2 exp(-i omega_k tau)``. For an OU kernel the spectrum is
Lorentzian, ``J(w) = gamma^2 / (2 pi (gamma^2 + w^2))``; substituting
``w = gamma tan(theta)`` makes it flat in ``theta``, so Gauss-Legendre nodes in
``theta`` give the modes directly.

The bath always starts in the vacuum.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from nmqsd.kernels import Ohmic, OrnsteinUhlenbeck, eval_kernel
from nmqsd.linalg import EXCITED, dag

log = logging.getLogger(__name__)

MAX_TOTAL_DIM = 4096
RESIDUAL_THRESHOLD = 0.05


class OracleDimensionError(ValueError):
    pass


@dataclass
class DiscretizedBath:
    """Bath modes with frequencies ``omega`` and couplings ``g``.

    ``residual`` is the relative L2 error of the induced correlation against
    the target kernel on ``[0, t_max]`` (``nan`` when there is no target).
    """

    omega: np.ndarray
    g: np.ndarray
    fock_cutoff: int = 2
    residual: float = float("nan")
    t_max: float = float("nan")
    kernel: object = None

    def __post_init__(self):
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if self.omega.shape != self.g.shape:
            raise ValueError("omega and g must have the same length")
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be at least 2")

    @property
    def n_modes(self) -> int:
        return len(self.omega)

    def correlation(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        return np.sum(self.g**2 * np.exp(-1j * self.omega * tau[..., None]), axis=-1)


def fit_residual(bath: DiscretizedBath, kernel, t_max: float, n_points: int = 2001) -> float:
    """Relative L2 distance between the bath correlation and ``kernel`` on ``[0, t_max]``."""
    tau = np.linspace(0.0, t_max, n_points)
    target = eval_kernel(kernel, tau, 0.0)
    diff = bath.correlation(tau) - target
    return float(np.sqrt(np.trapezoid(np.abs(diff) ** 2, tau) / np.trapezoid(np.abs(target) ** 2, tau)))


def bath_from_spectrum(density, lo: float, hi: float, n_modes: int, fock_cutoff: int = 2) -> DiscretizedBath:
    """Gauss-Legendre modes for a spectral density ``density(w)`` on ``[lo, hi]``."""
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    x, w = np.polynomial.legendre.leggauss(n_modes)
    omega = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w * np.asarray(density(omega), dtype=float)
    if np.any(weights < 0):
        raise ValueError("spectral density must be non-negative")
    return DiscretizedBath(omega, np.sqrt(weights), fock_cutoff)


def fit_bath(kernel, n_modes: int, t_max: float, fock_cutoff: int = 2, threshold: float = RESIDUAL_THRESHOLD) -> DiscretizedBath:
    """Place ``n_modes`` modes by Gauss quadrature on the kernel's spectrum.

    Supports OU (Lorentzian, via ``w = gamma tan(theta)``) and zero-temperature
    Ohmic kernels. The fit residual is stored on the result; exceeding
    ``threshold`` is logged, not raised.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    if isinstance(kernel, OrnsteinUhlenbeck):
        x, w = np.polynomial.legendre.leggauss(n_modes)
        theta = 0.5 * np.pi * x
        omega = kernel.gamma * np.tan(theta)
        g2 = kernel.gamma * (0.5 * np.pi * w) / (2 * np.pi)
        bath = DiscretizedBath(omega, np.sqrt(g2), fock_cutoff)
    elif isinstance(kernel, Ohmic):
        if kernel.kT != 0:
            raise ValueError("only zero-temperature baths are supported")
        bath = bath_from_spectrum(lambda w: kernel.eta * w / np.pi, 0.0, kernel.cutoff, n_modes, fock_cutoff)
    else:
        raise TypeError(f"cannot discretize {type(kernel).__name__}")
    bath.kernel = kernel
    bath.t_max = t_max
    bath.residual = fit_residual(bath, kernel, t_max)
    if bath.residual > threshold:
        log.warning("bath fit residual %.3g exceeds %.3g with %d modes", bath.residual, threshold, n_modes)
    return bath


# -- joint Hilbert space ------------------------------------------------------


def joint_basis(dim: int, n_modes: int, fock_cutoff: int, max_excitations: int | None = None):
    """Basis labels ``(system_index, n_1, ..., n_M)``.

    With ``max_excitations`` only states whose bath quanta plus system
    excitation (1 for the excited level) stay within the bound are kept.
    """
    labels = []
    for s in range(dim):
        sys_exc = 1 if (dim == 2 and s == EXCITED) else 0
        budget = None if max_excitations is None else max_excitations - sys_exc
        if budget is not None and budget < 0:
            continue
        if budget is None:
            occ_iter = itertools.product(range(fock_cutoff), repeat=n_modes)
        else:
            occ_iter = _bounded_occupations(n_modes, fock_cutoff, budget)
        for occ in occ_iter:
            labels.append((s, *occ))
    return labels


def _bounded_occupations(n_modes, cutoff, budget):
    """Occupation tuples with at most ``budget`` quanta in total."""
    for quanta in range(budget + 1):
        for modes in itertools.combinations_with_replacement(range(n_modes), quanta):
            occ = [0] * n_modes
            for k in modes:
                occ[k] += 1
            if max(occ, default=0) < cutoff:
                yield tuple(occ)


def total_hamiltonian(model, bath: DiscretizedBath, labels):
    """Sparse ``H + sum_k w_k a_k^dag a_k + sum_k g_k (L a_k^dag + L^dag a_k)``."""
    index = {lab: i for i, lab in enumerate(labels)}
    H, L = np.asarray(model.H), np.asarray(model.L)
    rows, cols, vals = [], [], []

    def add(i, j, v):
        if v != 0:
            rows.append(i)
            cols.append(j)
            vals.append(v)

    for j, lab in enumerate(labels):
        s, occ = lab[0], lab[1:]
        add(j, j, float(np.dot(bath.omega, occ)))
        for s2 in range(H.shape[0]):
            target = index.get((s2, *occ))
            if target is not None:
                add(target, j, H[s2, s])
        for k in range(bath.n_modes):
            # L a_k^dag: raise mode k
            if occ[k] + 1 < bath.fock_cutoff:
                up = list(occ)
                up[k] += 1
                amp = bath.g[k] * np.sqrt(occ[k] + 1)
                for s2 in range(H.shape[0]):
                    target = index.get((s2, *up))
                    if target is not None:
                        add(target, j, amp * L[s2, s])
            # L^dag a_k: lower mode k
            if occ[k] > 0:
                down = list(occ)
                down[k] -= 1
                amp = bath.g[k] * np.sqrt(occ[k])
                Ld = dag(L)
                for s2 in range(H.shape[0]):
                    target = index.get((s2, *down))
                    if target is not None:
                        add(target, j, amp * Ld[s2, s])
    n = len(labels)
    return sparse.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n))


def reduced_density(psi, labels, dim: int) -> np.ndarray:
    """Partial trace of a joint pure state over the bath."""
    bath_index: dict = {}
    amp = {}
    for i, lab in enumerate(labels):
        b = bath_index.setdefault(lab[1:], len(bath_index))
        amp[(lab[0], b)] = i
    mat = np.zeros((dim, len(bath_index)), dtype=complex)
    for (s, b), i in amp.items():
        mat[s, b] = psi[i]
    return mat @ mat.conj().T


@dataclass
class OracleResult:
    t: np.ndarray
    rho: np.ndarray
    norm: np.ndarray
    dim_total: int
    bath: DiscretizedBath = field(repr=False, default=None)

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - 1.0)))

    def excited_population(self) -> np.ndarray:
        return self.rho[:, EXCITED, EXCITED].real

    def write_csv(self, path) -> None:
        dim = self.rho.shape[-1]
        cols = ["t"] + [f"rho_{p}_{i}{j}" for i in range(dim) for j in range(dim) for p in ("re", "im")] + ["norm"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for k, t in enumerate(self.t):
                row = [t]
                for v in self.rho[k].ravel():
                    row += [v.real, v.imag]
                row.append(self.norm[k])
                writer.writerow(["%.12e" % v for v in row])


def evolve_total(
    model,
    bath: DiscretizedBath,
    psi0,
    dt: float,
    n_steps: int,
    stride: int = 1,
    max_excitations: int | None = None,
    method: str = "rk4",
    max_phase: float = 0.01,
) -> OracleResult:
    """Evolve ``psi0 (x) vacuum`` under the total Hamiltonian.

    ``method="rk4"`` takes RK4 substeps sized so that ``||H|| h <= max_phase``;
    ``method="eigh"`` diagonalizes the (time-independent) Hamiltonian and is
    exact up to rounding. ``max_excitations=1`` restricts to the single
    excitation sector, which is exact when ``L`` only lowers the system.
    """
    dim = model.dim
    labels = joint_basis(dim, bath.n_modes, bath.fock_cutoff, max_excitations)
    n_total = len(labels)
    if n_total > MAX_TOTAL_DIM:
        raise OracleDimensionError(f"joint dimension {n_total} exceeds {MAX_TOTAL_DIM}")
    Ht = total_hamiltonian(model, bath, labels)
    psi0 = np.asarray(psi0, dtype=complex)
    state = np.zeros(n_total, dtype=complex)
    vac = (0,) * bath.n_modes
    for i, lab in enumerate(labels):
        if lab[1:] == vac:
            state[i] = psi0[lab[0]]
    if not np.isclose(np.linalg.norm(state), np.linalg.norm(psi0)):
        raise ValueError("initial system state is not representable in the restricted basis")

    out = [0]
    rhos = [reduced_density(state, labels, dim)]
    norms = [np.linalg.norm(state)]

    if method == "eigh":
        evals, evecs = np.linalg.eigh(Ht.toarray())
        coef0 = evecs.conj().T @ state
        for k in range(stride, n_steps + 1, stride):
            psi = evecs @ (np.exp(-1j * evals * k * dt) * coef0)
            out.append(k)
            rhos.append(reduced_density(psi, labels, dim))
            norms.append(np.linalg.norm(psi))
    elif method == "rk4":
        hnorm = sparse.linalg.norm(Ht, 1) if Ht.nnz else 0.0
        n_sub = max(1, int(np.ceil(hnorm * dt / max_phase)))
        h = dt / n_sub
        A = -1j * Ht
        psi = state
        for k in range(1, n_steps + 1):
            for _ in range(n_sub):
                k1 = A @ psi
                k2 = A @ (psi + 0.5 * h * k1)
                k3 = A @ (psi + 0.5 * h * k2)
                k4 = A @ (psi + h * k3)
                psi = psi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            if k % stride == 0:
                out.append(k)
                rhos.append(reduced_density(psi, labels, dim))
                norms.append(np.linalg.norm(psi))
    else:
        raise ValueError(f"unknown method {method!r}")
    return OracleResult(dt * np.array(out), np.array(rhos), np.array(norms), n_total, bath)


# -- single-excitation integro-differential reference ---------------------------


def excited_amplitude(omega: float, lam: float, corr, c0: complex, dt: float, n_steps: int) -> np.ndarray:
    """Excited amplitude of ``H = (omega/2) sz``, ``L = lam sm`` with a vacuum bath.

    Solves ``dc/dt = -i (omega/2) c - lam^2 int_0^t corr(t-s) e^{i omega (t-s)/2} c(s) ds``
    with the implicit trapezoid rule; ``corr`` is the bath correlation as a
    function of the lag. Cost is quadratic in ``n_steps``.
    """
    tau = dt * np.arange(n_steps + 1)
    kern = lam**2 * np.asarray(corr(tau), dtype=complex) * np.exp(0.5j * omega * tau)
    c = np.zeros(n_steps + 1, dtype=complex)
    c[0] = c0
    # trapezoid on both the ODE and the memory integral
    mem_prev = 0j
    a = -0.5j * omega
    for n in range(1, n_steps + 1):
        # memory at t_n excluding the unknown c_n: weights dt (interior), dt/2 at s=0
        hist = kern[n:0:-1] * c[:n]
        mem_known = dt * (hist.sum() - 0.5 * hist[0]) if n > 0 else 0j
        w_self = 0.5 * dt * kern[0]
        rhs_prev = a * c[n - 1] - mem_prev
        c[n] = (c[n - 1] + 0.5 * dt * (rhs_prev - mem_known)) / (1 - 0.5 * dt * (a - w_self))
        mem_prev = mem_known + w_self * c[n]
    return c


def fit_population_error(omega: float, lam: float, kernel, bath: DiscretizedBath, c0: complex, dt: float, n_steps: int) -> float:
    """Largest change in excited population caused by replacing ``kernel``
    with the bath's discrete correlation; the fit's share of any oracle error."""
    exact = excited_amplitude(omega, lam, lambda tau: eval_kernel(kernel, tau, 0.0), c0, dt, n_steps)
    fitted = excited_amplitude(omega, lam, bath.correlation, c0, dt, n_steps)
    return float(np.max(np.abs(np.abs(exact) ** 2 - np.abs(fitted) ** 2)))
