"""Dense complex matrix helpers shared by every other module.

State vectors may carry leading batch axes: a ``psi`` of shape
``(n_traj, dim)`` is treated as ``n_traj`` independent states, which is how
the ensemble layer vectorizes trajectories.
"""

from __future__ import annotations

import numpy as np

# Default elementwise tolerance for algebraic identities.
ATOL = 1e-10

EXCITED = 0
GROUND = 1


def _check_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")


def dag(a: np.ndarray) -> np.ndarray:
    """Hermitian conjugate over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``ab - ba``."""
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b + b @ a


def apply(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Act with ``op`` on (possibly batched) state vectors."""
    if psi.shape[-1] != op.shape[-1]:
        raise ValueError(f"dimension mismatch: operator {op.shape}, state {psi.shape}")
    return psi @ op.T


def braket(phi: np.ndarray, chi: np.ndarray) -> np.ndarray:
    """Inner product ``<phi|chi>`` along the last axis."""
    return np.einsum("...i,...i->...", np.conj(phi), chi)


def expectation(op: np.ndarray, psi: np.ndarray) -> complex | np.ndarray:
    """Quantum average ``<psi|op|psi>`` of a normalized state.

    Returns a complex scalar for a single state, an array for a batch.
    """
    return braket(psi, apply(op, psi))


def delta_op(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``op - <op> I`` for a single normalized state."""
    _check_square(op)
    psi = np.asarray(psi)
    if psi.ndim != 1:
        raise ValueError("delta_op takes a single state; use expectation() for batches")
    return op - expectation(op, psi) * np.eye(op.shape[0])


def norm(psi: np.ndarray) -> np.ndarray:
    return np.linalg.norm(psi, axis=-1)


def normalize(psi: np.ndarray) -> np.ndarray:
    return psi / norm(psi)[..., None]


def projector(psi: np.ndarray) -> np.ndarray:
    """``|psi><psi|``; batched inputs give a stack of projectors."""
    return np.einsum("...i,...j->...ij", psi, np.conj(psi))


def pauli_basis():
    """Return ``(sx, sy, sz, sp, sm)`` in the ``{|+>, |->}`` ordering."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    sp = (sx + 1j * sy) / 2
    sm = (sx - 1j * sy) / 2
    return sx, sy, sz, sp, sm


def annihilation(n_levels: int) -> np.ndarray:
    if n_levels < 2:
        raise ValueError("need at least two levels")
    return np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)


def ladder_ops(n_levels: int):
    """Position and momentum of a truncated oscillator, ``(q, p)``.

    ``q = (a + a^dag)/sqrt(2)`` and ``p = i(a^dag - a)/sqrt(2)``.
    """
    a = annihilation(n_levels)
    ad = a.conj().T
    q = (a + ad) / np.sqrt(2)
    p = 1j * (ad - a) / np.sqrt(2)
    return q, p


def two_level_state(excited: complex, ground: complex) -> np.ndarray:
    """Normalized ``excited|+> + ground|->``."""
    psi = np.zeros(2, dtype=complex)
    psi[EXCITED] = excited
    psi[GROUND] = ground
    return normalize(psi)


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """``(tr rho sx, tr rho sy, tr rho sz)``; works on stacks of 2x2 matrices."""
    sx, sy, sz, _, _ = pauli_basis()
    return np.stack(
        [np.einsum("...ij,ji->...", rho, s).real for s in (sx, sy, sz)], axis=-1
    )


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float | np.ndarray:
    """``0.5 * ||rho1 - rho2||_1`` for Hermitian arguments (stackable)."""
    diff = rho1 - rho2
    diff = 0.5 * (diff + dag(diff))
    return 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=-1)


def is_hermitian(a: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - dag(a)), initial=0.0) <= atol)


def rk4_step(rhs, t: float, y, dt: float):
    """One classical Runge-Kutta step for ``y' = rhs(t, y)``.

    ``y`` may be an array or a tuple of arrays (co-evolved state).
    """
    if isinstance(y, tuple):
        def axpy(a, x):
            return tuple(yi + a * xi for yi, xi in zip(y, x))

        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, axpy(dt / 2, k1))
        k3 = rhs(t + dt / 2, axpy(dt / 2, k2))
        k4 = rhs(t + dt, axpy(dt, k3))
        return tuple(
            yi + dt / 6 * (a + 2 * b + 2 * c + d) for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
        )
    k1 = rhs(t, y)
    k2 = rhs(t + dt / 2, y + dt / 2 * k1)
    k3 = rhs(t + dt / 2, y + dt / 2 * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
