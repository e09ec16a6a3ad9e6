"""Stochastic Schrodinger equation integrators.

All steppers take state vectors with a leading batch axis ``(n, dim)`` so the
ensemble layer can push many trajectories through one set of matrix
products. A single trajectory is just ``n = 1``.

The colored-noise equations are random ODEs; they are stepped with Heun's
predictor-corrector, evaluating the noise at both ends of the step. The
white-noise (Markov) equation is in Stratonovich form, so the same Heun step
with the increment ``dW/dt`` held fixed over the step converges to the right
solution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from nmqsd.kernels import OrnsteinUhlenbeck
from nmqsd.linalg import (
    apply,
    braket,
    commutator,
    dag,
    is_hermitian,
    ladder_ops,
    norm,
    pauli_basis,
)
from nmqsd.noise import ShiftAccumulator, complex_normal, make_rng, sample_path, update_shift
from nmqsd.obar import obar_first_order


class TrajectoryError(FloatingPointError):
    """A trajectory produced NaN or Inf."""

    def __init__(self, step: int, rows=None):
        msg = f"non-finite state at step {step}"
        if rows is not None:
            msg += f" (trajectories {list(rows)[:10]})"
        super().__init__(msg)
        self.step = step
        self.rows = rows


@dataclass(frozen=True)
class Model:
    """System Hamiltonian ``H`` and coupling operator ``L``."""

    H: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        L = np.asarray(self.L, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape != L.shape:
            raise ValueError(f"H and L must be square and the same size: {H.shape}, {L.shape}")
        if not is_hermitian(H, 1e-12):
            raise ValueError("H must be Hermitian")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "L", L)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def dissipative_model(omega: float, lam: float) -> Model:
    """``H = (omega/2) sz``, ``L = lam sm``."""
    _, _, sz, _, sm = pauli_basis()
    return Model(0.5 * omega * sz, lam * sm)


def driven_model(omega: float, lam: float) -> Model:
    """``H = (omega/2) sx``, ``L = lam sz``."""
    sx, _, sz, _, _ = pauli_basis()
    return Model(0.5 * omega * sx, lam * sz)


def qbm_model(n_levels: int, omega0: float = 1.0) -> Model:
    """Truncated harmonic oscillator, ``H = omega0 (n + 1/2)``, ``L = q``."""
    q, _ = ladder_ops(n_levels)
    H = np.diag(omega0 * (np.arange(n_levels) + 0.5)).astype(complex)
    return Model(H, q)


def default_dt(gamma: float | None, omega: float, lam: float) -> float:
    """``min(1e-2, 0.1/gamma, 0.1/omega, 0.1/lam^2)``, skipping zero scales."""
    cands = [1e-2]
    for rate in (gamma, abs(omega), lam * lam):
        if rate:
            cands.append(0.1 / rate)
    return min(cands)


@dataclass
class TrajectoryState:
    psi: np.ndarray
    t: float
    shift: ShiftAccumulator
    scheme: object = None
    step: int = 0


# -- drifts -------------------------------------------------------------------


def _mean(psi, op_psi, nrm2):
    return braket(psi, op_psi) / nrm2


def _nonlinear_drift(model, psi, obar, ztilde):
    """``-iH psi + D(L) psi z~ - D(L^dag) O psi + <D(L^dag) O> psi``."""
    nrm2 = braket(psi, psi).real
    Lpsi = apply(model.L, psi)
    mean_l = _mean(psi, Lpsi, nrm2)
    Opsi = apply(obar, psi)
    X = apply(dag(model.L), Opsi) - np.conj(mean_l)[:, None] * Opsi
    mean_x = _mean(psi, X, nrm2)
    return (
        -1j * apply(model.H, psi)
        + (Lpsi - mean_l[:, None] * psi) * ztilde[:, None]
        - X
        + mean_x[:, None] * psi
    )


def _first_order_drift(model, psi, g, ztilde):
    """Drift with the first-order memory terms written out one by one."""
    g0, g1, g2 = g
    H, L = model.H, model.L
    Ld = dag(L)
    nrm2 = braket(psi, psi).real
    Lpsi = apply(L, psi)
    mean_l = _mean(psi, Lpsi, nrm2)
    mean_ld = np.conj(mean_l)

    def centered(A):
        # (D(L^dag) A - <D(L^dag) A>) psi
        Apsi = apply(A, psi)
        B = apply(Ld, Apsi) - mean_ld[:, None] * Apsi
        return B - _mean(psi, B, nrm2)[:, None] * psi

    out = -1j * apply(H, psi) + (Lpsi - mean_l[:, None] * psi) * ztilde[:, None]
    out = out - g0 * centered(L)
    if g1 != 0:
        out = out + 1j * g1 * centered(commutator(H, L))
    if g2 != 0:
        out = out + g2 * centered(commutator(Ld, L) @ L)
    return out


def _linear_drift(model, psi, obar, z):
    return -1j * apply(model.H, psi) + apply(model.L, psi) * z[:, None] - apply(dag(model.L) @ obar, psi)


def _markov_drift(model, psi, xi):
    """Stratonovich drift ``-iH + D(L)(xi + <L^dag>) - (1/2) D(L^dag L)``."""
    nrm2 = braket(psi, psi).real
    L = model.L
    LdL = dag(L) @ L
    Lpsi = apply(L, psi)
    mean_l = _mean(psi, Lpsi, nrm2)
    LdLpsi = apply(LdL, psi)
    mean_ldl = _mean(psi, LdLpsi, nrm2)
    return (
        -1j * apply(model.H, psi)
        + (Lpsi - mean_l[:, None] * psi) * (xi + np.conj(mean_l))[:, None]
        - 0.5 * (LdLpsi - mean_ldl[:, None] * psi)
    )


def _mean_ldag(model, psi):
    nrm2 = braket(psi, psi).real
    return np.conj(_mean(psi, apply(model.L, psi), nrm2))


def _check_finite(psi, step):
    bad = ~np.all(np.isfinite(psi), axis=-1)
    if np.any(bad):
        raise TrajectoryError(step, np.flatnonzero(bad))


def _renormalize(psi):
    return psi / norm(psi)[:, None]


def _as_batch(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi[None, :] if psi.ndim == 1 else psi


def _as_noise(z, n):
    z = np.asarray(z, dtype=complex)
    return np.broadcast_to(z, (n,)) if z.ndim == 0 else z


# -- steppers -----------------------------------------------------------------


def _heun_shifted(state, model, z, z_next, dt, drift_at):
    """Shared Heun step for the norm-preserving colored-noise equations."""
    psi = _as_batch(state.psi)
    n = psi.shape[0]
    z = _as_noise(z, n)
    z_next = z if z_next is None else _as_noise(z_next, n)
    t, t1 = state.t, state.t + dt

    ld0 = _mean_ldag(model, psi)
    f1 = drift_at(psi, t, z + state.shift.memory)
    pred = psi + dt * f1
    shift_pred = update_shift(state.shift, ld0, dt, _mean_ldag(model, pred))
    f2 = drift_at(pred, t1, z_next + shift_pred.memory)
    new = psi + 0.5 * dt * (f1 + f2)
    _check_finite(new, state.step + 1)
    new = _renormalize(new)
    shift = update_shift(state.shift, ld0, dt, _mean_ldag(model, new))
    return TrajectoryState(new, t1, shift, state.scheme, state.step + 1)


def step_nonlinear_qsd(state: TrajectoryState, model: Model, z, dt: float, z_next=None) -> TrajectoryState:
    """One Heun step of the norm-preserving equation with the state's Obar scheme.

    ``z`` is the raw (unshifted) noise at ``state.t``; ``z_next`` the value at
    ``state.t + dt``. Without ``z_next`` the noise is held constant over the
    step.
    """
    scheme = state.scheme

    def drift_at(psi, t, ztilde):
        return _nonlinear_drift(model, psi, scheme(t), ztilde)

    return _heun_shifted(state, model, z, z_next, dt, drift_at)


def step_first_order_qsd(state: TrajectoryState, model: Model, coeffs, z, dt: float, z_next=None) -> TrajectoryState:
    """As :func:`step_nonlinear_qsd` with the first-order memory terms expanded."""

    def drift_at(psi, t, ztilde):
        return _first_order_drift(model, psi, coeffs(t), ztilde)

    return _heun_shifted(state, model, z, z_next, dt, drift_at)


def step_linear_qsd(psi, model: Model, coeffs, z, dt: float, t: float = 0.0, z_next=None, obar=None):
    """Heun step of the norm-losing linear equation; no renormalization.

    ``obar`` overrides the first-order operator (a callable of ``t``).
    """
    psi = _as_batch(psi)
    n = psi.shape[0]
    z = _as_noise(z, n)
    z_next = z if z_next is None else _as_noise(z_next, n)
    ob = obar if obar is not None else (lambda s: obar_first_order(model, coeffs, s))
    f1 = _linear_drift(model, psi, ob(t), z)
    pred = psi + dt * f1
    f2 = _linear_drift(model, pred, ob(t + dt), z_next)
    new = psi + 0.5 * dt * (f1 + f2)
    _check_finite(new, -1)
    return new


def step_markov_qsd(state: TrajectoryState, model: Model, dW, dt: float) -> TrajectoryState:
    """Stratonovich Heun step of Markov QSD; ``dW`` has ``M[|dW|^2] = dt``."""
    psi = _as_batch(state.psi)
    xi = _as_noise(dW, psi.shape[0]) / dt
    f1 = _markov_drift(model, psi, xi)
    pred = psi + dt * f1
    f2 = _markov_drift(model, pred, xi)
    new = psi + 0.5 * dt * (f1 + f2)
    _check_finite(new, state.step + 1)
    return TrajectoryState(_renormalize(new), state.t + dt, state.shift, state.scheme, state.step + 1)


# -- driver -------------------------------------------------------------------

METHODS = ("nonlinear", "first_order", "linear", "markov")


def _prepared_scheme(scheme, dt, n_steps):
    """Stateful schemes are deterministic: tabulate them once for all rows."""
    if hasattr(scheme, "table"):
        return scheme.table(dt, n_steps)
    if hasattr(scheme, "prepare"):
        scheme.prepare(dt * np.arange(n_steps + 1))
    return scheme


def integrate_batch(
    model: Model,
    psi0,
    dt: float,
    n_steps: int,
    noise,
    method: str = "nonlinear",
    scheme=None,
    coeffs=None,
    kernel=None,
    observables=(),
    stride: int = 1,
    keep_states: bool = False,
):
    """Integrate a batch of trajectories against pre-drawn noise.

    ``noise`` has shape ``(n, n_steps + 1)``: colored noise samples on the
    grid, or for ``method="markov"`` Wiener increments in the first
    ``n_steps`` columns. Returns a dict with ``t`` (output times), ``obs``
    of shape ``(n, n_out, n_obs)``, ``norm`` of shape ``(n, n_out)`` and,
    when requested, ``states`` of shape ``(n, n_out, dim)``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    noise = np.atleast_2d(np.asarray(noise, dtype=complex))
    n = noise.shape[0]
    psi = np.broadcast_to(_as_batch(psi0), (n, model.dim)).astype(complex)
    if method != "linear":
        psi = _renormalize(psi)
    if method == "nonlinear" and scheme is None:
        raise ValueError("nonlinear QSD needs an Obar scheme")
    if method in ("first_order", "linear") and coeffs is None:
        raise ValueError(f"{method} QSD needs coefficients")
    if method == "first_order":
        coeffs.precompute(dt * np.arange(n_steps + 1))
    if method == "linear":
        coeffs.precompute(dt * np.arange(n_steps + 1))
    if scheme is not None:
        scheme = _prepared_scheme(scheme, dt, n_steps)

    out_idx = list(range(0, n_steps + 1, stride))
    if out_idx[-1] != n_steps:
        out_idx.append(n_steps)
    n_out = len(out_idx)
    obs = np.empty((n, n_out, len(observables)), dtype=complex)
    norms = np.empty((n, n_out))
    states = np.empty((n, n_out, model.dim), dtype=complex) if keep_states else None

    def record(j, psi):
        nrm = norm(psi)
        norms[:, j] = nrm
        unit = psi / nrm[:, None]
        for m, op in enumerate(observables):
            obs[:, j, m] = braket(unit, apply(op, unit))
        if keep_states:
            states[:, j] = psi

    kernel = kernel if kernel is not None else getattr(coeffs, "kernel", None)
    state = TrajectoryState(psi, 0.0, ShiftAccumulator(kernel, np.zeros(n, dtype=complex)), scheme)
    record(0, psi)
    j = 1
    for k in range(n_steps):
        t = k * dt
        if method == "nonlinear":
            state.t = t
            state = step_nonlinear_qsd(state, model, noise[:, k], dt, noise[:, k + 1])
        elif method == "first_order":
            state.t = t
            state = step_first_order_qsd(state, model, coeffs, noise[:, k], dt, noise[:, k + 1])
        elif method == "markov":
            state = step_markov_qsd(state, model, noise[:, k], dt)
        else:
            try:
                new = step_linear_qsd(state.psi, model, coeffs, noise[:, k], dt, t, noise[:, k + 1])
            except TrajectoryError as exc:
                raise TrajectoryError(k + 1, exc.rows) from None
            state = TrajectoryState(new, t + dt, state.shift, scheme, k + 1)
        if j < n_out and out_idx[j] == k + 1:
            record(j, state.psi)
            j += 1
    result = {"t": dt * np.array(out_idx), "obs": obs, "norm": norms}
    if keep_states:
        result["states"] = states
    return result


def draw_noise(kernel, dt: float, n_steps: int, seeds, method: str = "nonlinear", factor=None) -> np.ndarray:
    """One noise row per seed: colored paths, or Wiener increments for Markov."""
    rows = []
    for seed in seeds:
        if method == "markov":
            rng = make_rng(seed)
            inc = complex_normal(rng, n_steps, dt)
            rows.append(np.concatenate([inc, [0j]]))
        else:
            rows.append(sample_path(kernel, dt, n_steps, seed, factor).values)
    return np.array(rows).reshape(len(rows), n_steps + 1)


def run_trajectory(
    model: Model,
    scheme,
    kernel,
    psi0,
    dt: float,
    n_steps: int,
    seed,
    observables=(),
    method: str = "nonlinear",
    coeffs=None,
):
    """Sample a noise path, integrate one trajectory, record every step.

    Returns a dict with ``t``, ``obs`` of shape ``(n_steps + 1, n_obs)`` and
    ``norm``. Output is a deterministic function of ``seed``.
    """
    if not np.isclose(np.linalg.norm(psi0), 1.0, atol=1e-8) and method != "linear":
        raise ValueError("psi0 must be normalized")
    noise = draw_noise(kernel, dt, n_steps, [seed], method)
    res = integrate_batch(model, psi0, dt, n_steps, noise, method, scheme, coeffs, kernel, observables)
    return {"t": res["t"], "obs": res["obs"][0], "norm": res["norm"][0]}


def write_trajectory_csv(path, result, names) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *names, "norm"])
        for i, t in enumerate(result["t"]):
            writer.writerow(
                ["%.12e" % t] + ["%.12e" % v.real for v in result["obs"][i]] + ["%.12e" % result["norm"][i]]
            )
