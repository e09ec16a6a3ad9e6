"""Colored complex Gaussian noise and the shifted-noise memory.

Convention: real and imaginary parts are independent with half the variance
each, so that ``M[z_t z_s^*] = conj(alpha(t, s))`` (equivalently
``M[z_t^* z_s] = alpha(t, s)``) and ``M[z_t z_s] = 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from nmqsd.kernels import Delta, OrnsteinUhlenbeck, eval_kernel


class CovarianceError(ValueError):
    """The grid covariance of a kernel is not positive semidefinite."""


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a sequence of ints, or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Counter-based per-trajectory seed, independent of scheduling."""
    return np.random.SeedSequence([int(master_seed), int(index)])


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with ``M[|w|^2] = variance``."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass
class NoisePath:
    dt: float
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.values))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "re_z", "im_z"])
            for t, z in zip(self.times, self.values):
                writer.writerow(["%.12e" % t, "%.12e" % z.real, "%.12e" % z.imag])


def sample_ou_path(gamma: float, dt: float, n_steps: int, seed) -> NoisePath:
    """Exact discretization of complex Ornstein-Uhlenbeck noise.

    ``z_{k+1} = e^{-gamma dt} z_k + w_k`` with stationary start, which
    reproduces ``(gamma/2) exp(-gamma |t - s|)`` on the grid exactly.
    """
    if not (gamma > 0 and dt > 0):
        raise ValueError("gamma and dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    rng = make_rng(seed)
    decay = np.exp(-gamma * dt)
    z0 = complex_normal(rng, 1, gamma / 2)
    w = complex_normal(rng, n_steps, 0.5 * gamma * -np.expm1(-2 * gamma * dt))
    if n_steps == 0:
        return NoisePath(dt, z0)
    rest, _ = signal.lfilter([1.0], [1.0, -decay], w, zi=decay * z0)
    return NoisePath(dt, np.concatenate([z0, rest]))


def grid_covariance(kernel, dt: float, n_points: int) -> np.ndarray:
    """``C[j, k] = M[z_j z_k^*] = conj(alpha(t_j, t_k))`` on a uniform grid."""
    t = dt * np.arange(n_points)
    return np.conj(eval_kernel(kernel, t[:, None], t[None, :]))


def covariance_factor(kernel, dt: float, n_points: int) -> np.ndarray:
    """Square-root factor ``A`` with ``A A^dag`` equal to the grid covariance."""
    cov = grid_covariance(kernel, dt, n_points)
    cov = 0.5 * (cov + cov.conj().T)
    evals, evecs = np.linalg.eigh(cov)
    top = max(float(evals.max()), 0.0)
    if evals.min() < -1e-6 * top:
        raise CovarianceError(
            f"grid covariance is not positive semidefinite: min eigenvalue "
            f"{evals.min():.3e}, max {top:.3e}"
        )
    evals = np.where(evals < -1e-12, 0.0, np.clip(evals, 0.0, None))
    return evecs * np.sqrt(evals)


def sample_general_path(kernel, dt: float, n_steps: int, seed, factor=None) -> NoisePath:
    """Draw a path for any stationary kernel by factorizing its grid covariance.

    Pass a precomputed ``factor`` (from :func:`covariance_factor`) when
    drawing many paths on the same grid.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if factor is None:
        factor = covariance_factor(kernel, dt, n_steps + 1)
    rng = make_rng(seed)
    xi = complex_normal(rng, factor.shape[1])
    return NoisePath(dt, factor @ xi)


def sample_path(kernel, dt: float, n_steps: int, seed, factor=None) -> NoisePath:
    if isinstance(kernel, OrnsteinUhlenbeck):
        return sample_ou_path(kernel.gamma, dt, n_steps, seed)
    if isinstance(kernel, Delta):
        raise ValueError("white noise has no path representation; use Wiener increments")
    return sample_general_path(kernel, dt, n_steps, seed, factor)


@dataclass
class ShiftAccumulator:
    """Running ``int_0^t conj(alpha(t, s)) <L^dag>_s ds``.

    For an OU kernel the memory obeys ``dI/dt = -gamma I + (gamma/2)<L^dag>``
    and is advanced by a one-step recursion; other kernels keep the
    ``<L^dag>`` history and convolve with the trapezoid rule. ``memory`` may
    be an array when a batch of trajectories shares one accumulator.
    """

    kernel: object
    memory: complex | np.ndarray = 0j
    t: float = 0.0
    history: list = field(default_factory=list)


def update_shift(acc: ShiftAccumulator, mean_ldag, dt: float, mean_ldag_next=None) -> ShiftAccumulator:
    """Advance the memory by ``dt`` given ``<L^dag>`` at the current time.

    OU kernels: ``memory <- e^{-gamma dt} (memory + (gamma/2) <L^dag> dt)``.
    Supplying ``mean_ldag_next`` (the value at the end of the step) switches
    to the exponential trapezoid rule, which is second order.
    """
    k = acc.kernel
    if isinstance(k, OrnsteinUhlenbeck):
        decay = np.exp(-k.gamma * dt)
        if mean_ldag_next is None:
            memory = decay * (acc.memory + 0.5 * k.gamma * mean_ldag * dt)
        else:
            memory = decay * acc.memory + 0.25 * k.gamma * dt * (decay * mean_ldag + mean_ldag_next)
        return ShiftAccumulator(k, memory, acc.t + dt)
    history = acc.history + [mean_ldag]
    t_new = acc.t + dt
    if mean_ldag_next is None:
        # value at the new time is not known yet: hold the last one
        mean_ldag_next = mean_ldag
    values = np.array(history + [mean_ldag_next])
    times = dt * np.arange(len(values))
    weights = np.full(len(values), dt)
    weights[0] = weights[-1] = dt / 2
    kern = np.conj(eval_kernel(k, t_new, times))
    kern = kern.reshape(kern.shape + (1,) * (values.ndim - 1))
    memory = np.sum(weights.reshape(kern.shape) * kern * values, axis=0)
    return ShiftAccumulator(k, memory, t_new, history)
