"""Monte Carlo ensembles of QSD trajectories and their comparison with
master-equation references."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from nmqsd.kernels import Coefficients
from nmqsd.linalg import dag, trace_distance
from nmqsd.noise import covariance_factor, trajectory_seed
from nmqsd.obar import obar_first_order
from nmqsd.qsd import TrajectoryError, draw_noise, integrate_batch

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


class EnsembleError(RuntimeError):
    pass


@dataclass
class EnsembleAccumulator:
    """Running sums over trajectories, one row per output time.

    ``obs_sum``/``obs_sumsq`` hold real parts of the observables;
    ``rho_sum`` holds summed outer products ``|psi><psi|``.
    """

    t: np.ndarray
    n: int
    obs_sum: np.ndarray
    obs_sumsq: np.ndarray
    rho_sum: np.ndarray
    n_failed: int = 0

    @classmethod
    def empty(cls, t, n_obs: int, dim: int) -> "EnsembleAccumulator":
        n_out = len(t)
        return cls(
            np.asarray(t, dtype=float),
            0,
            np.zeros((n_out, n_obs)),
            np.zeros((n_out, n_obs)),
            np.zeros((n_out, dim, dim), dtype=complex),
        )

    def add_states(self, states: np.ndarray, observables) -> None:
        """Fold in a batch of state histories, shape ``(n, n_out, dim)``."""
        for m, op in enumerate(observables):
            vals = np.einsum("bti,ij,btj->bt", np.conj(states), op, states).real
            self.obs_sum[:, m] += vals.sum(axis=0)
            self.obs_sumsq[:, m] += (vals**2).sum(axis=0)
        self.rho_sum += np.einsum("bti,btj->tij", states, np.conj(states))
        self.n += states.shape[0]

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        if self.t.shape != other.t.shape or not np.allclose(self.t, other.t):
            raise ValueError("cannot merge accumulators on different time grids")
        return EnsembleAccumulator(
            self.t,
            self.n + other.n,
            self.obs_sum + other.obs_sum,
            self.obs_sumsq + other.obs_sumsq,
            self.rho_sum + other.rho_sum,
            self.n_failed + other.n_failed,
        )

    @property
    def mean(self) -> np.ndarray:
        return self.obs_sum / self.n

    @property
    def std(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.obs_sum)
        var = (self.obs_sumsq - self.obs_sum**2 / self.n) / (self.n - 1)
        return np.sqrt(np.clip(var, 0.0, None))

    @property
    def stderr(self) -> np.ndarray:
        return self.std / np.sqrt(self.n)

    @property
    def rho(self) -> np.ndarray:
        return self.rho_sum / self.n

    def write_csv(self, path, names, include_rho: bool = False) -> None:
        """``t,mean_<obs>,se_<obs>,...`` plus optional flattened ``rho`` columns."""
        dim = self.rho_sum.shape[-1]
        header = ["t"]
        for name in names:
            header += [f"mean_{name}", f"se_{name}"]
        if include_rho:
            for i in range(dim):
                for j in range(dim):
                    header += [f"rho_re_{i}{j}", f"rho_im_{i}{j}"]
        mean, se, rho = self.mean, self.stderr, self.rho
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, t in enumerate(self.t):
                row = [t]
                for m in range(len(names)):
                    row += [mean[k, m], se[k, m]]
                if include_rho:
                    for v in rho[k].ravel():
                        row += [v.real, v.imag]
                writer.writerow(["%.12e" % v for v in row])


def _run_batch(args):
    (model, psi0, dt, n_steps, seeds, method, scheme, coeffs, kernel, observables, stride, factor) = args
    seeds = list(seeds)
    failed = 0
    while True:
        noise = draw_noise(kernel, dt, n_steps, seeds, method, factor)
        try:
            res = integrate_batch(
                model, psi0, dt, n_steps, noise, method, scheme, coeffs, kernel,
                stride=stride, keep_states=True,
            )
            break
        except TrajectoryError as exc:
            bad = set(int(r) for r in exc.rows)
            log.warning("dropping %d diverged trajectories at step %d", len(bad), exc.step)
            failed += len(bad)
            seeds = [s for i, s in enumerate(seeds) if i not in bad]
            if not seeds:
                res = None
                break
    dim = model.dim
    if res is None:
        return None, failed
    acc = EnsembleAccumulator.empty(res["t"], len(observables), dim)
    acc.add_states(res["states"], observables)
    acc.n_failed = failed
    return acc, failed


def run_ensemble(
    model,
    psi0,
    dt: float,
    n_steps: int,
    n_traj: int,
    master_seed: int = 1,
    method: str = "nonlinear",
    scheme=None,
    coeffs=None,
    kernel=None,
    observables=(),
    stride: int = 10,
    batch_size: int = 250,
    threads: int = 1,
) -> EnsembleAccumulator:
    """Run ``n_traj`` trajectories and accumulate observables and ``rho``.

    Trajectory ``i`` always uses the seed derived from ``(master_seed, i)``,
    and batches are merged in index order, so the result does not depend on
    ``threads`` or ``batch_size`` beyond floating-point reassociation.
    For ``method="linear"`` the accumulated quantities are unnormalized.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    kernel = kernel if kernel is not None else getattr(coeffs, "kernel", None)
    if coeffs is not None:
        coeffs.precompute(dt * np.arange(n_steps + 1))
    if scheme is not None and hasattr(scheme, "table"):
        scheme = scheme.table(dt, n_steps)
    elif scheme is not None and hasattr(scheme, "prepare"):
        scheme.prepare(dt * np.arange(n_steps + 1))
    factor = None
    if method != "markov" and kernel is not None and not hasattr(kernel, "gamma"):
        factor = covariance_factor(kernel, dt, n_steps + 1)

    seeds = [trajectory_seed(master_seed, i) for i in range(n_traj)]
    batches = [seeds[i:i + batch_size] for i in range(0, n_traj, batch_size)]
    jobs = [
        (model, psi0, dt, n_steps, b, method, scheme, coeffs, kernel, tuple(observables), stride, factor)
        for b in batches
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_batch, jobs))
    else:
        results = [_run_batch(j) for j in jobs]

    total_failed = sum(f for _, f in results)
    if total_failed > MAX_FAILURE_FRACTION * n_traj:
        raise EnsembleError(f"{total_failed} of {n_traj} trajectories diverged")
    acc = None
    for part, _ in results:
        if part is None:
            continue
        acc = part if acc is None else acc.merge(part)
    acc.n_failed = total_failed
    return acc


@dataclass
class ComparisonReport:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    reference: np.ndarray
    z: np.ndarray
    trace_distance: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    @property
    def max_trace_distance(self) -> float:
        return float(np.max(self.trace_distance))

    @property
    def max_abs_dev(self) -> float:
        return float(np.max(np.abs(self.mean - self.reference)))

    def window(self, t_min: float = -np.inf, t_max: float = np.inf) -> "ComparisonReport":
        sel = (self.t >= t_min - 1e-12) & (self.t <= t_max + 1e-12)
        return ComparisonReport(
            self.t[sel], self.mean[sel], self.stderr[sel], self.reference[sel], self.z[sel], self.trace_distance[sel]
        )


def z_scores(mean, stderr, reference, atol: float = 1e-9) -> np.ndarray:
    """``(mean - reference) / stderr``; a zero standard error scores 0 when the
    values coincide to ``atol`` and infinity otherwise."""
    diff = np.asarray(mean) - np.asarray(reference)
    se = np.asarray(stderr)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(np.abs(diff) <= atol, 0.0, np.inf))
    return z


def compare(acc: EnsembleAccumulator, reference) -> ComparisonReport:
    """Pointwise z-scores and trace distances against a master time series.

    ``reference`` is a dict with ``t``, ``obs`` (same observables as the
    ensemble) and ``rho``.
    """
    ref_t = np.asarray(reference["t"])
    if ref_t.shape != acc.t.shape or not np.allclose(ref_t, acc.t, rtol=0, atol=1e-9):
        raise ValueError("ensemble and reference time grids differ")
    ref_obs = np.asarray(reference["obs"])
    mean, se = acc.mean, acc.stderr
    z = z_scores(mean, se, ref_obs)
    td = trace_distance(acc.rho, np.asarray(reference["rho"]))
    return ComparisonReport(acc.t, mean, se, ref_obs, z, np.atleast_1d(td))


@dataclass
class NovikovReport:
    t: np.ndarray
    lhs: np.ndarray      # M[P_t z_t]
    rhs: np.ndarray      # M[P_t] Obar(t)^dag
    z: np.ndarray        # per-element z-scores of the paired difference, real and imaginary parts

    @property
    def max_abs_z(self) -> float:
        finite = self.z[np.isfinite(self.z)]
        return float(np.max(np.abs(finite), initial=0.0))


def novikov_check(model, kernel, psi0, dt: float, n_steps: int, n_traj: int, master_seed: int = 1, stride: int = 10) -> NovikovReport:
    """Check ``M[P_t z_t] = int ds conj(alpha(t,s)) M[P_t O(t,s)^dag]`` on
    linear first-order trajectories.

    With the first-order ``O(t,s)`` the right side collapses to
    ``M[P_t] Obar(t)^dag``. The comparison uses the per-trajectory paired
    difference, so its standard error accounts for the correlation between
    the two sides. Advisory only: the first-order ``O`` is itself approximate.
    """
    coeffs = Coefficients(kernel)
    coeffs.precompute(dt * np.arange(n_steps + 1))
    seeds = [trajectory_seed(master_seed, i) for i in range(n_traj)]
    noise = draw_noise(kernel, dt, n_steps, seeds)
    res = integrate_batch(model, psi0, dt, n_steps, noise, "linear", coeffs=coeffs, kernel=kernel, stride=stride, keep_states=True)
    t = res["t"]
    idx = np.rint(t / dt).astype(int)
    states = res["states"]                                # (n, n_out, d)
    P = np.einsum("bti,btj->btij", states, np.conj(states))
    zt = noise[:, idx]                                    # raw noise at output times
    obars = np.array([obar_first_order(model, coeffs, tt) for tt in t])
    lhs_s = P * zt[:, :, None, None]
    rhs_s = P @ dag(obars)[None]
    diff = lhs_s - rhs_s
    mean = diff.mean(axis=0)
    n = diff.shape[0]
    se_re = diff.real.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(mean.shape)
    se_im = diff.imag.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(mean.shape)
    z = np.stack([z_scores(mean.real, se_re, 0.0), z_scores(mean.imag, se_im, 0.0)], axis=-1)
    return NovikovReport(t, lhs_s.mean(axis=0), rhs_s.mean(axis=0), z)
