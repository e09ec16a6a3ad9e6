"""Bath correlation functions and the memory coefficients built from them.

All kernels here are stationary: ``alpha(t, s)`` depends on the lag
``t - s`` only, and ``alpha(s, t) = conj(alpha(t, s))`` holds exactly because
negative lags are evaluated by conjugating the positive one.

The coefficient functions are

    g0(t) = int_0^t alpha(t,s) ds
    g1(t) = int_0^t alpha(t,s) (t-s) ds
    g2(t) = int_0^t int_0^s alpha(t,s) alpha(s,u) (t-s) du ds

plus the second-order set g3..g6. Ornstein-Uhlenbeck kernels use closed
forms for g0..g2; everything else goes through quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    """Raised when a quadrature misses its tolerance; carries the estimate."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """``alpha(t,s) = (gamma/2) exp(-gamma |t-s|)``, Lorentzian spectrum."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def timescale(self) -> float:
        return 1.0 / self.gamma

    def lag(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (0.5 * self.gamma * np.exp(-self.gamma * tau)).astype(complex)


@dataclass(frozen=True)
class Delta:
    """White-noise limit ``alpha(t,s) = delta(t-s)``."""

    @property
    def timescale(self) -> float:
        return 0.0

    def lag(self, tau):
        raise ValueError("the delta kernel is a distribution; it has no pointwise value")


@dataclass(frozen=True)
class Ohmic:
    """Ohmic bath with a sharp frequency cutoff.

    ``alpha(tau) = (eta/pi) int_0^cutoff w [coth(w/2kT) cos(w tau) - i sin(w tau)] dw``

    The imaginary part (and the real part at ``kT = 0``) have closed forms;
    the thermal real part is integrated with composite Gauss-Legendre panels
    and checked against a run with twice the panels.
    """

    eta: float
    cutoff: float
    kT: float = 0.0
    order: int = 16
    rtol: float = 1e-9

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if not self.cutoff > 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if not self.kT >= 0:
            raise ValueError(f"kT must be non-negative, got {self.kT}")

    @property
    def timescale(self) -> float:
        return 1.0 / self.cutoff

    def thermal_factor(self, w):
        """``coth(w / 2kT)``, taken as 1 at zero temperature."""
        w = np.asarray(w, dtype=float)
        if self.kT == 0:
            return np.ones_like(w)
        return 1.0 / np.tanh(w / (2.0 * self.kT))

    def omega_integral(self, integrand, t_max: float):
        """``int_0^cutoff integrand(w) dw`` for an integrand oscillating up to
        frequency-times-time ``cutoff * t_max``.

        ``integrand`` maps an array of frequencies of shape ``(n,)`` to values
        of shape ``(n, ...)``.
        """
        n_panels = max(4, int(math.ceil(self.cutoff * t_max / math.pi)) + 4)
        coarse = _gl_integrate(integrand, 0.0, self.cutoff, n_panels, self.order)
        fine = _gl_integrate(integrand, 0.0, self.cutoff, 2 * n_panels, self.order)
        err = float(np.max(np.abs(fine - coarse), initial=0.0))
        scale = float(np.max(np.abs(fine), initial=0.0))
        if err > self.rtol * max(scale, 1.0):
            raise QuadratureError("Ohmic frequency integral did not converge", err)
        return fine

    def lag(self, tau):
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        x = self.cutoff * tau
        big = np.abs(x) > 1e-4
        xs = np.where(big, x, 1.0)
        # int_0^cutoff w sin(w tau) dw, and the cos moment used at kT = 0
        sin_mom = np.where(
            big, (np.sin(xs) - xs * np.cos(xs)) / np.where(big, tau, 1.0) ** 2,
            self.cutoff**2 * (x / 3 - x**3 / 30),
        )
        if self.kT == 0:
            cos_mom = np.where(
                big, (np.cos(xs) + xs * np.sin(xs) - 1) / np.where(big, tau, 1.0) ** 2,
                self.cutoff**2 * (0.5 - x**2 / 8),
            )
        else:
            cos_mom = self.omega_integral(
                lambda w: (w * self.thermal_factor(w))[:, None] * np.cos(np.outer(w, tau)),
                float(np.max(tau, initial=0.0)),
            )
        out = self.eta / math.pi * (cos_mom - 1j * sin_mom)
        return out[0] if scalar else out


@dataclass(frozen=True)
class Tabulated:
    """Kernel given on a grid of non-negative lags, linearly interpolated.

    Negative lags use the Hermitian extension; lags past the table end raise.
    """

    lags: np.ndarray
    values: np.ndarray
    timescale: float = field(default=0.0)

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if lags.ndim != 1 or lags.shape != values.shape or len(lags) < 2:
            raise ValueError("lags and values must be matching 1-d arrays with >= 2 points")
        if lags[0] != 0 or np.any(np.diff(lags) <= 0):
            raise ValueError("lags must start at 0 and increase strictly")
        if abs(values[0].imag) > 1e-12 * max(1.0, abs(values[0])):
            raise ValueError("alpha(0) must be real for a Hermitian kernel")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)
        if self.timescale == 0.0:
            object.__setattr__(self, "timescale", float(lags[1] - lags[0]) * 10)

    @classmethod
    def from_kernel(cls, kernel, t_max: float, n_points: int = 4001) -> "Tabulated":
        lags = np.linspace(0.0, t_max, n_points)
        return cls(lags, np.asarray(kernel.lag(lags), dtype=complex))

    def lag(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau > self.lags[-1] * (1 + 1e-12)) or np.any(tau < 0):
            raise ValueError(f"lag outside tabulated range [0, {self.lags[-1]}]")
        re = np.interp(tau, self.lags, self.values.real)
        im = np.interp(tau, self.lags, self.values.imag)
        return re + 1j * im


def _gl_integrate(f, a: float, b: float, n_panels: int, order: int):
    """Composite Gauss-Legendre rule; ``f`` is evaluated once on all nodes."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    vals = np.asarray(f(nodes))
    return np.tensordot(weights, vals, axes=(0, 0))


def gl_nodes(a: float, b: float, n_panels: int, order: int):
    """Nodes and weights of the composite Gauss-Legendre rule on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (
        (mid[:, None] + half[:, None] * x[None, :]).ravel(),
        (half[:, None] * w[None, :]).ravel(),
    )


def eval_kernel(k, t, s):
    """``alpha(t, s)``; broadcasts over array arguments."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("times must be non-negative")
    if isinstance(k, Delta):
        raise ValueError("the delta kernel is a distribution; it has no pointwise value")
    lag = t - s
    val = np.asarray(k.lag(np.abs(lag)), dtype=complex)
    val = np.where(lag < 0, np.conj(val), val)
    return val[()] if val.ndim == 0 else val


def _quad_complex(f, a: float, b: float, points=None, epsabs=1e-14, epsrel=1e-12):
    kw = dict(limit=500, epsabs=epsabs, epsrel=epsrel)
    if points is not None:
        kw["points"] = points
    re, err_re = integrate.quad(lambda x: complex(f(x)).real, a, b, **kw)
    im, err_im = integrate.quad(lambda x: complex(f(x)).imag, a, b, **kw)
    err = err_re + err_im
    if err > max(1e-8 * abs(complex(re, im)), 1e-10):
        raise QuadratureError("adaptive quadrature did not converge", err)
    return complex(re, im)


def _stationary_lag(k, tau: float) -> complex:
    return complex(np.asarray(k.lag(np.asarray(tau))))


def _lag_moment(k, t: float, power: int) -> complex:
    """``int_0^t alpha(tau) tau^power dtau`` for a generic stationary kernel."""
    if t == 0:
        return 0j
    if isinstance(k, Tabulated):
        # the interpolant is piecewise linear: a 3-point rule per segment is exact
        edges = k.lags[k.lags < t]
        edges = np.append(edges, t)
        x, w = np.polynomial.legendre.leggauss(3)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x).ravel()
        weights = (half[:, None] * w).ravel()
        return complex(np.dot(weights, k.lag(nodes) * nodes**power))
    return _quad_complex(lambda tau: _stationary_lag(k, tau) * tau**power, 0.0, t)


# -- closed forms -----------------------------------------------------------


def _ou_g012(gamma: float, t):
    x = gamma * np.asarray(t, dtype=float)
    # expm1 keeps the small-t limit accurate
    a = -np.expm1(-x)
    e = np.exp(-x)
    g0 = 0.5 * a
    g1 = (a - x * e) / (2 * gamma)
    g2 = (a - x * e - 0.5 * x**2 * e) / (4 * gamma)
    # series below x ~ 1e-3 to avoid cancellation
    small = x < 1e-3
    if np.any(small):
        xs = np.where(small, x, 0.0)
        g1 = np.where(small, (xs**2 / 2 - xs**3 / 3 + xs**4 / 8) / (2 * gamma), g1)
        g2 = np.where(small, (xs**3 / 6 - xs**4 / 8 + xs**5 / 20) / (4 * gamma), g2)
    return g0.astype(complex), g1.astype(complex), g2.astype(complex)


def _ohmic_g01(k: Ohmic, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def integrand(w):
        wt = np.outer(w, t)
        c = k.thermal_factor(w)[:, None]
        wcol = w[:, None]
        small = np.abs(wt) < 1e-3
        wts = np.where(small, 1.0, wt)
        # (cos x + x sin x - 1)/w and (sin x - x cos x)/w with their series
        c1 = np.where(small, wt**2 / 2 * (1 - wt**2 / 4) / wcol,
                      (np.cos(wts) + wts * np.sin(wts) - 1) / wcol)
        s1 = np.where(small, wt**3 / 3 * (1 - wt**2 / 10) / wcol,
                      (np.sin(wts) - wts * np.cos(wts)) / wcol)
        g0 = c * np.sin(wt) - 1j * (1 - np.cos(wt))
        g1 = c * c1 - 1j * s1
        return np.stack([g0, g1], axis=-1)

    vals = k.omega_integral(integrand, float(np.max(t, initial=0.0)))
    vals = k.eta / math.pi * vals
    return vals[:, 0], vals[:, 1]


# -- public coefficient functions ------------------------------------------


def _scalar_or_array(x, like):
    return x[0] if np.ndim(like) == 0 else x


def coeff_g0(k, t):
    """``g0(t) = int_0^t alpha(t,s) ds``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    if isinstance(k, OrnsteinUhlenbeck):
        out = _ou_g012(k.gamma, t_arr)[0]
    elif isinstance(k, Delta):
        out = np.where(t_arr > 0, 0.5, 0.0).astype(complex)
    elif isinstance(k, Ohmic):
        out = _ohmic_g01(k, t_arr)[0]
    else:
        out = np.array([_lag_moment(k, ti, 0) for ti in t_arr])
    return _scalar_or_array(out, t)


def coeff_g1(k, t):
    """``g1(t) = int_0^t alpha(t,s) (t-s) ds``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    if isinstance(k, OrnsteinUhlenbeck):
        out = _ou_g012(k.gamma, t_arr)[1]
    elif isinstance(k, Delta):
        out = np.zeros_like(t_arr, dtype=complex)
    elif isinstance(k, Ohmic):
        out = _ohmic_g01(k, t_arr)[1]
    else:
        out = np.array([_lag_moment(k, ti, 1) for ti in t_arr])
    return _scalar_or_array(out, t)


def coeff_g2(k, t):
    """``g2(t) = int_0^t alpha(t,s) (t-s) int_0^s alpha(s,u) du ds``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    if isinstance(k, OrnsteinUhlenbeck):
        out = _ou_g012(k.gamma, t_arr)[2]
    elif isinstance(k, Delta):
        out = np.zeros_like(t_arr, dtype=complex)
    else:
        out = np.array([_g2_quad(k, ti) for ti in t_arr])
    return _scalar_or_array(out, t)


def _g2_quad(k, t: float, n_nodes: int = 96) -> complex:
    if t == 0:
        return 0j
    # inner integral over u is g0(s) for stationary kernels
    panels = _panel_count(k, t)
    s, w = gl_nodes(0.0, t, panels, 16)
    inner = np.asarray(coeff_g0(k, s))
    outer = np.asarray(k.lag(t - s)) * (t - s) * inner
    coarse = complex(np.dot(w, outer))
    s2, w2 = gl_nodes(0.0, t, 2 * panels, 16)
    fine = complex(np.dot(w2, np.asarray(k.lag(t - s2)) * (t - s2) * np.asarray(coeff_g0(k, s2))))
    if abs(fine - coarse) > 1e-7 * abs(fine) + 1e-13:
        raise QuadratureError("g2 quadrature did not converge", abs(fine - coarse))
    return fine


def _panel_count(k, t: float) -> int:
    scale = getattr(k, "timescale", 0.0) or t
    return int(min(400, max(4, math.ceil(2 * t / scale))))


def coeff_g3_to_g6(k, t: float, order: int = 24):
    """Second-order memory coefficients ``(g3, g4, g5, g6)`` at time ``t``.

    Each integral is evaluated as written, one Gauss-Legendre level per
    integration variable::

        g3 = 1/2 int_0^t alpha(t,s) (t-s)^2 ds
        g4 = 1/2 int_0^t alpha(t,s) alpha(s,s) (t-s)^2 ds
        g5 = 1/2 int_0^t int_0^s alpha(t,s) alpha(s,u) (t-s)^2 du ds
        g6 = int_0^t int_0^s int_0^u alpha(t,s) alpha(s,u) alpha(s,v) (t-s)^2 dv du ds
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(k, Delta) or t == 0:
        return 0j, 0j, 0j, 0j
    # outer variable: the kernel confines the integrand to t - s of a few
    # timescales, so panel the whole range at that resolution
    panels = _panel_count(k, t)
    s, ws = gl_nodes(0.0, t, panels, order)
    a_ts = eval_kernel(k, t, s)
    lag2 = (t - s) ** 2
    a_ss = complex(eval_kernel(k, 0.0, 0.0))

    g3 = 0.5 * np.dot(ws, a_ts * lag2)
    g4 = 0.5 * np.dot(ws, a_ts * a_ss * lag2)

    x, wx = np.polynomial.legendre.leggauss(order)
    inner_panels = 4

    def nodes_on(upper):
        # composite rule on [0, upper] for an array of upper limits
        upper = np.asarray(upper, dtype=float)
        edges = np.linspace(0.0, 1.0, inner_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        unit = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wunit = (half[:, None] * wx[None, :]).ravel()
        return upper[..., None] * unit, upper[..., None] * wunit

    u, wu = nodes_on(s)                      # (ns, nu)
    a_su = eval_kernel(k, s[:, None], u)     # alpha(s, u)
    mid5 = np.sum(wu * a_su, axis=-1)        # int_0^s alpha(s,u) du
    g5 = 0.5 * np.dot(ws, a_ts * lag2 * mid5)

    v, wv = nodes_on(u)                      # (ns, nu, nv)
    a_sv = eval_kernel(k, s[:, None, None], v)
    inner6 = np.sum(wv * a_sv, axis=-1)      # int_0^u alpha(s,v) dv
    mid6 = np.sum(wu * a_su * inner6, axis=-1)
    g6 = np.dot(ws, a_ts * lag2 * mid6)
    return complex(g3), complex(g4), complex(g5), complex(g6)


class Coefficients:
    """Memoized ``(g0, g1, g2)`` lookups for one kernel.

    Trajectories and propagators at a fixed step size hit the same handful of
    times over and over; ``precompute`` fills the cache for a whole grid in
    one vectorized call.
    """

    def __init__(self, kernel):
        self.kernel = kernel
        self._cache: dict[float, tuple[complex, complex, complex]] = {}

    def precompute(self, times) -> None:
        times = np.asarray(times, dtype=float)
        missing = np.array([t for t in times if float(t) not in self._cache])
        if missing.size == 0:
            return
        g0 = np.atleast_1d(coeff_g0(self.kernel, missing))
        g1 = np.atleast_1d(coeff_g1(self.kernel, missing))
        g2 = np.atleast_1d(coeff_g2(self.kernel, missing))
        for t, a, b, c in zip(missing, g0, g1, g2):
            self._cache[float(t)] = (complex(a), complex(b), complex(c))

    def __call__(self, t: float) -> tuple[complex, complex, complex]:
        key = float(t)
        hit = self._cache.get(key)
        if hit is None:
            self.precompute([key])
            hit = self._cache[key]
        return hit


class ConstantCoefficients:
    """Coefficients frozen at fixed values (the long-time limit equation)."""

    def __init__(self, g0: complex, g1: complex, g2: complex):
        self.values = (complex(g0), complex(g1), complex(g2))

    @classmethod
    def ou_long_time(cls, gamma: float) -> "ConstantCoefficients":
        return cls(0.5, 1 / (2 * gamma), 1 / (4 * gamma))

    def precompute(self, times) -> None:
        pass

    def __call__(self, t: float):
        return self.values


def qbm_coeff_table(k: Ohmic, t_grid):
    """Real and imaginary parts of g0, g1 on a time grid.

    Returns an array of shape ``(n, 5)`` with columns ``t, g0R, g0I, g1R, g1I``.
    """
    if not isinstance(k, Ohmic):
        raise TypeError("qbm_coeff_table needs an Ohmic kernel")
    t = np.asarray(t_grid, dtype=float)
    g0, g1 = _ohmic_g01(k, t)
    return np.column_stack([t, g0.real, g0.imag, g1.real, g1.imag])


def write_qbm_coeff_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "g0R", "g0I", "g1R", "g1I"])
        for row in table:
            writer.writerow(["%.12e" % v for v in row])
