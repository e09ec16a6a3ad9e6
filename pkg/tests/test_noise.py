import csv

import numpy as np
import pytest
from scipy import stats

from nmqsd.kernels import Delta, Ohmic, OrnsteinUhlenbeck, Tabulated, eval_kernel
from nmqsd.noise import (
    CovarianceError,
    ShiftAccumulator,
    covariance_factor,
    grid_covariance,
    sample_general_path,
    sample_ou_path,
    sample_path,
    trajectory_seed,
    update_shift,
)


def ou_paths(gamma, dt, n_steps, n_paths, master=7):
    return np.array([sample_ou_path(gamma, dt, n_steps, trajectory_seed(master, i)).values for i in range(n_paths)])


def test_ou_stationary_quadrature_variance():
    z = ou_paths(4.0, 0.05, 3, 100_000)[:, 2]
    var = z.real.var()
    # gamma/4 per quadrature; standard error of a variance is var*sqrt(2/n)
    assert abs(var - 1.0) < 3 * np.sqrt(2 / z.size)
    assert abs(z.imag.var() - 1.0) < 3 * np.sqrt(2 / z.size)


def test_ou_pseudo_covariance_vanishes():
    z = ou_paths(4.0, 0.05, 3, 100_000)
    prod = z[:, 1] * z[:, 3]
    se = np.abs(prod).std() / np.sqrt(len(prod))
    assert abs(prod.mean()) < 4 * se


def covariance_zscores(z, kernel, dt, pairs):
    out = []
    for j, k in pairs:
        s = z[:, j] * np.conj(z[:, k])
        want = np.conj(eval_kernel(kernel, j * dt, k * dt))
        se_re = s.real.std() / np.sqrt(len(s))
        se_im = s.imag.std() / np.sqrt(len(s))
        out.append((s.mean().real - want.real) / se_re)
        out.append((s.mean().imag - want.imag) / se_im)
        p = z[:, j] * z[:, k]
        out.append(p.mean().real / (p.real.std() / np.sqrt(len(p))))
    return np.array(out)


def test_ou_covariance_at_random_pairs():
    gamma, dt, n = 3.0, 0.1, 40
    z = ou_paths(gamma, dt, n, 20_000)
    pairs = np.random.default_rng(3).integers(0, n + 1, size=(20, 2))
    assert np.max(np.abs(covariance_zscores(z, OrnsteinUhlenbeck(gamma), dt, pairs))) < 4


def test_general_sampler_matches_complex_kernel_covariance():
    # a kernel with an imaginary part checks the conjugation convention
    k = Ohmic(0.5, 4.0, 0.0)
    dt, n = 0.1, 25
    factor = covariance_factor(k, dt, n + 1)
    z = np.array([sample_general_path(k, dt, n, trajectory_seed(5, i), factor).values for i in range(20_000)])
    pairs = np.random.default_rng(4).integers(0, n + 1, size=(20, 2))
    assert np.max(np.abs(covariance_zscores(z, k, dt, pairs))) < 4
    # and the convention itself: M[z_t^* z_s] = alpha(t, s)
    j, m = 10, 3
    est = np.mean(np.conj(z[:, j]) * z[:, m])
    assert abs(est - eval_kernel(k, j * dt, m * dt)) < 0.05 * abs(eval_kernel(k, 0, 0))


def test_general_sampler_agrees_with_ou_recursion():
    gamma, dt, n = 2.0, 0.1, 20
    k = OrnsteinUhlenbeck(gamma)
    factor = covariance_factor(k, dt, n + 1)
    gen = np.array([sample_general_path(k, dt, n, trajectory_seed(9, i), factor).values for i in range(20_000)])
    ou = ou_paths(gamma, dt, n, 20_000, master=10)
    for lag in (0, 3, 10):
        a = gen[:, 5 + lag] * np.conj(gen[:, 5])
        b = ou[:, 5 + lag] * np.conj(ou[:, 5])
        for part in (np.real, np.imag):
            se = np.hypot(part(a).std(), part(b).std()) / np.sqrt(20_000)
            assert abs(part(a).mean() - part(b).mean()) < 4 * se


def test_tabulated_round_trip_statistics():
    ou = OrnsteinUhlenbeck(2.0)
    tab = Tabulated.from_kernel(ou, 3.0, 3001)
    np.testing.assert_allclose(grid_covariance(tab, 0.1, 21), grid_covariance(ou, 0.1, 21), rtol=1e-5, atol=1e-9)


def test_single_point_path_variance():
    k = OrnsteinUhlenbeck(6.0)
    z = np.array([sample_general_path(k, 0.1, 0, trajectory_seed(1, i)).values[0] for i in range(20_000)])
    assert abs(np.mean(np.abs(z) ** 2) - 3.0) < 4 * np.std(np.abs(z) ** 2) / np.sqrt(z.size)


def test_gaussian_kurtosis():
    z = ou_paths(2.0, 0.1, 2, 50_000)[:, 1]
    for part in (z.real, z.imag):
        k = stats.kurtosis(part, fisher=False)
        assert abs(k - 3) < 4 * np.sqrt(24 / part.size)


def test_large_gamma_decorrelates_neighbours():
    z = ou_paths(500.0, 0.1, 1, 20_000)
    c = np.mean(z[:, 1] * np.conj(z[:, 0])) / np.mean(np.abs(z[:, 0]) ** 2)
    assert abs(c) < 0.05


def test_seed_determinism():
    a = sample_ou_path(3.0, 0.01, 100, 42).values
    b = sample_ou_path(3.0, 0.01, 100, 42).values
    assert np.array_equal(a, b)
    k = Ohmic(0.1, 5.0)
    assert np.array_equal(sample_general_path(k, 0.1, 10, 3).values, sample_general_path(k, 0.1, 10, 3).values)
    assert not np.array_equal(a, sample_ou_path(3.0, 0.01, 100, 43).values)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        sample_ou_path(0.0, 0.1, 10, 1)
    with pytest.raises(ValueError):
        sample_ou_path(1.0, -0.1, 10, 1)
    with pytest.raises(ValueError):
        sample_path(Delta(), 0.1, 10, 1)


def test_non_psd_covariance_rejected():
    class Bad:
        def lag(self, tau):
            # a correlation that grows with lag cannot be a covariance
            return (1.0 + np.asarray(tau) ** 2).astype(complex)

    with pytest.raises(CovarianceError, match="min eigenvalue"):
        covariance_factor(Bad(), 0.5, 10)


def test_shift_zero_source_stays_zero():
    acc = ShiftAccumulator(OrnsteinUhlenbeck(5.0))
    for _ in range(10):
        acc = update_shift(acc, 0j, 0.01)
    assert acc.memory == 0


def test_shift_constant_source_fixed_point():
    acc = ShiftAccumulator(OrnsteinUhlenbeck(5.0))
    for _ in range(2000):
        acc = update_shift(acc, 2.0 + 1j, 0.01)
    assert acc.memory == pytest.approx((2.0 + 1j) / 2, rel=0.03)
    acc = ShiftAccumulator(OrnsteinUhlenbeck(5.0))
    for _ in range(2000):
        acc = update_shift(acc, 2.0 + 1j, 0.01, 2.0 + 1j)
    assert acc.memory == pytest.approx((2.0 + 1j) / 2, rel=1e-3)


def test_shift_general_convolution_agrees_with_ou_recursion():
    k = OrnsteinUhlenbeck(4.0)
    dt = 0.01
    src = lambda t: np.cos(3 * t) + 0.5j * t
    ou = ShiftAccumulator(k)
    gen = ShiftAccumulator(Tabulated.from_kernel(k, 2.0, 4001))
    for n in range(100):
        t = n * dt
        ou = update_shift(ou, src(t), dt, src(t + dt))
        gen = update_shift(gen, src(t), dt, src(t + dt))
    # both are second-order rules for the same integral
    assert abs(ou.memory - gen.memory) < 1e-3 * abs(ou.memory)


def test_noise_path_csv(tmp_path):
    p = sample_ou_path(1.0, 0.5, 3, 1)
    path = tmp_path / "z.csv"
    p.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "re_z", "im_z"]
    assert len(rows) == 5
    assert float(rows[2][0]) == 0.5
