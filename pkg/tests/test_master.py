import csv

import numpy as np
import pytest

from nmqsd.experiments import caldeira_leggett_witness, random_density_matrices
from nmqsd.kernels import Coefficients, ConstantCoefficients, Delta, Ohmic, OrnsteinUhlenbeck
from nmqsd.linalg import anticommutator, commutator, ladder_ops, pauli_basis, projector, rk4_step, two_level_state
from nmqsd.master import (
    MasterScheme,
    diagnostics,
    first_order_rhs,
    lindblad_rhs,
    obar_master_rhs,
    propagate,
    qbm_rhs,
    step_first_order_longtime,
    step_first_order_master,
    step_functional_zeroth_master,
    step_lindblad,
    write_series_csv,
)
from nmqsd.obar import FirstOrder
from nmqsd.qsd import Model, dissipative_model, driven_model, qbm_model

from conftest import random_density

SX, SY, SZ, SP, SM = pauli_basis()
PAULIS = [SX, SY, SZ]
PLUS = projector(two_level_state(1, 0))


def _variants():
    dis, drv = dissipative_model(1.0, 1.0), driven_model(1.0, 1.0)
    k = OrnsteinUhlenbeck(2.0)
    return {
        "lindblad": MasterScheme.lindblad(drv),
        "first_order": MasterScheme.first_order(drv, Coefficients(k)),
        "first_order_longtime": MasterScheme.first_order_longtime(drv, 2.0),
        "functional_zeroth": MasterScheme.functional_zeroth(drv, k),
        "exact_dissipative": MasterScheme.exact_dissipative(dis, 1.0, 1.0, k),
    }


@pytest.mark.parametrize("name", list(_variants()))
def test_trace_and_hermiticity_over_long_runs(name, rng):
    scheme = _variants()[name]
    rho0 = random_density(rng, 2)
    res = propagate(scheme, rho0, 1e-3, 10_000, stride=500)
    assert np.max(res["trace_err"]) < 1e-9
    assert np.max(res["herm_err"]) < 1e-10


@pytest.mark.parametrize("variant", ["zeroth", "first", "caldeira_leggett"])
def test_qbm_variants_preserve_trace(variant, rng):
    n = 8
    model = qbm_model(n)
    _, p = ladder_ops(n)
    scheme = MasterScheme.qbm(model, p, variant, Ohmic(0.1, 20.0, 1.0))
    res = propagate(scheme, random_density(rng, n), 1e-3, 300, stride=50)
    assert np.max(res["trace_err"]) < 1e-9
    assert np.max(res["herm_err"]) < 1e-10


@pytest.mark.parametrize("name", list(_variants()))
def test_right_hand_sides_are_trace_free(name, rng):
    scheme = _variants()[name]
    rho = random_density(rng, 2)
    y = (rho, scheme.aux0 + 0.3 * SM) if scheme.aux0 is not None else rho
    out = scheme.rhs(0.7, y)
    drho = out[0] if isinstance(out, tuple) else out
    assert abs(np.trace(drho)) < 1e-14


def test_uncoupled_lindblad_is_unitary(rng):
    model = Model(0.5 * SX + 0.3 * SZ, np.zeros((2, 2)))
    rho0 = random_density(rng, 2)
    res = propagate(MasterScheme.lindblad(model), rho0, 1e-2, 500, stride=100)
    ev0 = np.linalg.eigvalsh(rho0)
    for r in res["rho"]:
        assert np.allclose(np.linalg.eigvalsh(r), ev0, atol=1e-10)


def test_lindblad_decay_matches_closed_form():
    lam = 0.8
    model = dissipative_model(1.0, lam)
    rho0 = projector(two_level_state(1, 1))
    res = propagate(MasterScheme.lindblad(model), rho0, 1e-3, 3000, stride=100, observables=[SP @ SM])
    assert np.allclose(res["obs"][:, 0], 0.5 * np.exp(-(lam**2) * res["t"]), atol=1e-10)
    # coherence decays at half the rate and precesses at omega
    coh = res["rho"][:, 0, 1]
    assert np.allclose(np.abs(coh), 0.5 * np.exp(-0.5 * lam**2 * res["t"]), atol=1e-10)


def test_single_step_functions_agree_with_propagate(rng):
    model = driven_model(1.0, 0.7)
    rho = random_density(rng, 2)
    coeffs = Coefficients(OrnsteinUhlenbeck(3.0))
    assert np.allclose(step_lindblad(rho, model, 0.01), rk4_step(lindblad_rhs(model), 0.0, rho, 0.01))
    assert np.allclose(
        step_first_order_master(rho, model, coeffs, 0.01, 0.2), rk4_step(first_order_rhs(model, coeffs), 0.2, rho, 0.01)
    )
    long = step_first_order_longtime(rho, model, 3.0, 0.01)
    assert np.allclose(long, rk4_step(first_order_rhs(model, ConstantCoefficients.ou_long_time(3.0)), 0.0, rho, 0.01))


@pytest.mark.parametrize("make", [dissipative_model, driven_model])
def test_delta_kernel_first_order_equals_lindblad(make, rng):
    model = make(1.0, 0.9)
    rho = random_density(rng, 2)
    a = first_order_rhs(model, Coefficients(Delta()))(0.5, rho)
    b = lindblad_rhs(model)(0.5, rho)
    assert np.allclose(a, b, atol=1e-14)


def test_half_l_obar_gives_lindblad(rng):
    model = driven_model(1.0, 0.9)
    rho = random_density(rng, 2)
    a = obar_master_rhs(model, lambda t: 0.5 * model.L)(0.0, rho)
    assert np.allclose(a, lindblad_rhs(model)(0.0, rho), atol=1e-14)
    stepped = step_functional_zeroth_master(rho, model, lambda t: 0.5 * model.L, 0.01)
    assert np.allclose(stepped, step_lindblad(rho, model, 0.01))


@pytest.mark.parametrize("make", [dissipative_model, driven_model])
def test_first_order_master_equals_obar_form(make, rng):
    model = make(1.3, 0.7)
    coeffs = Coefficients(OrnsteinUhlenbeck(4.0))
    rho = random_density(rng, 2)
    for t in (0.1, 0.6, 3.0):
        a = first_order_rhs(model, coeffs)(t, rho)
        b = obar_master_rhs(model, FirstOrder(model, coeffs))(t, rho)
        assert np.allclose(a, b, atol=1e-13)


def test_dissipative_first_order_has_shifted_lindblad_form(rng):
    omega, lam = 1.3, 0.7
    model = dissipative_model(omega, lam)
    coeffs = Coefficients(OrnsteinUhlenbeck(4.0))
    rho = random_density(rng, 2)
    t = 0.4
    g0, g1, g2 = coeffs(t)
    G = lam**2 * g0 + 1j * lam**2 * omega * g1 + lam**4 * g2
    n = SP @ SM
    expected = (
        -1j * commutator(model.H, rho)
        + G.real * (2 * SM @ rho @ SP - anticommutator(n, rho))
        - 1j * G.imag * commutator(n, rho)
    )
    assert np.allclose(first_order_rhs(model, coeffs)(t, rho), expected, atol=1e-14)


def test_driven_first_order_explicit_form(rng):
    omega, lam = 1.3, 0.7
    model = driven_model(omega, lam)
    coeffs = Coefficients(OrnsteinUhlenbeck(0.5))
    rho = random_density(rng, 2)
    t = 0.3
    g0, g1, _ = coeffs(t)
    assert abs(g0.imag) + abs(g1.imag) < 1e-15
    g0, g1 = g0.real, g1.real
    expected = (
        -0.5j * omega * commutator(SX, rho)
        + 2 * lam**2 * g0 * (SZ @ rho @ SZ - rho)
        - 1j * lam**2 * omega * g1 * commutator(SX, rho)
        - lam**2 * omega * g1 * (SZ @ rho @ SY + SY @ rho @ SZ)
    )
    assert np.allclose(first_order_rhs(model, coeffs)(t, rho), expected, atol=1e-14)


def test_rk4_is_fourth_order():
    model = driven_model(1.0, 1.0)
    coeffs = Coefficients(OrnsteinUhlenbeck(1.0))
    scheme = MasterScheme.first_order(model, coeffs)
    T = 2.0

    def end(n):
        return propagate(scheme, PLUS, T / n, n, stride=n)["rho"][-1]

    ref = end(1600)
    errs = [np.linalg.norm(end(n) - ref) for n in (20, 40, 80)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 13) & (ratios < 19)), ratios


def test_long_time_master_matches_first_order_once_converged(rng):
    model = driven_model(1.0, 1.0)
    gamma = 5.0
    rho = random_density(rng, 2)
    a = first_order_rhs(model, Coefficients(OrnsteinUhlenbeck(gamma)))(20.0, rho)
    b = first_order_rhs(model, ConstantCoefficients.ou_long_time(gamma))(20.0, rho)
    assert np.allclose(a, b, atol=1e-12)


def test_long_time_master_loses_positivity_at_short_times():
    model = driven_model(1.0, 1.0)
    gamma = 0.5
    lme = propagate(MasterScheme.first_order_longtime(model, gamma), PLUS, 1e-2, 1000)
    first = propagate(MasterScheme.first_order(model, Coefficients(OrnsteinUhlenbeck(gamma))), PLUS, 1e-2, 1000)
    assert np.max(lme["bloch_norm"]) > 1.05
    assert lme["t"][np.argmax(lme["bloch_norm"])] < 2.0
    assert np.max(first["bloch_norm"]) <= 1 + 1e-9


def _sphere_states(n):
    k = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * k / n)
    phi = np.pi * (1 + np.sqrt(5)) * k
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=1)


def _batched_min_eig(rhs, states, dt, n_steps):
    rho = np.einsum("bi,bj->bij", states, states.conj())
    worst = 0.0
    for k in range(n_steps):
        rho = rk4_step(rhs, k * dt, rho, dt)
        worst = min(worst, np.linalg.eigvalsh(0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))).min())
    return worst


@pytest.mark.parametrize("gamma", [0.5, 1.0, 10.0])
def test_first_order_master_positive_on_state_grid(gamma):
    model = driven_model(1.0, 1.0)
    coeffs = Coefficients(OrnsteinUhlenbeck(gamma))
    dt, n = 1e-2, 1000
    coeffs.precompute(np.arange(2 * n + 1) * dt / 2)
    worst = _batched_min_eig(first_order_rhs(model, coeffs), _sphere_states(100), dt, n)
    assert worst >= -1e-6


def test_dissipative_long_time_master_stays_positive():
    model = dissipative_model(1.0, 1.0)
    worst = _batched_min_eig(first_order_rhs(model, ConstantCoefficients.ou_long_time(0.5)), _sphere_states(100), 1e-2, 500)
    assert worst >= -1e-12


def test_markov_limit_of_first_order_master():
    model = dissipative_model(1.0, 1.0)
    gamma = 100.0
    dt, n = 1e-3, 5000
    a = propagate(MasterScheme.first_order(model, Coefficients(OrnsteinUhlenbeck(gamma))), PLUS, dt, n, stride=50)
    b = propagate(MasterScheme.lindblad(model), PLUS, dt, n, stride=50)
    sel = a["t"] >= 0.1
    td = [0.5 * np.abs(np.linalg.eigvalsh(x - y)).sum() for x, y in zip(a["rho"][sel], b["rho"][sel])]
    assert max(td) < 0.02


def test_qbm_uncoupled_is_unitary(rng):
    n = 10
    model = qbm_model(n)
    _, p = ladder_ops(n)
    rho0 = random_density(rng, n)
    res = propagate(MasterScheme.qbm(model, p, "caldeira_leggett", eta=0.0, kT=0.0), rho0, 1e-3, 2000, stride=500)
    ev0 = np.linalg.eigvalsh(rho0)
    for r in res["rho"]:
        assert np.allclose(np.linalg.eigvalsh(r), ev0, atol=1e-10)
    # H is diagonal, so populations are frozen
    assert np.allclose(np.diagonal(res["rho"][-1]), np.diagonal(rho0))


def test_qbm_unknown_variant():
    q, p = ladder_ops(4)
    with pytest.raises(ValueError):
        qbm_rhs(np.eye(4), q, p, "second")


def test_qbm_zeroth_keeps_positivity():
    n = 20
    model = qbm_model(n)
    _, p = ladder_ops(n)
    scheme = MasterScheme.qbm(model, p, "zeroth", Ohmic(0.1, 20.0, 0.0))
    for rho0 in random_density_matrices(5, n, 4, seed=2):
        res = propagate(scheme, rho0, 1e-3, 500, stride=10, top_levels=2)
        assert res["trusted"]
        assert np.min(res["min_eig"]) >= -1e-8


def test_caldeira_leggett_positivity_witness():
    min_eig, info = caldeira_leggett_witness(30, 0.1, 1.0)
    assert info["trusted"]
    assert min_eig < -1e-3


def test_truncation_flag():
    n = 6
    model = qbm_model(n)
    _, p = ladder_ops(n)
    top = np.zeros((n, n), dtype=complex)
    top[-1, -1] = 1
    res = propagate(MasterScheme.qbm(model, p, "caldeira_leggett", eta=0.0, kT=0.0), top, 1e-2, 5, top_levels=2)
    assert not res["trusted"]
    assert res["top_population"][0] == pytest.approx(1.0)


def test_diagnostics_examples():
    d = diagnostics(np.eye(2) / 2)
    assert d.bloch_norm == pytest.approx(0.0)
    assert d.min_eigenvalue == pytest.approx(0.5)
    d = diagnostics(PLUS)
    assert d.bloch_norm == pytest.approx(1.0)
    assert d.min_eigenvalue == pytest.approx(0.0, abs=1e-15)
    assert d.trace_error == pytest.approx(0.0)
    assert diagnostics(np.eye(3) / 3).bloch_norm is None


def test_series_csv(tmp_path):
    res = propagate(MasterScheme.lindblad(dissipative_model(1.0, 1.0)), PLUS, 0.01, 10, stride=5, observables=PAULIS)
    path = tmp_path / "series.csv"
    write_series_csv(path, res, ["sx", "sy", "sz"])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "sx", "sy", "sz", "trace_err", "herm_err", "min_eig", "bloch_norm"]
    assert len(rows) == 4
