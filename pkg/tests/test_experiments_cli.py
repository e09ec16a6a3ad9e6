import csv

import numpy as np
import pytest

from nmqsd.cli import EXIT_CONFIG, EXIT_GATE, EXIT_OK, main
from nmqsd.experiments import (
    OUTPUT_ENV,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    load_config,
    parse_config,
    preset_config,
    random_density_matrices,
    run_experiment,
    squeezed_vacuum,
    validate,
    with_overrides,
)
from nmqsd.linalg import ladder_ops


def _write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- config parsing ---------------------------------------------------------------


def test_parse_full_config():
    cfg = parse_config(
        """
        # a fig4 variant
        experiment = fig4
        gamma = 20      # faster bath
        n_traj = 64
        psi0 = 1, 1j
        dt = 0.005
        """
    )
    assert cfg.experiment == "fig4"
    assert cfg.gamma == 20.0
    assert cfg.n_traj == 64
    assert cfg.psi0 == (1 + 0j, 1j)
    assert cfg.resolved_dt() == 0.005
    assert cfg.n_steps() == 1000


def test_preset_key_supplies_defaults():
    cfg = parse_config("preset = fig1\nn_traj = 10\n")
    assert cfg.experiment == "fig1"
    assert cfg.gamma == PRESETS["fig1"]["gamma"]
    assert cfg.n_traj == 10


@pytest.mark.parametrize(
    "text,line,key",
    [
        ("experiment = fig1\nbogus = 3\n", 2, "bogus"),
        ("experiment = fig1\ngamma = ten\n", 2, "gamma"),
        ("experiment = fig1\ngamma = 1\ngamma = 2\n", 3, "gamma"),
        ("experiment = fig1\njust words\n", 2, None),
        ("experiment = fig9\n", 1, "experiment"),
        ("preset = nope\n", 1, "preset"),
        ("experiment = fig1\npsi0 = 1\n", 2, "psi0"),
    ],
)
def test_parse_errors_carry_location(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert info.value.key == key
    assert f"line {line}" in str(info.value)


def test_missing_experiment_is_an_error():
    with pytest.raises(ConfigError) as info:
        parse_config("gamma = 1\n")
    assert info.value.key == "experiment"


def test_load_config_accepts_presets_and_files(tmp_path):
    assert load_config("fig3").gamma == 0.5
    path = _write(tmp_path, "experiment = fig3\ngamma = 2\n")
    assert load_config(path).gamma == 2.0
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))


def test_preset_values():
    assert preset_config("fig1").n_traj == 2000
    assert np.allclose(preset_config("fig2").initial_state(), np.array([3, 1]) / np.sqrt(10))
    assert np.allclose(preset_config("fig4").initial_state(), np.array([np.sqrt(3), 1]) / 2)
    assert preset_config("fig3").gamma == 0.5
    with pytest.raises(ConfigError):
        preset_config("fig7")


# -- validation -------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate_cleanly(name):
    warnings, errors = validate(preset_config(name))
    assert errors == []
    assert warnings == []


def test_coarse_step_warns():
    warnings, errors = validate(preset_config("fig1", dt=0.5))
    assert errors == []
    assert any("gamma*dt" in w for w in warnings)


def test_few_trajectories_warn():
    warnings, _ = validate(preset_config("fig1", n_traj=20))
    assert any("n_traj" in w for w in warnings)


def test_missing_gamma_is_hard_error():
    _, errors = validate(ExperimentConfig("fig1"))
    assert any("gamma" in e for e in errors)
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig("fig1"))


def test_non_positive_values_are_errors():
    _, errors = validate(preset_config("fig1", gamma=-1.0, n_traj=0))
    assert any("gamma" in e for e in errors)
    assert any("n_traj" in e for e in errors)
    _, errors = validate(preset_config("fig1", psi0=(0, 0)))
    assert errors


def test_overrides_skip_none():
    cfg = with_overrides(preset_config("fig1"), master_seed=None, n_traj=5)
    assert cfg.master_seed == 1 and cfg.n_traj == 5


def test_result_summary_and_verdict():
    res = ExperimentResult("x", metrics={"a": 1.23456}, gates={"ok": np.bool_(True)})
    assert res.passed is True
    assert res.summary() == "x: a=1.235 -> PASS"
    res.gates["bad"] = False
    assert "FAIL" in res.summary()
    res.advisory = True
    assert res.summary().endswith("(advisory)")


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envdir"))
    assert ExperimentConfig("fig3").output_path() == tmp_path / "envdir"
    assert (tmp_path / "envdir").is_dir()
    explicit = ExperimentConfig("fig3", output_dir=str(tmp_path / "explicit"))
    assert explicit.output_path() == tmp_path / "explicit"


# -- helpers ----------------------------------------------------------------------


def test_random_density_matrices():
    mats = random_density_matrices(4, 10, 3, seed=5)
    for r in mats:
        assert abs(np.trace(r) - 1) < 1e-12
        assert np.linalg.eigvalsh(r).min() > -1e-12
        assert np.allclose(r[3:, :], 0)
    again = random_density_matrices(4, 10, 3, seed=5)
    assert all(np.array_equal(a, b) for a, b in zip(mats, again))


def test_squeezed_vacuum_variance():
    n = 40
    r = 0.5
    psi = squeezed_vacuum(n, r)
    q, p = ladder_ops(n)
    var_q = np.vdot(psi, q @ q @ psi).real
    var_p = np.vdot(psi, p @ p @ psi).real
    # quadratures scale by e^{-r} and e^{+r} relative to the vacuum value 1/2
    assert var_q == pytest.approx(0.5 * np.exp(-2 * r), rel=1e-6)
    assert var_p == pytest.approx(0.5 * np.exp(2 * r), rel=1e-6)
    assert np.allclose(squeezed_vacuum(n, 0.0), np.eye(n)[0])


# -- command line -----------------------------------------------------------------


def test_cli_fig3_check_passes(tmp_path, capsys):
    code = main(["run", "fig3", "--check", "--output-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "PASS" in out
    assert (tmp_path / "fig3_longtime.csv").exists()
    rows = list(csv.reader(open(tmp_path / "fig3_longtime.csv")))
    assert rows[0][-1] == "bloch_norm"


def test_cli_gate_failure_exit_code(tmp_path, capsys):
    # a fast bath leaves no short-time positivity violation for the long-time master
    path = _write(tmp_path, "preset = fig3\ngamma = 50\nt_max = 2\ndt = 0.001\n")
    assert main(["run", path, "--check", "--output-dir", str(tmp_path)]) == EXIT_GATE
    assert "lme_violates" in capsys.readouterr().err
    # without --check the same run reports but succeeds
    assert main(["run", path, "--output-dir", str(tmp_path)]) == EXIT_OK


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", _write(tmp_path, "experiment = fig1\n")]) == EXIT_CONFIG
    assert "gamma" in capsys.readouterr().err
    assert main(["run", _write(tmp_path, "experiment = fig1\nfoo = 1\n", "b.cfg")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 2" in err and "foo" in err
    assert main(["run", "no-such-preset"]) == EXIT_CONFIG


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "fig1"]) == EXIT_OK
    captured = capsys.readouterr()
    assert "ok" in captured.out and captured.err == ""
    path = _write(tmp_path, "preset = fig1\ndt = 0.5\n")
    assert main(["validate", path]) == EXIT_OK
    assert "warning" in capsys.readouterr().err
    assert main(["validate", _write(tmp_path, "experiment = fig2\n", "c.cfg")]) == EXIT_CONFIG


def test_cli_seed_is_byte_deterministic(tmp_path):
    cfg = _write(tmp_path, "preset = fig4\nt_max = 0.5\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg, "--seed", "42", "--n-traj", "40", "--output-dir", str(a)]) == EXIT_OK
    assert main(["run", cfg, "--seed", "42", "--n-traj", "40", "--output-dir", str(b)]) == EXIT_OK
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    main(["run", cfg, "--seed", "43", "--n-traj", "40", "--output-dir", str(c)])
    assert (a / "fig4_ensemble.csv").read_bytes() != (c / "fig4_ensemble.csv").read_bytes()


def test_cli_threads_match_serial(tmp_path):
    cfg = _write(tmp_path, "preset = fig4\nt_max = 0.5\n")
    main(["run", cfg, "--n-traj", "300", "--threads", "1", "--output-dir", str(tmp_path / "s")])
    main(["run", cfg, "--n-traj", "300", "--threads", "2", "--output-dir", str(tmp_path / "p")])
    a = np.loadtxt(tmp_path / "s" / "fig4_ensemble.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(tmp_path / "p" / "fig4_ensemble.csv", delimiter=",", skiprows=1)
    assert np.allclose(a, b, atol=1e-9, rtol=0)


def test_cli_qbm_coeffs(tmp_path, capsys):
    out = tmp_path / "coeffs.csv"
    assert main(["qbm-coeffs", "--kT", "0", "--t-max", "0.2", "--n-points", "5", "--output", str(out)]) == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert len(rows) == 6
    assert float(rows[1][1]) == 0.0
    assert main(["qbm-coeffs", "--cutoff", "-1"]) == EXIT_CONFIG


def test_cli_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "fromenv"))
    assert main(["qbm-coeffs", "--kT", "0", "--t-max", "0.1", "--n-points", "3"]) == EXIT_OK
    assert (tmp_path / "fromenv" / "qbm_coeffs.csv").exists()


def test_cli_novikov_shorthand(tmp_path, capsys):
    code = main(["novikov", "--n-traj", "200", "--output-dir", str(tmp_path), "--check"])
    assert code == EXIT_OK     # advisory experiments never fail --check
    assert "advisory" in capsys.readouterr().out
    assert (tmp_path / "novikov.csv").exists()
