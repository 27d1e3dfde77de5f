import hashlib
import math

import numpy as np
import pytest

from fermibath.cli import EXIT_CONFIG, EXIT_RESOURCE, main, parse_args
from fermibath.config import ConfigError, SimulationConfig, build_config, read_config_file
from fermibath.csvio import read_csv, write_csv
from fermibath.lattice import LatticeGeometry
from fermibath.lindblad import evolve_master_equation
from fermibath.lattice import build_system_hamiltonian
from fermibath.gaussian import init_checkerboard
from fermibath.runner import (MEASURE_COLUMNS, random_bath_average, run, run_analysis,
                              run_master_pipeline, run_random_bath_ensemble,
                              run_trajectory_pipeline, run_unitary_pipeline)


def rows_of(path):
    return read_csv(path)[1]


def column(rows, name, **where):
    return np.array([float(r[name]) for r in rows
                     if all(float(r[k]) == v for k, v in where.items())])


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


class TestConfig:
    def test_defaults(self):
        cfg = SimulationConfig()
        assert (cfg.J, cfg.h_s, cfg.M, cfg.omega_max) == (1.0, 5.0, 100, 10.0)
        assert (cfg.dt, cfg.t_s, cfg.N_TJ, cfg.N_init, cfg.x_min) == (0.1, 50.0, 256, 256, 8.0)
        assert cfg.max_modes == 16384
        times = cfg.times()
        assert times[0] == 1.0 and times[-1] == 50.0 and len(times) == 50

    def test_sample_grid_follows_J(self):
        cfg = SimulationConfig(J=2.0, t_s=1.2)
        assert cfg.times() == [0.5, 1.0, 1.2]
        assert SimulationConfig(sample_times=[3.0, 1.0, 3.0]).times() == [1.0, 3.0]

    def test_file_then_cli_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nL = 4\ngamma = 0.1, 0.2\nM=7\nmeta.wall_clock_s=3.2\n")
        cfg = parse_args(["unitary", "--config", str(path), "--M", "9"])
        assert (cfg.L, cfg.M, cfg.gamma, cfg.mode) == (4, 9, [0.1, 0.2], "unitary")

    @pytest.mark.parametrize("text", ["L=3", "bogus=1", "gamma=-1", "L", "nu_range=2,1", "dt=abc"])
    def test_invalid(self, tmp_path, text):
        path = tmp_path / "bad.cfg"
        path.write_text(text + "\n")
        with pytest.raises(ConfigError):
            build_config(read_config_file(path))

    def test_manifest_is_a_config(self, tmp_path):
        cfg = SimulationConfig(mode="master", L=2, gamma=[0.3], t_s=2.0, output=str(tmp_path))
        res = run(cfg)
        again = build_config(read_config_file(res.manifest))
        assert again == cfg


def test_csv_roundtrip_is_exact(tmp_path):
    vals = [0.1 + 0.2, 1e-300, -2.5, math.pi]
    path = write_csv(tmp_path / "x.csv", ["a", "b"], [[v, np.float64(v)] for v in vals],
                     meta=[("k", "v=1")])
    meta, rows = read_csv(path)
    assert meta == {"k": "v=1"}
    assert [float(r["a"]) for r in rows] == vals == [float(r["b"]) for r in rows]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "y.csv", ["a"], [[1, 2]])


class TestUnitary:
    def test_zero_coupling(self, tmp_path):
        cfg = SimulationConfig(L=2, M=4, gamma=[0.0], t_s=3.0, output=str(tmp_path))
        res = run_unitary_pipeline(cfg)
        rows = rows_of(res.files["measures"])
        assert list(rows[0]) == MEASURE_COLUMNS
        for k in ("Cw_SB", "Cw_BS", "Cw_BB"):
            assert np.all(column(rows, k) == 0)
        master = run_master_pipeline(SimulationConfig(mode="master", L=2, gamma=[0.0], t_s=3.0,
                                                      output=str(tmp_path)))
        mrows = rows_of(master.files["measures"])
        for k in ("E", "I", "Cw_total"):
            np.testing.assert_allclose(column(rows, k), column(mrows, k), atol=1e-10)
        diag = rows_of(res.files["diagnostics"])
        assert column(diag, "me_dev").max() < 1e-20

    def test_outputs(self, tmp_path):
        cfg = SimulationConfig(L=4, M=6, gamma=[0.3, 1.0], t_s=2.0, output=str(tmp_path))
        res = run_unitary_pipeline(cfg)
        rows = rows_of(res.files["measures"])
        assert len(rows) == 4
        tot = column(rows, "Cw_total")
        parts = sum(column(rows, k) for k in ("Cw_SS", "Cw_SB", "Cw_BS", "Cw_BB"))
        np.testing.assert_allclose(tot, parts, rtol=1e-12)
        # the mirror symmetry of the lattice makes the two mixed pieces equal,
        # so total = SS + 2 SB + BB for these states
        np.testing.assert_allclose(column(rows, "Cw_SB"), column(rows, "Cw_BS"), rtol=1e-9)
        assert np.all(column(rows, "E") > 0) and np.all(column(rows, "I") > 0)
        dist = rows_of(res.files["distance"])
        assert len(dist) == 2 * (2 * 4 - 1)
        assert column(dist, "n_pairs", gamma=0.3).sum() == 16 + 16 * 15 // 2

    def test_resource_guard(self, tmp_path):
        assert main(["unitary", "--L", "30", "--output", str(tmp_path)]) == EXIT_RESOURCE
        assert main(["random-bath", "--L", "4", "--M", "20", "--max_modes", "100",
                     "--output", str(tmp_path)]) == EXIT_RESOURCE


class TestTrajectories:
    def test_single_trajectory_has_zero_stderr(self, tmp_path):
        cfg = SimulationConfig(mode="trajectories", L=2, gamma=[0.5], t_s=2.0, N_TJ=1,
                               output=str(tmp_path))
        rows = rows_of(run_trajectory_pipeline(cfg).files["trajectories"])
        assert np.all(column(rows, "S_stderr") == 0) and np.all(column(rows, "E_stderr") == 0)

    def test_stderr_scales_with_ensemble_size(self, tmp_path):
        errs = []
        for n in (64, 128):
            cfg = SimulationConfig(mode="trajectories", L=2, gamma=[1.0], t_s=20.0, N_TJ=n,
                                   output=str(tmp_path / str(n)))
            rows = rows_of(run_trajectory_pipeline(cfg).files["trajectories"])
            errs.append(column(rows, "S_stderr")[5:].mean())
        assert 0.5 < errs[1] / errs[0] < 0.9

    def test_summary(self, tmp_path):
        cfg = SimulationConfig(mode="trajectories", L=2, gamma=[0.5, 2.0], t_s=2.0, N_TJ=3,
                               output=str(tmp_path))
        summary = rows_of(run_trajectory_pipeline(cfg).files["summary"])
        assert len(summary) == 2
        assert column(summary, "max_purity_error").max() < 1e-10


class TestRandomBath:
    def test_limit_is_mixed_bath(self):
        devs = []
        for n in (4, 256):
            cfg = SimulationConfig(mode="random-bath", L=2, M=10, gamma=[0.5], t_s=5.0, N_init=n)
            avg, mixed = random_bath_average(cfg, 0.5, 5.0)
            devs.append(np.sum(np.abs(avg - mixed) ** 2))
        assert devs[1] < devs[0]
        geom = LatticeGeometry(2)
        h = build_system_hamiltonian(geom, 1.0, 5.0)
        me = evolve_master_equation(init_checkerboard(geom), h, 0.5, 5.0)
        assert np.abs(mixed - me).max() < 0.05

    def test_csv(self, tmp_path):
        cfg = SimulationConfig(mode="random-bath", L=2, M=10, gamma=[0.5], t_s=5.0, N_init=8,
                               output=str(tmp_path))
        rows = rows_of(run_random_bath_ensemble(cfg).files["random_bath"])
        assert len(rows) == 1
        r = rows[0]
        assert float(r["ratio"]) == pytest.approx(float(r["mean_diag"]) / float(r["mean_offdiag"]))


def planted_measures(path, gammas, sizes, gamma_c=0.13, nu=1.3, zeta=0.0):
    """Measures CSV whose window fits ``[8, L]`` return ``c = L^(zeta/nu) f(L^(1/nu)(g - g_c))``."""
    sizes = np.asarray(sizes, dtype=float)
    design = np.column_stack([sizes * np.log(sizes), sizes])
    rows = []
    for g in gammas:
        y = [sizes[0]]
        for k in range(1, len(sizes)):
            Lw = sizes[k]
            target = Lw ** (zeta / nu) / (1 + (Lw ** (1 / nu) * (g - gamma_c)) ** 2)
            w = np.linalg.pinv(design[:k + 1])[0]
            y.append((target - w[:k] @ np.array(y)) / w[k])
        for L, v in zip(sizes, y):
            rows.append([50.0, g, int(L), 0, 0.0, 0.0, v, 0.0, 0.0, 0.0, 0.0])
    return write_csv(path, MEASURE_COLUMNS, rows)


class TestAnalysis:
    def test_recovers_planted_collapse(self, tmp_path):
        inp = planted_measures(tmp_path / "m.csv", np.linspace(0, 0.3, 41), np.arange(8, 32, 2))
        cfg = SimulationConfig(mode="analyze", inputs=[str(inp)], output=str(tmp_path / "out"),
                               n_boot=0, grid=3, gamma_c_range=[0.05, 0.25], nu_range=[0.5, 3.0],
                               zeta_range=[-0.5, 0.5])
        res = run_analysis(cfg)
        fits = rows_of(res.files["fits"])
        assert len(fits) == 41 * 11
        r = rows_of(res.files["collapse"])[0]
        assert float(r["gamma_c"]) == pytest.approx(0.13, rel=1e-2)
        assert float(r["nu"]) == pytest.approx(1.3, rel=5e-2)
        assert abs(float(r["zeta"])) < 2e-2

    def test_single_gamma_skips_collapse(self, tmp_path):
        inp = planted_measures(tmp_path / "m.csv", [0.2], np.arange(8, 20, 2))
        res = run_analysis(SimulationConfig(mode="analyze", inputs=[str(inp)],
                                            output=str(tmp_path / "out")))
        assert "collapse" not in res.files
        assert any("collapse skipped" in n for n in res.notes)
        assert len(rows_of(res.files["fits"])) == 5

    def test_uses_latest_time(self, tmp_path):
        rows = [[t, 0.1, L, 0, 0.0, 0.0, (1.0 if t == 50.0 else 9.0) * L, 0, 0, 0, 0]
                for t in (40.0, 50.0) for L in (8, 10, 12)]
        inp = write_csv(tmp_path / "m.csv", MEASURE_COLUMNS, rows)
        res = run_analysis(SimulationConfig(mode="analyze", inputs=[str(inp)],
                                            output=str(tmp_path / "out")))
        fit = rows_of(res.files["fits"])[-1]
        assert float(fit["b"]) == pytest.approx(1.0) and abs(float(fit["c"])) < 1e-12

    def test_missing_inputs(self, tmp_path, capsys):
        code = main(["analyze", "--inputs", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
                     "--output", str(tmp_path)])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "a.csv" in err and "b.csv" in err


@pytest.mark.parametrize("mode,flags", [
    ("unitary", ["--L", "2", "--M", "5", "--gamma", "0.2", "1.0", "--t_s", "4"]),
    ("master", ["--L", "4", "--gamma", "0.2", "--t_s", "4"]),
    ("trajectories", ["--L", "2", "--gamma", "1.0", "--t_s", "3", "--N_TJ", "5", "--seed", "9"]),
    ("random-bath", ["--L", "2", "--M", "5", "--gamma", "0.4", "--N_init", "6", "--t_s", "3"]),
])
def test_cli_rerun_from_manifest_is_identical(tmp_path, capsys, mode, flags):
    first = tmp_path / "first"
    assert main([mode, *flags, "--output", str(first)]) == 0
    manifest = first / f"manifest_{mode}.txt"
    second = tmp_path / "second"
    assert main([mode, "--config", str(manifest), "--output", str(second)]) == 0
    csvs = sorted(p.name for p in first.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert digest(first / name) == digest(second / name)
