"""Pipelines: unitary system+bath, master equation, trajectories, random baths, analysis.

Every pipeline writes its CSVs plus a manifest into ``config.output``. The
manifest is a valid config file, so ``--config manifest_<mode>.txt``
re-runs the pipeline and reproduces the CSVs byte for byte.
"""
from __future__ import annotations

import functools
import math
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import SimulationConfig
from .csvio import read_csv, write_csv, write_manifest
from .errors import ResourceGuardError
from .fss import collapse, fit_windows, size_invariance_scan
from .gaussian import (PROPAGATION_CONVENTION, LowRankCorrelation, Propagator, StarBathPropagator,
                       evolve, init_checkerboard, init_random_pure_bath)
from .lattice import (LatticeGeometry, ModeLayout, build_system_hamiltonian,
                      reorder_to_partitions, star_bath)
from .lindblad import deviation_report, evolve_master_equation
from .measures import (PAIR_CONVENTION, bath_density_correlation, connected_correlation_weight,
                       half_system_entropy, log_fermionic_negativity, mutual_information)
from .trajectories import SWEEP_ORDER, TrajectoryConfig, ensemble_mean_stderr, run_ensemble

MEASURE_COLUMNS = ["t", "gamma", "L", "M", "E", "I", "Cw_total", "Cw_SS", "Cw_SB", "Cw_BS", "Cw_BB"]
DIAGNOSTIC_COLUMNS = ["t", "gamma", "L", "M", "diag_dev", "offdiag_dev", "me_dev", "I_over_Cw"]
DISTANCE_COLUMNS = ["t", "gamma", "L", "d", "D_of_d", "n_pairs"]
TRAJECTORY_COLUMNS = ["t", "gamma", "L", "S_mean", "S_stderr", "E_mean", "E_stderr", "n_traj"]
TRAJECTORY_SUMMARY_COLUMNS = ["gamma", "L", "n_traj", "max_purity_error", "max_dev_from_half"]
RANDOM_BATH_COLUMNS = ["t", "gamma", "L", "M", "N_init", "diag_dev", "offdiag_dev", "me_dev",
                       "mixed_dev", "mean_diag", "mean_offdiag", "ratio"]
FIT_COLUMNS = ["gamma", "L", "x_min", "c", "b", "residual", "n_points"]
SCAN_COLUMNS = ["found", "gamma", "spread", "n_crossings"]
COLLAPSE_COLUMNS = ["gamma_c", "nu", "zeta", "d_gamma_c", "d_nu", "d_zeta", "quality", "n_boot"]


@dataclass
class RunResult:
    files: dict[str, Path]
    manifest: Path
    notes: list[str]


def _meta(config: SimulationConfig) -> list[tuple[str, str]]:
    # output location and worker count do not change results, so they stay out of CSVs
    items = [(k, v) for k, v in config.items() if k not in ("output", "workers")]
    return [("version", __version__), ("propagation", PROPAGATION_CONVENTION),
            ("sweep_order", SWEEP_ORDER), ("pair_convention", PAIR_CONVENTION)] + items


def _finish(config: SimulationConfig, files: dict[str, Path], started: float,
            notes: list[str] = (), seeds: str = "") -> RunResult:
    meta = [("version", __version__), ("propagation", PROPAGATION_CONVENTION),
            ("sweep_order", SWEEP_ORDER), ("pair_convention", PAIR_CONVENTION),
            ("started_unix", f"{started:.3f}"), ("wall_clock_s", f"{time.time() - started:.3f}")]
    if seeds:
        meta.append(("seeds", seeds))
    for k, note in enumerate(notes):
        meta.append((f"note{k}", note))
    manifest = write_manifest(Path(config.output) / f"manifest_{config.mode}.txt",
                              config.items(), meta)
    return RunResult(files=files, manifest=manifest, notes=list(notes))


def check_resources(config: SimulationConfig) -> int:
    dim = config.L * config.L * (config.M + 1)
    if dim > config.max_modes:
        raise ResourceGuardError(
            f"D = N (M + 1) = {dim} modes exceeds the cap max_modes = {config.max_modes}; "
            "reduce L or M or raise max_modes explicitly")
    return dim


def _out(config: SimulationConfig, name: str) -> Path:
    return Path(config.output) / name


# -- unitary system + bath ---------------------------------------------------

def unitary_initial_state(geom: LatticeGeometry, layout: ModeLayout) -> LowRankCorrelation:
    """Checkerboard system with every bath mode at 1/2, as ``1/2 + A G A^dag``."""
    N = geom.N
    A = np.zeros((layout.dim, N))
    A[np.arange(N), np.arange(N)] = 1.0
    G = np.diag(np.diag(init_checkerboard(geom)).real - 0.5)
    return LowRankCorrelation(A, G)


def run_unitary_pipeline(config: SimulationConfig) -> RunResult:
    started = time.time()
    check_resources(config)
    geom = LatticeGeometry(config.L)
    layout = ModeLayout(geom, config.M)
    h_sys = build_system_hamiltonian(geom, config.J, config.h_s)
    sys_prop = Propagator.from_hamiltonian(h_sys)
    C0 = unitary_initial_state(geom, layout)
    C0_sys = init_checkerboard(geom)
    times = config.times()
    measures, diagnostics, distance = [], [], []
    for gamma in config.gamma:
        prop = StarBathPropagator(h_sys, star_bath(gamma, config.M, config.omega_max, config.h_s))
        for t in times:
            C = evolve(C0, prop, t)
            C_lr = reorder_to_partitions(layout, C)
            E = log_fermionic_negativity(C_lr, layout)
            I = mutual_information(C_lr, layout)
            w = connected_correlation_weight(C_lr, layout)
            measures.append([t, gamma, config.L, config.M, E, I, w.total, w.ss, w.sb, w.bs, w.bb])
            C_sys = C.take(np.arange(geom.N)).dense()
            C_me = evolve_master_equation(C0_sys, h_sys, gamma, t, propagator=sys_prop)
            rep = deviation_report(C_sys, C_me)
            ratio = I / w.total if w.total > 0 else math.nan
            diagnostics.append([t, gamma, config.L, config.M, rep.diag_dev, rep.offdiag_dev,
                                rep.me_dev, ratio])
        prof = bath_density_correlation(C, geom, layout)
        for d, v, n in zip(prof.d, prof.value, prof.n_pairs):
            distance.append([times[-1], gamma, config.L, int(d), float(v), int(n)])
    meta = _meta(config)
    files = {
        "measures": write_csv(_out(config, "unitary_measures.csv"), MEASURE_COLUMNS, measures, meta),
        "diagnostics": write_csv(_out(config, "unitary_diagnostics.csv"), DIAGNOSTIC_COLUMNS,
                                 diagnostics, meta),
        "distance": write_csv(_out(config, "unitary_distance.csv"), DISTANCE_COLUMNS, distance, meta),
    }
    return _finish(config, files, started)


# -- master equation (system only) ---------------------------------------------

def run_master_pipeline(config: SimulationConfig) -> RunResult:
    """System-only reference; ``me_dev`` is zero by definition and kept for a uniform schema."""
    started = time.time()
    geom = LatticeGeometry(config.L)
    layout = ModeLayout(geom, 0)
    h_sys = build_system_hamiltonian(geom, config.J, config.h_s)
    prop = Propagator.from_hamiltonian(h_sys)
    C0 = init_checkerboard(geom)
    measures, diagnostics = [], []
    for gamma in config.gamma:
        for t in config.times():
            C = evolve_master_equation(C0, h_sys, gamma, t, propagator=prop)
            C_lr = reorder_to_partitions(layout, C)
            E = log_fermionic_negativity(C_lr, layout)
            I = mutual_information(C_lr, layout)
            w = connected_correlation_weight(C_lr, layout)
            measures.append([t, gamma, config.L, 0, E, I, w.total, w.ss, w.sb, w.bs, w.bb])
            rep = deviation_report(C, C)
            ratio = I / w.total if w.total > 0 else math.nan
            diagnostics.append([t, gamma, config.L, 0, rep.diag_dev, rep.offdiag_dev, rep.me_dev,
                                ratio])
    meta = _meta(config)
    files = {
        "measures": write_csv(_out(config, "master_measures.csv"), MEASURE_COLUMNS, measures, meta),
        "diagnostics": write_csv(_out(config, "master_diagnostics.csv"), DIAGNOSTIC_COLUMNS,
                                 diagnostics, meta),
    }
    return _finish(config, files, started)


# -- trajectories ----------------------------------------------------------------

def observe_entanglement(C: np.ndarray, layout: ModeLayout) -> tuple[float, float]:
    """``(S(Tr_R C), E(C))`` of a canonical-order system state."""
    return (half_system_entropy(C, layout),
            log_fermionic_negativity(reorder_to_partitions(layout, C), layout))


def run_trajectory_pipeline(config: SimulationConfig) -> RunResult:
    started = time.time()
    geom = LatticeGeometry(config.L)
    layout = ModeLayout(geom, 0)
    observe = functools.partial(observe_entanglement, layout=layout)
    rows, summary = [], []
    for gamma in config.gamma:
        tcfg = TrajectoryConfig(gamma=gamma, dt=config.dt, t_s=config.t_s, n_traj=config.N_TJ,
                                seed=config.seed, J=config.J, h_s=config.h_s,
                                sample_times=tuple(config.times()))
        out = run_ensemble(geom, tcfg, observe=observe, workers=config.workers, keep_final=True)
        times = out[0][1]
        obs = np.array([r[2] for r in out])          # (n_traj, n_times, 2)
        mean, err = ensemble_mean_stderr(obs)
        for k, t in enumerate(times):
            rows.append([float(t), gamma, config.L, mean[k, 0], err[k, 0], mean[k, 1], err[k, 1],
                         config.N_TJ])
        avg_final = np.mean([r[4] for r in out], axis=0)
        dev = float(np.abs(avg_final - 0.5 * np.eye(geom.N)).max())
        summary.append([gamma, config.L, config.N_TJ, max(r[3] for r in out), dev])
    meta = _meta(config)
    files = {
        "trajectories": write_csv(_out(config, "trajectories.csv"), TRAJECTORY_COLUMNS, rows, meta),
        "summary": write_csv(_out(config, "trajectories_summary.csv"), TRAJECTORY_SUMMARY_COLUMNS,
                             summary, meta),
    }
    seeds = f"SeedSequence([{config.seed}, index]) for index in 0..{config.N_TJ - 1}"
    return _finish(config, files, started, seeds=seeds)


# -- random pure baths -----------------------------------------------------------

def random_bath_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, index]))


def random_bath_average(config: SimulationConfig, gamma: float, t: float
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Average of ``C^SS(t)`` over random pure bath draws, and the mixed-bath ``C^SS(t)``.

    Initial states are diagonal, so ``C^SS = R_c^dag diag(c0) R_c`` with
    ``R_c`` the system columns of the rotation.
    """
    geom = LatticeGeometry(config.L)
    layout = ModeLayout(geom, config.M)
    h_sys = build_system_hamiltonian(geom, config.J, config.h_s)
    prop = StarBathPropagator(h_sys, star_bath(gamma, config.M, config.omega_max, config.h_s))
    Rc = prop.columns(t, np.arange(geom.N))
    c_sys = np.diag(init_checkerboard(geom)).real
    n_bath = layout.dim - geom.N
    occ = np.empty((config.N_init, layout.dim))
    occ[:, :geom.N] = c_sys
    for i in range(config.N_init):
        occ[i, geom.N:] = np.diag(init_random_pure_bath(n_bath, random_bath_rng(config.seed, i))).real
    mean_occ = occ.mean(axis=0)
    avg = (Rc.conj() * mean_occ[:, None]).T @ Rc
    mixed_occ = np.r_[c_sys, np.full(n_bath, 0.5)]
    mixed = (Rc.conj() * mixed_occ[:, None]).T @ Rc
    return avg, mixed


def run_random_bath_ensemble(config: SimulationConfig) -> RunResult:
    started = time.time()
    check_resources(config)
    geom = LatticeGeometry(config.L)
    h_sys = build_system_hamiltonian(geom, config.J, config.h_s)
    sys_prop = Propagator.from_hamiltonian(h_sys)
    rows = []
    t = config.t_s
    for gamma in config.gamma:
        avg, mixed = random_bath_average(config, gamma, t)
        C_me = evolve_master_equation(init_checkerboard(geom), h_sys, gamma, t, propagator=sys_prop)
        rep = deviation_report(avg, C_me)
        mixed_dev = deviation_report(avg, mixed).me_dev
        off = ~np.eye(geom.N, dtype=bool)
        mean_diag = float(np.abs(np.diag(avg)).mean())
        mean_off = float(np.abs(avg[off]).mean())
        rows.append([t, gamma, config.L, config.M, config.N_init, rep.diag_dev, rep.offdiag_dev,
                     rep.me_dev, mixed_dev, mean_diag, mean_off, mean_diag / mean_off])
    files = {"random_bath": write_csv(_out(config, "random_bath.csv"), RANDOM_BATH_COLUMNS, rows,
                                      _meta(config))}
    seeds = f"SeedSequence([{config.seed}, 1, index]) for index in 0..{config.N_init - 1}"
    return _finish(config, files, started, seeds=seeds)


# -- analysis ----------------------------------------------------------------------

def load_observable(paths, observable: str) -> dict[tuple[float, int], float]:
    """Value of ``observable`` at the latest time for every ``(gamma, L)`` in the inputs."""
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise FileNotFoundError("missing input files: " + ", ".join(missing))
    latest: dict[tuple[float, int], tuple[float, float]] = {}
    for p in paths:
        _, rows = read_csv(p)
        if rows and observable not in rows[0]:
            raise ValueError(f"{p}: no column {observable!r}")
        for row in rows:
            key = (float(row["gamma"]), int(row["L"]))
            t = float(row.get("t", "0"))
            if key not in latest or t >= latest[key][0]:
                latest[key] = (t, float(row[observable]))
    if not latest:
        raise ValueError("inputs contain no data rows")
    return {k: v for k, (_, v) in sorted(latest.items())}


def run_analysis(config: SimulationConfig) -> RunResult:
    """Window fits of ``y = c x ln x + b x``, crossing scan of ``c`` and collapse of ``c``."""
    started = time.time()
    if not config.inputs:
        raise ValueError("analyze needs at least one input CSV (inputs=...)")
    data = load_observable(config.inputs, config.observable)
    by_gamma = defaultdict(list)
    for (gamma, L), v in data.items():
        by_gamma[gamma].append((L, v))
    notes, fits = [], []
    for gamma, pts in by_gamma.items():
        try:
            fits.extend(fit_windows(pts, config.x_min, gamma))
        except ValueError as exc:
            notes.append(f"gamma={gamma!r}: fit skipped ({exc})")
    fit_rows = [[f.gamma, f.L, config.x_min, f.c, f.b, f.residual, f.n_points] for f in fits]
    meta = _meta(config)
    files = {"fits": write_csv(_out(config, "fits.csv"), FIT_COLUMNS, fit_rows, meta)}

    windows = sorted({f.L for f in fits})
    gammas = sorted({f.gamma for f in fits})
    if len(windows) >= 3:
        est = size_invariance_scan(fits)
        files["scan"] = write_csv(_out(config, "scan.csv"), SCAN_COLUMNS,
                                  [[int(est.found), est.gamma, est.spread, len(est.crossings)]], meta)
    else:
        notes.append("crossing scan skipped: fewer than three fit windows")
    if len(gammas) >= 5 and len(windows) >= 3:
        g = np.array([f.gamma for f in fits])
        Ls = np.array([f.L for f in fits])
        c = np.array([f.c for f in fits])
        gc_range = config.gamma_c_range or [min(gammas), max(gammas)]
        res = collapse(g, Ls, c, tuple(gc_range), tuple(config.nu_range), tuple(config.zeta_range),
                       n_boot=config.n_boot, grid=config.grid, seed=config.seed)
        if not res.transition:
            notes.append(res.note)
        files["collapse"] = write_csv(
            _out(config, "collapse.csv"), COLLAPSE_COLUMNS,
            [[res.gamma_c, res.nu, res.zeta, res.d_gamma_c, res.d_nu, res.d_zeta, res.quality,
              res.n_boot]], meta)
    else:
        notes.append("collapse skipped: needs at least five gamma values and three fit windows")
    return _finish(config, files, started, notes)


PIPELINES = {
    "unitary": run_unitary_pipeline,
    "master": run_master_pipeline,
    "trajectories": run_trajectory_pipeline,
    "random-bath": run_random_bath_ensemble,
    "analyze": run_analysis,
}


def run(config: SimulationConfig) -> RunResult:
    return PIPELINES[config.validate().mode](config)
