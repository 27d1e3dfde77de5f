"""Stroboscopic quantum trajectories for on-site gain and loss.

Each step: exact unitary evolution over ``dt``, then a sweep over sites in
ascending order applying the gain channel and then the loss channel, each
with its own uniform draw. Kraus operators per site ``n`` (``p = gamma*dt``)::

    gain: M0 = sqrt(1-p) + (1 - sqrt(1-p)) n_n,   M1 = sqrt(p) a_n^dag
    loss: M0 = 1 - (1 - sqrt(1-p)) n_n,           M1 = sqrt(p) a_n

Both branches map Gaussian pure states to Gaussian pure states, so the
update acts directly on the correlation matrix.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .errors import InvariantViolation
from .gaussian import Propagator, init_checkerboard, purity_error
from .lattice import LatticeGeometry, build_system_hamiltonian

SWEEP_ORDER = "ascending sites; gain then loss per site; one draw per channel"
PURITY_ABORT = 1e-6
_DIV_GUARD = 1e-12


@njit(cache=True)
def _kraus_update(C, n, p, gain, jump):
    """In-place branch update of ``C`` at site ``n``; result is Hermitian by construction."""
    D = C.shape[0]
    cnn = C[n, n].real
    col = C[:, n].copy()
    if gain:
        dp = p * (1.0 - cnn)
    else:
        dp = p * cnn
    s = math.sqrt(1.0 - p)
    q = 1.0 - s
    if jump:
        if gain:
            a = -col
            a[n] += 1.0
            norm = 1.0 - cnn
            for i in range(D):
                for j in range(i, D):
                    v = C[i, j] + a[i] * np.conj(a[j]) / norm
                    C[i, j] = v
                    C[j, i] = np.conj(v)
        else:
            for i in range(D):
                for j in range(i, D):
                    v = C[i, j] - col[i] * np.conj(col[j]) / cnn
                    C[i, j] = v
                    C[j, i] = np.conj(v)
    else:
        norm = 1.0 - dp
        if gain:
            outer = -p / norm
            cross = s * q / norm
        else:
            outer = p / norm
            cross = -q / norm
        for i in range(D):
            for j in range(i, D):
                v = C[i, j] + outer * col[i] * np.conj(col[j])
                if i == n:
                    v += cross * np.conj(col[j])
                if j == n:
                    v += cross * col[i]
                C[i, j] = v
                C[j, i] = np.conj(v)
        C[n, n] += q * q * cnn / norm
    for i in range(D):
        C[i, i] = C[i, i].real
    return dp


@njit(cache=True)
def _branch_probability(C, n, p, gain):
    cnn = C[n, n].real
    return p * (1.0 - cnn) if gain else p * cnn


@njit(cache=True)
def _jump_sweep(C, p, uniforms, record):
    """Gain then loss on every site; returns -1 - 2n (- 1) on a bad branch probability."""
    N = C.shape[0]
    for n in range(N):
        for k in range(2):
            gain = k == 0
            dp = _branch_probability(C, n, p, gain)
            if dp < -1e-12 or dp > 1.0 + 1e-12:
                return -1 - (2 * n + k)
            cnn = C[n, n].real
            guard = (1.0 - cnn) if gain else cnn
            jump = uniforms[2 * n + k] < dp and guard >= 1e-12
            _kraus_update(C, n, p, gain, jump)
            record[2 * n + k] = jump
    return 0


def _check_site(C: np.ndarray, n: int, p: float) -> None:
    if not 0 <= p < 1:
        raise ValueError(f"jump probability p must satisfy 0 <= p < 1, got {p}")
    if not 0 <= n < C.shape[0]:
        raise IndexError(n)


def _branch(C, n, p, gain: bool, jump: bool) -> np.ndarray:
    C = np.array(C, dtype=complex)
    _check_site(C, n, p)
    cnn = C[n, n].real
    dp = p * (1.0 - cnn) if gain else p * cnn
    if not -1e-12 <= dp <= 1 + 1e-12:
        raise InvariantViolation(f"branch probability {dp} outside [0, 1] at site {n}")
    if jump and (1.0 - cnn if gain else cnn) < _DIV_GUARD:
        raise InvariantViolation(f"jump branch has zero probability at site {n}")
    _kraus_update(C, n, p, gain, jump)
    return C


def gain_update(C: np.ndarray, n: int, p: float, jump: bool) -> np.ndarray:
    """Deterministic branch of the gain channel (``jump=True`` applies ``a_n^dag``)."""
    return _branch(C, n, p, True, jump)


def loss_update(C: np.ndarray, n: int, p: float, jump: bool) -> np.ndarray:
    """Deterministic branch of the loss channel (``jump=True`` applies ``a_n``)."""
    return _branch(C, n, p, False, jump)


def _sample(C, n, p, rng, gain):
    C = np.asarray(C)
    _check_site(C, n, p)
    cnn = C[n, n].real
    dp = p * (1.0 - cnn) if gain else p * cnn
    guard = 1.0 - cnn if gain else cnn
    jump = bool(rng.random() < dp and guard >= _DIV_GUARD)
    return _branch(C, n, p, gain, jump)


def gain_channel(C: np.ndarray, n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sample the gain channel at site ``n``; jump with probability ``p (1 - C_nn)``."""
    return _sample(C, n, p, rng, True)


def loss_channel(C: np.ndarray, n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sample the loss channel at site ``n``; jump with probability ``p C_nn``."""
    return _sample(C, n, p, rng, False)


@dataclass(frozen=True)
class TrajectoryConfig:
    gamma: float
    dt: float = 0.1
    t_s: float = 50.0
    n_traj: int = 256
    seed: int = 0
    J: float = 1.0
    h_s: float = 5.0
    sample_interval: float = 1.0
    sample_times: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.gamma < 0 or self.dt <= 0 or self.t_s <= 0:
            raise ValueError("gamma must be >= 0, dt and t_s > 0")
        if self.gamma * self.dt >= 1:
            raise ValueError(f"jump probability gamma*dt = {self.gamma * self.dt} must be < 1")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")

    @property
    def p(self) -> float:
        return self.gamma * self.dt

    @property
    def n_steps(self) -> int:
        return int(round(self.t_s / self.dt))

    def sample_steps(self) -> np.ndarray:
        """Step indices of the samples; explicit ``sample_times`` must be multiples of ``dt``."""
        if self.sample_times is not None:
            steps = []
            for t in self.sample_times:
                k = int(round(t / self.dt))
                if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)) or not 1 <= k <= self.n_steps:
                    raise ValueError(f"sample time {t} is not a step time in (0, t_s]")
                steps.append(k)
            return np.unique(steps)
        every = max(1, int(round(self.sample_interval / self.dt)))
        steps = list(range(every, self.n_steps + 1, every))
        if not steps or steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return np.array(steps)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream for trajectory ``index``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


@dataclass
class TrajectoryRecord:
    index: int
    times: np.ndarray
    final: np.ndarray
    max_purity_error: float
    snapshots: list[np.ndarray] | None = None
    observations: list = field(default_factory=list)
    jumps: np.ndarray | None = None


def run_trajectory(geom: LatticeGeometry, config: TrajectoryConfig, index: int,
                   observe: Callable[[np.ndarray], object] | None = None,
                   keep_snapshots: bool = False, record_jumps: bool = False,
                   propagator: Propagator | None = None) -> TrajectoryRecord:
    """One stroboscopic trajectory from the checkerboard state."""
    if propagator is None:
        propagator = Propagator.from_hamiltonian(build_system_hamiltonian(geom, config.J, config.h_s))
    R = propagator.rotation(config.dt)
    Rd = R.conj().T
    rng = trajectory_rng(config.seed, index)
    N = geom.N
    C = np.ascontiguousarray(init_checkerboard(geom))
    sample_steps = set(config.sample_steps().tolist())
    times, snaps, obs = [], [], []
    jumps = np.zeros((config.n_steps, 2 * N), dtype=np.bool_) if record_jumps else None
    record = np.zeros(2 * N, dtype=np.bool_)
    worst = 0.0
    for step in range(1, config.n_steps + 1):
        C = np.ascontiguousarray(Rd @ C @ R)
        if config.p > 0:
            status = _jump_sweep(C, config.p, rng.random(2 * N), record)
            if status:
                site, chan = divmod(-status - 1, 2)
                raise InvariantViolation(
                    f"trajectory {index}: branch probability outside [0,1] at step {step}, "
                    f"site {site}, {'gain' if chan == 0 else 'loss'} channel")
            if jumps is not None:
                jumps[step - 1] = record
        err = purity_error(C)
        worst = max(worst, err)
        if err > PURITY_ABORT:
            raise InvariantViolation(f"trajectory {index}: purity lost at step {step} ({err:.2e})")
        if step in sample_steps:
            times.append(step * config.dt)
            if keep_snapshots:
                snaps.append(C.copy())
            if observe is not None:
                obs.append(observe(C))
    return TrajectoryRecord(index=index, times=np.array(times), final=C, max_purity_error=worst,
                            snapshots=snaps if keep_snapshots else None,
                            observations=obs, jumps=jumps)


def ensemble_mean_stderr(values) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over axis 0; stderr is 0 for a single member."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        raise ValueError("empty ensemble")
    mean = values.mean(axis=0)
    if values.shape[0] == 1:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])


def trajectory_averages(snapshots, layout) -> dict[str, np.ndarray]:
    """Ensemble statistics of ``S(Tr_R C)`` and ``E(C)``.

    ``snapshots[a][k]`` is the (canonical-order) state of trajectory ``a`` at
    sample ``k``.
    """
    from .measures import half_system_entropy, log_fermionic_negativity
    from .lattice import reorder_to_partitions

    if len(snapshots) == 0:
        raise ValueError("empty ensemble")
    S = [[half_system_entropy(C, layout) for C in traj] for traj in snapshots]
    E = [[log_fermionic_negativity(reorder_to_partitions(layout, C), layout) for C in traj]
         for traj in snapshots]
    mean_S, err_S = ensemble_mean_stderr(S)
    mean_E, err_E = ensemble_mean_stderr(E)
    return {"mean_S": mean_S, "stderr_S": err_S, "mean_E": mean_E, "stderr_E": err_E}


def _worker(args):
    geom, config, index, observe, keep_final = args
    rec = run_trajectory(geom, config, index, observe=observe)
    return rec.index, rec.times, rec.observations, rec.max_purity_error, (rec.final if keep_final else None)


def run_ensemble(geom: LatticeGeometry, config: TrajectoryConfig, observe=None,
                 workers: int | None = None, keep_final: bool = False):
    """Run all trajectories; results are returned ordered by trajectory index.

    ``observe`` must be picklable (a module-level callable) when ``workers > 1``.
    """
    workers = workers or 1
    tasks = [(geom, config, i, observe, keep_final) for i in range(config.n_traj)]
    if workers == 1:
        out = [_worker(t) for t in tasks]
    else:
        workers = min(workers, os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_worker, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    out.sort(key=lambda r: r[0])
    return out
