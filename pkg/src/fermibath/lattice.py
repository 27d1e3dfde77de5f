"""Square-lattice geometry and single-particle Hamiltonians.

Mode ordering used throughout the package:

* canonical order: the N system sites (row-major), followed by the bath
  modes grouped by site, ``N + n*M + (m - 1)`` for bath mode ``m = 1..M``
  of site ``n``;
* L/R order: every Left mode (system sites, then their bath modes) followed
  by every Right mode, same sub-ordering.

All matrices are coefficient matrices ``h`` of ``H = sum_ij h_ij c_i^dag c_j``
in units of the hopping J.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class LatticeGeometry:
    """Open-boundary L x L lattice, cut vertically into two halves."""

    L: int

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L!r}")

    @property
    def N(self) -> int:
        return self.L * self.L

    def site_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.L and 0 <= col < self.L):
            raise IndexError((row, col))
        return row * self.L + col

    def coords(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.N:
            raise IndexError(n)
        return divmod(n, self.L)

    @cached_property
    def rows(self) -> np.ndarray:
        return np.arange(self.N) // self.L

    @cached_property
    def cols(self) -> np.ndarray:
        return np.arange(self.N) % self.L

    @cached_property
    def partition(self) -> np.ndarray:
        """LEFT (0) for columns ``0..L/2-1``, RIGHT (1) otherwise."""
        return (self.cols >= self.L // 2).astype(np.int8)

    def city_block(self, n: int, n2: int) -> int:
        r1, c1 = self.coords(n)
        r2, c2 = self.coords(n2)
        return abs(r1 - r2) + abs(c1 - c2)

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        return (np.abs(self.rows[:, None] - self.rows[None, :])
                + np.abs(self.cols[:, None] - self.cols[None, :]))

    @cached_property
    def bonds(self) -> np.ndarray:
        """Nearest-neighbour pairs ``(n, n')`` with ``n < n'``, shape (2L(L-1), 2)."""
        n = np.arange(self.N)
        horiz = n[self.cols < self.L - 1]
        vert = n[self.rows < self.L - 1]
        return np.concatenate([
            np.stack([horiz, horiz + 1], axis=1),
            np.stack([vert, vert + self.L], axis=1),
        ])


@dataclass(frozen=True)
class ModeLayout:
    """Bookkeeping for the ``N*(M+1)`` modes of the system + star baths.

    ``perm[k]`` is the canonical index of the k-th mode in L/R order, so
    ``C_lr = C[np.ix_(perm, perm)]``. ``M = 0`` describes a bare system.
    """

    geometry: LatticeGeometry
    M: int

    def __post_init__(self):
        if self.M < 0:
            raise ValueError("M must be non-negative")

    @property
    def n_sites(self) -> int:
        return self.geometry.N

    @property
    def dim(self) -> int:
        return self.n_sites * (self.M + 1)

    @cached_property
    def site_of_mode(self) -> np.ndarray:
        N, M = self.n_sites, self.M
        return np.concatenate([np.arange(N), np.repeat(np.arange(N), M)])

    @cached_property
    def bath_level(self) -> np.ndarray:
        """0 for system modes, ``m`` in ``1..M`` for bath modes (canonical order)."""
        return np.concatenate([np.zeros(self.n_sites, dtype=int),
                               np.tile(np.arange(1, self.M + 1), self.n_sites)])

    @cached_property
    def is_system(self) -> np.ndarray:
        return self.bath_level == 0

    @cached_property
    def partition(self) -> np.ndarray:
        return self.geometry.partition[self.site_of_mode]

    @cached_property
    def perm(self) -> np.ndarray:
        idx = np.arange(self.dim)
        return np.concatenate([idx[self.partition == LEFT], idx[self.partition == RIGHT]])

    @cached_property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.dim)
        return inv

    @property
    def n_left(self) -> int:
        return self.dim // 2

    @cached_property
    def lr_is_system(self) -> np.ndarray:
        return self.is_system[self.perm]

    @cached_property
    def lr_site(self) -> np.ndarray:
        return self.site_of_mode[self.perm]

    def bath_index(self, n: int, m: int) -> int:
        if not (0 <= n < self.n_sites and 1 <= m <= self.M):
            raise IndexError((n, m))
        return self.n_sites + n * self.M + (m - 1)


def build_system_hamiltonian(geom: LatticeGeometry, J: float = 1.0, h_s: float = 5.0) -> np.ndarray:
    """Nearest-neighbour hopping ``-J`` plus on-site energy ``h_s``, open boundaries."""
    h = np.zeros((geom.N, geom.N))
    i, j = geom.bonds.T
    h[i, j] = -J
    h[j, i] = -J
    h[np.diag_indices(geom.N)] = h_s
    return h


@dataclass(frozen=True)
class StarBath:
    """Identical star bath on every site: levels ``omega`` coupled by ``-coupling``."""

    omega: np.ndarray
    coupling: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.omega)


def star_bath(gamma: float, M: int, omega_max: float, h_s: float) -> StarBath:
    """Discretized bath ``omega_m = m*omega_max/M`` with ``V = sqrt(gamma*omega_m/M*omega_max/(pi*h_s))``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if omega_max <= 0 or h_s <= 0:
        raise ValueError("omega_max and h_s must be positive")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    omega = np.arange(1, M + 1) * (omega_max / M)
    coupling = np.sqrt(gamma * (omega / M) * (omega_max / (np.pi * h_s)))
    return StarBath(omega, coupling)


def build_total_hamiltonian(geom: LatticeGeometry, J: float, h_s: float, gamma: float,
                            M: int, omega_max: float) -> tuple[np.ndarray, ModeLayout]:
    """Dense system + bath coefficient matrix in canonical order.

    Dense storage is ``D**2`` doubles with ``D = N*(M+1)``; the propagation
    code never needs this matrix (see ``gaussian.StarBathPropagator``).
    """
    bath = star_bath(gamma, M, omega_max, h_s)
    layout = ModeLayout(geom, M)
    N, D = geom.N, layout.dim
    h = np.zeros((D, D))
    h[:N, :N] = build_system_hamiltonian(geom, J, h_s)
    for n in range(N):
        idx = N + n * M + np.arange(M)
        h[idx, idx] = bath.omega
        h[n, idx] = -bath.coupling
        h[idx, n] = -bath.coupling
    return h, layout


def reorder_to_partitions(layout: ModeLayout, C):
    """Canonical -> L/R order (a permutation similarity)."""
    from .gaussian import LowRankCorrelation

    if isinstance(C, LowRankCorrelation):
        if C.dim != layout.dim:
            raise ValueError(f"dimension {C.dim} does not match layout {layout.dim}")
        return C.take(layout.perm)
    C = np.asarray(C)
    if C.shape != (layout.dim, layout.dim):
        raise ValueError(f"shape {C.shape} does not match layout dimension {layout.dim}")
    return C[np.ix_(layout.perm, layout.perm)]


def reorder_to_canonical(layout: ModeLayout, C):
    from .gaussian import LowRankCorrelation

    if isinstance(C, LowRankCorrelation):
        return C.take(layout.inverse_perm)
    C = np.asarray(C)
    if C.shape != (layout.dim, layout.dim):
        raise ValueError(f"shape {C.shape} does not match layout dimension {layout.dim}")
    return C[np.ix_(layout.inverse_perm, layout.inverse_perm)]
