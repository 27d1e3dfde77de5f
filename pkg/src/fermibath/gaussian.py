"""Correlation-matrix states of number-conserving free fermions.

A state is represented by ``C_ij = <c_i^dag c_j>``. Under
``H = sum h_ij c_i^dag c_j`` the Heisenberg equation gives
``dC/dt = i [h^T, C]``, hence

    C(t) = R^dag C R,    R = exp(-i h^T t).

For the real symmetric Hamiltonians built in :mod:`fermibath.lattice`
``h^T = h``; the transpose only matters for complex input and is pinned by
a Fock-space test.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvariantViolation
from .lattice import LatticeGeometry, StarBath

PROPAGATION_CONVENTION = "C(t)=R^dag C R, R=exp(-i h^T t)"
SPECTRUM_TOL = 1e-9


def clamp_spectrum(eigs: np.ndarray, tol: float = SPECTRUM_TOL) -> np.ndarray:
    """Clip eigenvalues into [0, 1]; abort if any lies further than ``tol`` outside."""
    eigs = np.asarray(eigs, dtype=float)
    if eigs.size and (eigs.min() < -tol or eigs.max() > 1 + tol):
        raise InvariantViolation(
            f"correlation spectrum outside [-{tol:g}, 1+{tol:g}]: "
            f"min={eigs.min():.3e}, max={eigs.max():.3e}")
    return np.clip(eigs, 0.0, 1.0)


def validate_correlation(C: np.ndarray, pure: bool = False, herm_tol: float = 1e-10,
                         spec_tol: float = SPECTRUM_TOL, pure_tol: float = 1e-8) -> None:
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"correlation matrix must be square, got {C.shape}")
    herm = np.abs(C - C.conj().T).max(initial=0.0)
    if herm > herm_tol:
        raise InvariantViolation(f"correlation matrix not Hermitian ({herm:.2e})")
    clamp_spectrum(np.linalg.eigvalsh(C), spec_tol)
    if pure:
        err = purity_error(C)
        if err > pure_tol:
            raise InvariantViolation(f"state not pure: max|C^2-C| = {err:.2e}")


def purity_error(C: np.ndarray) -> float:
    return float(np.abs(C @ C - C).max(initial=0.0))


@dataclass(frozen=True)
class LowRankCorrelation:
    """``C = 1/2 + A G A^dag`` with ``A`` of shape (dim, r), ``G`` Hermitian (r, r).

    Any state obtained by unitarily evolving a system of ``r`` modes away
    from infinite temperature, with everything else at ``1/2``, has this form
    at rank ``r``; the measures exploit it to avoid ``dim``-sized
    eigenproblems.
    """

    A: np.ndarray
    G: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    def take(self, idx) -> "LowRankCorrelation":
        return LowRankCorrelation(self.A[np.asarray(idx)], self.G)

    def block(self, rows, cols) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        out = self.A[rows] @ self.G @ self.A[cols].conj().T
        out[rows[:, None] == cols[None, :]] += 0.5
        return out

    def diagonal(self) -> np.ndarray:
        return 0.5 + np.einsum("ir,rs,is->i", self.A, self.G, self.A.conj()).real

    def dense(self) -> np.ndarray:
        out = self.A @ self.G @ self.A.conj().T
        out[np.diag_indices(self.dim)] += 0.5
        return out


def as_dense(C) -> np.ndarray:
    return C.dense() if isinstance(C, LowRankCorrelation) else np.asarray(C)


class Propagator:
    """Cached eigendecomposition ``h^T = W diag(eps) W^dag`` for exact propagation."""

    def __init__(self, eigenvalues: np.ndarray, eigenvectors: np.ndarray):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(eigenvectors)

    @classmethod
    def from_hamiltonian(cls, h: np.ndarray) -> "Propagator":
        h = np.asarray(h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("Hamiltonian must be square")
        if np.abs(h - h.conj().T).max(initial=0.0) > 1e-12:
            raise ValueError("Hamiltonian is not Hermitian")
        eps, W = np.linalg.eigh(h.T)
        return cls(eps, W)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def rotation(self, t: float) -> np.ndarray:
        """Dense ``R(t) = exp(-i h^T t)``."""
        W = self.eigenvectors
        return (W * np.exp(-1j * self.eigenvalues * t)) @ W.conj().T

    def apply(self, t: float, X: np.ndarray) -> np.ndarray:
        """``R(t) @ X`` without forming ``R``; ``R(t)^dag = R(-t)``."""
        W = self.eigenvectors
        return W @ (np.exp(-1j * self.eigenvalues * t)[:, None] * (W.conj().T @ X))

    def columns(self, t: float, idx) -> np.ndarray:
        W = self.eigenvectors
        return W @ (np.exp(-1j * self.eigenvalues * t)[:, None] * W[np.asarray(idx)].conj().T)


class StarBathPropagator:
    """Exact propagator for a lattice with one identical star bath per site.

    With ``h_sys = phi diag(eps) phi^T`` the rotation ``phi (x) 1`` splits the
    ``D = N(M+1)`` problem into ``N`` independent ``(M+1)``-mode stars (one
    system eigenmode coupled to its own copy of the bath), so the full
    eigendecomposition costs ``N`` small ``eigh`` calls instead of one of
    size ``D``. Vectors and matrices are in canonical mode order.
    """

    def __init__(self, h_sys: np.ndarray, bath: StarBath):
        h_sys = np.asarray(h_sys)
        if np.iscomplexobj(h_sys) or np.abs(h_sys - h_sys.T).max(initial=0.0) > 1e-12:
            raise ValueError("star-bath propagation requires a real symmetric system Hamiltonian")
        self.N = h_sys.shape[0]
        self.M = bath.M
        eps, self.phi = np.linalg.eigh(h_sys)
        M1 = self.M + 1
        blocks = np.zeros((self.N, M1, M1))
        blocks[:, 0, 0] = eps
        blocks[:, 0, 1:] = -bath.coupling
        blocks[:, 1:, 0] = -bath.coupling
        blocks[:, np.arange(1, M1), np.arange(1, M1)] = bath.omega
        self.block_eigenvalues, self.block_vectors = np.linalg.eigh(blocks)

    @property
    def dim(self) -> int:
        return self.N * (self.M + 1)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.block_eigenvalues.reshape(-1)

    @property
    def eigenvectors(self) -> np.ndarray:
        """Dense ``W`` (columns indexed by (block k, level)); ``D**2`` memory."""
        W = np.einsum("nk,kls->nlks", self.phi, self.block_vectors)
        return self._from_site_level(W.reshape(self.N, self.M + 1, -1))

    def _to_site_level(self, X: np.ndarray) -> np.ndarray:
        N, M = self.N, self.M
        out = np.empty((N, M + 1) + X.shape[1:], dtype=X.dtype)
        out[:, 0] = X[:N]
        out[:, 1:] = X[N:].reshape((N, M) + X.shape[1:])
        return out

    def _from_site_level(self, Y: np.ndarray) -> np.ndarray:
        N, M = self.N, self.M
        return np.concatenate([Y[:, 0], Y[:, 1:].reshape((N * M,) + Y.shape[2:])])

    def apply(self, t: float, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        vec = X.ndim == 1
        Y = self._to_site_level(X[:, None] if vec else X)
        # site -> system eigenmode, per-block rotation, back to sites
        Y = np.tensordot(self.phi.T, Y, axes=1)
        w, e = self.block_vectors, self.block_eigenvalues
        Y = np.exp(-1j * e * t)[:, :, None] * (w.transpose(0, 2, 1) @ Y)
        Y = np.tensordot(self.phi, w @ Y, axes=1)
        out = self._from_site_level(Y)
        return out[:, 0] if vec else out

    def columns(self, t: float, idx) -> np.ndarray:
        idx = np.asarray(idx)
        E = np.zeros((self.dim, len(idx)))
        E[idx, np.arange(len(idx))] = 1.0
        return self.apply(t, E)

    def rotation(self, t: float) -> np.ndarray:
        return self.apply(t, np.eye(self.dim))


def evolve(C, prop, t: float):
    """Exact unitary propagation of a correlation matrix by time ``t >= 0``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(C, LowRankCorrelation):
        if C.dim != prop.dim:
            raise ValueError(f"dimension mismatch: state {C.dim}, propagator {prop.dim}")
        return LowRankCorrelation(prop.apply(-t, C.A), C.G)
    C = np.asarray(C)
    if C.shape != (prop.dim, prop.dim):
        raise ValueError(f"dimension mismatch: state {C.shape}, propagator {prop.dim}")
    R = prop.rotation(t)
    return R.conj().T @ C @ R


def evolve_block(C: np.ndarray, prop, t: float, idx) -> np.ndarray:
    """Principal block ``C(t)[idx, idx]`` using only the needed columns of ``R``."""
    Rc = prop.columns(t, idx)
    return Rc.conj().T @ np.asarray(C) @ Rc


def integrate_rk4(C: np.ndarray, h: np.ndarray, t: float, n_steps: int,
                  gamma: float = 0.0) -> np.ndarray:
    """Fixed-step RK4 for ``dC/dt = i[h^T, C] - 2 gamma (C - 1/2)``.

    Cross-validation only; production code uses the closed forms.
    """
    hT = np.asarray(h).T
    half = 0.5 * np.eye(len(hT))
    C = np.asarray(C, dtype=complex)
    dt = t / n_steps

    def rhs(X):
        return 1j * (hT @ X - X @ hT) - 2.0 * gamma * (X - half)

    for _ in range(n_steps):
        k1 = rhs(C)
        k2 = rhs(C + 0.5 * dt * k1)
        k3 = rhs(C + 0.5 * dt * k2)
        k4 = rhs(C + dt * k3)
        C = C + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return C


def init_checkerboard(geom: LatticeGeometry) -> np.ndarray:
    """Product state with site ``(r, c)`` occupied iff ``r + c`` is odd."""
    return np.diag(((geom.rows + geom.cols) % 2).astype(float)).astype(complex)


def init_infinite_temperature(dim: int) -> np.ndarray:
    return 0.5 * np.eye(dim, dtype=complex)


def init_random_pure_bath(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Diagonal pure state with i.i.d. Bernoulli(1/2) occupations."""
    return np.diag(rng.integers(0, 2, size=dim).astype(float)).astype(complex)


def extract_block(C, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    dim = C.dim if isinstance(C, LowRankCorrelation) else np.asarray(C).shape[0]
    for idx in (rows, cols):
        if idx.size and (idx.min() < 0 or idx.max() >= dim):
            raise IndexError(f"block index out of range for dimension {dim}")
    if isinstance(C, LowRankCorrelation):
        return C.block(rows, cols)
    return np.array(np.asarray(C)[np.ix_(rows, cols)])


# Snapshot layout: uint64 rows, uint64 cols, then rows*cols complex128,
# row-major, everything little-endian.
_HEADER = struct.Struct("<QQ")


def save_matrix(path: str | Path, C: np.ndarray) -> None:
    C = np.ascontiguousarray(C, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*C.shape))
        fh.write(C.tobytes(order="C"))


def load_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, cols = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size:]
    if len(body) != rows * cols * 16:
        raise ValueError(f"{path}: expected {rows}x{cols} complex entries, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<c16").reshape(rows, cols).astype(complex)
