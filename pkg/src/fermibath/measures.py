"""Entanglement and correlation measures of correlation-matrix states.

Functions taking a ``layout`` expect ``C`` in L/R order (see
:func:`fermibath.lattice.reorder_to_partitions`): the first
``layout.n_left`` modes form the left part. Every function accepts a dense
array or a :class:`~fermibath.gaussian.LowRankCorrelation`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation
from .gaussian import SPECTRUM_TOL, LowRankCorrelation, clamp_spectrum
from .lattice import LatticeGeometry, ModeLayout

NEGATIVITY_SPECTRUM_TOL = 1e-7
PAIR_CONVENTION = "unordered site pairs; d=0 counts each site once"
_LN2 = np.log(2.0)


def _binary_entropy(lam: np.ndarray) -> float:
    lam = lam[(lam > 0) & (lam < 1)]
    return float(-np.sum(lam * np.log(lam) + (1 - lam) * np.log1p(-lam)))


def _low_rank_spectrum(C: LowRankCorrelation) -> np.ndarray:
    """Eigenvalues of ``A G A^dag`` on its range (at most ``rank`` of them)."""
    Q, R = np.linalg.qr(C.A)
    K = R @ C.G @ R.conj().T
    return np.linalg.eigvalsh(0.5 * (K + K.conj().T))


def correlation_spectrum(C) -> np.ndarray:
    """Clamped eigenvalues of ``C``; trivial ``1/2`` eigenvalues are omitted for low-rank input."""
    if isinstance(C, LowRankCorrelation):
        return clamp_spectrum(0.5 + _low_rank_spectrum(C), SPECTRUM_TOL)
    return clamp_spectrum(np.linalg.eigvalsh(np.asarray(C)), SPECTRUM_TOL)


def von_neumann_entropy(C) -> float:
    """``-sum [l ln l + (1-l) ln(1-l)]`` over the eigenvalues of ``C``."""
    if isinstance(C, LowRankCorrelation):
        lam = correlation_spectrum(C)
        return _binary_entropy(lam) + (C.dim - len(lam)) * _LN2
    C = np.asarray(C)
    if C.size == 0:
        return 0.0
    return _binary_entropy(correlation_spectrum(C))


def _subset(C, idx):
    if isinstance(C, LowRankCorrelation):
        return C.take(idx)
    return np.asarray(C)[np.ix_(idx, idx)]


def half_system_entropy(C, layout: ModeLayout) -> float:
    """``S(Tr_R C)`` for ``C`` in canonical order."""
    return von_neumann_entropy(_subset(C, layout.perm[:layout.n_left]))


def _split(layout) -> int:
    return layout if isinstance(layout, (int, np.integer)) else layout.n_left


def log_fermionic_negativity(C, layout) -> float:
    """Logarithmic negativity of the fermionic partial transpose across the L/R cut.

    ``E = sum_j ln(sqrt(mu_j) + sqrt(1 - mu_j)) + 1/2 sum_j ln(1 - 2 l_j + 2 l_j^2)``
    with ``l_j`` the eigenvalues of ``C`` and ``mu_j`` those of
    ``G_x = [1 - (1 + G+ G-)^-1 (G+ + G-)] / 2``, ``G = 2C - 1``, and ``G+-``
    equal to ``G`` with the LR blocks multiplied by ``+-i`` and the RR block
    negated. ``layout`` may be a :class:`ModeLayout` or the left-part size.

    Evaluated in the equivalent form ``ln(sqrt(mu) + sqrt(1 - mu)) = ln(1 + s) / 2``
    where ``s`` are the singular values of ``Y = (G - Z)(1 + G^2)^-1 (G + Z)``,
    ``Z = diag(1_L, -1_R)``. This follows from ``1 + G^2 +- (GZ + ZG) = (G +- Z)^2``
    and avoids square roots of eigenvalues near 0 or 1, which would turn
    rounding errors of order 1e-16 into errors of order 1e-8 for pure states.
    """
    n_left = _split(layout)
    if isinstance(C, LowRankCorrelation):
        return _negativity_low_rank(C, n_left)
    C = np.asarray(C)
    D = C.shape[0]
    lam, U = np.linalg.eigh(C)
    lam = clamp_spectrum(lam)
    g = 2 * lam - 1
    z = np.ones(D)
    z[n_left:] = -1
    Gamma = (U * g) @ U.conj().T
    Binv = (U * (1.0 / (1.0 + g * g))) @ U.conj().T
    Y = (Gamma - np.diag(z)) @ Binv @ (Gamma + np.diag(z))
    s = np.linalg.svd(Y, compute_uv=False)
    return _negativity_from_spectra(s, g, 0, 0)


def _negativity_from_spectra(s, g, n_unit: int, n_zero: int) -> float:
    """``s``: singular values of ``Y`` plus ``n_unit`` ones; ``g``: spectrum of ``G`` plus ``n_zero`` zeros."""
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
        raise InvariantViolation("non-finite spectrum in the negativity")
    if s.size and s.max() > 1 + NEGATIVITY_SPECTRUM_TOL:
        raise InvariantViolation(f"negativity spectrum out of range ({s.max():.3e} > 1)")
    s = np.minimum(s, 1.0)
    first = 0.5 * np.sum(np.log1p(s)) + 0.5 * _LN2 * n_unit
    second = 0.5 * np.sum(np.log1p(g * g) - _LN2) - 0.5 * _LN2 * n_zero
    E = float(first + second)
    if E < -1e-9:
        raise InvariantViolation(f"negative logarithmic negativity {E:.3e}")
    return max(E, 0.0)


def _negativity_low_rank(C: LowRankCorrelation, n_left: int) -> float:
    # G = 2C - 1 = Q K Q^dag, so Y = -1 on the complement of W = range([Q, ZQ])
    # and maps W into itself; only the restriction W^dag Y W is nontrivial.
    Q, R = np.linalg.qr(C.A)
    K = 2.0 * (R @ C.G @ R.conj().T)
    K = 0.5 * (K + K.conj().T)
    kappa, V = np.linalg.eigh(K)
    if np.abs(kappa).max(initial=0.0) > 1 + SPECTRUM_TOL:
        raise InvariantViolation(f"correlation spectrum outside [0, 1] ({kappa.max():.3e})")
    F = (V * (kappa ** 2 / (1 + kappa ** 2))) @ V.conj().T
    z = np.ones(C.dim)
    z[n_left:] = -1
    W, _ = np.linalg.qr(np.hstack([Q, z[:, None] * Q]))
    W = W[:, :min(2 * Q.shape[1], C.dim)]

    def gamma(X):
        return Q @ (K @ (Q.conj().T @ X))

    X = gamma(W) + z[:, None] * W
    X = X - Q @ (F @ (Q.conj().T @ X))
    X = gamma(X) - z[:, None] * X
    s = np.linalg.svd(W.conj().T @ X, compute_uv=False)
    return _negativity_from_spectra(s, kappa, C.dim - W.shape[1], C.dim - len(kappa))


def mutual_information(C, layout) -> float:
    """``S(C_LL) + S(C_RR) - S(C)``."""
    n_left = _split(layout)
    dim = C.dim if isinstance(C, LowRankCorrelation) else np.asarray(C).shape[0]
    left, right = np.arange(n_left), np.arange(n_left, dim)
    return (von_neumann_entropy(_subset(C, left)) + von_neumann_entropy(_subset(C, right))
            - von_neumann_entropy(C))


@dataclass(frozen=True)
class CorrelationWeights:
    """Squared Frobenius norms of the L-R block and of its system/bath pieces.

    ``sb`` pairs left system with right bath modes, ``bs`` left bath with
    right system modes; ``total = ss + sb + bs + bb``.
    """

    total: float
    ss: float
    sb: float
    bs: float
    bb: float


def _block_weight(C, rows, cols) -> float:
    if len(rows) == 0 or len(cols) == 0:
        return 0.0
    if isinstance(C, LowRankCorrelation):
        Ar, Ac = C.A[rows], C.A[cols]
        Pr, Pc = Ar.conj().T @ Ar, Ac.conj().T @ Ac
        return float(np.real(np.trace(C.G @ Pc @ C.G @ Pr)))
    block = np.asarray(C)[np.ix_(rows, cols)]
    return float(np.sum(np.abs(block) ** 2))


def connected_correlation_weight(C, layout: ModeLayout) -> CorrelationWeights:
    n_left, sysmask = layout.n_left, layout.lr_is_system
    idx = np.arange(layout.dim)
    Ls, Lb = idx[:n_left][sysmask[:n_left]], idx[:n_left][~sysmask[:n_left]]
    Rs, Rb = idx[n_left:][sysmask[n_left:]], idx[n_left:][~sysmask[n_left:]]
    ss = _block_weight(C, Ls, Rs)
    sb = _block_weight(C, Ls, Rb)
    bs = _block_weight(C, Lb, Rs)
    bb = _block_weight(C, Lb, Rb)
    return CorrelationWeights(total=ss + sb + bs + bb, ss=ss, sb=sb, bs=bs, bb=bb)


@dataclass(frozen=True)
class DistanceProfile:
    d: np.ndarray
    value: np.ndarray
    n_pairs: np.ndarray


def count_pairs(geom: LatticeGeometry) -> np.ndarray:
    """Number of unordered site pairs at each city-block distance (``d = 0``: N)."""
    dist = geom.distance_matrix
    iu = np.triu_indices(geom.N, k=1)
    counts = np.bincount(dist[iu], minlength=2 * geom.L - 1)
    counts[0] = geom.N
    return counts


def bath_density_correlation(C, geom: LatticeGeometry, layout: ModeLayout) -> DistanceProfile:
    """``D(d)``: mean over site pairs at distance ``d`` of ``sum_mm' |C^BB_(n,m),(n',m')|^2``.

    ``C`` is in canonical order. Same-mode terms (``n = n'``, ``m = m'``) are excluded.
    """
    N, M = layout.n_sites, layout.M
    if M < 1:
        raise ValueError("layout has no bath modes")
    if isinstance(C, LowRankCorrelation):
        B = C.A[N:].reshape(N, M, -1)
        P = np.einsum("nma,nmb->nab", B.conj(), B)
        Qm = C.G @ P @ C.G
        r2 = Qm.shape[1] ** 2
        Dnn = np.real(Qm.reshape(N, r2) @ P.transpose(0, 2, 1).reshape(N, r2).T)
        selfterm = np.abs(np.einsum("nma,ab,nmb->nm", B, C.G, B.conj())) ** 2
    else:
        Cbb = np.asarray(C)[N:, N:].reshape(N, M, N, M)
        Dnn = np.sum(np.abs(Cbb) ** 2, axis=(1, 3))
        selfterm = np.abs(np.einsum("nmnm->nm", Cbb)) ** 2
    Dnn = Dnn.copy()
    Dnn[np.diag_indices(N)] -= selfterm.sum(axis=1)
    dist = geom.distance_matrix
    iu = np.triu_indices(N, k=1)
    n_pairs = count_pairs(geom)
    sums = np.bincount(dist[iu], weights=Dnn[iu], minlength=len(n_pairs))
    sums[0] = np.trace(Dnn)
    d = np.arange(len(n_pairs))
    return DistanceProfile(d=d, value=sums / n_pairs, n_pairs=n_pairs)
