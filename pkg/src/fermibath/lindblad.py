"""Master-equation reference evolution with equal on-site gain and loss.

For ``d rho/dt = -i[H, rho] + gamma sum_n (D[a_n] + D[a_n^dag]) rho`` the
correlation matrix obeys ``dC/dt = i[h^T, C] - 2 gamma (C - 1/2)``. The
dissipator is a scalar affine map commuting with the unitary part, so

    C(t) = 1/2 + exp(-2 gamma t) R^dag (C0 - 1/2) R.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import Propagator, evolve


def evolve_master_equation(C0: np.ndarray, h: np.ndarray, gamma: float, t: float,
                           propagator: Propagator | None = None) -> np.ndarray:
    C0 = np.asarray(C0)
    h = np.asarray(h)
    if C0.shape != h.shape or C0.ndim != 2:
        raise ValueError(f"dimension mismatch: C0 {C0.shape}, h {h.shape}")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if t < 0:
        raise ValueError("t must be non-negative")
    prop = propagator or Propagator.from_hamiltonian(h)
    half = 0.5 * np.eye(len(C0))
    return half + np.exp(-2.0 * gamma * t) * evolve(C0 - half, prop, t)


@dataclass(frozen=True)
class DeviationReport:
    """Unnormalized squared deviations of a system correlation matrix."""

    diag_dev: float
    offdiag_dev: float
    me_dev: float


def deviation_report(C_sys: np.ndarray, C_me: np.ndarray) -> DeviationReport:
    """Distance of ``C_sys`` from ``1/2`` (diagonal, off-diagonal) and from ``C_me``."""
    C_sys, C_me = np.asarray(C_sys), np.asarray(C_me)
    if C_sys.shape != C_me.shape:
        raise ValueError(f"dimension mismatch: {C_sys.shape} vs {C_me.shape}")
    diag = np.diag(C_sys)
    off = C_sys - np.diag(diag)
    return DeviationReport(
        diag_dev=float(np.sum(np.abs(diag - 0.5) ** 2)),
        offdiag_dev=float(np.sum(np.abs(off) ** 2)),
        me_dev=float(np.sum(np.abs(C_me - C_sys) ** 2)),
    )
