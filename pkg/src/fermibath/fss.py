"""Scaling-law fits and finite-size-scaling collapse.

The collapse ansatz is ``y(gamma, L) = L**(zeta/nu) f(L**(1/nu) (gamma - gamma_c))``.
Its quality function is the Houdayer-Hartmann master-curve residual: every
rescaled point is compared with the linear interpolation of each *other*
size's rescaled data at the same abscissa (no extrapolation), and squared
deviations are normalized by the propagated error bars or, without error
bars, by the pooled variance of the rescaled values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class ScalingFit:
    """``y = c x ln(x) + b x`` fitted on ``x in [x_min, L]``."""

    L: float
    c: float
    b: float
    residual: float
    window: tuple[float, float]
    n_points: int
    gamma: float | None = None
    c_err: float = float("nan")
    b_err: float = float("nan")


def _design(x: np.ndarray) -> np.ndarray:
    return np.column_stack([x * np.log(x), x])


def _lstsq(x, y):
    coef, *_ = np.linalg.lstsq(_design(x), y, rcond=None)
    resid = float(np.sum((_design(x) @ coef - y) ** 2))
    return coef, resid


def fit_scaling_law(points: Iterable[tuple[float, float]], x_min: float = 8,
                    gamma: float | None = None, n_boot: int = 0,
                    rng: np.random.Generator | None = None) -> ScalingFit:
    """Least-squares ``(c, b)`` on the basis ``{x ln x, x}``.

    With ``n_boot > 0`` the standard errors come from resampling points
    with replacement (resamples with fewer than two distinct sizes are redrawn).
    """
    pts = np.asarray(sorted(points), dtype=float).reshape(-1, 2)
    pts = pts[pts[:, 0] >= x_min]
    x, y = pts[:, 0], pts[:, 1]
    if len(np.unique(x)) < 2:
        raise ValueError(f"need at least two distinct sizes >= {x_min}, got {np.unique(x).tolist()}")
    assert x.min() >= 1 or len(np.unique(x[x >= 1])) >= 2, "basis {x ln x, x} degenerate"
    (c, b), resid = _lstsq(x, y)
    c_err = b_err = float("nan")
    if n_boot > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        draws = []
        while len(draws) < n_boot:
            idx = rng.integers(0, len(x), len(x))
            if len(np.unique(x[idx])) < 2:
                continue
            draws.append(_lstsq(x[idx], y[idx])[0])
        c_err, b_err = np.std(draws, axis=0, ddof=1)
    return ScalingFit(L=float(x.max()), c=float(c), b=float(b), residual=resid,
                      window=(float(x_min), float(x.max())), n_points=len(x), gamma=gamma,
                      c_err=float(c_err), b_err=float(b_err))


def fit_windows(points: Iterable[tuple[float, float]], x_min: float = 8,
                gamma: float | None = None) -> list[ScalingFit]:
    """One fit per window ``[x_min, L]`` for every available ``L`` giving >= 2 sizes."""
    pts = sorted(points)
    sizes = sorted({x for x, _ in pts if x >= x_min})
    return [fit_scaling_law([(x, y) for x, y in pts if x <= L], x_min, gamma)
            for L in sizes[1:]]


@dataclass(frozen=True)
class CrossingEstimate:
    found: bool
    gamma: float
    spread: float
    crossings: tuple[float, ...] = ()


def size_invariance_scan(table: Mapping[tuple[float, float], float] | Sequence[ScalingFit]
                         ) -> CrossingEstimate:
    """Median of pairwise crossing points of the curves ``gamma -> c(gamma, L)``.

    ``table`` maps ``(gamma, L)`` to a value, or is a sequence of fits (``c`` is used).
    Crossings are located by linear interpolation of the difference of two
    curves on their common gamma grid.
    """
    if not isinstance(table, Mapping):
        table = {(f.gamma, f.L): f.c for f in table}
    sizes = sorted({L for _, L in table})
    if len(sizes) < 3:
        raise ValueError("need at least three sizes")
    curves = {L: dict(sorted((g, v) for (g, L2), v in table.items() if L2 == L)) for L in sizes}
    found = []
    for L1, L2 in itertools.combinations(sizes, 2):
        grid = sorted(set(curves[L1]) & set(curves[L2]))
        diff = np.array([curves[L1][g] - curves[L2][g] for g in grid])
        g = np.array(grid)
        for k in range(len(g)):
            if diff[k] == 0 and (k == 0 or diff[k - 1] != 0):
                found.append(g[k])
            elif k + 1 < len(g) and diff[k] * diff[k + 1] < 0:
                found.append(g[k] - diff[k] * (g[k + 1] - g[k]) / (diff[k + 1] - diff[k]))
    if not found:
        return CrossingEstimate(found=False, gamma=float("nan"), spread=float("nan"))
    arr = np.array(found)
    spread = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return CrossingEstimate(found=True, gamma=float(np.median(arr)), spread=spread,
                            crossings=tuple(float(v) for v in arr))


@dataclass(frozen=True)
class _Group:
    L: float
    gamma: np.ndarray
    y: np.ndarray
    dy: np.ndarray | None


def _groups(gamma, L, y, dy=None) -> list[_Group]:
    gamma, L, y = (np.asarray(a, dtype=float) for a in (gamma, L, y))
    dy = None if dy is None else np.asarray(dy, dtype=float)
    out = []
    for size in np.unique(L):
        sel = L == size
        order = np.argsort(gamma[sel], kind="stable")
        out.append(_Group(float(size), gamma[sel][order], y[sel][order],
                          None if dy is None else dy[sel][order]))
    return out


def _objective(params, groups: list[_Group], min_terms: int) -> float:
    gamma_c, nu, zeta = params
    if not nu > 0:
        return math.inf
    inv_nu = 0.0 if math.isinf(nu) else 1.0 / nu
    scaled = []
    for g in groups:
        u = g.L ** inv_nu * (g.gamma - gamma_c)
        s = g.L ** (-zeta * inv_nu)
        scaled.append((u, g.y * s, None if g.dy is None else g.dy * s))
    with_errors = groups[0].dy is not None
    if not with_errors:
        pooled = np.var(np.concatenate([v for _, v, _ in scaled]))
        if pooled <= 0:
            return 0.0
    total, terms = 0.0, 0
    for i, (ui, vi, dvi) in enumerate(scaled):
        for j, (uj, vj, dvj) in enumerate(scaled):
            if i == j:
                continue
            inside = (ui >= uj[0]) & (ui <= uj[-1])
            if not inside.any():
                continue
            uq, vq = ui[inside], vi[inside]
            Y = np.interp(uq, uj, vj)
            if with_errors:
                k = np.clip(np.searchsorted(uj, uq, side="right") - 1, 0, len(uj) - 2)
                span = uj[k + 1] - uj[k]
                w = np.where(span > 0, (uq - uj[k]) / np.where(span > 0, span, 1), 0.0)
                dY2 = (1 - w) ** 2 * dvj[k] ** 2 + w ** 2 * dvj[k + 1] ** 2
                total += np.sum((vq - Y) ** 2 / (dvi[inside] ** 2 + dY2))
            else:
                total += np.sum((vq - Y) ** 2) / pooled
            terms += len(uq)
    if terms < min_terms:
        return math.inf
    return total / terms


def collapse_objective(gamma_c: float, nu: float, zeta: float, gamma, L, y, dy=None) -> float:
    """Collapse quality at one parameter point (``nu = inf`` allowed)."""
    groups = _groups(gamma, L, y, dy)
    return _objective((gamma_c, nu, zeta), groups, 1)


@dataclass(frozen=True)
class CollapseResult:
    gamma_c: float
    nu: float
    zeta: float
    d_gamma_c: float
    d_nu: float
    d_zeta: float
    quality: float
    n_boot: int
    transition: bool = True
    note: str = ""
    bootstrap: np.ndarray | None = field(default=None, repr=False)


def _size_independent(groups: list[_Group], rtol: float) -> bool:
    grid = sorted(set.intersection(*(set(g.gamma.tolist()) for g in groups)))
    if not grid:
        return False
    vals = np.array([[g.y[np.searchsorted(g.gamma, x)] for x in grid] for g in groups])
    scale = max(np.abs(vals).max(), 1e-300)
    return bool(np.ptp(vals, axis=0).max() <= rtol * scale)


def _minimize(x0, groups, bounds, step, min_terms):
    simplex = [np.asarray(x0, dtype=float)]
    for k in range(3):
        v = np.array(x0, dtype=float)
        lo, hi = bounds[k]
        v[k] = v[k] + step[k] if v[k] + step[k] <= hi else v[k] - step[k]
        simplex.append(v)
    res = minimize(_objective, x0, args=(groups, min_terms), method="Nelder-Mead",
                   bounds=bounds,
                   options={"initial_simplex": np.array(simplex), "xatol": 1e-7,
                            "fatol": 1e-14, "maxiter": 4000, "maxfev": 8000})
    return res.x, float(res.fun)


def collapse(gamma, L, y, gamma_c_range: tuple[float, float], nu_range: tuple[float, float],
             zeta_range: tuple[float, float], dy=None, n_boot: int = 200, grid: int = 5,
             seed: int = 0, size_rtol: float = 1e-8, min_overlap: float = 0.5) -> CollapseResult:
    """Fit ``(gamma_c, nu, zeta)`` by minimizing the collapse quality.

    Nelder-Mead runs from every point of a ``grid**3`` lattice of starts
    (cell centres of the given ranges, which also act as bounds); the best
    end point wins, ties broken by lexicographic parameter order.
    Uncertainties are standard deviations over ``n_boot`` bootstrap
    resamples, each refitted from the best point. A resample draws points
    with replacement within each size and keeps the distinct ones, since
    repeated abscissae would make the interpolation ill-defined.

    ``min_overlap`` sets the minimum number of point-to-curve comparisons as
    a fraction of the number of points; sparser overlaps are rejected
    rather than extrapolated.
    """
    groups = _groups(gamma, L, y, dy)
    n_points = sum(len(g.gamma) for g in groups)
    if len(groups) < 3:
        raise ValueError("collapse needs at least three sizes")
    if min(len(g.gamma) for g in groups) < 5:
        raise ValueError("collapse needs at least five gamma points per size")
    bounds = [tuple(map(float, r)) for r in (gamma_c_range, nu_range, zeta_range)]
    if any(not hi > lo for lo, hi in bounds) or bounds[1][0] <= 0:
        raise ValueError(f"degenerate parameter ranges {bounds}")

    if _size_independent(groups, size_rtol):
        return CollapseResult(gamma_c=float("nan"), nu=math.inf, zeta=0.0, d_gamma_c=0.0,
                              d_nu=0.0, d_zeta=0.0, quality=0.0, n_boot=0, transition=False,
                              note="data independent of L: no transition")

    min_terms = max(1, int(math.ceil(min_overlap * n_points)))
    axes = [lo + (np.arange(grid) + 0.5) * (hi - lo) / grid for lo, hi in bounds]
    step = [0.5 * (hi - lo) / grid for lo, hi in bounds]
    results = []
    for start in itertools.product(*axes):
        x, f = _minimize(start, groups, bounds, step, min_terms)
        if math.isfinite(f):
            results.append((f, tuple(x)))
    if not results:
        raise ValueError("rescaled data of different sizes never overlap within the given ranges")
    best_f, best_x = min(results)

    boots = np.empty((0, 3))
    if n_boot > 0:
        rng = np.random.default_rng(seed)
        fine = [s / 5 for s in step]
        draws = []
        for _ in range(n_boot):
            resampled = []
            for g in groups:
                idx = np.unique(rng.integers(0, len(g.gamma), len(g.gamma)))
                resampled.append(_Group(g.L, g.gamma[idx], g.y[idx],
                                        None if g.dy is None else g.dy[idx]))
            if min(len(g.gamma) for g in resampled) < 2:
                continue
            n_res = sum(len(g.gamma) for g in resampled)
            x, f = _minimize(best_x, resampled, bounds, fine,
                             max(1, int(math.ceil(min_overlap * n_res))))
            if math.isfinite(f):
                draws.append(x)
        boots = np.array(draws).reshape(-1, 3)
    errs = boots.std(axis=0, ddof=1) if len(boots) > 1 else np.zeros(3)
    return CollapseResult(gamma_c=float(best_x[0]), nu=float(best_x[1]), zeta=float(best_x[2]),
                          d_gamma_c=float(errs[0]), d_nu=float(errs[1]), d_zeta=float(errs[2]),
                          quality=float(best_f), n_boot=len(boots), bootstrap=boots)
