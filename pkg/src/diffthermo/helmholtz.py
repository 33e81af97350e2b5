"""Boltzmann entropy of sublevel sets and the Helmholtz first-law structure.

For a family of potentials ``phi(x, alpha)`` the Boltzmann entropy is
``sigma_B(h, alpha) = ln Vol{x : phi(x, alpha) <= h}``.  Temperature and
generalized force follow as ``theta = (d sigma_B / dh)^-1`` and
``F_alpha = -(dh / d alpha) at fixed sigma_B``, giving
``dh = theta d sigma_B - F_alpha d alpha``.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .errors import CoverageError, DomainError, InsufficientDataError, ParameterError, SamplingError, ShapeError
from .numerics import Grid, RngStream, grid_integrate

__all__ = [
    "SigmaMethod",
    "SigmaTable",
    "CarnotSpec",
    "CarnotCycle",
    "boltzmann_entropy",
    "sigma_table",
    "gaussian_sigma_analytic",
    "gaussian_sigma_table",
    "grid_sigma_table",
    "power_law_sigma_table",
    "theta_and_force",
    "maxwell_check",
    "first_law_residual",
    "virial_check",
    "canonical_partition",
    "gaussian_canonical_summary",
    "carnot_curves",
    "unit_ball_log_volume",
]

_BLOCK = 1 << 18
_COVERAGE_LIMIT = 1e-3


class SigmaMethod(str, enum.Enum):
    MONTE_CARLO = "MonteCarloVolume"
    GRID = "GridQuadrature"
    ANALYTIC = "GaussianAnalytic"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SigmaTable:
    """``sigma_B`` on an ``(h, alpha)`` grid, indexed ``[i_h, i_alpha]``.

    ``theta``, ``F_alpha`` and the partials are None until
    :func:`theta_and_force` fills them.  Undefined entries are NaN.
    """

    h_grid: np.ndarray
    alpha_grid: np.ndarray
    sigma: np.ndarray
    sigma_se: np.ndarray
    method: SigmaMethod
    dsigma_dh: Optional[np.ndarray] = None
    dsigma_dalpha: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    F_alpha: Optional[np.ndarray] = None

    def __post_init__(self):
        h = np.asarray(self.h_grid, dtype=float)
        a = np.asarray(self.alpha_grid, dtype=float)
        if h.ndim != 1 or np.any(np.diff(h) <= 0):
            raise ShapeError("h_grid must be strictly increasing")
        if a.ndim != 1 or np.any(np.diff(a) <= 0):
            raise ShapeError("alpha_grid must be strictly increasing")
        if np.shape(self.sigma) != (h.size, a.size) or np.shape(self.sigma_se) != (h.size, a.size):
            raise ShapeError("sigma and sigma_se must have shape (len(h_grid), len(alpha_grid))")

    def to_csv(self, path) -> None:
        cols = ["h", "alpha", "sigma_B", "sigma_se", "theta", "F_alpha"]
        nan = np.full(self.sigma.shape, np.nan)
        th = self.theta if self.theta is not None else nan
        fa = self.F_alpha if self.F_alpha is not None else nan
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i, h in enumerate(self.h_grid):
                for j, a in enumerate(self.alpha_grid):
                    w.writerow([repr(float(v)) for v in (h, a, self.sigma[i, j], self.sigma_se[i, j], th[i, j], fa[i, j])])


def unit_ball_log_volume(n: int) -> float:
    """``ln V_n`` with ``V_n = pi^(n/2) / Gamma(n/2 + 1)``."""
    return 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))


def gaussian_sigma_analytic(Xi, h) -> np.ndarray:
    """``sigma_B`` of ``phi = x^T Xi^-1 x / 2``: ``(n/2) ln(2h) + (1/2) ln det Xi + ln V_n``."""
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    n = Xi.shape[0]
    sign, logdet = np.linalg.slogdet(Xi)
    if sign <= 0 or np.min(np.linalg.eigvalsh(0.5 * (Xi + Xi.T))) <= 0:
        raise ParameterError("Xi must be symmetric positive definite")
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise DomainError("h must be positive")
    return 0.5 * n * np.log(h) + 0.5 * logdet + 0.5 * n * math.log(2.0) + unit_ball_log_volume(n)


def _box(box) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(box, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
        raise ShapeError("box must be a sequence of (lo, hi) pairs with lo < hi")
    return b[:, 0], b[:, 1]


def _uniform_unit(n_samples: int, dim: int, seed: int) -> np.ndarray:
    """Uniform points in ``[0, 1)^dim`` drawn block-wise from streams ``(seed, block)``."""
    out = np.empty((n_samples, dim))
    for b, start in enumerate(range(0, n_samples, _BLOCK)):
        stop = min(n_samples, start + _BLOCK)
        out[start:stop] = RngStream(seed, b).uniform(size=(stop - start, dim))
    return out


def _boundary_unit(n_points: int, lo: np.ndarray, hi: np.ndarray, seed: int) -> np.ndarray:
    """Uniform points on the faces of the box (area-weighted), in box coordinates."""
    dim = lo.size
    rng = RngStream(seed, 1 << 30)
    u = rng.uniform(size=(n_points, dim))
    if dim == 1:
        face = np.zeros(n_points, dtype=int)
    else:
        side = hi - lo
        areas = np.array([np.prod(np.delete(side, k)) for k in range(dim)])
        face = np.searchsorted(np.cumsum(areas) / areas.sum(), rng.uniform(size=n_points))
        face = np.minimum(face, dim - 1)
    top = rng.uniform(size=n_points) < 0.5
    u[np.arange(n_points), face] = np.where(top, 1.0, 0.0)
    return lo + u * (hi - lo)


def _phi_values(phi, x, alpha):
    v = np.asarray(phi(x, alpha), dtype=float)
    if v.shape != x.shape[:-1]:
        raise ShapeError(f"phi returned shape {v.shape} for {x.shape[0]} points")
    return v


def _volume_fractions(values: np.ndarray, h_grid: np.ndarray) -> np.ndarray:
    s = np.sort(values)
    return np.searchsorted(s, h_grid, side="right") / values.size


def _check_coverage(phi, alpha, h_max, lo, hi, seed, n_points):
    pts = _boundary_unit(n_points, lo, hi, seed)
    mass = float(np.mean(_phi_values(phi, pts, alpha) <= h_max))
    if mass > _COVERAGE_LIMIT:
        raise CoverageError(
            f"{100 * mass:.3g}% of the box boundary lies inside the sublevel set at h={h_max}; enlarge the box"
        )
    if mass > 0:
        warnings.warn(f"sublevel set at h={h_max} touches the box boundary ({100 * mass:.3g}%)", stacklevel=3)
    return mass


def boltzmann_entropy(
    phi: Callable,
    alpha,
    h_grid,
    box,
    n_samples: int = 1_000_000,
    seed: int = 0,
    check_coverage: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``sigma_B(h, alpha) = ln(Vol(box) * P[phi(U, alpha) <= h])``.

    Parameters
    ----------
    phi : callable
        ``phi(x, alpha)`` vectorised over points ``x`` of shape ``(N, n)``.
    alpha : float
    h_grid : array_like
    box : sequence of (lo, hi)
    n_samples : int
        At least ``10**4``.
    seed : int
        Samples come in blocks of ``2**18`` from streams ``(seed, block)``.

    Returns
    -------
    sigma, se : ndarray
        ``se`` is the binomial standard error of ``sigma``; both are NaN
        where no sample falls below ``h``.

    Raises
    ------
    CoverageError
        If more than 0.1% of the box boundary lies inside ``{phi <= max h}``.
    """
    if n_samples < 10_000:
        raise ParameterError("n_samples must be at least 1e4")
    lo, hi = _box(box)
    h_grid = np.asarray(h_grid, dtype=float)
    if check_coverage:
        _check_coverage(phi, alpha, float(h_grid.max()), lo, hi, seed, max(1000, n_samples // 100))
    x = lo + _uniform_unit(n_samples, lo.size, seed) * (hi - lo)
    return _sigma_from_values(_phi_values(phi, x, alpha), h_grid, float(np.prod(hi - lo)))


def _sigma_from_values(values, h_grid, box_volume):
    p = _volume_fractions(values, h_grid)
    n = values.size
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(p > 0, np.log(box_volume * np.where(p > 0, p, 1.0)), np.nan)
        se = np.where(p > 0, np.sqrt((1.0 - p) / (n * np.where(p > 0, p, 1.0))), np.nan)
    return sigma, se


def sigma_table(
    phi: Callable,
    h_grid,
    alpha_grid,
    box,
    n_samples: int = 1_000_000,
    seed: int = 0,
    common_random_numbers: bool = True,
) -> SigmaTable:
    """Monte Carlo ``sigma_B`` table.

    ``box`` is a fixed box or a callable ``alpha -> box``.  With common random
    numbers every column maps the same unit-cube draws into its box, which
    makes differences across alpha far less noisy than the entries.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    boxes = [box(a) if callable(box) else box for a in alpha_grid]
    dim = _box(boxes[0])[0].size
    if n_samples < 10_000:
        raise ParameterError("n_samples must be at least 1e4")
    unit = _uniform_unit(n_samples, dim, seed) if common_random_numbers else None
    sig = np.empty((h_grid.size, alpha_grid.size))
    se = np.empty_like(sig)
    for j, (a, bx) in enumerate(zip(alpha_grid, boxes)):
        lo, hi = _box(bx)
        _check_coverage(phi, a, float(h_grid.max()), lo, hi, seed, max(1000, n_samples // 100))
        u = unit if unit is not None else _uniform_unit(n_samples, dim, seed + 7919 * (j + 1))
        vals = _phi_values(phi, lo + u * (hi - lo), a)
        sig[:, j], se[:, j] = _sigma_from_values(vals, h_grid, float(np.prod(hi - lo)))
    return SigmaTable(h_grid, alpha_grid, sig, se, SigmaMethod.MONTE_CARLO)


def gaussian_sigma_table(Xi_of_alpha: Callable, h_grid, alpha_grid) -> SigmaTable:
    """Closed-form table for ``phi = x^T Xi(alpha)^-1 x / 2``."""
    h_grid = np.asarray(h_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    sig = np.stack([gaussian_sigma_analytic(Xi_of_alpha(a), h_grid) for a in alpha_grid], axis=1)
    return SigmaTable(h_grid, alpha_grid, sig, np.zeros_like(sig), SigmaMethod.ANALYTIC)


def power_law_sigma_table(mu: float, nu: float, h_grid, alpha_grid) -> SigmaTable:
    """``sigma_B = mu ln h + nu ln alpha``."""
    h_grid = np.asarray(h_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    sig = mu * np.log(h_grid)[:, None] + nu * np.log(alpha_grid)[None, :]
    return SigmaTable(h_grid, alpha_grid, sig, np.zeros_like(sig), SigmaMethod.ANALYTIC)


def grid_sigma_table(phi: Callable, h_grid, alpha_grid, grid: Grid) -> SigmaTable:
    """Sublevel volumes by counting grid cells whose centre satisfies ``phi <= h``."""
    h_grid = np.asarray(h_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    pts = grid.flat_points()
    sig = np.empty((h_grid.size, alpha_grid.size))
    for j, a in enumerate(alpha_grid):
        counts = _volume_fractions(_phi_values(phi, pts, a), h_grid) * grid.size
        with np.errstate(divide="ignore"):
            sig[:, j] = np.where(counts > 0, np.log(np.maximum(counts, 1) * grid.cell_volume), np.nan)
    return SigmaTable(h_grid, alpha_grid, sig, np.zeros_like(sig), SigmaMethod.GRID)


def theta_and_force(table: SigmaTable) -> SigmaTable:
    """Fill ``theta = 1/(d sigma/dh)`` and ``F_alpha = theta (d sigma/d alpha)_h``.

    Partials are centred differences with second-order one-sided ends.

    Raises
    ------
    InsufficientDataError
        With fewer than 3 points along either axis.
    DomainError
        If ``sigma_B`` decreases in ``h`` by more than twice its standard error.
    """
    if table.h_grid.size < 3 or table.alpha_grid.size < 3:
        raise InsufficientDataError("need at least 3 h-points and 3 alpha-points")
    s = table.sigma
    drop = np.diff(s, axis=0)
    noise = 2.0 * np.hypot(table.sigma_se[1:], table.sigma_se[:-1])
    if np.any(drop < -noise - 1e-12):
        raise DomainError("sigma_B decreases in h beyond its Monte Carlo noise")
    ds_dh = np.gradient(s, table.h_grid, axis=0, edge_order=2)
    ds_da = np.gradient(s, table.alpha_grid, axis=1, edge_order=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(ds_dh > 0, 1.0 / ds_dh, np.nan)
    return replace(table, dsigma_dh=ds_dh, dsigma_dalpha=ds_da, theta=theta, F_alpha=theta * ds_da)


def maxwell_check(table: SigmaTable) -> dict:
    """Audit ``F_alpha / theta = (d sigma_B / d alpha)_h`` on interior table points.

    ``identity_residual`` checks the stored fields against each other.
    ``contour_residual`` recomputes ``F_alpha = -(dh/d alpha)`` at fixed
    ``sigma_B`` by inverting the neighbouring columns, an independent route;
    ``contour_se`` propagates the entry standard errors to it.
    """
    if table.theta is None:
        table = theta_and_force(table)
    h, a, s = table.h_grid, table.alpha_grid, table.sigma
    ident = table.F_alpha / table.theta - table.dsigma_dalpha
    inner = (slice(1, -1), slice(1, -1))
    contour = np.full(s.shape, np.nan)
    cse = np.full(s.shape, np.nan)
    for j in range(1, a.size - 1):
        da = a[j + 1] - a[j - 1]
        cp, cm = s[:, j + 1], s[:, j - 1]
        for i in range(1, h.size - 1):
            target = s[i, j]
            if not (np.isfinite(target) and cp[0] <= target <= cp[-1] and cm[0] <= target <= cm[-1]):
                continue
            hp = np.interp(target, cp, h)
            hm = np.interp(target, cm, h)
            F = -(hp - hm) / da
            contour[i, j] = F / table.theta[i, j] - table.dsigma_dalpha[i, j]
            sp_ = np.interp(hp, h, table.sigma_se[:, j + 1])
            sm_ = np.interp(hm, h, table.sigma_se[:, j - 1])
            cse[i, j] = math.sqrt(sp_**2 + sm_**2 + table.sigma_se[i, j + 1] ** 2 + table.sigma_se[i, j - 1] ** 2) / da
    ci = contour[inner]
    ratio = np.abs(ci) / np.where(cse[inner] > 0, cse[inner], np.nan)
    return {
        "identity_residual": ident[inner],
        "max_identity_residual": float(np.nanmax(np.abs(ident[inner]))),
        "contour_residual": ci,
        "contour_se": cse[inner],
        "max_contour_residual": float(np.nanmax(np.abs(ci))) if np.any(np.isfinite(ci)) else float("nan"),
        "max_contour_se_ratio": float(np.nanmax(ratio)) if np.any(np.isfinite(ratio)) else float("nan"),
    }


def first_law_residual(table: SigmaTable, path) -> dict:
    """Compare ``Delta h`` along a path of table indices with ``sum theta dsigma - F dalpha``.

    ``path`` is a sequence of ``(i_h, i_alpha)`` pairs; each step uses
    trapezoidal averages of ``theta`` and ``F_alpha``.
    """
    if table.theta is None:
        table = theta_and_force(table)
    path = [tuple(p) for p in path]
    if len(path) < 2:
        raise InsufficientDataError("a path needs at least two points")
    acc = 0.0
    for (i0, j0), (i1, j1) in zip(path[:-1], path[1:]):
        th = 0.5 * (table.theta[i0, j0] + table.theta[i1, j1])
        F = 0.5 * (table.F_alpha[i0, j0] + table.F_alpha[i1, j1])
        acc += th * (table.sigma[i1, j1] - table.sigma[i0, j0]) - F * (table.alpha_grid[j1] - table.alpha_grid[j0])
    direct = float(table.h_grid[path[-1][0]] - table.h_grid[path[0][0]])
    rel = abs(acc - direct) / abs(direct) if direct != 0 else abs(acc)
    return {"delta_h": direct, "integrated": float(acc), "relative_error": float(rel)}


def _fd_grad(phi, x, alpha, step=1e-6):
    g = np.empty_like(x)
    for k in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[k] = step
        g[..., k] = (_phi_values(phi, x + e, alpha) - _phi_values(phi, x - e, alpha)) / (2 * step)
    return g


def virial_check(
    phi: Callable,
    alpha,
    h: float,
    box,
    shell_width: float | None = None,
    n_samples: int = 1_000_000,
    seed: int = 0,
    grad_phi: Callable | None = None,
) -> dict:
    """Thin-shell estimates of the temperature.

    Uniform samples in ``box`` falling in ``{h < phi <= h + dh}`` give the
    per-coordinate virial averages ``theta_k = <x_k d_k phi>`` and the
    volume route ``theta_vol = dh / (sigma_B(h + dh) - sigma_B(h))``, all at
    the shell mid-level.  Standard errors are included.

    Raises
    ------
    SamplingError
        When the shell holds no samples.
    """
    if shell_width is None:
        shell_width = h / 50.0
    if not shell_width > 0:
        raise ParameterError("shell_width must be positive")
    lo, hi = _box(box)
    x = lo + _uniform_unit(n_samples, lo.size, seed) * (hi - lo)
    v = _phi_values(phi, x, alpha)
    inner = v <= h
    shell = (v > h) & (v <= h + shell_width)
    m = int(shell.sum())
    if m < 2:
        raise SamplingError(f"shell ({h}, {h + shell_width}] holds {m} samples")
    xs = x[shell]
    g = np.asarray(grad_phi(xs, alpha), dtype=float) if grad_phi is not None else _fd_grad(phi, xs, alpha)
    vir = xs * g
    theta_k = vir.mean(axis=0)
    theta_k_se = vir.std(axis=0, ddof=1) / math.sqrt(m)
    n_in = int(inner.sum())
    if n_in == 0:
        raise SamplingError("no samples below h; the volume route is undefined")
    dsig = math.log((n_in + m) / n_in)
    # delta method on ln(1 + m/n_in) with multinomial counts
    p_in, p_sh = n_in / n_samples, m / n_samples
    var_dsig = (1.0 / n_samples) * (p_sh / ((p_in + p_sh) * p_in))
    theta_vol = shell_width / dsig
    theta_vol_se = theta_vol * math.sqrt(var_dsig) / dsig
    return {
        "theta_k": theta_k,
        "theta_k_se": theta_k_se,
        "theta_vol": theta_vol,
        "theta_vol_se": theta_vol_se,
        "n_shell": m,
        "h_mid": h + 0.5 * shell_width,
    }


def _stieltjes(h: np.ndarray, V: np.ndarray, beta: float) -> tuple[float, float]:
    """Exact integrals of ``e^{-beta h} dV`` and ``e^{-beta h} V dh`` for piecewise-linear ``V``."""
    h0, h1 = h[:-1], h[1:]
    V0, V1 = V[:-1], V[1:]
    slope = (V1 - V0) / (h1 - h0)
    e0, e1 = np.exp(-beta * h0), np.exp(-beta * h1)
    dV = float(np.sum(slope * (e0 - e1) / beta))
    # int (V0 + slope (t - h0)) e^{-beta t} dt over [h0, h1]
    IV = np.sum(V0 * (e0 - e1) / beta + slope * ((e0 - e1) / beta**2 - (h1 - h0) * e1 / beta))
    return dV, float(IV)


def canonical_partition(
    phi: Callable,
    alpha,
    beta: float,
    box,
    h_grid=None,
    n_samples: int = 1_000_000,
    seed: int = 0,
    quad_counts: int | None = None,
) -> dict:
    """Canonical partition function by direct quadrature and through ``sigma_B``.

    ``Z`` is the midpoint rule for ``int e^{-beta phi}`` on a grid over
    ``box``.  ``Z_sigma`` is the Stieltjes integral ``int e^{-beta h} dV(h)``
    with ``V = e^{sigma_B}`` from a Monte Carlo table on ``h_grid``
    (piecewise-linear between nodes), and ``Z_beta`` is
    ``beta int e^{-beta h} V(h) dh``.  ``beta_hat`` is their ratio, the
    ensemble-average form of beta.

    ``h_grid`` defaults to 400 levels from the sampled minimum of ``phi`` to
    that minimum plus ``40 / beta``.
    """
    lo, hi = _box(box)
    dim = lo.size
    if quad_counts is None:
        quad_counts = {1: 4001, 2: 401, 3: 81}.get(dim, 0)
    if quad_counts:
        grid = Grid(tuple(zip(lo, hi)), (quad_counts,) * dim)
        Z = grid_integrate(np.exp(-beta * _phi_values(phi, grid.points, alpha)), grid)
        z_method = "grid"
    else:
        x = lo + _uniform_unit(n_samples, dim, seed + 104729) * (hi - lo)
        Z = float(np.prod(hi - lo) * np.mean(np.exp(-beta * _phi_values(phi, x, alpha))))
        z_method = "montecarlo"
    x = lo + _uniform_unit(n_samples, dim, seed) * (hi - lo)
    vals = _phi_values(phi, x, alpha)
    if h_grid is None:
        h_min = float(vals.min())
        h_grid = np.linspace(h_min, h_min + 40.0 / beta, 400)
    h_grid = np.asarray(h_grid, dtype=float)
    _check_coverage(phi, alpha, float(h_grid.max()), lo, hi, seed, max(1000, n_samples // 100))
    V = float(np.prod(hi - lo)) * _volume_fractions(vals, h_grid)
    V[0] = 0.0 if h_grid[0] <= vals.min() else V[0]
    Zs, IV = _stieltjes(h_grid, V, beta)
    tail = math.exp(-beta * (h_grid[-1] - h_grid[0]))
    return {
        "Z": float(Z),
        "logZ": float(math.log(Z)),
        "Z_sigma": Zs,
        "Z_beta": beta * IV,
        "relative_difference": abs(Z - Zs) / Z,
        "beta_hat": Zs / IV,
        "beta_identity_residual": abs(Zs / IV - beta) / beta,
        "truncation_weight": tail,
        "z_method": z_method,
    }


def gaussian_canonical_summary(Xi, beta: float = 1.0) -> dict:
    """Canonical free energy, mean energy and entropy of ``phi = x^T Xi^-1 x / 2``."""
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    n = Xi.shape[0]
    _, logdet = np.linalg.slogdet(Xi)
    free = -(0.5 * n * math.log(2 * math.pi / beta) + 0.5 * logdet) / beta
    mean_h = n / (2.0 * beta)
    S = 0.5 * n * math.log(mean_h) + 0.5 * logdet + 0.5 * n + 0.5 * n * math.log(4 * math.pi / n)
    sig = float(gaussian_sigma_analytic(Xi, mean_h))
    return {
        "free_energy": free,
        "mean_h": mean_h,
        "canonical_entropy": S,
        "sigma_at_mean_h": sig,
        "stirling_gap": S - sig,
        "relative_gap": (S - sig) / S,
    }


@dataclass(frozen=True)
class CarnotSpec:
    """``sigma_B = mu ln h + nu ln alpha`` with two temperatures and two entropies."""

    mu: float
    nu: float
    theta_hot: float
    theta_cold: float
    sigma_low: float
    sigma_high: float

    def __post_init__(self):
        if not (self.mu > 0 and self.nu > 0):
            raise ParameterError("mu and nu must be positive")
        if not (self.theta_hot > self.theta_cold > 0):
            raise ParameterError("need theta_hot > theta_cold > 0")
        if not self.sigma_high > self.sigma_low:
            raise ParameterError("need sigma_high > sigma_low")

    def corner(self, theta: float, sigma: float) -> tuple[float, float]:
        """Intersection of ``alpha F = nu theta`` and ``alpha^(1+nu/mu) F = (nu/mu) e^(sigma/mu)``."""
        alpha = (math.exp(sigma / self.mu) / (self.mu * theta)) ** (self.mu / self.nu)
        return alpha, self.nu * theta / alpha

    def iso_theta(self, theta: float, alpha) -> np.ndarray:
        return self.nu * theta / np.asarray(alpha, dtype=float)

    def iso_sigma(self, sigma: float, alpha) -> np.ndarray:
        a = np.asarray(alpha, dtype=float)
        return (self.nu / self.mu) * math.exp(sigma / self.mu) * a ** (-(1.0 + self.nu / self.mu))


@dataclass
class CarnotCycle:
    """Four branches in the ``(alpha, F_alpha)`` plane, traversed in cycle order."""

    spec: CarnotSpec
    corners: dict
    branches: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["branch", "alpha", "F_alpha"])
            for b in self.branches:
                for a, F in zip(b["alpha"], b["F_alpha"]):
                    w.writerow([b["label"], repr(float(a)), repr(float(F))])

    def max_equation_residual(self) -> float:
        """Largest relative violation of each branch's defining equation."""
        worst = 0.0
        s = self.spec
        for b in self.branches:
            a, F = b["alpha"], b["F_alpha"]
            if b["kind"] == "iso_theta":
                r = np.abs(a * F - s.nu * b["value"]) / (s.nu * b["value"])
            else:
                rhs = (s.nu / s.mu) * math.exp(b["value"] / s.mu)
                r = np.abs(a ** (1 + s.nu / s.mu) * F - rhs) / rhs
            worst = max(worst, float(np.max(r)))
        return worst


def carnot_curves(spec: CarnotSpec, n_points: int = 100) -> CarnotCycle:
    """Two iso-theta and two iso-sigma_B branches and their four corners.

    Order: hot isotherm (sigma low -> high), adiabat at sigma high (hot -> cold),
    cold isotherm (sigma high -> low), adiabat at sigma low (cold -> hot).
    Corners are labelled ``a`` (hot, low), ``b`` (hot, high), ``c`` (cold, high),
    ``d`` (cold, low).
    """
    if n_points < 2:
        raise ParameterError("n_points must be at least 2")
    c = {
        "a": spec.corner(spec.theta_hot, spec.sigma_low),
        "b": spec.corner(spec.theta_hot, spec.sigma_high),
        "c": spec.corner(spec.theta_cold, spec.sigma_high),
        "d": spec.corner(spec.theta_cold, spec.sigma_low),
    }
    for k, (a, F) in c.items():
        if not (a > 0 and F > 0 and math.isfinite(a) and math.isfinite(F)):
            raise ParameterError(f"corner {k} is not in the positive quadrant")

    def branch(label, kind, value, start, end):
        alpha = np.geomspace(c[start][0], c[end][0], n_points)
        F = spec.iso_theta(value, alpha) if kind == "iso_theta" else spec.iso_sigma(value, alpha)
        return {"label": label, "kind": kind, "value": value, "alpha": alpha, "F_alpha": F}

    branches = [
        branch("isotherm_hot", "iso_theta", spec.theta_hot, "a", "b"),
        branch("adiabat_high", "iso_sigma", spec.sigma_high, "b", "c"),
        branch("isotherm_cold", "iso_theta", spec.theta_cold, "c", "d"),
        branch("adiabat_low", "iso_sigma", spec.sigma_low, "d", "a"),
    ]
    return CarnotCycle(spec, c, branches)
