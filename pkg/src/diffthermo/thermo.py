"""Free-energy and entropy-production ledger on grid fields.

All rates are in the units of the free energy ``F = beta^-1 int f ln(f/f^ss)``,
so that ``dF/dt = E_in - e_p`` holds without extra factors of beta.  The
entropy-balance column multiplies the dissipation by beta to express it in
entropy units, where ``dS/dt = beta e_na + beta d<phi>/dt``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .errors import DomainError, InsufficientDataError
from .model import DiffusionModel
from .numerics import CurrentField, Grid, GridField, grid_gradient, grid_integrate

__all__ = [
    "ThermoLedger",
    "free_energy",
    "entropy",
    "chemical_potential",
    "probability_current",
    "entropy_production_rate",
    "nonadiabatic_entropy_production",
    "housekeeping_input_rate",
    "mean_energy_rate",
    "circulation_dissipation",
    "ledger",
]


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, GridField) else np.asarray(f, dtype=float)


def _xlogy_ratio(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    pos = f > 0
    if np.any(pos & ~(g > 0)):
        raise DomainError("f is positive where the reference density vanishes; relative entropy is infinite")
    out[pos] = f[pos] * np.log(f[pos] / g[pos])
    return out


def free_energy(f, fss, beta: float, grid: Grid | None = None) -> float:
    """``beta^-1 int f ln(f / f^ss) dx`` with ``0 ln 0 = 0``."""
    grid = grid or f.grid
    return grid_integrate(_xlogy_ratio(_vals(f), _vals(fss)), grid) / beta


def entropy(f, grid: Grid | None = None) -> float:
    """Gibbs-Shannon entropy ``-int f ln f dx``."""
    grid = grid or f.grid
    v = _vals(f)
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = -v[pos] * np.log(v[pos])
    return grid_integrate(out, grid)


def chemical_potential(f, phi, beta: float, grid: Grid | None = None) -> GridField:
    """``mu = phi + beta^-1 ln f``; NaN where ``f = 0``."""
    grid = grid or f.grid
    v = _vals(f)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(v > 0, _vals(phi) + np.log(np.where(v > 0, v, 1.0)) / beta, np.nan)
    return GridField(grid, mu)


def _log_positive(v: np.ndarray, what: str) -> np.ndarray:
    if np.any(~(v > 0)):
        raise DomainError(f"{what} must be strictly positive on the grid")
    return np.log(v)


def _is_singular(Dx: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(Dx))))
    return bool(np.min(np.linalg.eigvalsh(Dx)) <= 1e-12 * scale)


def _fields(model: DiffusionModel, grid: Grid):
    pts = grid.points
    return model.b(pts), model.D(pts)


def probability_current(f, model: DiffusionModel, grid: Grid | None = None) -> np.ndarray:
    """``J = b f - beta^-1 D grad f`` with the grid gradient stencil."""
    grid = grid or f.grid
    v = _vals(f)
    b, D = _fields(model, grid)
    return b * v[..., None] - np.einsum("...ij,...j->...i", D, grid_gradient(v, grid)) / model.beta


def _circ(circulation) -> np.ndarray:
    return circulation.vectors if isinstance(circulation, CurrentField) else np.asarray(circulation, dtype=float)


def _force(model, grid, f, fss=None, circulation=None):
    """Thermodynamic force ``X`` with ``J = f D X``, and ``D`` on the grid.

    Without a circulation field ``X = D^-1 b - beta^-1 grad ln f``.  With the
    circulation ``j`` of the stationary state, ``D^-1 b`` is replaced by its
    equal ``D^-1 j + beta^-1 grad ln f^ss``, giving
    ``X = D^-1 j - beta^-1 grad ln(f / f^ss)``; every ledger term then uses
    the same differenced fields, so the balance closes to the accuracy of the
    time stepping rather than that of the spatial stencil.
    """
    logf = _log_positive(_vals(f), "density")
    b, D = _fields(model, grid)
    if circulation is not None:
        j = _circ(circulation)
        return np.linalg.solve(D, j[..., None])[..., 0] - grid_gradient(logf - _log_fss(model, grid, fss), grid) / model.beta, D
    return np.linalg.solve(D, b[..., None])[..., 0] - grid_gradient(logf, grid) / model.beta, D


def entropy_production_rate(
    f, model: DiffusionModel, grid: Grid | None = None, fss=None, circulation=None
) -> float:
    """Total dissipation ``e_p = int J . (D^-1 b - beta^-1 grad ln f) dx``.

    Evaluated as ``int f X . D X`` with the force ``X`` of :func:`_force`,
    which is the same integrand since ``J = f D X``.  For singular ``D`` the
    total is infinite unless the current lies in the range of ``D``; the
    quadratic form of the chemical potential is returned instead, which
    requires ``fss`` (or a model potential).
    """
    grid = grid or f.grid
    _, D = _fields(model, grid)
    if _is_singular(D):
        return nonadiabatic_entropy_production(f, model, grid, fss)
    X, D = _force(model, grid, f, fss, circulation)
    return grid_integrate(_vals(f) * np.einsum("...i,...ij,...j->...", X, D, X), grid)


def _log_fss(model, grid, fss):
    if fss is not None:
        return _log_positive(_vals(fss), "stationary density")
    if model.potential is None:
        raise DomainError("need a stationary density or a model potential")
    return -model.beta * model.potential(grid.points)


def nonadiabatic_entropy_production(f, model: DiffusionModel, grid: Grid | None = None, fss=None) -> float:
    """``-dF/dt = int grad mu . D grad mu f dx`` with ``mu = beta^-1 ln(f / f^ss)``.

    The circulation does not enter.  Valid for singular (PSD) ``D``.
    """
    grid = grid or f.grid
    v = _vals(f)
    logf = _log_positive(v, "density")
    gmu = grid_gradient((logf - _log_fss(model, grid, fss)) / model.beta, grid)
    _, D = _fields(model, grid)
    return grid_integrate(v * np.einsum("...i,...ij,...j->...", gmu, D, gmu), grid)


def housekeeping_input_rate(
    f, fss, model: DiffusionModel, grid: Grid | None = None, circulation=None
) -> float:
    """Environmental drive ``E_in = int J . (D^-1 b - beta^-1 grad ln f^ss) dx``.

    ``D^-1 b - beta^-1 grad ln f^ss`` equals ``D^-1 j`` with ``j = J^ss/f^ss``;
    pass ``circulation`` (that ``j`` on the grid, e.g. from the discrete
    stationary current) to use it directly instead of differencing
    ``ln f^ss``.  Returns NaN for singular ``D``, where the drive is undefined.
    """
    grid = grid or f.grid
    b, D = _fields(model, grid)
    if _is_singular(D):
        return float("nan")
    X, D = _force(model, grid, f, fss, circulation)
    if circulation is not None:
        j = _circ(circulation)
    else:
        j = b - np.einsum("...ij,...j->...i", D, grid_gradient(_log_fss(model, grid, fss), grid)) / model.beta
    # J . D^-1 j with J = f D X
    return grid_integrate(_vals(f) * np.sum(X * j, axis=-1), grid)


def mean_energy_rate(
    f, model: DiffusionModel, grid: Grid | None = None, fss=None, circulation=None
) -> float:
    """``d<phi>/dt = int J . grad phi dx`` with ``phi = -beta^-1 ln f^ss``."""
    grid = grid or f.grid
    phi = -_log_fss(model, grid, fss) / model.beta
    _, D = _fields(model, grid)
    if _is_singular(D):
        J = probability_current(f, model, grid)
    else:
        X, D = _force(model, grid, f, fss, circulation)
        J = _vals(f)[..., None] * np.einsum("...ij,...j->...i", D, X)
    return grid_integrate(np.sum(J * grid_gradient(phi, grid), axis=-1), grid)


def circulation_dissipation(fss, circulation, model: DiffusionModel, grid: Grid | None = None) -> float:
    """Stationary ``int j . D^-1 j f^ss dx``: the common value of ``E_in`` and ``e_p`` at stationarity."""
    grid = grid or fss.grid
    j = _circ(circulation)
    _, D = _fields(model, grid)
    if _is_singular(D):
        return float("nan")
    Dj = np.linalg.solve(D, j[..., None])[..., 0]
    return grid_integrate(_vals(fss) * np.sum(j * Dj, axis=-1), grid)


@dataclass
class ThermoLedger:
    """Time series of the free-energy balance.

    ``balance_residual`` is ``dF/dt (finite differences) - (E_in - e_p)``;
    for singular ``D`` (where ``E_in`` and the overdamped ``e_p`` are
    undefined) it is ``dF/dt + e_na``.  ``entropy_residual`` is
    ``dS/dt - beta (e_na + d<phi>/dt)``.
    """

    t: np.ndarray
    F: np.ndarray
    S: np.ndarray
    ep_overdamped: np.ndarray
    ep_nonadiabatic: np.ndarray
    E_in: np.ndarray
    dphi_dt: np.ndarray
    dF_dt_numeric: np.ndarray
    dS_dt_numeric: np.ndarray
    balance_residual: np.ndarray
    entropy_residual: np.ndarray

    CSV_COLUMNS = (
        "t", "F", "S", "ep_overdamped", "ep_nonadiabatic", "E_in", "dphi_dt",
        "dF_dt_numeric", "balance_residual", "entropy_residual",
    )

    def __len__(self):
        return len(self.t)

    def relative_balance_error(self) -> np.ndarray:
        ep = np.where(np.isfinite(self.ep_overdamped), self.ep_overdamped, self.ep_nonadiabatic)
        # absolute floor: a residual below 1e-8 passes a 1e-2 relative test
        return np.abs(self.balance_residual) / np.maximum(np.abs(ep), 1e-6)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_COLUMNS)
            for row in zip(*(getattr(self, c) for c in self.CSV_COLUMNS)):
                w.writerow([repr(float(x)) for x in row])


def ledger(snapshots, model: DiffusionModel, fss, times=None, circulation=None) -> ThermoLedger:
    """Evaluate every ledger column on a uniformly spaced series of densities.

    Parameters
    ----------
    snapshots : sequence of GridField
        An :class:`~diffthermo.fpe.Evolution` is accepted directly.
    model : DiffusionModel
    fss : GridField
        Stationary density (the reference of ``F`` and ``phi``).
    times : array_like, optional
        Snapshot times; taken from the evolution when omitted.
    circulation : CurrentField or ndarray, optional
        ``j = J^ss/f^ss`` of the stationary state.  When given, all forces
        are built from ``j`` and ``f^ss`` (see :func:`entropy_production_rate`).
    """
    if times is None:
        times = getattr(snapshots, "times", None)
    fields_ = list(snapshots)
    if len(fields_) < 3:
        raise InsufficientDataError("the ledger needs at least 3 snapshots")
    if times is None:
        raise InsufficientDataError("snapshot times are required")
    t = np.asarray(times, dtype=float)
    if t.size != len(fields_):
        raise InsufficientDataError("times and snapshots differ in length")
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise InsufficientDataError("snapshot times must be uniformly spaced")

    grid = fss.grid
    beta = model.beta
    _, D = _fields(model, grid)
    singular = _is_singular(D)

    F = np.array([free_energy(f, fss, beta, grid) for f in fields_])
    S = np.array([entropy(f, grid) for f in fields_])
    ena = np.array([nonadiabatic_entropy_production(f, model, grid, fss) for f in fields_])
    if singular:
        ep = np.full(t.size, np.nan)
        Ein = np.full(t.size, np.nan)
    else:
        ep = np.array([entropy_production_rate(f, model, grid, fss, circulation) for f in fields_])
        Ein = np.array([housekeeping_input_rate(f, fss, model, grid, circulation) for f in fields_])
    dphi = np.array([mean_energy_rate(f, model, grid, fss, circulation) for f in fields_])
    dF = np.gradient(F, t, edge_order=2)
    dS = np.gradient(S, t, edge_order=2)
    balance = dF + ena if singular else dF - (Ein - ep)
    ent = dS - beta * (ena + dphi)
    return ThermoLedger(t, F, S, ep, ena, Ein, dphi, dF, dS, balance, ent)
