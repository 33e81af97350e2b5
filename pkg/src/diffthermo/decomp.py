"""Drift decomposition ``b = j - D grad phi`` and the Maxwell-Boltzmann classifier.

Given a stationary density and current, ``phi = -beta^-1 ln f^ss`` and
``j = J^ss / f^ss``.  The stationary state is a Maxwell-Boltzmann (MB)
equilibrium iff ``div j = 0`` and ``j . grad phi = 0``; detailed balance is the
special case ``j = 0``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, ParameterError, ShapeError
from .fpe import assemble_operator, cell_current, stationary_density
from .model import DiffusionModel
from .numerics import CurrentField, Grid, GridField, grid_gradient, grid_integrate

__all__ = [
    "Classification",
    "DriftDecomposition",
    "DEFAULT_THRESHOLDS",
    "GRID_THRESHOLDS",
    "decompose",
    "reference_fields",
    "decompose_analytic",
    "beta_family_check",
    "FlowResult",
    "conservative_flow",
    "four_step_cycle_report",
    "gaussian_level_loop",
]


class Classification(str, enum.Enum):
    DETAILED_BALANCE = "DetailedBalance"
    MB_EQUILIBRIUM = "MBEquilibrium"
    DRIVEN_NESS = "DrivenNESS"

    def __str__(self):
        return self.value


# tol_j is relative to the weighted norm of b; the others are dimensionless ratios.
DEFAULT_THRESHOLDS = {"tol_j": 1e-6, "tol_div": 1e-6, "tol_orth": 1e-4}
# Grid-solved fields carry O(dx) to O(dx^2) discretisation error.
GRID_THRESHOLDS = {"tol_j": 1e-3, "tol_div": 1e-2, "tol_orth": 1e-2}


@dataclass
class DriftDecomposition:
    """Result of :func:`decompose`.

    Residuals
    ---------
    j_norm
        ``||j|| / ||b||`` in ``L2(f^ss)``.
    div_j_norm
        ``||div j|| / ||grad j||_F`` in ``L2(f^ss)``.
    orth_norm
        ``||j . grad phi|| / || |j| |grad phi| ||`` in ``L2(f^ss)``.
    div_j_max, orth_max
        Max-norm analogues over interior cells with ``f^ss >= mask * max f^ss``.
    reconstruction_residual
        ``||j - D grad phi - b|| / ||b||`` on interior cells.
    """

    grid: Grid
    beta: float
    phi: GridField
    j: CurrentField
    grad_phi: np.ndarray
    fss: GridField
    j_norm: float
    div_j_norm: float
    orth_norm: float
    div_j_max: float
    orth_max: float
    reconstruction_residual: float
    classification: Classification
    thresholds: dict
    j_func: Optional[Callable] = field(default=None, repr=False)
    phi_func: Optional[Callable] = field(default=None, repr=False)

    def residuals(self) -> dict:
        return {
            "j_norm": self.j_norm,
            "div_j_norm": self.div_j_norm,
            "orth_norm": self.orth_norm,
            "div_j_max": self.div_j_max,
            "orth_max": self.orth_max,
            "reconstruction_residual": self.reconstruction_residual,
        }

    def report(self) -> dict:
        return {
            "classification": str(self.classification),
            "residuals": self.residuals(),
            "thresholds": dict(self.thresholds),
        }

    def to_csv(self, path) -> None:
        """Per-cell table: coordinates, phi, j components, j . grad phi."""
        pts = self.grid.points.reshape(-1, self.grid.dim)
        jv = self.j.vectors.reshape(-1, self.grid.dim)
        dot = np.sum(self.j.vectors * self.grad_phi, axis=-1).ravel()
        names = [f"x{k}" for k in range(self.grid.dim)] + ["phi"]
        names += [f"j{k}" for k in range(self.grid.dim)] + ["j_dot_grad_phi"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for p, ph, jj, d in zip(pts, self.phi.values.ravel(), jv, dot):
                w.writerow([repr(float(v)) for v in (*p, ph, *jj, d)])

    def phi_at(self, x) -> np.ndarray:
        if self.phi_func is not None:
            return np.asarray(self.phi_func(np.asarray(x, dtype=float)))
        return _interpolator(self.grid, self.phi.values)(x)

    def j_at(self, x) -> np.ndarray:
        if self.j_func is not None:
            return np.asarray(self.j_func(np.asarray(x, dtype=float)))
        return _interpolator(self.grid, self.j.vectors)(x)


def _interpolator(grid: Grid, values: np.ndarray):
    interp = RegularGridInterpolator(grid.axes, values, method="linear", bounds_error=False, fill_value=None)

    def ev(x):
        x = np.asarray(x, dtype=float)
        return interp(x.reshape(-1, grid.dim)).reshape(x.shape[:-1] + values.shape[grid.dim:])

    return ev


def _wnorm(values: np.ndarray, weight: np.ndarray, grid: Grid) -> float:
    sq = values**2 if values.ndim == weight.ndim else np.sum(values**2, axis=tuple(range(weight.ndim, values.ndim)))
    return float(np.sqrt(max(grid_integrate(weight * sq, grid), 0.0)))


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def _jacobian(vectors: np.ndarray, grid: Grid) -> np.ndarray:
    """``d j_i / d x_k`` stacked as ``(..., i, k)``."""
    return np.stack([grid_gradient(vectors[..., i], grid) for i in range(grid.dim)], axis=-2)


def decompose(
    model: DiffusionModel,
    fss,
    Jss,
    thresholds: dict | None = None,
    mask: float = 1e-8,
    boundary_layers: int = 1,
    j_func: Callable | None = None,
    phi_func: Callable | None = None,
) -> DriftDecomposition:
    """Split the drift into its circulation and gradient parts and classify.

    Parameters
    ----------
    model : DiffusionModel
    fss : GridField
        Stationary density, strictly positive.
    Jss : CurrentField or ndarray
        Stationary current on the same grid.
    thresholds : dict, optional
        Overrides of ``tol_j``, ``tol_div`` and ``tol_orth``.
    mask : float
        Relative density cut for the max-norm diagnostics.
    boundary_layers : int
        Cells excluded at each face for differenced quantities.
    j_func, phi_func : callable, optional
        Analytic fields used by :func:`conservative_flow` instead of grid interpolation.
    """
    tol = dict(DEFAULT_THRESHOLDS)
    tol.update(thresholds or {})
    unknown = set(tol) - set(DEFAULT_THRESHOLDS)
    if unknown:
        raise ParameterError(f"unknown thresholds: {sorted(unknown)}")
    grid = fss.grid
    f = fss.values
    if np.any(~(f > 0)):
        raise DomainError("stationary density must be strictly positive on the grid")
    J = Jss.vectors if isinstance(Jss, CurrentField) else np.asarray(Jss, dtype=float)
    if J.shape != grid.shape + (grid.dim,):
        raise ShapeError(f"current has shape {J.shape}, expected {grid.shape + (grid.dim,)}")

    beta = model.beta
    phi = -np.log(f) / beta
    phi -= phi.min()
    pts = grid.points
    if phi_func is not None and hasattr(phi_func, "gradient"):
        gphi = np.asarray(phi_func.gradient(pts), dtype=float)
    else:
        gphi = grid_gradient(phi, grid)
    j = J / f[..., None]
    b = model.b(pts)
    D = model.D(pts)

    inner = grid.interior_mask(boundary_layers)
    w = f / grid_integrate(f, grid)
    wi = np.where(inner, w, 0.0)

    jac = _jacobian(j, grid)
    div = np.trace(jac, axis1=-2, axis2=-1)
    dot = np.sum(j * gphi, axis=-1)
    prod = np.linalg.norm(j, axis=-1) * np.linalg.norm(gphi, axis=-1)

    j_norm = _ratio(_wnorm(j, w, grid), _wnorm(b, w, grid))
    div_norm = _ratio(_wnorm(div, wi, grid), _wnorm(jac, wi, grid))
    orth_norm = _ratio(_wnorm(dot, wi, grid), _wnorm(prod, wi, grid))

    sel = inner & (f >= mask * f.max())
    jac_sel = np.sqrt(np.sum(jac[sel] ** 2, axis=(-2, -1)))
    div_max = _ratio(float(np.max(np.abs(div[sel]), initial=0.0)), float(np.max(jac_sel, initial=0.0)))
    orth_max = _ratio(float(np.max(np.abs(dot[sel]), initial=0.0)), float(np.max(prod[sel], initial=0.0)))

    recon = j - np.einsum("...ij,...j->...i", D, gphi)
    recon_res = _ratio(_wnorm(recon - b, wi, grid), _wnorm(b, wi, grid))

    if j_norm <= tol["tol_j"]:
        cls = Classification.DETAILED_BALANCE
    elif div_norm <= tol["tol_div"] and orth_norm <= tol["tol_orth"]:
        cls = Classification.MB_EQUILIBRIUM
    else:
        cls = Classification.DRIVEN_NESS

    return DriftDecomposition(
        grid=grid,
        beta=beta,
        phi=GridField(grid, phi),
        j=CurrentField(grid, j),
        grad_phi=gphi,
        fss=fss,
        j_norm=j_norm,
        div_j_norm=div_norm,
        orth_norm=orth_norm,
        div_j_max=div_max,
        orth_max=orth_max,
        reconstruction_residual=recon_res,
        classification=cls,
        thresholds=tol,
        j_func=j_func,
        phi_func=phi_func,
    )


def reference_fields(model: DiffusionModel, grid: Grid) -> tuple[GridField, CurrentField]:
    """Closed-form ``f^ss`` (normalised on the grid) and ``J^ss`` of a catalog model."""
    if model.potential is None or model.circulation is None:
        raise DomainError(f"model {model.name!r} has no closed-form stationary state")
    pts = grid.points
    logf = -model.beta * model.potential(pts)
    f = np.exp(logf - logf.max())
    f /= grid_integrate(f, grid)
    return GridField(grid, f), CurrentField(grid, model.circulation(pts) * f[..., None])


def decompose_analytic(model: DiffusionModel, grid: Grid, thresholds: dict | None = None, **kw) -> DriftDecomposition:
    """:func:`decompose` on the closed-form fields, keeping the analytic ``j`` and ``phi`` for flows."""
    fss, Jss = reference_fields(model, grid)
    return decompose(model, fss, Jss, thresholds, j_func=model.circulation, phi_func=model.potential, **kw)


def beta_family_check(
    model: DiffusionModel,
    fss_at_beta1,
    betas,
    thresholds: dict | None = None,
    degenerate_scheme: str = "upwind",
) -> dict:
    """Check that ``f_beta ~ (f_1)^beta`` and that ``j`` does not depend on beta.

    The model at beta = 1 must classify as detailed balance or MB
    equilibrium (with ``GRID_THRESHOLDS`` unless overridden).  For each beta
    the stationary problem is re-solved on the grid of ``fss_at_beta1``.

    Returns
    -------
    dict
        ``{"classification", "entries": [{"beta", "l1_error", "j_rel_diff"}, ...],
        "max_l1_error", "max_j_rel_diff"}``.  ``j_rel_diff`` is
        ``||j_beta - j_1|| / ||j_1||`` in ``L2(f_1^ss)``; the drift norm replaces
        ``||j_1||`` under detailed balance.
    """
    grid = fss_at_beta1.grid
    m1 = model.with_beta(1.0)
    op1 = assemble_operator(m1, grid, degenerate_scheme)
    f1 = fss_at_beta1.values
    J1 = cell_current(op1, fss_at_beta1)
    tol = dict(GRID_THRESHOLDS)
    tol.update(thresholds or {})
    dec = decompose(m1, fss_at_beta1, J1, tol)
    if dec.classification is Classification.DRIVEN_NESS:
        raise DomainError("beta-family scaling requires an MB equilibrium at beta = 1")

    j1 = J1.vectors / f1[..., None]
    w = f1 / grid_integrate(f1, grid)
    # under detailed balance j_1 is round-off; compare against the drift scale instead
    if dec.classification is Classification.DETAILED_BALANCE:
        j1_norm = _wnorm(m1.b(grid.points), w, grid)
    else:
        j1_norm = _wnorm(j1, w, grid)
    entries = []
    for beta in betas:
        beta = float(beta)
        if beta == 1.0:
            fb, jb = f1, j1
        else:
            opb = assemble_operator(model.with_beta(beta), grid, degenerate_scheme)
            fbf, Jb = stationary_density(opb)
            fb = fbf.values
            jb = Jb.vectors / fb[..., None]
        logt = beta * np.log(f1)
        target = np.exp(logt - logt.max())
        target /= grid_integrate(target, grid)
        l1 = grid_integrate(np.abs(fb - target), grid)
        jd = 0.0 if j1_norm == 0 else _wnorm(jb - j1, w, grid) / j1_norm
        entries.append({"beta": beta, "l1_error": float(l1), "j_rel_diff": float(jd)})
    return {
        "classification": str(dec.classification),
        "entries": entries,
        "max_l1_error": max(e["l1_error"] for e in entries),
        "max_j_rel_diff": max(e["j_rel_diff"] for e in entries),
    }


@dataclass
class FlowResult:
    """Trajectory of ``dx/dt = j(x)`` with conservation diagnostics.

    ``phi_drift`` is ``max_t |phi(x(t)) - phi(x0)|``; ``divergence`` holds the
    finite-difference trace of the Jacobian of ``j`` at each recorded point.
    ``exit_time`` is set when the path left the grid and was truncated.
    """

    times: np.ndarray
    trajectory: np.ndarray
    phi: np.ndarray
    phi_drift: float
    divergence: np.ndarray
    exit_time: Optional[float] = None

    @property
    def truncated(self) -> bool:
        return self.exit_time is not None


def _fd_divergence(jf, x, step=1e-5):
    n = x.shape[-1]
    tr = np.zeros(x.shape[:-1])
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        tr += (jf(x + e)[..., k] - jf(x - e)[..., k]) / (2 * step)
    return tr


def conservative_flow(
    decomp: DriftDecomposition | Callable,
    x0,
    dt: float,
    t_final: float,
    phi: Callable | None = None,
    record_every: int = 1,
    grid: Grid | None = None,
) -> FlowResult:
    """Classical RK4 integration of the conservative dynamics ``dx/dt = j(x)``.

    ``decomp`` is either a :class:`DriftDecomposition` (analytic ``j`` and
    ``phi`` are used when attached, grid interpolation otherwise) or a bare
    callable ``j``, in which case ``phi`` supplies the first integral.
    """
    if dt <= 0 or t_final <= 0:
        raise ParameterError("dt and t_final must be positive")
    if isinstance(decomp, DriftDecomposition):
        jf, pf, grid = decomp.j_at, decomp.phi_at, decomp.grid
    else:
        jf, pf = decomp, phi
    x = np.asarray(x0, dtype=float).copy()
    if grid is not None and not grid.contains(x):
        raise DomainError("initial point lies outside the grid")
    steps = int(round(t_final / dt))
    phi0 = float(pf(x)) if pf is not None else float("nan")
    times, traj = [0.0], [x.copy()]
    exit_time = None
    for s in range(1, steps + 1):
        k1 = jf(x)
        k2 = jf(x + 0.5 * dt * k1)
        k3 = jf(x + 0.5 * dt * k2)
        k4 = jf(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if grid is not None and not grid.contains(x):
            exit_time = s * dt
            break
        if s % record_every == 0 or s == steps:
            times.append(s * dt)
            traj.append(x.copy())
    traj = np.array(traj)
    phis = np.asarray(pf(traj), dtype=float) if pf is not None else np.full(len(traj), np.nan)
    drift = float(np.max(np.abs(phis - phi0))) if pf is not None else float("nan")
    return FlowResult(np.array(times), traj, phis, drift, _fd_divergence(jf, traj), exit_time)


def four_step_cycle_report(phi, loop, tol: float = 1e-8) -> dict:
    """Label each segment of a closed polyline by the change of ``phi`` along it.

    Parameters
    ----------
    phi : DriftDecomposition or callable
    loop : array_like, shape (k, n)
        Vertices; the first and last must coincide.
    tol : float
        ``|delta phi| <= tol`` counts as conservative.

    Returns
    -------
    dict
        ``segments`` (per edge: ``delta_phi`` and ``label`` in
        {"driven", "dissipative", "conservative"}), ``steps`` (consecutive
        edges with the same label merged), ``total_delta_phi`` and ``counts``.
    """
    pf = phi.phi_at if isinstance(phi, DriftDecomposition) else phi
    loop = np.asarray(loop, dtype=float)
    if loop.ndim != 2 or len(loop) < 3:
        raise ShapeError("loop must be a (k, n) array with k >= 3")
    if not np.allclose(loop[0], loop[-1], rtol=0, atol=1e-12 * (1 + np.max(np.abs(loop)))):
        raise ParameterError("loop is not closed: first and last vertices differ")
    vals = np.asarray(pf(loop), dtype=float)
    d = np.diff(vals)
    labels = np.where(d > tol, "driven", np.where(d < -tol, "dissipative", "conservative"))
    segments = [{"index": i, "delta_phi": float(d[i]), "label": str(labels[i])} for i in range(len(d))]
    steps = []
    for seg in segments:
        if steps and steps[-1]["label"] == seg["label"]:
            steps[-1]["delta_phi"] += seg["delta_phi"]
            steps[-1]["segments"].append(seg["index"])
        else:
            steps.append({"label": seg["label"], "delta_phi": seg["delta_phi"], "segments": [seg["index"]]})
    # the loop is cyclic: merge a trailing step into the leading one
    if len(steps) > 1 and steps[0]["label"] == steps[-1]["label"]:
        last = steps.pop()
        steps[0]["delta_phi"] += last["delta_phi"]
        steps[0]["segments"] = last["segments"] + steps[0]["segments"]
    counts = {lab: sum(1 for s in steps if s["label"] == lab) for lab in ("driven", "dissipative", "conservative")}
    return {
        "segments": segments,
        "steps": steps,
        "counts": counts,
        "total_delta_phi": float(np.sum(d)),
    }


def gaussian_level_loop(Xi, phi_high: float, phi_low: float, theta0: float, theta1: float, n_arc: int = 16) -> np.ndarray:
    """Closed loop a-b-c-d between two level sets of ``phi = x^T Xi^-1 x / 2``.

    a -> b climbs radially from ``phi_low`` to ``phi_high`` at angle
    ``theta0``, b -> c runs along ``phi_high`` to ``theta1``, c -> d drops back
    to ``phi_low`` and d -> a returns along ``phi_low``.  Angles are taken in
    the whitened coordinates ``Xi^-1/2 x`` so the arcs lie exactly on the
    level sets.
    """
    Xi = np.asarray(Xi, dtype=float)
    if Xi.shape != (2, 2):
        raise ShapeError("level loops are two-dimensional")
    if not (phi_high > phi_low > 0):
        raise ParameterError("need phi_high > phi_low > 0")
    w, V = np.linalg.eigh(Xi)
    S = V @ np.diag(np.sqrt(w)) @ V.T

    def arc(level, a, b):
        th = np.linspace(a, b, n_arc + 1)
        u = np.sqrt(2 * level) * np.stack([np.cos(th), np.sin(th)], axis=-1)
        return u @ S.T

    top = arc(phi_high, theta0, theta1)
    bottom = arc(phi_low, theta1, theta0)
    return np.vstack([bottom[-1:], top, bottom])
