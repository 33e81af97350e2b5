"""Finite-volume Fokker-Planck operator on a rectangular grid.

The flux through each interior face is ``J = b f - beta^-1 D grad f``.  The
diagonal diffusion part is combined with the drift by exponential fitting
(Scharfetter-Gummel / Chang-Cooper weights), using a Simpson-rule average
of the drift along the segment joining the two cell centres.  For a
detailed-balanced model whose potential is at most quartic along grid lines
the discrete stationary vector is then exactly ``exp(-beta phi)`` at the
cell centres.  Off-diagonal entries of ``D`` use averaged central
differences.  Faces on the box boundary carry no flux, so the operator
conserves mass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph
import scipy.sparse.linalg

from .errors import DomainError, NumericalError, ParameterError, ReducibilityError, ShapeError
from .model import DiffusionModel
from .numerics import CurrentField, Grid, GridField, grid_integrate

__all__ = [
    "GridField",
    "CurrentField",
    "DiscreteOperator",
    "Evolution",
    "OperatorSplit",
    "assemble_operator",
    "evolve",
    "stationary_density",
    "face_fluxes",
    "cell_current",
    "discrete_divergence",
    "weighted_adjoint_split",
    "liouville_operator",
    "density_from_function",
]

log = logging.getLogger(__name__)

_DEGENERATE = 1e-14


@dataclass
class DiscreteOperator:
    """Sparse generator ``L`` acting on cell-centred density values.

    ``flux[k]`` maps the density vector to fluxes through the interior faces
    normal to axis ``k`` (positive along ``+e_k``); ``faces[k]`` holds the
    flat indices of the cells on the low and high side of each face.
    """

    matrix: sp.csr_matrix
    grid: Grid
    model: DiffusionModel
    flux: list = field(repr=False)
    faces: list = field(repr=False)
    boundary: str = "no-flux"
    degenerate_scheme: str = "upwind"

    @property
    def size(self) -> int:
        return self.grid.size

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def apply(self, f) -> np.ndarray:
        values = f.values if isinstance(f, GridField) else np.asarray(f)
        return (self.matrix @ values.ravel()).reshape(self.grid.shape)


def _bernoulli(z: np.ndarray) -> np.ndarray:
    """``z / (exp(z) - 1)`` with the removable singularity at 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-10
    with np.errstate(over="ignore", invalid="ignore"):
        out[nz] = z[nz] / np.expm1(z[nz])
    small = ~nz
    out[small] = 1.0 - 0.5 * z[small]
    return np.nan_to_num(out, nan=0.0, posinf=0.0)


def _diff_matrix_1d(n: int, h: float) -> sp.csr_matrix:
    """np.gradient stencil with edge_order=1 as a sparse matrix."""
    rows, cols, vals = [], [], []
    for i in range(n):
        if i == 0:
            rows += [0, 0]
            cols += [0, 1]
            vals += [-1 / h, 1 / h]
        elif i == n - 1:
            rows += [i, i]
            cols += [i - 1, i]
            vals += [-1 / h, 1 / h]
        else:
            rows += [i, i]
            cols += [i - 1, i + 1]
            vals += [-0.5 / h, 0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _gradient_matrices(grid: Grid) -> list:
    mats = []
    for k in range(grid.dim):
        factors = [sp.identity(c, format="csr") for c in grid.counts]
        factors[k] = _diff_matrix_1d(grid.counts[k], grid.spacing[k])
        M = factors[0]
        for F in factors[1:]:
            M = sp.kron(M, F, format="csr")
        mats.append(M)
    return mats


def _face_indices(grid: Grid, k: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(grid.size).reshape(grid.shape)
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[k] = slice(0, grid.counts[k] - 1)
    hi[k] = slice(1, None)
    return idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()


def assemble_operator(
    model: DiffusionModel, grid: Grid, degenerate_scheme: str = "upwind"
) -> DiscreteOperator:
    """Assemble the no-flux finite-volume generator of the Fokker-Planck equation.

    Parameters
    ----------
    model : DiffusionModel
    grid : Grid
    degenerate_scheme : {"upwind", "central"}
        Weighting for faces whose normal diffusion coefficient vanishes.
        Upwinding keeps positivity at first order; central weighting is second
        order but may produce small negative tails.
    """
    if model.dim != grid.dim:
        raise ShapeError(f"model dimension {model.dim} does not match grid dimension {grid.dim}")
    if degenerate_scheme not in ("upwind", "central"):
        raise ParameterError(f"unknown degenerate scheme {degenerate_scheme!r}")
    beta = model.beta
    pts = grid.flat_points()
    b_cell = model.b(pts)
    D_cell = model.D(pts)
    scale = max(1.0, float(np.max(np.abs(D_cell))))
    eig_min = float(np.min(np.linalg.eigvalsh(0.5 * (D_cell + np.swapaxes(D_cell, -1, -2)))))
    if eig_min < -1e-12 * scale:
        raise ParameterError(f"diffusion matrix is not positive semi-definite (min eigenvalue {eig_min:.3e})")

    N = grid.size
    grads = None
    blocks = []
    fluxes = []
    faces = []
    for k in range(grid.dim):
        h = grid.spacing[k]
        L_idx, R_idx = _face_indices(grid, k)
        nf = L_idx.size
        xf = 0.5 * (pts[L_idx] + pts[R_idx])
        b_face = model.b(xf)[:, k]
        D_face = model.D(xf)
        # Simpson average of b_k along the segment between the two centres
        bbar = (b_cell[L_idx, k] + 4.0 * b_face + b_cell[R_idx, k]) / 6.0
        eps = D_face[:, k, k] / beta

        a = np.empty(nf)
        c = np.empty(nf)
        degenerate = eps <= _DEGENERATE * scale
        nd = ~degenerate
        z = bbar[nd] * h / eps[nd]
        a[nd] = eps[nd] / h * _bernoulli(-z)
        c[nd] = eps[nd] / h * _bernoulli(z)
        if degenerate_scheme == "upwind":
            a[degenerate] = np.maximum(bbar[degenerate], 0.0)
            c[degenerate] = np.maximum(-bbar[degenerate], 0.0)
        else:
            a[degenerate] = 0.5 * bbar[degenerate]
            c[degenerate] = -0.5 * bbar[degenerate]

        rows = np.arange(nf)
        PL = sp.csr_matrix((np.ones(nf), (rows, L_idx)), shape=(nf, N))
        PR = sp.csr_matrix((np.ones(nf), (rows, R_idx)), shape=(nf, N))
        F = sp.diags(a) @ PL - sp.diags(c) @ PR

        for l in range(grid.dim):
            if l == k:
                continue
            cross = D_face[:, k, l] / beta
            if np.any(np.abs(cross) > _DEGENERATE * scale):
                if grads is None:
                    grads = _gradient_matrices(grid)
                avg = 0.5 * (PL + PR) @ grads[l]
                F = F - sp.diags(cross) @ avg

        F = F.tocsr()
        fluxes.append(F)
        faces.append((L_idx, R_idx))
        blocks.append(((PR - PL).T @ F) / h)

    L = blocks[0]
    for blk in blocks[1:]:
        L = L + blk
    L = sp.csr_matrix(L)
    L.sum_duplicates()
    return DiscreteOperator(L, grid, model, fluxes, faces, degenerate_scheme=degenerate_scheme)


def face_fluxes(op: DiscreteOperator, f) -> list:
    """Flux through the interior faces normal to each axis, shaped like the face arrays."""
    values = f.values if isinstance(f, GridField) else np.asarray(f)
    v = values.ravel()
    out = []
    for k, F in enumerate(op.flux):
        shape = list(op.grid.shape)
        shape[k] -= 1
        out.append((F @ v).reshape(shape))
    return out


def cell_current(op: DiscreteOperator, f) -> CurrentField:
    """Cell-centred current: mean of the two face fluxes along each axis (boundary faces carry 0)."""
    grid = op.grid
    vec = np.empty(grid.shape + (grid.dim,))
    for k, J in enumerate(face_fluxes(op, f)):
        pad = [(0, 0)] * grid.dim
        pad[k] = (1, 1)
        Jp = np.pad(J, pad)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        vec[..., k] = 0.5 * (Jp[tuple(lo)] + Jp[tuple(hi)])
    return CurrentField(grid, vec)


def discrete_divergence(op: DiscreteOperator, f) -> np.ndarray:
    """Finite-volume divergence of the face fluxes; equals ``-(L f)`` cellwise."""
    grid = op.grid
    div = np.zeros(grid.shape)
    for k, J in enumerate(face_fluxes(op, f)):
        pad = [(0, 0)] * grid.dim
        pad[k] = (1, 1)
        div += np.diff(np.pad(J, pad), axis=k) / grid.spacing[k]
    return div


def density_from_function(grid: Grid, func) -> GridField:
    """Sample a (possibly unnormalised) density at the cell centres and normalise it."""
    values = np.asarray(func(grid.points), dtype=float)
    total = grid_integrate(values, grid)
    if not total > 0:
        raise DomainError("density has non-positive total mass on the grid")
    return GridField(grid, values / total)


def _count_closed_classes(L: sp.csr_matrix) -> int:
    A = sp.csr_matrix(L.T, copy=True)
    A.setdiag(0)
    A.eliminate_zeros()
    A.data = (A.data != 0).astype(float)
    n_comp, labels = scipy.sparse.csgraph.connected_components(A, directed=True, connection="strong")
    if n_comp == 1:
        return 1
    coo = A.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_classes = np.unique(labels[coo.row[leaving]])
    return n_comp - open_classes.size


def stationary_density(op: DiscreteOperator, initial=None, tol: float = 1e-15, max_iter: int = 10):
    """Normalised null vector of ``L`` and its stationary current.

    Computed by shifted inverse iteration: ``(sigma I - L) x_{k+1} = x_k`` with
    a tiny positive shift, which keeps iterates non-negative for an M-matrix
    generator.  The closed-form density of the model is the starting guess
    when available.

    Returns
    -------
    (GridField, CurrentField)

    Raises
    ------
    ReducibilityError
        If the generator has more than one closed communicating class.
    """
    grid = op.grid
    L = op.matrix
    n_closed = _count_closed_classes(L)
    if n_closed != 1:
        raise ReducibilityError(f"generator has {n_closed} closed classes; stationary density is not unique")

    if initial is None and op.model.potential is not None:
        with np.errstate(over="ignore", under="ignore"):
            logf = -op.model.beta * op.model.potential(grid.points)
            initial = np.exp(logf - np.max(logf))
    x = np.ones(grid.size) if initial is None else np.asarray(
        initial.values if isinstance(initial, GridField) else initial, dtype=float
    ).ravel().copy()

    scale = float(abs(L).max())
    sigma = 1e-9 * scale
    lu = scipy.sparse.linalg.splu((sigma * sp.identity(grid.size) - L).tocsc())
    w = grid.box_volume / grid.size
    resid = np.inf
    for it in range(max_iter):
        x = lu.solve(x)
        x = x / (np.sum(x) * w)
        new = float(np.max(np.abs(L @ x)))
        done = new <= tol * scale * float(np.max(np.abs(x))) or (it >= 1 and new > 0.5 * resid)
        resid = new
        if done:
            break
    if not np.all(np.isfinite(x)):
        raise NumericalError("stationary solve produced non-finite values")
    neg = x < 0
    if np.any(neg):
        log.debug("stationary density has %d negative cells (min %.3e)", neg.sum(), x.min())
    f = GridField(grid, x.reshape(grid.shape))
    return f, cell_current(op, f)


@dataclass
class Evolution:
    """Snapshots of an implicit-Euler run; behaves as a sequence of :class:`GridField`."""

    times: np.ndarray
    fields: list
    clip_events: list
    mass_errors: np.ndarray

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def __iter__(self):
        return iter(self.fields)


def evolve(op: DiscreteOperator, f0, dt: float, steps: int, record_every: int = 1) -> Evolution:
    """Implicit-Euler time stepping ``(I - dt L) f_{k+1} = f_k``.

    Each iterate is projected back to a density: negative values are set to
    zero and the mass renormalised.  Round-off negatives (above ``-1e-12``
    times the peak) pass silently; anything larger is recorded in
    ``clip_events`` as ``(step, n_cells, min_value)``.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    grid = op.grid
    f = (f0.values if isinstance(f0, GridField) else np.asarray(f0, dtype=float)).ravel().copy()
    mass0 = grid_integrate(f.reshape(grid.shape), grid)
    if not abs(mass0 - 1.0) <= 1e-8:
        raise DomainError(f"initial field is not a density (mass {mass0})")
    A = (sp.identity(grid.size) - dt * op.matrix).tocsc()
    try:
        lu = scipy.sparse.linalg.splu(A)
    except RuntimeError as exc:
        raise NumericalError(f"implicit-Euler matrix factorisation failed: {exc}") from exc

    fields = [GridField(grid, f.reshape(grid.shape).copy())]
    times = [0.0]
    clips = []
    mass_err = [abs(mass0 - 1.0)]
    for step in range(1, steps + 1):
        f = lu.solve(f)
        if not np.all(np.isfinite(f)):
            raise NumericalError(f"non-finite density at step {step}")
        mass = grid_integrate(f.reshape(grid.shape), grid)
        mass_err.append(abs(mass - 1.0))
        neg = f < 0
        if np.any(neg):
            fmin = float(f.min())
            if fmin < -1e-12 * float(f.max()):
                clips.append((step, int(neg.sum()), fmin))
            f[neg] = 0.0
            f /= grid_integrate(f.reshape(grid.shape), grid)
        if step % record_every == 0:
            fields.append(GridField(grid, f.reshape(grid.shape).copy()))
            times.append(step * dt)
    return Evolution(np.array(times), fields, clips, np.array(mass_err))


@dataclass
class OperatorSplit:
    """Parts of ``L`` that are self- and skew-adjoint in ``<u, v> = sum u v w / f^ss``."""

    L_S: sp.csr_matrix
    L_A: sp.csr_matrix
    sym_residual: float
    antisym_residual: float
    split_residual: float
    la_ratio: float

    @property
    def residuals(self) -> dict:
        return {
            "sym_residual": self.sym_residual,
            "antisym_residual": self.antisym_residual,
            "split_residual": self.split_residual,
            "la_ratio": self.la_ratio,
        }


def _fro(M) -> float:
    return float(scipy.sparse.linalg.norm(M)) if sp.issparse(M) else float(np.linalg.norm(M))


def weighted_adjoint_split(op: DiscreteOperator, fss) -> OperatorSplit:
    """Split ``L = L_S + L_A`` with respect to the stationary-density inner product.

    With ``W = diag(w / f^ss)`` the adjoint is ``L* = W^-1 L^T W``; then
    ``L_S = (L + L*)/2`` and ``L_A = (L - L*)/2``.  Residuals are relative
    Frobenius norms: ``sym_residual = ||W L_S - (W L_S)^T|| / ||W L||`` and
    likewise for ``L_A``; ``la_ratio = ||L_A|| / ||L||`` measures departure
    from detailed balance.
    """
    grid = op.grid
    values = fss.values if isinstance(fss, GridField) else np.asarray(fss, dtype=float)
    v = values.ravel()
    if np.any(~(v > 0)):
        raise DomainError("stationary density must be strictly positive for the weighted inner product")
    w = grid.box_volume / grid.size
    W = sp.diags(w / v)
    Winv = sp.diags(v / w)
    L = op.matrix
    Lstar = (Winv @ L.T @ W).tocsr()
    L_S = (0.5 * (L + Lstar)).tocsr()
    L_A = (0.5 * (L - Lstar)).tocsr()
    WL = _fro(W @ L)
    WS = W @ L_S
    WA = W @ L_A
    return OperatorSplit(
        L_S=L_S,
        L_A=L_A,
        sym_residual=_fro(WS - WS.T) / WL,
        antisym_residual=_fro(WA + WA.T) / WL,
        split_residual=_fro(L - L_S - L_A) / _fro(L),
        la_ratio=_fro(L_A) / _fro(L),
    )


def liouville_operator(circulation, grid: Grid) -> sp.csr_matrix:
    """Central finite-volume discretisation of ``u -> -div(j u)`` with no-flux faces."""
    pts = grid.flat_points()
    N = grid.size
    L = sp.csr_matrix((N, N))
    for k in range(grid.dim):
        h = grid.spacing[k]
        L_idx, R_idx = _face_indices(grid, k)
        nf = L_idx.size
        jf = circulation(0.5 * (pts[L_idx] + pts[R_idx]))[:, k]
        rows = np.arange(nf)
        PL = sp.csr_matrix((np.ones(nf), (rows, L_idx)), shape=(nf, N))
        PR = sp.csr_matrix((np.ones(nf), (rows, R_idx)), shape=(nf, N))
        F = sp.diags(0.5 * jf) @ (PL + PR)
        L = L + ((PR - PL).T @ F) / h
    return sp.csr_matrix(L)
