"""Shared numerical kernels.

Rectangular cell-centred grids with midpoint quadrature, finite-difference
gradient and divergence stencils, a dense Lyapunov solver and the
reproducible random-number streams used by the Monte Carlo modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DegeneracyError, ShapeError, StabilityError

__all__ = [
    "Grid",
    "GridField",
    "CurrentField",
    "RngStream",
    "grid_integrate",
    "grid_gradient",
    "grid_divergence",
    "solve_lyapunov",
    "sym_antisym_split",
    "is_hurwitz",
]

# Kronecker vectorisation is an n^2 x n^2 dense solve; above this size the
# Bartels-Stewart solver from scipy is used instead.
KRONECKER_MAX_DIM = 32


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred rectangular grid.

    Parameters
    ----------
    bounds : sequence of (lo, hi)
        Box extent along each axis.
    counts : sequence of int
        Number of cells along each axis (at least 3).
    """

    bounds: tuple
    counts: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        counts = tuple(int(c) for c in self.counts)
        if len(bounds) != len(counts) or not bounds:
            raise ShapeError("bounds and counts must have the same non-zero length")
        for (lo, hi), c in zip(bounds, counts):
            if not lo < hi:
                raise ShapeError(f"empty axis interval [{lo}, {hi}]")
            if c < 3:
                raise ShapeError(f"need at least 3 cells per axis, got {c}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def cube(cls, lo: float, hi: float, count: int, dim: int) -> "Grid":
        return cls(((lo, hi),) * dim, (count,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / c for (lo, hi), c in zip(self.bounds, self.counts)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def box_volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @cached_property
    def axes(self) -> tuple:
        """Cell-centre coordinates along each axis."""
        return tuple(
            lo + (np.arange(c) + 0.5) * h
            for (lo, _), c, h in zip(self.bounds, self.counts, self.spacing)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Cell centres, shape ``counts + (dim,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(self.size, self.dim)

    def locate(self, x) -> np.ndarray:
        """Integer cell index of each point in ``x`` (shape ``(..., dim)``); -1 if outside."""
        x = np.asarray(x, dtype=float)
        idx = np.empty(x.shape, dtype=np.int64)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for k, ((lo, hi), c, h) in enumerate(zip(self.bounds, self.counts, self.spacing)):
            i = np.floor((x[..., k] - lo) / h).astype(np.int64)
            inside &= (x[..., k] >= lo) & (x[..., k] < hi) & (i >= 0) & (i < c)
            idx[..., k] = np.clip(i, 0, c - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.counts)
        return np.where(inside, flat, -1)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return all(lo <= x[k] <= hi for k, (lo, hi) in enumerate(self.bounds))

    def interior_mask(self, layers: int = 1) -> np.ndarray:
        """Boolean mask excluding ``layers`` cells next to every box face."""
        mask = np.ones(self.shape, dtype=bool)
        for k in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[k] = slice(0, layers)
            mask[tuple(sl)] = False
            sl[k] = slice(self.counts[k] - layers, None)
            mask[tuple(sl)] = False
        return mask

    def evaluate(self, func) -> np.ndarray:
        """Evaluate a vectorised function of ``x`` (shape ``(..., dim)``) at the cell centres."""
        return np.asarray(func(self.points), dtype=float)


@dataclass
class GridField:
    """Scalar field sampled at the cell centres of ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            if self.values.size == self.grid.size:
                self.values = self.values.reshape(self.grid.shape)
            else:
                raise ShapeError(
                    f"field of shape {self.values.shape} does not fit grid {self.grid.shape}"
                )

    def integral(self) -> float:
        return grid_integrate(self.values, self.grid)

    def normalized(self) -> "GridField":
        return GridField(self.grid, self.values / self.integral())


@dataclass
class CurrentField:
    """Vector field sampled at the cell centres; ``vectors`` has shape ``grid.shape + (dim,)``.

    Cells where the field is unknown hold NaN.
    """

    grid: Grid
    vectors: np.ndarray
    standard_error: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        expected = self.grid.shape + (self.grid.dim,)
        if self.vectors.shape != expected:
            raise ShapeError(f"vector field of shape {self.vectors.shape}, expected {expected}")

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=-1)


def _values(field_or_array, grid: Grid) -> np.ndarray:
    values = field_or_array.values if isinstance(field_or_array, GridField) else field_or_array
    values = np.asarray(values, dtype=float)
    if values.shape[: grid.dim] != grid.shape:
        raise ShapeError(f"field of shape {values.shape} does not fit grid {grid.shape}")
    return values


def grid_integrate(field, grid: Grid) -> float:
    """Midpoint-rule integral of a cell-centred field over the grid box.

    Trailing axes beyond the grid dimension are integrated component-wise and
    an array is returned.
    """
    values = _values(field, grid)
    axes = tuple(range(grid.dim))
    # sum * |box| / N keeps constant fields exact for any cell count
    total = np.sum(values, axis=axes) * grid.box_volume / grid.size
    return float(total) if np.ndim(total) == 0 else total


def grid_gradient(field, grid: Grid) -> np.ndarray:
    """Central differences in the interior, first-order one-sided at the faces.

    Returns an array of shape ``grid.shape + (dim,)``.
    """
    values = _values(field, grid)
    if values.shape != grid.shape:
        raise ShapeError("grid_gradient expects a scalar field")
    parts = np.gradient(values, *grid.spacing, edge_order=1)
    if grid.dim == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def grid_divergence(vectors, grid: Grid) -> np.ndarray:
    """Divergence of a cell-centred vector field with the same stencil as :func:`grid_gradient`."""
    vectors = np.asarray(vectors.vectors if isinstance(vectors, CurrentField) else vectors, dtype=float)
    if vectors.shape != grid.shape + (grid.dim,):
        raise ShapeError("grid_divergence expects a vector field on the grid")
    out = np.zeros(grid.shape)
    for k in range(grid.dim):
        out += np.gradient(vectors[..., k], grid.spacing[k], axis=k, edge_order=1)
    return out


def is_hurwitz(B) -> bool:
    """True when every eigenvalue of ``B`` has a strictly positive real part.

    The drift is ``b(x) = -B x``, so this is stability of ``dx/dt = -B x``.
    """
    return bool(np.all(np.linalg.eigvals(np.asarray(B, dtype=float)).real > 0))


def solve_lyapunov(B, D) -> np.ndarray:
    """Solve ``B X + X B^T = 2 D`` for the stationary covariance ``X``.

    Small systems (n <= 32) are solved by Kronecker vectorisation followed by
    one step of iterative refinement; larger ones use Bartels-Stewart.

    Raises
    ------
    StabilityError
        If ``B`` is not Hurwitz.
    DegeneracyError
        If the vectorised system is singular.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n = B.shape[0]
    if B.shape != (n, n) or D.shape != (n, n):
        raise ShapeError(f"B {B.shape} and D {D.shape} must be square and equal")
    if not is_hurwitz(B):
        raise StabilityError("B must have eigenvalues with positive real part")

    rhs = 2.0 * D
    if n > KRONECKER_MAX_DIM:
        X = scipy.linalg.solve_continuous_lyapunov(B, rhs)
        return 0.5 * (X + X.T)

    eye = np.eye(n)
    # column-major vec: vec(B X) = (I kron B) vec X, vec(X B^T) = (B kron I) vec X
    K = np.kron(eye, B) + np.kron(B, eye)
    c = rhs.reshape(-1, order="F")
    try:
        lu = scipy.linalg.lu_factor(K, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DegeneracyError(f"Kronecker Lyapunov system is singular: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) <= np.finfo(float).eps * np.abs(K).max() * n):
        raise DegeneracyError("Kronecker Lyapunov system is numerically singular")
    x = scipy.linalg.lu_solve(lu, c)
    x = x + scipy.linalg.lu_solve(lu, c - K @ x)
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def sym_antisym_split(M) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(S, A)`` with ``S`` symmetric, ``A`` antisymmetric and ``M = S + A``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {M.shape}")
    # both parts formed directly so each is exactly (anti)symmetric
    return 0.5 * (M + M.T), 0.5 * (M - M.T)


class RngStream:
    """Reproducible normal-variate stream keyed by ``(seed, stream_id)``.

    Built on a counter-based Philox generator whose key is derived from a
    ``SeedSequence`` with ``stream_id`` as spawn key, so distinct stream ids
    give independent sequences and no state is shared between streams.
    Instances are single-owner.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size)


def as_matrix(M, n: int | None = None) -> np.ndarray:
    """Coerce scalars and nested sequences to a 2-D float array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if n is not None and M.shape != (n, n):
        raise ShapeError(f"expected a {n}x{n} matrix, got {M.shape}")
    return M


def psd_sqrt(D) -> np.ndarray:
    """Symmetric square root of a PSD matrix (or stack of matrices); negative eigenvalues clip to 0."""
    D = np.asarray(D, dtype=float)
    w, V = np.linalg.eigh(0.5 * (D + np.swapaxes(D, -1, -2)))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def probe_points(bounds: Sequence, n_points: int, seed: int = 0) -> np.ndarray:
    """Uniform random probe points in a box, used for model invariant checks."""
    rng = RngStream(seed, 0)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    return lo + (hi - lo) * rng.uniform(size=(n_points, len(bounds)))
