"""Euler-Maruyama ensembles and the driven pendulum energy ledger.

Each path owns a random stream keyed by ``(seed, path index)``, so results
do not depend on how paths are grouped into blocks.
"""

from __future__ import annotations

import csv
import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, ParameterError, ShapeError
from .fpe import _gradient_matrices
from .model import DiffusionModel
from .numerics import CurrentField, Grid, GridField, RngStream, psd_sqrt

__all__ = [
    "EnsembleSpec",
    "EnsembleStats",
    "point_mass",
    "gaussian_initial",
    "simulate",
    "histogram",
    "estimate_current",
    "write_snapshot",
    "read_snapshot",
    "PendulumLedger",
    "driven_pendulum_ledger",
    "SNAPSHOT_MAGIC",
]

SNAPSHOT_MAGIC = b"DTENS001"
_BLOCK = 4096
_NOISE_BUDGET = 4_000_000  # floats of pre-drawn noise per block


def point_mass(x0) -> dict:
    return {"type": "point", "x0": np.atleast_1d(np.asarray(x0, dtype=float)).tolist()}


def gaussian_initial(mean, cov) -> dict:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return {"type": "gaussian", "mean": mean.tolist(), "cov": cov.tolist()}


@dataclass(frozen=True)
class EnsembleSpec:
    """Ensemble size, time stepping, initial law and seed.

    ``initial`` is a dict from :func:`point_mass` or :func:`gaussian_initial`.
    ``record_times`` defaults to ``(t_final,)``; each must be a multiple of ``dt``.
    """

    n_paths: int
    dt: float
    t_final: float
    initial: dict
    seed: int = 0
    record_times: tuple = ()

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ParameterError("n_paths must be at least 1")
        if not (self.dt > 0 and self.t_final > 0):
            raise ParameterError("dt and t_final must be positive")
        if self.dt > self.t_final:
            raise ParameterError("dt must not exceed t_final")
        kind = self.initial.get("type") if isinstance(self.initial, dict) else None
        if kind not in ("point", "gaussian"):
            raise ParameterError("initial must be a point-mass or Gaussian spec")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def record_steps(self) -> list[int]:
        times = self.record_times or (self.t_final,)
        out = []
        for t in times:
            s = t / self.dt
            if abs(s - round(s)) > 1e-6 or not (0 <= round(s) <= self.steps):
                raise ParameterError(f"record time {t} is not a step of the grid 0, dt, ..., t_final")
            out.append(int(round(s)))
        return out


@dataclass
class EnsembleStats:
    """Moments, histograms and current estimates at the recorded times.

    ``samples[i]`` holds the ensemble at ``times[i]`` in path order.
    """

    times: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    samples: list
    histograms: list = field(default_factory=list)
    currents: list = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return len(self.samples[0])

    def mean_se(self, i: int) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance[i]) / self.n_paths)

    def variance_se(self, i: int) -> np.ndarray:
        """Standard error of each marginal sample variance from the empirical fourth moment."""
        x = self.samples[i] - self.mean[i]
        m4 = np.mean(x**4, axis=0)
        var = np.mean(x**2, axis=0)
        return np.sqrt(np.maximum(m4 - var**2, 0.0) / self.n_paths)

    def to_csv(self, path) -> None:
        n = self.mean.shape[1]
        names = ["t"] + [f"mean_{i}" for i in range(n)]
        names += [f"cov_{i}{j}" for i in range(n) for j in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for t, m, c in zip(self.times, self.mean, self.covariance):
                w.writerow([repr(float(v)) for v in (t, *m, *c.ravel())])


def _initial_state(spec: EnsembleSpec, dim: int, rng: RngStream) -> np.ndarray:
    init = spec.initial
    if init["type"] == "point":
        x0 = np.asarray(init["x0"], dtype=float)
        if x0.shape != (dim,):
            raise ShapeError(f"initial point has shape {x0.shape}, model dimension is {dim}")
        return x0.copy()
    mean = np.asarray(init["mean"], dtype=float)
    cov = np.asarray(init["cov"], dtype=float)
    if mean.shape != (dim,) or cov.shape != (dim, dim):
        raise ShapeError("initial Gaussian does not match the model dimension")
    return mean + psd_sqrt(cov) @ rng.normal(dim)


def _ito_correction(model: DiffusionModel, X: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """``beta^-1 div D`` with ``(div D)_i = sum_j d_j D_ij`` by central differences."""
    n = model.dim
    out = np.zeros_like(X)
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        out += (model.D(X + e)[..., :, j] - model.D(X - e)[..., :, j]) / (2 * step)
    return out / model.beta


def simulate(model: DiffusionModel, spec: EnsembleSpec, grid: Grid | None = None) -> EnsembleStats:
    """Euler-Maruyama integration of ``dX = b dt + sqrt(2/beta) sigma dW`` with ``sigma sigma^T = D``.

    For state-dependent ``D`` the Ito drift ``beta^-1 div D`` is added so that
    the density obeys ``df/dt = div(beta^-1 D grad f - b f)``.  When ``grid``
    is given, histograms and current estimates are attached per recorded time.

    Raises
    ------
    DivergenceError
        When a path becomes non-finite.
    """
    n = model.dim
    steps = spec.steps
    rec = spec.record_steps()
    rec_set = {s: [] for s in rec}
    amp = math.sqrt(2.0 * spec.dt / model.beta)
    sigma_const = None
    if model.constant_diffusion:
        sigma_const = psd_sqrt(model.D(np.zeros(n)))

    N = int(spec.n_paths)
    for start in range(0, N, _BLOCK):
        stop = min(N, start + _BLOCK)
        streams = [RngStream(spec.seed, p) for p in range(start, stop)]
        X = np.stack([_initial_state(spec, n, r) for r in streams])
        if 0 in rec_set:
            rec_set[0].append(X.copy())
        chunk = max(1, min(steps, _NOISE_BUDGET // (len(streams) * n)))
        noise = None
        for s in range(1, steps + 1):
            k = (s - 1) % chunk
            if k == 0:
                m = min(chunk, steps - s + 1)
                noise = np.stack([r.normal((m, n)) for r in streams])
            xi = noise[:, k, :]
            drift = model.b(X)
            if sigma_const is not None:
                dW = xi @ sigma_const.T
            else:
                drift = drift + _ito_correction(model, X)
                dW = np.einsum("pij,pj->pi", psd_sqrt(model.D(X)), xi)
            X = X + drift * spec.dt + amp * dW
            bad = ~np.all(np.isfinite(X), axis=1)
            if np.any(bad):
                raise DivergenceError(start + int(np.argmax(bad)), s)
            if s in rec_set:
                rec_set[s].append(X.copy())

    times = np.array([s * spec.dt for s in rec])
    samples = [np.concatenate(rec_set[s]) for s in rec]
    mean = np.array([x.mean(axis=0) for x in samples])
    cov = np.array([np.atleast_2d(np.cov(x, rowvar=False)) if N > 1 else np.zeros((n, n)) for x in samples])
    stats = EnsembleStats(times, mean, cov, samples)
    if grid is not None:
        for x in samples:
            stats.histograms.append(histogram(x, grid))
            stats.currents.append(estimate_current(x, model, grid))
    return stats


def histogram(samples, grid: Grid) -> GridField:
    """Density estimate ``counts / (N * cell volume)``; samples outside the grid count in ``N`` only."""
    samples = np.asarray(samples, dtype=float).reshape(-1, grid.dim)
    idx = grid.locate(samples)
    counts = np.bincount(idx[idx >= 0], minlength=grid.size)
    return GridField(grid, counts / (len(samples) * grid.cell_volume))


def estimate_current(samples, model: DiffusionModel, grid: Grid, min_samples: int = 10_000) -> CurrentField:
    """Per-cell probability current from an ensemble snapshot.

    Uses ``J = b f - beta^-1 D grad f``: the advective part is the
    cell average of ``b`` over the samples in the cell, the diffusive part
    differences the histogram.  Each term is a sample mean, so the standard
    error follows from the per-sample second moments.  Cells without samples
    are NaN.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, grid.dim)
    N = len(samples)
    if N < min_samples:
        warnings.warn(f"only {N} samples; current estimates will be noisy", stacklevel=2)
    w = grid.cell_volume
    idx = grid.locate(samples)
    inside = idx >= 0
    ii = idx[inside]
    counts = np.bincount(ii, minlength=grid.size).astype(float)
    p = counts / N
    b = model.b(samples[inside])
    G = _gradient_matrices(grid)
    Dc = model.D(grid.flat_points())
    J = np.empty((grid.size, grid.dim))
    se = np.empty((grid.size, grid.dim))
    for k in range(grid.dim):
        s1 = np.bincount(ii, weights=b[:, k], minlength=grid.size) / N
        s2 = np.bincount(ii, weights=b[:, k] ** 2, minlength=grid.size) / N
        C = sum(G[l].multiply(Dc[:, k, l][:, None]) for l in range(grid.dim)) / model.beta
        C = C.tocsr()
        J[:, k] = (s1 - C @ p) / w
        Eg2 = (s2 + C.multiply(C) @ p - 2.0 * C.diagonal() * s1) / w**2
        se[:, k] = np.sqrt(np.maximum(Eg2 - J[:, k] ** 2, 0.0) / N)
    empty = counts == 0
    J[empty] = np.nan
    se[empty] = np.nan
    shape = grid.shape + (grid.dim,)
    return CurrentField(grid, J.reshape(shape), se.reshape(shape))


def write_snapshot(path, samples, t: float) -> None:
    """Binary snapshot: 8-byte magic, ``<u8`` n_paths, ``<u8`` dim, ``<f8`` t, then ``<f8`` rows."""
    x = np.ascontiguousarray(np.asarray(samples, dtype="<f8"))
    if x.ndim != 2:
        raise ShapeError("samples must be an (n_paths, dim) array")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<QQd", x.shape[0], x.shape[1], float(t)))
        fh.write(x.tobytes())


def read_snapshot(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        if fh.read(8) != SNAPSHOT_MAGIC:
            raise ShapeError("not an ensemble snapshot file")
        n, d, t = struct.unpack("<QQd", fh.read(24))
        x = np.frombuffer(fh.read(), dtype="<f8")
    return x.reshape(n, d), t


@dataclass
class PendulumLedger:
    """Energy bookkeeping of ``m x'' = -k sin x - eta x' + xi(t)``.

    ``residual`` is ``H(t) - H(0) - input - noise_input + dissipation``.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    H: np.ndarray
    dissipation: np.ndarray
    input: np.ndarray
    noise_input: np.ndarray
    residual: np.ndarray

    def time_averages(self) -> dict:
        T = float(self.t[-1])
        return {"dissipation_rate": float(self.dissipation[-1]) / T, "input_rate": float(self.input[-1]) / T}

    def to_csv(self, path) -> None:
        cols = ("t", "x", "v", "H", "dissipation", "input", "noise_input", "residual")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*(getattr(self, c) for c in cols)):
                w.writerow([repr(float(v)) for v in row])


def driven_pendulum_ledger(
    m: float,
    k: float,
    eta: float,
    drive: Optional[Callable[[float], float]],
    x0: float,
    v0: float,
    dt: float,
    t_final: float,
    seed: int = 0,
    noise: float = 0.0,
    record_every: int | None = None,
) -> PendulumLedger:
    """Integrate the damped, driven pendulum and account for every energy flow.

    Each step is the symmetric composition damping(dt/2), kick(dt/2),
    drift(dt), kick(dt/2), damping(dt/2).  Damping is solved exactly, so the
    energy it removes is booked exactly; the work of the drive over a kick is
    its impulse times the mean velocity of the kick.  The residual is then the
    energy error of the conservative part alone, which stays O(dt^2).

    ``noise`` adds a white force of intensity ``noise`` (impulse
    ``noise * sqrt(dt/2) * N(0,1)`` per kick); its work is kept separate.
    """
    if not (m > 0 and k > 0):
        raise ParameterError("m and k must be positive")
    if eta < 0:
        raise ParameterError("eta must be non-negative")
    if not (dt > 0 and t_final > 0):
        raise ParameterError("dt and t_final must be positive")
    drive = drive or (lambda t: 0.0)
    steps = int(round(t_final / dt))
    if record_every is None:
        record_every = max(1, steps // 100_000)
    rng = RngStream(seed, 0) if noise else None
    decay = math.exp(-0.5 * eta * dt / m)
    h = 0.5 * dt
    sq = noise * math.sqrt(h)
    sin, cos = math.sin, math.cos

    def energy(x, v):
        return 0.5 * m * v * v + k * (1.0 - cos(x))

    x, v = float(x0), float(v0)
    H0 = energy(x, v)
    diss = inp = ninp = 0.0
    rows = [(0.0, x, v, H0, 0.0, 0.0, 0.0)]
    xi_now = drive(0.0)
    for s in range(1, steps + 1):
        vn = v * decay
        diss += 0.5 * m * (v * v - vn * vn)
        v = vn
        eta_n = sq * rng.normal() if rng is not None else 0.0
        vn = v + h * (-k * sin(x) + xi_now) / m + eta_n / m
        inp += h * xi_now * 0.5 * (v + vn)
        ninp += eta_n * 0.5 * (v + vn)
        v = vn
        x += dt * v
        xi_now = drive(s * dt)
        eta_n = sq * rng.normal() if rng is not None else 0.0
        vn = v + h * (-k * sin(x) + xi_now) / m + eta_n / m
        inp += h * xi_now * 0.5 * (v + vn)
        ninp += eta_n * 0.5 * (v + vn)
        v = vn
        vn = v * decay
        diss += 0.5 * m * (v * v - vn * vn)
        v = vn
        if not (math.isfinite(x) and math.isfinite(v)):
            raise DivergenceError(0, s)
        if s % record_every == 0 or s == steps:
            rows.append((s * dt, x, v, energy(x, v), diss, inp, ninp))
    a = np.array(rows)
    resid = a[:, 3] - H0 - a[:, 5] - a[:, 6] + a[:, 4]
    return PendulumLedger(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5], a[:, 6], resid)
