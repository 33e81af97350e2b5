"""Diffusion models and the catalog of concrete systems.

A :class:`DiffusionModel` carries the data of the Fokker-Planck equation

    df/dt = div( beta^-1 D(x) grad f - b(x) f )

Every callable is vectorised over leading axes: ``drift(x)`` maps an array of
shape ``(..., n)`` to ``(..., n)`` and ``diffusion(x)`` maps it to
``(..., n, n)``.  Models optionally carry closed-form references (potential,
circulation, stationary density) so numerical routes can be checked against
them.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate

from .errors import ParameterError, StabilityError
from .numerics import as_matrix, is_hurwitz, probe_points, solve_lyapunov

__all__ = [
    "PotentialSpec",
    "DiffusionModel",
    "make_ou",
    "make_klein_kramers",
    "make_ao",
    "make_gradient_model",
    "make_driven_rotor",
    "quadratic_potential",
    "double_well_potential",
    "quartic_potential",
    "CATALOG",
    "build_model",
    "build_potential",
]

Field = Callable[[np.ndarray], np.ndarray]

_FD_STEP = 1e-6


@dataclass(frozen=True)
class PotentialSpec:
    """Scalar potential ``phi(x)`` with an optional analytic gradient."""

    phi: Field
    grad_phi: Optional[Field] = None
    dim: int = 1
    label: str = "phi"

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.phi(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_phi is not None:
            return np.asarray(self.grad_phi(x), dtype=float)
        return self.fd_gradient(x)

    def fd_gradient(self, x, step: float = _FD_STEP) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for k in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[k] = step
            out[..., k] = (self.phi(x + e) - self.phi(x - e)) / (2 * step)
        return out

    def check_gradient(self, points, tol: float = 1e-6) -> float:
        """Max relative mismatch between the analytic gradient and central differences."""
        if self.grad_phi is None:
            return 0.0
        points = np.asarray(points, dtype=float)
        a = self.gradient(points)
        b = self.fd_gradient(points)
        err = float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))
        if err > tol:
            raise ParameterError(f"analytic gradient of {self.label} disagrees with finite differences ({err:.2e})")
        return err


def quadratic_potential(precision=1.0, dim: int | None = None) -> PotentialSpec:
    """``phi(x) = x^T P x / 2``; a scalar ``precision`` means ``P = precision * I``."""
    P = np.asarray(precision, dtype=float)
    if P.ndim == 0:
        if dim is None:
            dim = 1
        P = float(P) * np.eye(dim)
    P = as_matrix(P)
    P = 0.5 * (P + P.T)

    def phi(x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, P, x)

    def grad(x):
        return x @ P.T

    return PotentialSpec(phi, grad, dim=P.shape[0], label="quadratic")


def double_well_potential(a: float = 0.25, b: float = 0.5) -> PotentialSpec:
    """One-dimensional ``phi(x) = a x^4 - b x^2``."""

    def phi(x):
        return a * x[..., 0] ** 4 - b * x[..., 0] ** 2

    def grad(x):
        return (4 * a * x[..., 0] ** 3 - 2 * b * x[..., 0])[..., None]

    return PotentialSpec(phi, grad, dim=1, label="double_well")


def quartic_potential(c: float = 0.25, dim: int = 2) -> PotentialSpec:
    """Radial ``phi(x) = c |x|^4``."""

    def phi(x):
        return c * np.sum(x * x, axis=-1) ** 2

    def grad(x):
        return 4 * c * np.sum(x * x, axis=-1)[..., None] * x

    return PotentialSpec(phi, grad, dim=dim, label="quartic")


@dataclass(frozen=True)
class DiffusionModel:
    """Drift, diffusion matrix and noise scale of one member of a diffusion family.

    ``potential`` (when known) is the beta-independent ``phi`` with stationary
    density proportional to ``exp(-beta phi)``; ``circulation`` is the
    divergence-free ``j`` with ``b = j - D grad phi``.
    """

    dim: int
    drift: Field
    diffusion: Field
    beta: float = 1.0
    alpha: tuple = ()
    label: str = ""
    name: str = ""
    potential: Optional[PotentialSpec] = None
    circulation: Optional[Field] = None
    log_partition: Optional[Callable[[float], float]] = None
    hamiltonian: Optional[Field] = None
    constant_diffusion: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")

    def b(self, x) -> np.ndarray:
        return np.asarray(self.drift(np.asarray(x, dtype=float)), dtype=float)

    def D(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.diffusion(x), dtype=float)
        if out.shape != x.shape[:-1] + (self.dim, self.dim):
            out = np.broadcast_to(out, x.shape[:-1] + (self.dim, self.dim))
        return out

    def with_beta(self, beta: float) -> "DiffusionModel":
        return dataclasses.replace(self, beta=float(beta))

    def stationary_density(self, x) -> Optional[np.ndarray]:
        """Closed-form ``Z^-1 exp(-beta phi)``; unnormalised when ``log_partition`` is unknown."""
        if self.potential is None:
            return None
        logf = -self.beta * self.potential(x)
        if self.log_partition is not None:
            logf = logf - self.log_partition(self.beta)
        return np.exp(logf)

    def stationary_current(self, x) -> Optional[np.ndarray]:
        """Closed-form ``J^ss = j f^ss`` (same normalisation as :meth:`stationary_density`)."""
        if self.circulation is None or self.potential is None:
            return None
        return self.circulation(np.asarray(x, dtype=float)) * self.stationary_density(x)[..., None]

    def min_diffusion_eigenvalue(self, points) -> float:
        Dx = self.D(points)
        Dx = 0.5 * (Dx + np.swapaxes(Dx, -1, -2))
        return float(np.min(np.linalg.eigvalsh(Dx)))

    def check(self, bounds, n_points: int = 1000, seed: int = 0) -> dict:
        """Probe-point invariants: symmetric PSD diffusion, finite fields."""
        pts = probe_points(bounds, n_points, seed)
        Dx = self.D(pts)
        asym = float(np.max(np.abs(Dx - np.swapaxes(Dx, -1, -2))))
        return {
            "min_eigenvalue": self.min_diffusion_eigenvalue(pts),
            "asymmetry": asym,
            "finite": bool(np.all(np.isfinite(self.b(pts))) and np.all(np.isfinite(Dx))),
        }


def _require_spd(D: np.ndarray, what: str = "D") -> None:
    if np.max(np.abs(D - D.T)) > 1e-12 * (1 + np.max(np.abs(D))):
        raise ParameterError(f"{what} must be symmetric")
    if np.min(np.linalg.eigvalsh(D)) <= 0:
        raise ParameterError(f"{what} must be positive definite")


def _gaussian_log_partition(precision: np.ndarray) -> Callable[[float], float]:
    n = precision.shape[0]
    _, logdet = np.linalg.slogdet(precision)

    def logZ(beta):
        return 0.5 * n * math.log(2 * math.pi / beta) - 0.5 * logdet

    return logZ


def make_ou(B, D, beta: float = 1.0) -> DiffusionModel:
    """Ornstein-Uhlenbeck process ``b(x) = -B x`` with constant diffusion ``D``.

    The stationary law is Gaussian with covariance ``Xi / beta`` where
    ``B Xi + Xi B^T = 2 D``; ``phi = x^T Xi^-1 x / 2`` and the circulation
    ``j(x) = (D Xi^-1 - B) x`` are attached as references.
    """
    B = as_matrix(B)
    n = B.shape[0]
    D = as_matrix(D, n)
    if not is_hurwitz(B):
        raise StabilityError("OU drift matrix B must be Hurwitz")
    _require_spd(D)
    Xi = solve_lyapunov(B, D)
    P = np.linalg.inv(Xi)
    P = 0.5 * (P + P.T)
    C = D @ P - B

    def drift(x):
        return -x @ B.T

    def diffusion(x):
        return np.broadcast_to(D, np.shape(x)[:-1] + (n, n))

    def circulation(x):
        return x @ C.T

    return DiffusionModel(
        dim=n,
        drift=drift,
        diffusion=diffusion,
        beta=float(beta),
        label=f"OU n={n}",
        name="ou",
        potential=quadratic_potential(P),
        circulation=circulation,
        log_partition=_gaussian_log_partition(P),
        constant_diffusion=True,
        params={"B": B.tolist(), "D": D.tolist(), "beta": float(beta)},
    )


def _as_position_function(eta) -> Callable[[np.ndarray], np.ndarray]:
    if callable(eta):
        return eta
    value = float(eta)
    return lambda q: np.full(np.shape(q), value)


def make_klein_kramers(m: float, U: PotentialSpec, eta=1.0, kBT: float = 1.0) -> DiffusionModel:
    """Klein-Kramers dynamics in phase space ``(x, y)`` with momentum ``y``.

    ``b = (y/m, -U'(x) - eta(x) y/m)``, ``D = kBT [[0, 0], [0, eta(x)]]`` and
    beta fixed to 1 (temperature lives in ``D``).  The stationary density is
    ``exp(-H/kBT)`` with ``H = y^2/2m + U(x)`` and ``j`` is the Hamiltonian
    vector field.
    """
    m = float(m)
    kBT = float(kBT)
    if m <= 0 or kBT <= 0:
        raise ParameterError("m and kBT must be positive")
    eta_f = _as_position_function(eta)
    if np.any(eta_f(np.linspace(-10, 10, 201)) <= 0):
        raise ParameterError("friction eta(x) must be positive")

    def U_of(q):
        return U(q[..., None])

    def dU(q):
        return U.gradient(q[..., None])[..., 0]

    def H(z):
        return z[..., 1] ** 2 / (2 * m) + U_of(z[..., 0])

    def drift(z):
        q, p = z[..., 0], z[..., 1]
        return np.stack([p / m, -dU(q) - eta_f(q) * p / m], axis=-1)

    def diffusion(z):
        out = np.zeros(np.shape(z)[:-1] + (2, 2))
        out[..., 1, 1] = kBT * eta_f(z[..., 0])
        return out

    def phi(z):
        return H(z) / kBT

    def grad_phi(z):
        return np.stack([dU(z[..., 0]), z[..., 1] / m], axis=-1) / kBT

    def circulation(z):
        return np.stack([z[..., 1] / m, -dU(z[..., 0])], axis=-1)

    @functools.lru_cache(maxsize=None)
    def logZ(beta):
        zx, _ = scipy.integrate.quad(
            lambda q: math.exp(-beta * float(U(np.array([q]))) / kBT), -np.inf, np.inf
        )
        return math.log(zx) + 0.5 * math.log(2 * math.pi * m * kBT / beta)

    constant_eta = not callable(eta)
    return DiffusionModel(
        dim=2,
        drift=drift,
        diffusion=diffusion,
        beta=1.0,
        label="Klein-Kramers",
        name="klein_kramers",
        potential=PotentialSpec(phi, grad_phi, dim=2, label="H/kBT"),
        circulation=circulation,
        log_partition=logZ,
        hamiltonian=H,
        constant_diffusion=constant_eta,
        params={"m": m, "kBT": kBT, "eta": eta if constant_eta else "callable", "U": U.label},
    )


def _matrix_field(G, dim: int) -> tuple[Callable, bool]:
    if callable(G):
        return G, False
    Gm = as_matrix(G, dim)
    return (lambda x: np.broadcast_to(Gm, np.shape(x)[:-1] + (dim, dim))), True


def make_ao(G, phi: PotentialSpec, probe_bounds=None) -> DiffusionModel:
    """Ao's process ``b = -G(x) grad phi`` with ``D = (G + G^T)/2`` and beta = 1.

    The stationary density is ``exp(-phi)`` and the circulation is
    ``j = -(G - G^T)/2 grad phi``.
    """
    n = phi.dim
    G_f, constant = _matrix_field(G, n)
    bounds = probe_bounds or [(-3.0, 3.0)] * n
    pts = probe_points(bounds, 200, seed=1)
    Gp = np.asarray(G_f(pts))
    Sp = 0.5 * (Gp + np.swapaxes(Gp, -1, -2))
    if np.min(np.linalg.eigvalsh(Sp)) < -1e-12:
        raise ParameterError("symmetric part of G must be positive semi-definite")

    def drift(x):
        return -np.einsum("...ij,...j->...i", G_f(x), phi.gradient(x))

    def diffusion(x):
        Gx = np.asarray(G_f(x))
        return 0.5 * (Gx + np.swapaxes(Gx, -1, -2))

    def circulation(x):
        Gx = np.asarray(G_f(x))
        A = 0.5 * (Gx - np.swapaxes(Gx, -1, -2))
        return -np.einsum("...ij,...j->...i", A, phi.gradient(x))

    return DiffusionModel(
        dim=n,
        drift=drift,
        diffusion=diffusion,
        beta=1.0,
        label="Ao process",
        name="ao",
        potential=phi,
        circulation=circulation,
        constant_diffusion=constant,
        params={"G": as_matrix(G).tolist() if constant else "callable", "phi": phi.label},
    )


def make_gradient_model(phi: PotentialSpec, D=1.0, beta: float = 1.0) -> DiffusionModel:
    """Detailed-balanced model ``b = -D grad phi`` with constant SPD ``D``."""
    n = phi.dim
    D = np.asarray(D, dtype=float)
    D = D * np.eye(n) if D.ndim == 0 else as_matrix(D, n)
    _require_spd(D)

    def drift(x):
        return -phi.gradient(x) @ D.T

    def diffusion(x):
        return np.broadcast_to(D, np.shape(x)[:-1] + (n, n))

    def circulation(x):
        return np.zeros(np.shape(x))

    return DiffusionModel(
        dim=n,
        drift=drift,
        diffusion=diffusion,
        beta=float(beta),
        label=f"gradient ({phi.label})",
        name="gradient",
        potential=phi,
        circulation=circulation,
        constant_diffusion=True,
        params={"phi": phi.label, "D": D.tolist(), "beta": float(beta)},
    )


def make_driven_rotor(omega: float = 1.0, beta: float = 1.0) -> DiffusionModel:
    """Nonlinear driven 2-D system without a Maxwell-Boltzmann stationary state.

    ``b = -grad U + omega (-x2, x1)`` with the anisotropic quartic
    ``U = x1^2/2 + x2^2 + x1^4/4`` and ``D = I``.  The rotation is not tangent
    to the level sets of the stationary potential, so the stationary current
    crosses them.  No closed-form stationary density is known.
    """

    def gradU(x):
        return np.stack([x[..., 0] + x[..., 0] ** 3, 2 * x[..., 1]], axis=-1)

    def drift(x):
        rot = np.stack([-x[..., 1], x[..., 0]], axis=-1)
        return -gradU(x) + omega * rot

    def diffusion(x):
        return np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2))

    return DiffusionModel(
        dim=2,
        drift=drift,
        diffusion=diffusion,
        beta=float(beta),
        label="driven rotor",
        name="driven_rotor",
        constant_diffusion=True,
        params={"omega": omega, "beta": float(beta)},
    )


# ----------------------------------------------------------------------------
# catalog addressable by name (used by the CLI)


def build_potential(spec) -> PotentialSpec:
    """Potential from a config dict such as ``{"type": "double_well", "a": 0.25, "b": 0.5}``."""
    if isinstance(spec, PotentialSpec):
        return spec
    if isinstance(spec, str):
        spec = {"type": spec}
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind == "quadratic":
        return quadratic_potential(spec.get("precision", 1.0), spec.get("dim"))
    if kind == "double_well":
        return double_well_potential(spec.get("a", 0.25), spec.get("b", 0.5))
    if kind == "quartic":
        return quartic_potential(spec.get("c", 0.25), spec.get("dim", 2))
    raise ParameterError(f"unknown potential type {kind!r}")


def _build_ou(p):
    return make_ou(p["B"], p.get("D", np.eye(len(p["B"]))), p.get("beta", 1.0))


def _build_kk(p):
    return make_klein_kramers(
        p.get("m", 1.0),
        build_potential(p.get("U", {"type": "quadratic", "dim": 1})),
        p.get("eta", 1.0),
        p.get("kBT", 1.0),
    )


def _build_ao(p):
    phi = build_potential(p.get("phi", {"type": "quadratic", "dim": 2}))
    return make_ao(p["G"], phi)


def _build_gradient(p):
    phi = build_potential(p.get("phi", {"type": "double_well"}))
    return make_gradient_model(phi, p.get("D", 1.0), p.get("beta", 1.0))


def _build_rotor(p):
    return make_driven_rotor(p.get("omega", 1.0), p.get("beta", 1.0))


CATALOG = {
    "ou": {
        "build": _build_ou,
        "schema": {"B": "n x n Hurwitz matrix", "D": "n x n SPD matrix (default I)", "beta": "float > 0"},
        "reproduces": "Ornstein-Uhlenbeck process: Gaussian MB equilibrium, Lyapunov covariance",
    },
    "klein_kramers": {
        "build": _build_kk,
        "schema": {"m": "float > 0", "U": "potential spec (1-D)", "eta": "float > 0", "kBT": "float > 0"},
        "reproduces": "Klein-Kramers equation: Hamiltonian circulation, Maxwell-Boltzmann density",
    },
    "ao": {
        "build": _build_ao,
        "schema": {"G": "n x n matrix with PSD symmetric part", "phi": "potential spec"},
        "reproduces": "Ao's process b = -G grad phi, stationary density exp(-phi)",
    },
    "gradient": {
        "build": _build_gradient,
        "schema": {"phi": "potential spec", "D": "SPD matrix or scalar", "beta": "float > 0"},
        "reproduces": "detailed-balanced diffusion b = -D grad phi",
    },
    "driven_rotor": {
        "build": _build_rotor,
        "schema": {"omega": "float", "beta": "float > 0"},
        "reproduces": "driven nonequilibrium steady state with phi-crossing circulation",
    },
}


def build_model(name: str, params: dict | None = None) -> DiffusionModel:
    if name not in CATALOG:
        raise ParameterError(f"unknown model {name!r}; known: {sorted(CATALOG)}")
    try:
        return CATALOG[name]["build"](dict(params or {}))
    except KeyError as exc:
        raise ParameterError(f"model {name!r} is missing parameter {exc}") from exc
