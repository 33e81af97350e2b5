"""Closed-form stationary theory of Ornstein-Uhlenbeck processes.

For ``b(x) = -B x`` with constant diffusion ``D`` the stationary law at noise
scale ``beta`` is Gaussian with covariance ``Xi_1 / beta`` where
``B Xi_1 + Xi_1 B^T = 2 D``.  Every such process has a Maxwell-Boltzmann
stationary state: the drift splits as ``-B x = -(A + D) Xi_1^-1 x`` with the
antisymmetric ``A = B Xi_1 - D``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegeneracyError
from .numerics import as_matrix, psd_sqrt, solve_lyapunov

__all__ = [
    "OuStationary",
    "ou_stationary",
    "ou_detailed_balance",
    "ou_mb_certificate",
    "ou_drift_reconstruction_error",
]


@dataclass(frozen=True)
class OuStationary:
    """Stationary quantities of an OU process.

    Attributes
    ----------
    Xi : ndarray
        Stationary covariance at the requested beta (``Xi_1 / beta``).
    Xi_unit : ndarray
        Covariance at beta = 1, the solution of ``B X + X B^T = 2 D``.
    precision : ndarray
        ``Xi^-1``.
    current_coeff : ndarray
        ``B - (D/beta) Xi^-1``; beta independent.
    circulation : ndarray
        ``C`` with ``j(x) = C x`` and ``J^ss(x) = C x f^ss(x)``, where
        ``J = b f - beta^-1 D grad f``.  Equal to ``-current_coeff``.
    A : ndarray
        ``B Xi_1 - D``, antisymmetric.
    M : ndarray or None
        ``(A + D)^-1``; None when ``A + D`` is singular.
    Gamma : ndarray or None
        Noise loading ``M (2D)^(1/2)`` of the M-form SDE.
    Gamma_Gram : ndarray or None
        ``M + M^T``, which equals ``Gamma Gamma^T``.
    """

    B: np.ndarray
    D: np.ndarray
    beta: float
    Xi: np.ndarray
    Xi_unit: np.ndarray
    precision: np.ndarray
    current_coeff: np.ndarray
    circulation: np.ndarray
    A: np.ndarray
    M: Optional[np.ndarray]
    Gamma: Optional[np.ndarray]
    Gamma_Gram: Optional[np.ndarray]

    @property
    def dim(self) -> int:
        return self.B.shape[0]

    @property
    def m_form_available(self) -> bool:
        return self.M is not None

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.dim
        _, logdet = np.linalg.slogdet(self.Xi)
        quad = np.einsum("...i,ij,...j->...", x, self.precision, x)
        return np.exp(-0.5 * quad - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi))

    def current(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x @ self.circulation.T) * self.density(x)[..., None]

    def potential(self, x) -> np.ndarray:
        """beta-independent ``phi = x^T Xi_1^-1 x / 2``."""
        P1 = np.linalg.inv(self.Xi_unit)
        return 0.5 * np.einsum("...i,ij,...j->...", x, P1, x)


def ou_stationary(B, D, beta: float = 1.0) -> OuStationary:
    """Stationary covariance, current and MB decomposition of an OU process.

    Raises
    ------
    StabilityError
        If ``B`` is not Hurwitz.
    """
    B = as_matrix(B)
    n = B.shape[0]
    D = as_matrix(D, n)
    beta = float(beta)
    Xi1 = solve_lyapunov(B, D)
    P1 = np.linalg.inv(Xi1)
    P1 = 0.5 * (P1 + P1.T)
    Xi = Xi1 / beta
    precision = beta * P1
    current_coeff = B - (D / beta) @ precision
    A = B @ Xi1 - D
    try:
        M = np.linalg.inv(A + D)
        if not np.all(np.isfinite(M)) or np.linalg.cond(A + D) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
    except np.linalg.LinAlgError:
        M = Gamma = Gram = None
    else:
        Gamma = M @ psd_sqrt(2.0 * D)
        Gram = M + M.T
    return OuStationary(
        B=B,
        D=D,
        beta=beta,
        Xi=Xi,
        Xi_unit=Xi1,
        precision=precision,
        current_coeff=current_coeff,
        circulation=-current_coeff,
        A=A,
        M=M,
        Gamma=Gamma,
        Gamma_Gram=Gram,
    )


def ou_detailed_balance(B, D) -> bool:
    """Zero stationary current, i.e. ``B D = D B^T`` up to relative 1e-10."""
    B = as_matrix(B)
    D = as_matrix(D, B.shape[0])
    BD = B @ D
    return bool(np.linalg.norm(BD - D @ B.T) <= 1e-10 * (1.0 + np.linalg.norm(BD)))


def ou_mb_certificate(st: OuStationary) -> dict:
    """Frobenius residuals certifying the Maxwell-Boltzmann structure.

    ``orth_residual`` is the symmetric part of ``Xi^-1 (Xi B^T - D) Xi^-1``
    (at beta = 1), whose quadratic form is ``-(J^ss . grad f^ss)/f^ss^2``;
    ``A_antisym_residual`` is ``||A + A^T||``; ``gram_residual`` is
    ``||2 M D M^T - (M + M^T)||`` (NaN when the M-form is unavailable).
    """
    P1 = np.linalg.inv(st.Xi_unit)
    Q = P1 @ (st.Xi_unit @ st.B.T - st.D) @ P1
    orth = np.linalg.norm(0.5 * (Q + Q.T))
    anti = np.linalg.norm(st.A + st.A.T)
    if st.M is None:
        gram = float("nan")
    else:
        gram = np.linalg.norm(2.0 * st.M @ st.D @ st.M.T - (st.M + st.M.T))
    return {
        "orth_residual": float(orth),
        "A_antisym_residual": float(anti),
        "gram_residual": float(gram),
    }


def ou_drift_reconstruction_error(st: OuStationary, x) -> float:
    """Max relative error of ``-B x = -(A + D) Xi_1^-1 x`` over the points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lhs = -x @ st.B.T
    rhs = -x @ (np.linalg.inv(st.Xi_unit).T @ (st.A + st.D).T)
    scale = np.linalg.norm(lhs, axis=-1) + 1e-300
    return float(np.max(np.linalg.norm(lhs - rhs, axis=-1) / scale))


def require_m_form(st: OuStationary) -> np.ndarray:
    if st.M is None:
        raise DegeneracyError("A + D is singular; the M-form SDE is unavailable")
    return st.M
