"""Block-matrix form of the coupled fast system and the Lyapunov drift oracle.

The (m+2n)-dimensional state groups the slow variables with the integrals of
the noise pair, and the velocity-like vector groups (v, eta, z). The drag
matrix gamma, the Jacobian correction kappa, the constant noise matrix sigma
and the scaled drift F assemble from a model, a delay configuration and the
noise shape (gamma, omega_sq). The noise-induced drift can then be computed
independently of the closed-form coefficients: solve the Lyapunov equation for
the stationary second moments and contract with the derivative of the closed
form inverse of gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DelayConfig
from .models import Model


@dataclass(frozen=True)
class SystemMatrices:
    gamma: np.ndarray
    kappa: np.ndarray
    sigma: np.ndarray
    F: np.ndarray

    @property
    def dim(self):
        return self.gamma.shape[0]


def _check_dims(model, dc):
    if model.m != dc.m:
        raise ValueError(f"model dimension {model.m} != delay config dimension {dc.m}")
    if model.n != dc.n:
        raise ValueError(f"model has {model.n} noise channels, delay config {dc.n}")


def assemble(model: Model, dc: DelayConfig, gamma_omega, y):
    """Build (gamma, kappa, sigma, F) at state ``y``."""
    _check_dims(model, dc)
    big_gamma, omega_sq = gamma_omega
    m, n = model.m, model.n
    d = m + 2 * n
    D1 = np.diag(1.0 / dc.c)
    D2 = np.diag(1.0 / dc.k)

    g_hat = model.diffusion(y) / dc.c[:, None]

    gamma = np.zeros((d, d))
    gamma[:m, :m] = D1
    gamma[:m, m:m + n] = -g_hat
    gamma[m:m + n, m + n:] = -(big_gamma / omega_sq) * D2
    gamma[m + n:, m:m + n] = big_gamma * D2
    gamma[m + n:, m + n:] = (big_gamma ** 2 / omega_sq) * D2

    kappa = np.zeros((d, d))
    kappa[:m, :m] = model.drift_jacobian(y) * (dc.c[None, :] / dc.c[:, None])

    sigma = np.zeros((d, n))
    sigma[m + n:, :] = big_gamma * D2

    F = np.zeros(d)
    F[:m] = model.drift(y) / dc.c

    return SystemMatrices(gamma=gamma, kappa=kappa, sigma=sigma, F=F)


def gamma_eigenvalues(dc: DelayConfig, gamma_omega):
    """Closed-form spectrum of the drag matrix; independent of the state."""
    big_gamma, omega_sq = gamma_omega
    disc = np.sqrt(complex(1.0 - 4.0 * omega_sq / big_gamma ** 2))
    base = big_gamma ** 2 / (2.0 * dc.k * omega_sq)
    noise_eigs = np.concatenate([base * (1.0 + disc), base * (1.0 - disc)])
    return np.concatenate([(1.0 / dc.c).astype(complex), noise_eigs])


def gamma_inverse_closed(model: Model, dc: DelayConfig, gamma_omega, y):
    """Closed-form inverse of the drag matrix at state ``y``."""
    _check_dims(model, dc)
    big_gamma, omega_sq = gamma_omega
    m, n = model.m, model.n
    d = m + 2 * n
    D1_inv = np.diag(dc.c)
    D2_inv = np.diag(dc.k)

    g_tilde = model.diffusion(y) * dc.k[None, :]

    inv = np.zeros((d, d))
    inv[:m, :m] = D1_inv
    inv[:m, m:m + n] = g_tilde
    inv[:m, m + n:] = g_tilde / big_gamma
    inv[m:m + n, m:m + n] = D2_inv
    inv[m:m + n, m + n:] = D2_inv / big_gamma
    inv[m + n:, m:m + n] = -(omega_sq / big_gamma) * D2_inv
    return inv


def solve_lyapunov(A, C):
    """Solve A J + J A^T = C by Kronecker vectorisation.

    ``A`` must have its spectrum in the open right half-plane (checked
    numerically); dimensions here stay small, so the O(d^6) dense solve is
    fine and keeps this oracle free of library matrix-equation routines.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if C.shape != A.shape:
        raise ValueError("C must match the shape of A")
    d = A.shape[0]
    if np.min(np.linalg.eigvals(A).real) <= 0:
        raise np.linalg.LinAlgError(
            "spectrum of A must lie in the open right half-plane")
    eye = np.eye(d)
    K = np.kron(eye, A) + np.kron(A, eye)
    try:
        vec_j = np.linalg.solve(K, C.flatten(order="F"))
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            "singular Kronecker system: eigenvalue condition violated") from err
    J = vec_j.reshape(d, d, order="F")
    residual = np.linalg.norm(A @ J + J @ A.T - C)
    if residual > 1e-10 * max(1.0, np.linalg.norm(C)):
        raise np.linalg.LinAlgError(
            f"Lyapunov residual {residual:.3e} exceeds tolerance")
    return J


def drift_via_lyapunov(model: Model, dc: DelayConfig, gamma_omega, y, fd_step=1e-6):
    """Noise-induced drift through the matrix machinery (oracle path).

    Contracts the y-derivatives of the closed-form inverse of gamma (central
    finite differences; gamma depends on the state only through y) with the
    Lyapunov solution J of gamma J + J gamma^T = sigma sigma^T, and returns
    the first m components.
    """
    y = np.asarray(y, dtype=float)
    mats = assemble(model, dc, gamma_omega, y)
    J = solve_lyapunov(mats.gamma, mats.sigma @ mats.sigma.T)
    m = model.m
    S = np.zeros(mats.dim)
    for l in range(m):
        step = np.zeros_like(y)
        step[l] = fd_step
        d_inv = (gamma_inverse_closed(model, dc, gamma_omega, y + step)
                 - gamma_inverse_closed(model, dc, gamma_omega, y - step)) / (2 * fd_step)
        S += d_inv @ J[:, l]
    return S[:m]
