"""Noise-induced drift coefficients and the limiting Ito SDE.

In the small-delay / short-correlation limit the delayed multiplicative-noise
system behaves like an Ito SDE with an extra drift

    S_i(x) = sum_{p,j} g_pj(x) * d g_ij(x) / d x_p * C_jp

where C_jp depends on the noise shape (gamma, omega_sq) and on the ratio
delta_p / tau_j between the component delay and the channel correlation time.
The coefficients interpolate between the Stratonovich convention (1/2, ratio
-> 0) and the Ito convention (0, ratio -> infinity); in the
Ornstein-Uhlenbeck noise limit they simplify to 1/2 * (1 + ratio)^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RunConfig, SimulationError, Trajectory, WienerPath, time_grid
from .models import Model


def coeff_general(gamma, omega_sq, ratio):
    """Drift coefficient for harmonic noise at delay/correlation ``ratio``."""
    if gamma <= 0 or omega_sq <= 0:
        raise ValueError("gamma and omega_sq must be positive")
    if ratio < 0:
        raise ValueError("ratio must be nonnegative")
    shape = gamma / omega_sq
    numerator = shape * ratio + (1.0 - ratio) / gamma
    denominator = 2.0 * (shape * ratio * (1.0 + ratio) + 1.0 / gamma)
    return numerator / denominator


def coeff_ou(ratio):
    """Drift coefficient in the Ornstein-Uhlenbeck noise limit."""
    if ratio < 0:
        raise ValueError("ratio must be nonnegative")
    return 0.5 / (1.0 + ratio)


@dataclass(frozen=True)
class DriftCoefficients:
    """Coefficient matrix C[j, p] multiplying g_pj * d g_ij / d x_p."""

    mode: str
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        if self.matrix.ndim != 2:
            raise ValueError("coefficient matrix must be 2-d (n x m)")

    @classmethod
    def general(cls, gamma, omega_sq, delta, tau):
        delta = np.asarray(delta, dtype=float)
        tau = np.asarray(tau, dtype=float)
        matrix = np.array([[coeff_general(gamma, omega_sq, dp / tj)
                            for dp in delta] for tj in tau])
        return cls(mode=f"general(gamma={gamma}, omega_sq={omega_sq})", matrix=matrix)

    @classmethod
    def ou_limit(cls, delta, tau):
        delta = np.asarray(delta, dtype=float)
        tau = np.asarray(tau, dtype=float)
        matrix = np.array([[coeff_ou(dp / tj) for dp in delta] for tj in tau])
        return cls(mode="ou_limit", matrix=matrix)

    @classmethod
    def stratonovich(cls, n, m):
        return cls(mode="stratonovich", matrix=np.full((n, m), 0.5))

    @classmethod
    def ito(cls, n, m):
        return cls(mode="ito", matrix=np.zeros((n, m)))


def noise_induced_drift(model: Model, coeffs: DriftCoefficients, x):
    """Extra drift vector at state ``x``."""
    if coeffs.matrix.shape != (model.n, model.m):
        raise ValueError(
            f"coefficient matrix shape {coeffs.matrix.shape} does not match "
            f"(n, m) = ({model.n}, {model.m})")
    g = model.diffusion(x)
    dg = model.diffusion_jacobian(x)
    return np.einsum("pj,ijp,jp->i", g, dg, coeffs.matrix)


def simulate_limit(model: Model, coeffs: DriftCoefficients, rc: RunConfig,
                   w: WienerPath):
    """Euler-Maruyama integration of the limiting Ito SDE on ``w``."""
    if abs(w.dt - rc.dt) > 1e-12 * rc.dt:
        raise ValueError("Wiener path dt does not match the run config dt")
    if w.n_channels != model.n:
        raise ValueError("Wiener path channel count does not match the model")
    n_steps = rc.n_steps
    if w.n_steps < n_steps:
        raise ValueError("Wiener path is shorter than the run")
    dt = rc.dt
    out = np.empty((n_steps + 1, model.m))
    out[0] = rc.x0
    x = rc.x0.copy()
    dW = w.dW
    for k in range(n_steps):
        total = model.drift(x) + noise_induced_drift(model, coeffs, x)
        x = x + total * dt + model.diffusion(x) @ dW[k]
        if not np.all(np.isfinite(x)):
            raise SimulationError(
                f"non-finite state at step {k + 1} (t = {(k + 1) * dt:g})",
                step=k + 1)
        out[k + 1] = x
    return Trajectory(t=time_grid(n_steps, dt), x=out)
