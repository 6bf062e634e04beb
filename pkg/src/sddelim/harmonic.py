"""Harmonic (second-order colored) noise: simulation and stationary statistics.

One channel is the pair (eta, z) driven by a Wiener process:

    d eta = (Gamma / (omega_sq * tau)) z dt
    d z   = -(Gamma^2 / (omega_sq * tau)) z dt - (Gamma / tau) eta dt
            + (Gamma / tau) dW

The stationary law is mean-zero Gaussian with Var(eta) = 1/(2 tau),
Var(z) = omega_sq/(2 tau) and zero cross-covariance; eta has a known
oscillatory-exponential autocovariance and tends to an Ornstein-Uhlenbeck
process as Gamma, omega_sq grow with fixed ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .core import SimulationError
from .matrixforms import solve_lyapunov


@dataclass(frozen=True)
class HarmonicParams:
    """Shape parameters gamma, omega_sq and correlation time tau of one channel."""

    gamma: float
    omega_sq: float
    tau: float

    def __post_init__(self):
        if self.gamma <= 0 or self.omega_sq <= 0 or self.tau <= 0:
            raise ValueError("gamma, omega_sq and tau must all be positive")

    def drift_matrix(self):
        """Generator M of the linear pair (eta, z)."""
        g, w2, tau = self.gamma, self.omega_sq, self.tau
        return np.array([[0.0, g / (w2 * tau)],
                         [-g / tau, -g ** 2 / (w2 * tau)]])

    def noise_vector(self):
        """Coefficient of dW in (eta, z)."""
        return np.array([0.0, self.gamma / self.tau])


@dataclass(frozen=True)
class NoiseState:
    """One (eta, z) pair; fields may be scalars or aligned arrays."""

    eta: float
    z: float


def stationary_covariance(params: HarmonicParams):
    """Covariance of the stationary (eta, z) law as a 2x2 matrix.

    Solved from the stationary Lyapunov equation of the linear system and
    cross-checked against the closed forms diag(1/(2 tau), omega_sq/(2 tau)).
    """
    M = params.drift_matrix()
    b = params.noise_vector()
    cov = solve_lyapunov(-M, np.outer(b, b))
    cov = 0.5 * (cov + cov.T)
    closed = np.diag([1.0 / (2.0 * params.tau),
                      params.omega_sq / (2.0 * params.tau)])
    if not np.allclose(cov, closed, rtol=1e-9, atol=1e-9 * closed.max()):
        raise ArithmeticError(
            "stationary covariance disagrees with the closed forms")
    return cov


def theoretical_autocovariance(params: HarmonicParams, lag):
    """E[eta_t eta_{t+lag}] of the stationary channel, lag >= 0.

    The printed formula covers the oscillatory regime gamma^2 < 4 omega_sq;
    the overdamped regime is its analytic continuation (cos -> cosh,
    sin -> sinh) and the critically damped point is the limit of either
    branch. The overdamped branch combines the exponentials explicitly so
    large lags cannot overflow.
    """
    g, w2, tau = params.gamma, params.omega_sq, params.tau
    s = float(lag)
    if s < 0:
        raise ValueError("lag must be nonnegative")
    var = 1.0 / (2.0 * tau)
    decay = g ** 2 / (2.0 * w2 * tau)  # exponential rate
    disc = 1.0 - g ** 2 / (4.0 * w2)
    if abs(disc) < 1e-12:
        return var * np.exp(-decay * s) * (1.0 + decay * s)
    if disc > 0:
        omega1 = (g / (np.sqrt(w2) * tau)) * np.sqrt(disc)
        return var * np.exp(-decay * s) * (
            np.cos(omega1 * s) + (decay / omega1) * np.sin(omega1 * s))
    mu = (g / (np.sqrt(w2) * tau)) * np.sqrt(-disc)
    # decay > mu, so both exponents are nonpositive
    slow = np.exp((mu - decay) * s)
    fast = np.exp(-(mu + decay) * s)
    return var * (0.5 * (slow + fast) + (decay / mu) * 0.5 * (slow - fast))


def sample_stationary(params: HarmonicParams, rng, size=None):
    """Draw (eta, z) from the stationary law; ``size`` draws batches."""
    cov = stationary_covariance(params)
    chol = np.linalg.cholesky(cov)
    shape = (2,) if size is None else (2, size)
    eta, z = chol @ rng.standard_normal(shape)
    return NoiseState(eta=eta, z=z)


def em_step(state: NoiseState, params: HarmonicParams, dt, dW):
    """One Euler-Maruyama step of the channel."""
    g, w2, tau = params.gamma, params.omega_sq, params.tau
    eta = state.eta + (g / (w2 * tau)) * state.z * dt
    z = (state.z - (g ** 2 / (w2 * tau)) * state.z * dt
         - (g / tau) * state.eta * dt + (g / tau) * dW)
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(z))):
        raise SimulationError(
            "harmonic noise step produced a non-finite value; "
            "the time step is too large for these parameters")
    return NoiseState(eta=eta, z=z)


@lru_cache(maxsize=None)
def _exact_transition(gamma, omega_sq, tau, dt):
    """Exact one-step map: (e^{M dt}, square root of the increment covariance).

    Van Loan's augmented-matrix construction; the matrix exponential uses
    scaling-and-squaring, so the degenerate eigenvalue case gamma^2 = 4
    omega_sq needs no special handling.
    """
    params = HarmonicParams(gamma, omega_sq, tau)
    M = params.drift_matrix()
    b = params.noise_vector()
    block = np.zeros((4, 4))
    block[:2, :2] = -M
    block[:2, 2:] = np.outer(b, b)
    block[2:, 2:] = M.T
    phi = scipy.linalg.expm(block * dt)
    propagator = phi[2:, 2:].T
    cov = propagator @ phi[:2, 2:]
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return propagator, root


def exact_step(state: NoiseState, params: HarmonicParams, dt, rng):
    """One step of the exact Gaussian transition (any dt)."""
    propagator, root = _exact_transition(params.gamma, params.omega_sq,
                                         params.tau, float(dt))
    vec = np.stack([np.asarray(state.eta, dtype=float),
                    np.asarray(state.z, dtype=float)])
    noise = root @ rng.standard_normal(vec.shape)
    eta, z = propagator @ vec + noise
    if vec.ndim == 1:
        eta, z = float(eta), float(z)
    return NoiseState(eta=eta, z=z)


def noise_step_limit(params_list):
    """Largest stable forward-Euler step for a set of channels.

    The usual guard 0.1 / max-eigenvalue-rate, evaluated from the channel
    timescales: dt <= 0.1 * min_j min(tau_j * omega_sq / gamma^2, tau_j).
    """
    limit = np.inf
    for p in params_list:
        limit = min(limit, 0.1 * p.tau * p.omega_sq / p.gamma ** 2, 0.1 * p.tau)
    return limit
