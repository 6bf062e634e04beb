"""Ornstein-Uhlenbeck comparison: the short-correlation shape limit of the noise.

As gamma and omega_sq grow with fixed ratio, the harmonic channel (scaled by
tau * omega_sq / gamma) converges pathwise to the scaled Ornstein-Uhlenbeck
process driven by the same Wiener process. This module simulates the OU
process exactly and quantifies the convergence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RunConfig, Trajectory, WienerPath, time_grid, trajectory_stream
from .harmonic import HarmonicParams, sample_stationary, theoretical_autocovariance


@dataclass(frozen=True)
class OUParams:
    """Correlation time and dW coefficient of d chi = -chi/tau dt + amp dW."""

    tau: float
    amplitude: float | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", 1.0 / self.tau)

    def stationary_variance(self):
        return self.amplitude ** 2 * self.tau / 2.0

    def autocovariance(self, lag):
        return self.stationary_variance() * np.exp(-abs(lag) / self.tau)


def ou_transition(params: OUParams, dt):
    """Exact one-step decay factor and noise gain (per unit normal)."""
    decay = np.exp(-dt / params.tau)
    gain = params.amplitude * np.sqrt(params.tau / 2.0 * (1.0 - decay ** 2))
    return decay, gain


def simulate_ou(params: OUParams, rc: RunConfig, w: WienerPath):
    """Exact Gaussian transition steps driven by the increments in ``w``.

    Each step uses dW_k / sqrt(dt) as its unit normal, so the path couples
    to any other process driven by the same Wiener increments while the
    one-step marginal law stays exact.
    """
    if abs(w.dt - rc.dt) > 1e-12 * rc.dt:
        raise ValueError("Wiener path dt does not match the run config dt")
    n_steps = rc.n_steps
    if w.n_steps < n_steps:
        raise ValueError("Wiener path is shorter than the run")
    decay, gain = ou_transition(params, rc.dt)
    normals = w.dW[:, 0] / np.sqrt(rc.dt)
    out = np.empty(n_steps + 1)
    out[0] = float(rc.x0[0])
    chi = out[0]
    for k in range(n_steps):
        chi = decay * chi + gain * normals[k]
        out[k + 1] = chi
    return Trajectory(t=time_grid(n_steps, rc.dt), x=out)


@dataclass(frozen=True)
class OUCheckRow:
    gamma: float
    ms_sup_dist: float          # rescaled variables (what the limit statement uses)
    cov_gaps: tuple             # analytic autocovariance gaps at the requested lags
    ms_sup_dist_unscaled: float


def ou_convergence_check(tau, gamma_over_omega_sq, gammas, lags=None,
                         n_paths=100, t_end=5.0, seed=0):
    """Convergence table of harmonic noise towards the OU process.

    For each gamma (with omega_sq = gamma / gamma_over_omega_sq) the harmonic
    pair is Euler-stepped and the OU process exactly stepped on the same
    Wiener increments; the mean-square sup-distance is taken in the rescaled
    variables eta~ = tau * (omega_sq / gamma) * eta and chi~ scaled alike.
    The autocovariance gaps compare the analytic formulas of the two
    stationary processes (also in rescaled variables), so they carry no
    Monte Carlo error; the unscaled sup-distance is reported for intuition.
    """
    gammas = list(gammas)
    if sorted(gammas) != gammas:
        raise ValueError("gamma list must be increasing")
    if lags is None:
        lags = (0.0, tau)
    c = gamma_over_omega_sq
    scale = tau / c  # tau * omega_sq / gamma along the limit family
    ou = OUParams(tau=tau)
    rows = []
    for big_gamma in gammas:
        omega_sq = big_gamma / c
        params = HarmonicParams(big_gamma, omega_sq, tau)
        dt = _stable_dt(params, t_end)
        n_steps = int(round(t_end / dt))
        decay, gain = ou_transition(ou, dt)
        sqrt_dt = np.sqrt(dt)

        a_ez = params.gamma / (params.omega_sq * params.tau) * dt
        a_zz = params.gamma ** 2 / (params.omega_sq * params.tau) * dt
        a_ze = params.gamma / params.tau * dt
        b_z = params.gamma / params.tau

        sup = np.zeros(n_paths)
        rngs = [trajectory_stream(seed, i) for i in range(n_paths)]
        state = sample_stationary(params, np.random.default_rng(seed), size=n_paths)
        eta, z = state.eta.copy(), state.z.copy()
        chi = eta.copy()  # shared stationary start: Var(eta) = Var(chi) = 1/(2 tau)
        block = 4096
        done = 0
        while done < n_steps:
            todo = min(block, n_steps - done)
            dW = np.stack([rng.standard_normal(todo) for rng in rngs], axis=1)
            dW *= sqrt_dt
            for k in range(todo):
                eta, z = eta + a_ez * z, z - a_zz * z - a_ze * eta + b_z * dW[k]
                chi = decay * chi + gain * (dW[k] / sqrt_dt)
                np.maximum(sup, np.abs(eta - chi), out=sup)
            done += todo
        ms = float(np.mean((scale * sup) ** 2))
        gaps = tuple(
            scale ** 2 * abs(theoretical_autocovariance(params, lag)
                             - ou.autocovariance(lag))
            for lag in lags)
        rows.append(OUCheckRow(gamma=float(big_gamma), ms_sup_dist=ms,
                               cov_gaps=gaps,
                               ms_sup_dist_unscaled=float(np.mean(sup ** 2))))
    return rows


def _stable_dt(params: HarmonicParams, t_end):
    limit = min(0.1 * params.tau * params.omega_sq / params.gamma ** 2,
                0.1 * params.tau)
    return t_end / int(np.ceil(t_end / limit))
