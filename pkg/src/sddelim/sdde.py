"""Forward-Euler integration of the delayed system with colored noise forcing.

Each state component i reads the diffusion argument at its own lag delta_i;
the forcing is smooth in time (the noise has differentiable realizations), so
an explicit Euler step with the noise held over the step is the natural
scheme. Delays must be integer multiples of dt: history is kept on the step
grid and never interpolated, which keeps runs exactly reproducible.

The history segment before t = 0 is not part of the model definition here; it
is taken constant and equal to x0, the simplest testable convention.
"""

from __future__ import annotations

import numpy as np

from .core import (DelayConfig, RunConfig, SimulationError, StabilityError,
                   Trajectory, time_grid)
from .harmonic import noise_step_limit, sample_stationary
from .models import Model


def _noise_arrays(noise, dc: DelayConfig):
    params = list(noise)
    if len(params) != dc.n:
        raise ValueError(f"expected {dc.n} noise channels, got {len(params)}")
    tau = dc.tau
    for j, p in enumerate(params):
        if abs(p.tau - tau[j]) > 1e-12 * tau[j]:
            raise ValueError(
                f"channel {j + 1}: HarmonicParams.tau = {p.tau} does not equal "
                f"k[{j + 1}] * epsilon = {tau[j]}")
    gam = np.array([p.gamma for p in params])
    w2 = np.array([p.omega_sq for p in params])
    return params, gam, w2, tau


def delay_steps(dc: DelayConfig, dt):
    """Delays as integer step counts; error if not multiples of dt."""
    ratio = dc.delta / dt
    steps = np.rint(ratio).astype(int)
    bad = np.abs(ratio - steps) > 1e-9 * np.maximum(1.0, ratio)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"delta[{i + 1}] = {dc.delta[i]} is not an integer multiple of "
            f"dt = {dt} (relative mismatch above 1e-9)")
    if np.any(steps < 1):
        raise ValueError("every delay must be at least one time step")
    return steps


def simulate_sdde(model: Model, dc: DelayConfig, noise, rc: RunConfig, rng):
    """Integrate the delayed system; returns the state trajectory.

    ``noise`` is one HarmonicParams per channel (correlation times must agree
    with the delay configuration). The initial noise state is drawn from the
    stationary law; the Wiener increments are drawn from ``rng`` step by step.
    """
    if model.m != dc.m:
        raise ValueError("model and delay config dimensions differ")
    params, gam, w2, tau = _noise_arrays(noise, dc)
    dt = rc.dt
    limit = noise_step_limit(params)
    if dt > limit * (1 + 1e-9):
        raise StabilityError(
            f"dt = {dt} exceeds the noise stability limit {limit:.6g} "
            "(0.1 * min over channels of tau * omega_sq / gamma^2 and tau)")
    r = delay_steps(dc, dt)
    n_steps = rc.n_steps
    m, n = model.m, model.n

    init = [sample_stationary(p, rng) for p in params]
    eta = np.array([s.eta for s in init])
    z = np.array([s.z for s in init])

    # history rows 0..max_r hold the constant pre-history; row max_r is x(0)
    max_r = int(r.max())
    hist = np.empty((max_r + n_steps + 1, m))
    hist[:max_r + 1] = rc.x0
    cols = np.arange(m)
    sqrt_dt = np.sqrt(dt)

    a_ez = gam / (w2 * tau) * dt
    a_zz = gam ** 2 / (w2 * tau) * dt
    a_ze = gam / tau * dt
    b_z = gam / tau

    for k in range(n_steps):
        row = max_r + k
        x = hist[row]
        delayed = hist[row - r, cols]
        x_next = x + model.drift(x) * dt + (model.diffusion(delayed) @ eta) * dt
        if not np.all(np.isfinite(x_next)):
            raise SimulationError(
                f"non-finite state at step {k + 1} (t = {(k + 1) * dt:g})",
                step=k + 1)
        dW = rng.standard_normal(n) * sqrt_dt
        eta, z = eta + a_ez * z, z - a_zz * z - a_ze * eta + b_z * dW
        hist[row + 1] = x_next

    return Trajectory(t=time_grid(n_steps, dt), x=hist[max_r:])
