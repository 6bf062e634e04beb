"""The stiff first-order system whose slow component approaches the limiting SDE.

Expanding the delayed system to first order in the delays turns it into a
(2m + 2n)-dimensional SDE for (y, v, eta, z) with O(1/epsilon) coefficients.
Integrating it on the same Wiener increments as the limiting SDE realizes the
pathwise coupling under which the slow component converges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DelayConfig, RunConfig, SimulationError, StabilityError,
                   Trajectory, WienerPath, time_grid)
from .harmonic import HarmonicParams, sample_stationary
from .models import Model


@dataclass(frozen=True)
class FastState:
    y: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class StabilityReport:
    ok: bool
    rho: float
    dt_max: float
    binding: str

    def __str__(self):
        status = "ok" if self.ok else "unstable"
        return (f"{status}: max eigenvalue rate {self.rho:.6g}/epsilon, "
                f"dt must stay below {self.dt_max:.6g} (binding: {self.binding})")


def stability_check(dc: DelayConfig, gamma_omega, dt):
    """Explicit-Euler step guard dt * rho / epsilon <= 0.1.

    ``rho`` is the largest real part among the drag-matrix eigenvalues 1/c_i
    and (gamma^2 / (2 k_j omega_sq)) (1 +/- sqrt(1 - 4 omega_sq / gamma^2)),
    which do not depend on the state.
    """
    big_gamma, omega_sq = gamma_omega
    rho = 0.0
    binding = ""
    for i, ci in enumerate(dc.c):
        if 1.0 / ci > rho:
            rho = 1.0 / ci
            binding = f"state component {i + 1} (1/c = {1.0 / ci:.6g})"
    disc = 1.0 - 4.0 * omega_sq / big_gamma ** 2
    for j, kj in enumerate(dc.k):
        base = big_gamma ** 2 / (2.0 * kj * omega_sq)
        real_part = base * (1.0 + np.sqrt(disc)) if disc > 0 else base
        if real_part > rho:
            rho = real_part
            binding = f"noise channel {j + 1} (rate {real_part:.6g})"
    dt_max = 0.1 * dc.epsilon / rho
    ok = dt <= dt_max * (1 + 1e-9)
    return StabilityReport(ok=ok, rho=rho, dt_max=dt_max, binding=binding)


def default_fast_dt(dc: DelayConfig, steps_per_epsilon=50):
    return dc.epsilon / steps_per_epsilon


def simulate_fast(model: Model, dc: DelayConfig, gamma_omega, rc: RunConfig,
                  w: WienerPath, init: FastState | None = None, rng=None):
    """Euler-Maruyama on (y, v, eta, z); returns the trajectory of y.

    Unless ``init`` is supplied, v starts at zero and (eta, z) at a stationary
    sample drawn from ``rng`` (default: a generator seeded with rc.seed).
    """
    if model.m != dc.m or model.n != dc.n:
        raise ValueError("model and delay config dimensions differ")
    report = stability_check(dc, gamma_omega, w.dt)
    if not report.ok:
        raise StabilityError(str(report))
    if w.n_channels != model.n:
        raise ValueError("Wiener path channel count does not match the model")
    big_gamma, omega_sq = gamma_omega
    dt = w.dt
    n_steps = int(round(rc.t_end / dt))
    if abs(n_steps * dt - rc.t_end) > 1e-9 * rc.t_end:
        raise ValueError("Wiener path dt does not divide t_end")
    if w.n_steps < n_steps:
        raise ValueError("Wiener path is shorter than the run")

    tau = dc.tau
    if init is None:
        if rng is None:
            rng = np.random.default_rng(rc.seed)
        samples = [sample_stationary(
            HarmonicParams(big_gamma, omega_sq, t), rng) for t in tau]
        init = FastState(y=rc.x0.copy(), v=np.zeros(model.m),
                         eta=np.array([s.eta for s in samples]),
                         z=np.array([s.z for s in samples]))

    y = np.asarray(init.y, dtype=float).copy()
    v = np.asarray(init.v, dtype=float).copy()
    eta = np.asarray(init.eta, dtype=float).copy()
    z = np.asarray(init.z, dtype=float).copy()

    delta = dc.delta
    inv_delta = 1.0 / delta
    a_ez = big_gamma / (omega_sq * tau) * dt
    a_zz = big_gamma ** 2 / (omega_sq * tau) * dt
    a_ze = big_gamma / tau * dt
    b_z = big_gamma / tau

    out = np.empty((n_steps + 1, model.m))
    out[0] = y
    dW = w.dW
    for k in range(n_steps):
        accel = (-v + model.drift(y) + model.drift_jacobian(y) @ (delta * v)
                 + model.diffusion(y) @ eta)
        y = y + v * dt
        v = v + inv_delta * accel * dt
        eta, z = eta + a_ez * z, z - a_zz * z - a_ze * eta + b_z * dW[k]
        if not np.all(np.isfinite(v)):
            raise SimulationError(
                f"non-finite state at step {k + 1} (t = {(k + 1) * dt:g})",
                step=k + 1)
        out[k + 1] = y
    return Trajectory(t=time_grid(n_steps, dt), x=out)
