"""Vectorized ensemble engines.

The public per-path simulators are the reference implementations; these
engines run many trajectories at once as numpy arrays, which is what makes
the Monte Carlo studies (drift fields, convergence tables) affordable. Each
trajectory still owns its counter-based random stream, and chunk partials are
merged in index order, so results do not depend on how work is distributed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .analysis import DriftField, GridSpec, accumulate_increments
from .core import DelayConfig, SimulationError, StabilityError, trajectory_stream
from .expressions import Num
from .fast import stability_check
from .harmonic import HarmonicParams, noise_step_limit, stationary_covariance
from .limits import DriftCoefficients
from .models import Model
from .sdde import _noise_arrays, delay_steps

_BLOCK_STEPS = 2048
_CHUNK_TRAJ = 512


def _parts(x):
    return [x[:, i] for i in range(x.shape[1])]


def _is_zero(expr):
    return isinstance(expr, Num) and expr.value == 0.0


def _stationary_chols(noise_params):
    return [np.linalg.cholesky(stationary_covariance(p)) for p in noise_params]


def _init_noise(gens, chols):
    """Stationary (eta, z) per trajectory; consumes 2 normals per channel."""
    n = len(chols)
    eta = np.empty((len(gens), n))
    z = np.empty((len(gens), n))
    for t, gen in enumerate(gens):
        draws = gen.standard_normal((n, 2))
        for j, chol in enumerate(chols):
            eta[t, j], z[t, j] = chol @ draws[j]
    return eta, z


def _wiener_block(gens, n_steps, n_channels, sqrt_dt):
    """(n_steps, n_traj, n_channels) increments from per-trajectory streams."""
    block = np.stack([gen.standard_normal((n_steps, n_channels)) for gen in gens],
                     axis=1)
    block *= sqrt_dt
    return block


class _EmCoeffs:
    """Per-channel Euler coefficients of the harmonic pair."""

    def __init__(self, gam, w2, tau, dt):
        self.a_ez = gam / (w2 * tau) * dt
        self.a_zz = gam ** 2 / (w2 * tau) * dt
        self.a_ze = gam / tau * dt
        self.b_z = gam / tau

    def step(self, eta, z, dW):
        return (eta + self.a_ez * z,
                z - self.a_zz * z - self.a_ze * eta + self.b_z * dW)


class _LimitStepper:
    """One Euler-Maruyama step of the limiting SDE on a trajectory batch."""

    def __init__(self, model: Model, coeffs: DriftCoefficients, dt):
        self.model = model
        self.dt = dt
        self.C = coeffs.matrix
        m, n = model.m, model.n
        self.drift_terms = [[(j, p) for j in range(n) for p in range(m)
                             if not (_is_zero(model.dg[i][j][p])
                                     or _is_zero(model.g[p][j])
                                     or coeffs.matrix[j, p] == 0.0)]
                            for i in range(m)]
        self.noise_terms = [[j for j in range(n) if not _is_zero(model.g[i][j])]
                            for i in range(m)]

    def step(self, x, dW_k):
        model, n, dt = self.model, self.model.n, self.dt
        parts = _parts(x)
        f = model._f(*parts)
        g = model._g(*parts)
        dg = model._dg(*parts)
        x_next = np.empty_like(x)
        for i in range(model.m):
            total = np.broadcast_to(np.asarray(f[i], dtype=float), x.shape[:1]).copy()
            for j, p in self.drift_terms[i]:
                total += g[p * n + j] * dg[(i * n + j) * model.m + p] * self.C[j, p]
            total *= dt
            for j in self.noise_terms[i]:
                total += g[i * n + j] * dW_k[:, j]
            x_next[:, i] = x[:, i] + total
        return x_next


class _SddeStepper:
    """One forward-Euler step of the delayed system on a trajectory batch."""

    def __init__(self, model: Model, dc: DelayConfig, noise_params, dt):
        self.model = model
        self.dt = dt
        _, gam, w2, tau = _noise_arrays(noise_params, dc)
        self.em = _EmCoeffs(gam, w2, tau, dt)
        self.r = delay_steps(dc, dt)
        self.noise_terms = [[j for j in range(model.n) if not _is_zero(model.g[i][j])]
                            for i in range(model.m)]

    def step(self, x, delayed_parts, eta):
        model, n, dt = self.model, self.model.n, self.dt
        f = model._f(*_parts(x))
        g = model._g(*delayed_parts)
        x_next = np.empty_like(x)
        for i in range(model.m):
            forcing = np.broadcast_to(np.asarray(f[i], dtype=float), x.shape[:1]).copy()
            for j in self.noise_terms[i]:
                forcing += g[i * n + j] * eta[:, j]
            x_next[:, i] = x[:, i] + forcing * dt
        return x_next


class _FastStepper:
    """One Euler-Maruyama step of the stiff first-order system on a batch."""

    def __init__(self, model: Model, dc: DelayConfig, gamma_omega, dt):
        self.model = model
        self.dt = dt
        self.delta = dc.delta
        big_gamma, omega_sq = gamma_omega
        self.em = _EmCoeffs(big_gamma, omega_sq, dc.tau, dt)
        m = model.m
        self.jac_terms = [[kk for kk in range(m) if not _is_zero(model.df[i][kk])]
                          for i in range(m)]
        self.noise_terms = [[j for j in range(model.n) if not _is_zero(model.g[i][j])]
                            for i in range(m)]

    def step(self, y, v, eta):
        model, m, n, dt = self.model, self.model.m, self.model.n, self.dt
        parts = _parts(y)
        f = model._f(*parts)
        jac = model._df(*parts)
        g = model._g(*parts)
        y_next = y + v * dt
        v_next = np.empty_like(v)
        for i in range(m):
            accel = f[i] - v[:, i]
            for kk in self.jac_terms[i]:
                accel = accel + jac[i * m + kk] * (self.delta[kk] * v[:, kk])
            for j in self.noise_terms[i]:
                accel = accel + g[i * n + j] * eta[:, j]
            v_next[:, i] = v[:, i] + accel * (dt / self.delta[i])
        return y_next, v_next


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise SimulationError(f"non-finite state at step {step}", step=step)


def limit_paths(model: Model, coeffs: DriftCoefficients, x0, dt, n_steps, dW):
    """Batched limiting-SDE paths; dW is (n_steps, n_traj, n)."""
    n_traj = dW.shape[1]
    stepper = _LimitStepper(model, coeffs, dt)
    x = np.tile(np.asarray(x0, dtype=float), (n_traj, 1))
    out = np.empty((n_steps + 1, n_traj, model.m))
    out[0] = x
    for k in range(n_steps):
        x = stepper.step(x, dW[k])
        _check_finite(x, k + 1)
        out[k + 1] = x
    return out


def fast_vs_limit_distances(model: Model, c, k, epsilons, gamma_omega, rc,
                            n_paths, steps_per_epsilon=50):
    """Sup-distance samples between the stiff system and its limit, per epsilon.

    All runs share per-trajectory Wiener paths generated on the finest grid;
    coarser runs sum consecutive increments. The limiting SDE always runs at
    the finest step, with coefficients from the ratios c_p / k_j (these do
    not depend on epsilon).
    """
    big_gamma, omega_sq = gamma_omega
    c = np.asarray(c, dtype=float)
    k = np.asarray(k, dtype=float)
    dt_fine = min(epsilons) / steps_per_epsilon
    n_fine = int(round(rc.t_end / dt_fine))
    if abs(n_fine * dt_fine - rc.t_end) > 1e-9 * rc.t_end:
        raise ValueError("finest dt does not divide t_end")
    strides = []
    for eps in epsilons:
        stride = (eps / steps_per_epsilon) / dt_fine
        if abs(stride - round(stride)) > 1e-9:
            raise ValueError(
                f"dt for epsilon={eps} is not an integer multiple of the finest dt")
        strides.append(int(round(stride)))

    gens = [trajectory_stream(rc.seed, i) for i in range(n_paths)]
    dW_fine = _wiener_block(gens, n_fine, model.n, np.sqrt(dt_fine))

    coeffs = DriftCoefficients.general(big_gamma, omega_sq, delta=c, tau=k)
    reference = limit_paths(model, coeffs, rc.x0, dt_fine, n_fine, dW_fine)

    out = []
    for eps, stride in zip(epsilons, strides):
        dc = DelayConfig.from_scales(c, k, eps)
        dt = dt_fine * stride
        report = stability_check(dc, gamma_omega, dt)
        if not report.ok:
            raise StabilityError(f"epsilon={eps}: {report}")
        dW = dW_fine if stride == 1 else dW_fine.reshape(
            n_fine // stride, stride, n_paths, model.n).sum(axis=1)
        chols = _stationary_chols(
            [HarmonicParams(big_gamma, omega_sq, t) for t in dc.tau])
        eta, z = _init_noise(gens, chols)
        stepper = _FastStepper(model, dc, gamma_omega, dt)
        y = np.tile(rc.x0, (n_paths, 1))
        v = np.zeros((n_paths, model.m))
        sup = np.zeros(n_paths)
        for step_idx in range(n_fine // stride):
            y, v = stepper.step(y, v, eta)
            eta, z = stepper.em.step(eta, z, dW[step_idx])
            _check_finite(v, step_idx + 1)
            gap = np.linalg.norm(y - reference[(step_idx + 1) * stride], axis=1)
            np.maximum(sup, gap, out=sup)
        out.append(sup)
    return out


# --- drift-field ensembles ----------------------------------------------------

def _field_chunk(payload):
    """Accumulate (sums, counts) for one chunk of trajectories.

    Top-level and driven by a plain dict so worker processes can rebuild the
    model from its expression sources.
    """
    model = Model.from_strings(*payload["model_sources"])
    grid = GridSpec(*payload["grid"])
    dt = payload["dt"]
    n_steps = payload["n_steps"]
    first, last = payload["chunk"]
    gens = [trajectory_stream(payload["seed"], i) for i in range(first, last)]
    n_traj = last - first
    sums = np.zeros((grid.n_cells, model.m))
    counts = np.zeros(grid.n_cells, dtype=np.int64)
    x = np.tile(np.asarray(payload["x0"], dtype=float), (n_traj, 1))
    sqrt_dt = np.sqrt(dt)

    if payload["kind"] == "limit":
        coeffs = DriftCoefficients(mode=payload["coeff_mode"],
                                   matrix=payload["coeff_matrix"])
        stepper = _LimitStepper(model, coeffs, dt)
        done = 0
        while done < n_steps:
            todo = min(_BLOCK_STEPS, n_steps - done)
            dW = _wiener_block(gens, todo, model.n, sqrt_dt)
            for kk in range(todo):
                x_next = stepper.step(x, dW[kk])
                _check_finite(x_next, done + kk + 1)
                accumulate_increments(grid, x, (x_next - x) / dt, sums, counts)
                x = x_next
            done += todo
        return sums, counts

    dc = DelayConfig(*payload["delay_config"])
    noise_params = [HarmonicParams(*t) for t in payload["noise"]]
    stepper = _SddeStepper(model, dc, noise_params, dt)
    buf_len = int(stepper.r.max()) + 1
    buf = np.tile(np.asarray(payload["x0"], dtype=float), (buf_len, n_traj, 1))
    eta, z = _init_noise(gens, _stationary_chols(noise_params))
    done = 0
    while done < n_steps:
        todo = min(_BLOCK_STEPS, n_steps - done)
        dW = _wiener_block(gens, todo, model.n, sqrt_dt)
        for kk in range(todo):
            k_abs = done + kk
            x = buf[k_abs % buf_len]
            delayed = [buf[(k_abs - stepper.r[i]) % buf_len, :, i]
                       for i in range(model.m)]
            x_next = stepper.step(x, delayed, eta)
            _check_finite(x_next, k_abs + 1)
            accumulate_increments(grid, x, (x_next - x) / dt, sums, counts)
            eta, z = stepper.em.step(eta, z, dW[kk])
            buf[(k_abs + 1) % buf_len] = x_next
        done += todo
    return sums, counts


def _run_chunks(payload, n_traj, workers):
    starts = range(0, n_traj, _CHUNK_TRAJ)
    payloads = [dict(payload, chunk=(s, min(s + _CHUNK_TRAJ, n_traj)))
                for s in starts]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_field_chunk, payloads))
    else:
        partials = [_field_chunk(p) for p in payloads]
    sums = np.zeros_like(partials[0][0])
    counts = np.zeros_like(partials[0][1])
    for part_sums, part_counts in partials:  # fixed chunk order
        sums += part_sums
        counts += part_counts
    return sums, counts


def limit_field_ensemble(model: Model, coeffs: DriftCoefficients, grid: GridSpec,
                         n_traj, t_end, dt, x0, seed, min_samples=20, workers=1):
    """Drift field estimated from a batched limiting-SDE ensemble."""
    n_steps = int(round(t_end / dt))
    payload = {
        "kind": "limit",
        "model_sources": model.sources(),
        "coeff_mode": coeffs.mode,
        "coeff_matrix": coeffs.matrix,
        "grid": (grid.mins, grid.maxs, grid.bins),
        "dt": dt, "n_steps": n_steps, "x0": np.asarray(x0, dtype=float),
        "seed": seed,
    }
    sums, counts = _run_chunks(payload, n_traj, workers)
    return DriftField.from_sums(grid, sums, counts, min_samples)


def sdde_field_ensemble(model: Model, dc: DelayConfig, noise, grid: GridSpec,
                        n_traj, t_end, dt, x0, seed, min_samples=20, workers=1):
    """Drift field estimated from a batched delayed-system ensemble."""
    limit = noise_step_limit(noise)
    if dt > limit * (1 + 1e-9):
        raise StabilityError(
            f"dt = {dt} exceeds the noise stability limit {limit:.6g}")
    n_steps = int(round(t_end / dt))
    payload = {
        "kind": "sdde",
        "model_sources": model.sources(),
        "delay_config": (dc.delta, dc.c, dc.k, dc.epsilon),
        "noise": [(p.gamma, p.omega_sq, p.tau) for p in noise],
        "grid": (grid.mins, grid.maxs, grid.bins),
        "dt": dt, "n_steps": n_steps, "x0": np.asarray(x0, dtype=float),
        "seed": seed,
    }
    sums, counts = _run_chunks(payload, n_traj, workers)
    return DriftField.from_sums(grid, sums, counts, min_samples)
