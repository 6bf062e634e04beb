"""Drift-field estimation from ensembles, zero-drift location, convergence study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridMismatchError, Trajectory


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice over a state-space box (per-axis min, max, bins)."""

    mins: np.ndarray
    maxs: np.ndarray
    bins: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=float))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=float))
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=int))
        if not (self.mins.shape == self.maxs.shape == self.bins.shape):
            raise ValueError("mins, maxs and bins must have equal lengths")
        if np.any(self.maxs <= self.mins) or np.any(self.bins < 1):
            raise ValueError("need maxs > mins and bins >= 1 on every axis")

    @property
    def m(self):
        return self.mins.size

    @property
    def widths(self):
        return (self.maxs - self.mins) / self.bins

    @property
    def n_cells(self):
        return int(np.prod(self.bins))

    def cell_indices(self, points):
        """Flat cell index per point; -1 for points outside the box."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        scaled = (points - self.mins) / self.widths
        idx = np.floor(scaled).astype(int)
        inside = np.all((idx >= 0) & (idx < self.bins), axis=1)
        flat = np.ravel_multi_index(np.clip(idx, 0, self.bins - 1).T, self.bins)
        return np.where(inside, flat, -1)

    def centers(self):
        """Cell centers as an (n_cells, m) array in flat-index order."""
        axes = [self.mins[a] + (np.arange(self.bins[a]) + 0.5) * self.widths[a]
                for a in range(self.m)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass(frozen=True)
class DriftField:
    """Per-cell mean increment rate with sample counts.

    ``drift`` rows are nan where ``count`` is below ``min_samples``.
    """

    grid: GridSpec
    drift: np.ndarray        # (n_cells, m)
    count: np.ndarray        # (n_cells,)
    min_samples: int

    @property
    def populated(self):
        return self.count >= self.min_samples

    @classmethod
    def from_sums(cls, grid, sums, counts, min_samples):
        drift = np.full_like(sums, np.nan)
        ok = counts >= max(1, min_samples)
        drift[ok] = sums[ok] / counts[ok, None]
        return cls(grid=grid, drift=drift, count=counts.copy(),
                   min_samples=min_samples)

    @classmethod
    def from_function(cls, grid, func):
        """Exact field sampled at the cell centers (all cells populated)."""
        centers = grid.centers()
        drift = np.array([func(c) for c in centers], dtype=float)
        return cls(grid=grid, drift=drift,
                   count=np.full(grid.n_cells, np.iinfo(np.int64).max),
                   min_samples=1)


def accumulate_increments(grid: GridSpec, states, increment_rates, sums, counts):
    """Bin increment rates by the cell of their start state, in sample order."""
    idx = grid.cell_indices(states)
    keep = idx >= 0
    if not np.any(keep):
        return
    idx = idx[keep]
    rates = np.atleast_2d(increment_rates)[keep]
    np.add.at(counts, idx, 1)
    for a in range(rates.shape[1]):
        np.add.at(sums[:, a], idx, rates[:, a])


def estimate_drift_field(trajectories, grid: GridSpec, min_samples=20):
    """Mean increment rate (x_{k+1} - x_k) / dt per grid cell.

    All trajectories must share the same step; cells with fewer than
    ``min_samples`` samples are left empty.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("empty ensemble")
    dt = trajectories[0].dt
    sums = np.zeros((grid.n_cells, grid.m))
    counts = np.zeros(grid.n_cells, dtype=np.int64)
    for traj in trajectories:
        if abs(traj.dt - dt) > 1e-12 * dt:
            raise ValueError("trajectories do not share the same time step")
        rates = (traj.x[1:] - traj.x[:-1]) / dt
        accumulate_increments(grid, traj.x[:-1], rates, sums, counts)
    return DriftField.from_sums(grid, sums, counts, min_samples)


def interpolate_field(field: DriftField, x):
    """Multilinear interpolation on cell centers; None near empty cells."""
    grid = field.grid
    x = np.asarray(x, dtype=float)
    u = (x - grid.mins) / grid.widths - 0.5
    base = np.floor(u).astype(int)
    frac = u - base
    m = grid.m
    value = np.zeros(m)
    drift = field.drift.reshape(tuple(grid.bins) + (m,))
    populated = field.populated.reshape(tuple(grid.bins))
    for corner in range(1 << m):
        offs = np.array([(corner >> a) & 1 for a in range(m)])
        cell = base + offs
        if np.any(cell < 0) or np.any(cell >= grid.bins):
            return None
        if not populated[tuple(cell)]:
            return None
        weight = np.prod(np.where(offs == 1, frac, 1.0 - frac))
        value += weight * drift[tuple(cell)]
    return value


@dataclass(frozen=True)
class ZeroDriftReport:
    point: np.ndarray
    displacement: float
    method: str  # "newton" or "grid_argmin"


def find_zero_drift(field: DriftField, x_init, reference=None,
                    max_iterations=80):
    """Locate a zero of the interpolated drift field near ``x_init``.

    Damped Newton with a finite-difference Jacobian on the multilinear
    interpolant; tolerance is 1e-4 times the median drift magnitude over the
    populated cells. Steps that leave the populated region (or Newton
    failure) fall back to the populated cell with the smallest drift norm.
    ``displacement`` is measured from ``reference`` (default: ``x_init``).
    """
    if not np.any(field.populated):
        raise ValueError("drift field has no populated cells")
    x_init = np.asarray(x_init, dtype=float)
    reference = x_init if reference is None else np.asarray(reference, dtype=float)
    norms = np.linalg.norm(field.drift[field.populated], axis=1)
    tol = 1e-4 * float(np.median(norms))
    h = 0.1 * field.grid.widths

    def report(point, method):
        return ZeroDriftReport(point=point,
                               displacement=float(np.linalg.norm(point - reference)),
                               method=method)

    def fallback():
        idx = np.flatnonzero(field.populated)
        best = idx[np.argmin(norms)]
        return report(field.grid.centers()[best], "grid_argmin")

    x = x_init.copy()
    value = interpolate_field(field, x)
    if value is None:
        return fallback()
    m = field.grid.m
    for _ in range(max_iterations):
        norm = np.linalg.norm(value)
        if norm <= tol:
            return report(x, "newton")
        jac = np.empty((m, m))
        for a in range(m):
            step = np.zeros(m)
            step[a] = h[a]
            up = interpolate_field(field, x + step)
            down = interpolate_field(field, x - step)
            if up is None or down is None:
                return fallback()
            jac[:, a] = (up - down) / (2 * h[a])
        try:
            direction = np.linalg.solve(jac, -value)
        except np.linalg.LinAlgError:
            return fallback()
        damping = 1.0
        while damping >= 1.0 / 64.0:
            trial = x + damping * direction
            trial_value = interpolate_field(field, trial)
            if trial_value is not None and np.linalg.norm(trial_value) < norm:
                x, value = trial, trial_value
                break
            damping /= 2.0
        else:
            return fallback()
    return fallback()


def sup_distance(a: Trajectory, b: Trajectory):
    """Maximum Euclidean distance between two paths on the same grid."""
    if a.t.shape != b.t.shape or not np.allclose(a.t, b.t, rtol=0, atol=1e-12):
        raise GridMismatchError("trajectories are not on the same time grid")
    return float(np.max(np.linalg.norm(a.x - b.x, axis=1)))


@dataclass(frozen=True)
class ConvergenceRow:
    epsilon: float
    median_sup_distance: float
    iqr: float


def convergence_study(model, c, k, epsilons, gamma_omega, rc, n_paths,
                      steps_per_epsilon=50):
    """Median pathwise distance between the stiff system and its limit.

    For each epsilon (strictly decreasing) the stiff system runs at
    dt = epsilon / steps_per_epsilon on Wiener increments obtained by summing
    the finest-grid increments, and is compared against the limiting SDE
    driven by the same increments at the finest step.
    """
    from .ensembles import fast_vs_limit_distances

    epsilons = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilon list must be strictly decreasing")
    rows = []
    distances = fast_vs_limit_distances(model, c, k, epsilons, gamma_omega,
                                        rc, n_paths, steps_per_epsilon)
    for eps, dists in zip(epsilons, distances):
        q25, q50, q75 = np.percentile(dists, [25, 50, 75])
        rows.append(ConvergenceRow(epsilon=eps, median_sup_distance=float(q50),
                                   iqr=float(q75 - q25)))
    return rows
