"""Shared run types: time grids, delay scalings, Wiener increments, RNG streams."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SddelimError(Exception):
    """Base class for errors raised by this package."""


class StabilityError(SddelimError):
    """Time step too large for the stiffest mode of the system."""


class SimulationError(SddelimError):
    """A simulation produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GridMismatchError(SddelimError):
    """Two trajectories do not share the same time grid."""


def trajectory_stream(seed, index):
    """Independent random stream for one trajectory.

    Streams are keyed by (master seed, trajectory index) through the
    counter-based Philox generator, so trajectory ``index`` always sees the
    same stream no matter how the ensemble is chunked or parallelised.
    """
    key = np.array([np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(int(index))], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class DelayConfig:
    """Per-component delays and noise correlation times tied to one scale.

    The delays are ``delta[i] = c[i] * epsilon`` and the correlation times
    ``tau[j] = k[j] * epsilon``; ``delta`` is stored as constructed so the
    identity holds exactly, not merely to rounding.
    """

    delta: np.ndarray
    c: np.ndarray
    k: np.ndarray
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        for name in ("delta", "c", "k"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"{name} must be a non-empty 1-d array")
            if not np.all(arr > 0):
                raise ValueError(f"all entries of {name} must be positive")
        if self.delta.shape != self.c.shape:
            raise ValueError("delta and c must have the same length")

    @classmethod
    def from_scales(cls, c, k, epsilon):
        c = np.asarray(c, dtype=float)
        k = np.asarray(k, dtype=float)
        return cls(delta=c * epsilon, c=c, k=k, epsilon=float(epsilon))

    @property
    def m(self):
        return self.delta.size

    @property
    def n(self):
        return self.k.size

    @property
    def tau(self):
        """Correlation times k[j] * epsilon."""
        return self.k * self.epsilon


@dataclass(frozen=True)
class RunConfig:
    """Length, step, initial state, seed and ensemble size of one run."""

    t_end: float
    dt: float
    x0: np.ndarray
    seed: int = 0
    n_traj: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.t_end <= 0 or self.dt <= 0:
            raise ValueError("t_end and dt must be positive")
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(
                f"dt={self.dt} does not divide t_end={self.t_end} "
                "(relative mismatch above 1e-9)")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a uniform time grid."""

    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "x", x)
        if self.t.ndim != 1 or self.t.size != self.x.shape[0]:
            raise ValueError("t and x must have matching leading length")
        if self.t.size >= 2:
            dts = np.diff(self.t)
            if np.any(dts <= 0) or not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
                raise ValueError("time grid must be uniform and increasing")

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if self.t.size >= 2 else 0.0

    @property
    def m(self):
        return self.x.shape[1]

    def subsample(self, stride):
        """Every ``stride``-th point, keeping the first and last."""
        stride = int(stride)
        if (self.t.size - 1) % stride:
            raise ValueError("stride must divide the number of steps")
        return Trajectory(self.t[::stride], self.x[::stride])


def time_grid(n_steps, dt):
    return np.arange(n_steps + 1) * dt


@dataclass(frozen=True)
class WienerPath:
    """Pre-generated Wiener increments, one column per noise channel."""

    dt: float
    dW: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dW", np.asarray(self.dW, dtype=float))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dW.ndim != 2:
            raise ValueError("dW must be an (n_steps, n_channels) array")

    @classmethod
    def generate(cls, n_steps, n_channels, dt, rng):
        dW = rng.standard_normal((n_steps, n_channels)) * np.sqrt(dt)
        return cls(dt=float(dt), dW=dW)

    @property
    def n_steps(self):
        return self.dW.shape[0]

    @property
    def n_channels(self):
        return self.dW.shape[1]

    def coarsen(self, factor):
        """Same Brownian path on a grid ``factor`` times coarser."""
        factor = int(factor)
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if factor == 1:
            return self
        if self.n_steps % factor:
            raise ValueError("factor must divide the number of increments")
        grouped = self.dW.reshape(self.n_steps // factor, factor, self.n_channels)
        return WienerPath(dt=self.dt * factor, dW=grouped.sum(axis=1))
