"""Exponentially weighted time grids, trajectories, and causality probes.

Everything downstream measures trajectories in a norm that discounts late
times by exp(-2*nu*t): a solve is well behaved iff it is small where the
weight still matters.  The causal antiderivative implemented here is the
running sum that is the exact inverse of the backward difference used by
the time stepper, so cutoff/integration identities hold in floating point,
not just asymptotically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "TimeGrid",
    "Trajectory",
    "weighted_norm",
    "integrate_causal",
    "differentiate_causal",
    "cutoff",
    "causality_defect",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = t0 + n*dt carrying the weight rate nu."""

    nu: float
    dt: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self) -> None:
        if not self.nu > 0.0:
            raise ValueError(f"weight rate nu must be positive, got {self.nu}")
        if not self.dt > 0.0:
            raise ValueError(f"step size dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"need at least one step, got {self.n_steps}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps)

    def step_weights(self, nu: float | None = None) -> np.ndarray:
        """Quadrature weights exp(-2*nu*t_n)*dt of the weighted norm."""
        rate = self.nu if nu is None else float(nu)
        return np.exp(-2.0 * rate * self.times) * self.dt

    def with_nu(self, nu: float) -> "TimeGrid":
        return TimeGrid(nu=nu, dt=self.dt, n_steps=self.n_steps, t0=self.t0)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed states; axis 0 of ``values`` is the step index.

    ``state_weights`` are optional diagonal quadrature weights of the state
    space; when absent the state norm is plain Euclidean.
    """

    grid: TimeGrid
    values: np.ndarray
    state_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape[0] != self.grid.n_steps:
            raise ValueError(
                f"trajectory has {values.shape[0]} steps, grid has {self.grid.n_steps}"
            )
        if self.state_weights is not None:
            w = np.asarray(self.state_weights, dtype=float)
            object.__setattr__(self, "state_weights", w)
            if w.ndim != 1 or w.size != self.state_size:
                raise ValueError("state_weights length must match the state size")
            if not np.all(w > 0):
                raise ValueError("state_weights must be strictly positive")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def state_size(self) -> int:
        return int(np.prod(self.values.shape[1:], dtype=int)) if self.values.ndim > 1 else 1

    def state_norms_sq(self) -> np.ndarray:
        """Per-step squared state norms (weighted if weights are attached)."""
        flat = self.values.reshape(self.n_steps, -1)
        if self.state_weights is None:
            return np.einsum("ni,ni->n", flat, flat)
        return np.einsum("ni,i,ni->n", flat, self.state_weights, flat)

    def replace_values(self, values: np.ndarray) -> "Trajectory":
        return Trajectory(self.grid, values, self.state_weights)


def weighted_norm(traj: Trajectory, nu: float | None = None) -> float:
    """Space-time norm sqrt(sum_n exp(-2*nu*t_n)*dt*|u_n|^2).

    ``nu`` defaults to the trajectory's own grid rate; passing another value
    re-weighs the same samples, which is how monotonicity in nu is probed.
    """
    w = traj.grid.step_weights(nu)
    return float(math.sqrt(float(np.dot(w, traj.state_norms_sq()))))


def integrate_causal(traj: Trajectory) -> Trajectory:
    """Running-sum antiderivative (J u)_n = (J u)_{n-1} + dt*u_n, zero history.

    Exact right inverse of :func:`differentiate_causal` on any grid.
    """
    return traj.replace_values(np.cumsum(traj.values, axis=0) * traj.grid.dt)


def differentiate_causal(traj: Trajectory) -> Trajectory:
    """Backward difference (u_n - u_{n-1})/dt with zero pre-history."""
    shifted = np.zeros_like(traj.values)
    shifted[1:] = traj.values[:-1]
    return traj.replace_values((traj.values - shifted) / traj.grid.dt)


def cutoff(traj: Trajectory, a: float, side: str) -> Trajectory:
    """Zero the trajectory outside a half line of time.

    side="before" keeps the strict past t_n < a; side="after" keeps t_n >= a.
    The two cutoffs of the same trajectory sum back to it exactly.
    """
    if side not in ("before", "after"):
        raise ValueError(f"side must be 'before' or 'after', got {side!r}")
    times = traj.grid.times
    keep = times < a if side == "before" else times >= a
    out = np.zeros_like(traj.values)
    out[keep] = traj.values[keep]
    return traj.replace_values(out)


def causality_defect(
    solve: Callable[[Trajectory], object], F0: Trajectory, a: float
) -> float:
    """Weighted norm of the pre-a response to the post-a part of the source.

    ``solve`` may return a trajectory or any report object with a
    ``trajectory`` attribute.  A causal solver yields 0 up to roundoff.
    """
    result = solve(cutoff(F0, a, "after"))
    out = getattr(result, "trajectory", result)
    if not isinstance(out, Trajectory):
        raise TypeError("solve must return a Trajectory or expose .trajectory")
    return weighted_norm(cutoff(out, a, "before"))
