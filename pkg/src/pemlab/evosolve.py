"""Causal backward-Euler solver for weighted first-order evolution systems.

The discrete problem marched here is

    M0 (U_n - U_{n-1})/dt + [instant + sum_k B1_k (G_k + alpha_k J)^{-1} B2_k
        + A] U_n = F_n,        U_{-1} = 0,

where J is the causal running sum (the discrete antiderivative).  Every
rational material block is realized by an auxiliary state w with the
per-step update (G + alpha*dt) w_n = B2-input_n - alpha*(Jw)_{n-1}, so the
march keeps O(1) memory per step and is exactly causal.  The weight rate nu
never enters the stepping matrix; it only weighs norms and certificates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import RationalFamily, StateLayout
from .spatialops import DiscreteOperator
from .timeweight import Trajectory, differentiate_causal, weighted_norm

__all__ = [
    "EvoSystem",
    "SolveReport",
    "state_operator",
    "step_margin",
    "solve",
    "stability_ratio",
    "residual",
]

DEFECT_TOL = 1e-13
_DENSE_CUTOFF = 600


def state_operator(mat, layout: StateLayout) -> DiscreteOperator:
    """Wrap a raw matrix as an operator on the layout's weighted state space."""
    if not sp.issparse(mat):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
    return DiscreteOperator(
        sp.csr_matrix(mat), "state", "state", layout.weights, layout.weights
    )


def _rel_defect(diff: sp.spmatrix, base: sp.spmatrix) -> float:
    norm = spla.norm(base) if base.nnz else 0.0
    defect = spla.norm(diff) if diff.nnz else 0.0
    return defect / max(norm, 1.0)


@dataclass(frozen=True)
class EvoSystem:
    """Evolution system (d/dt M0 + M1(antiderivative) + A) U = F.

    ``c0`` is the certified positivity constant (smallest eigenvalue of
    nu*M0 + sym M1(0) over the sampled rates, see
    :func:`pemlab.material.check_posdef`).  NaN marks an uncertified
    system; :func:`solve` refuses those unless overridden.
    """

    M0: DiscreteOperator
    M1: RationalFamily
    A: DiscreteOperator
    layout: StateLayout
    c0: float = math.nan

    def __post_init__(self) -> None:
        n = self.layout.size
        for name, op in (("M0", self.M0), ("A", self.A)):
            if op.shape != (n, n):
                raise ValueError(f"{name} has shape {op.shape}, state has {n} dofs")
        if self.M1.dim != n:
            raise ValueError(f"M1 acts on {self.M1.dim} dofs, state has {n}")
        scale = sp.diags(self.layout.weights)
        wm0 = scale @ self.M0.matrix
        if _rel_defect(wm0 - wm0.T, wm0) > DEFECT_TOL:
            raise ValueError("M0 is not self-adjoint in the layout weights")
        wa = scale @ self.A.matrix
        if _rel_defect(wa + wa.T, wa) > DEFECT_TOL:
            raise ValueError("A is not skew-adjoint in the layout weights")

    @property
    def size(self) -> int:
        return self.layout.size


@dataclass(frozen=True)
class SolveReport:
    """Solve output: the state march plus its continuous-dependence data.

    ``aux_states`` holds one trajectory per resolvent block containing the
    internal running integral (Jw)_n of that block's auxiliary variable;
    the variable itself is its causal backward difference.
    """

    trajectory: Trajectory
    aux_states: tuple[Trajectory, ...]
    stability_ratio: float
    residual_max: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "aux_states", tuple(self.aux_states))
        if not self.stability_ratio >= 0:
            raise ValueError("stability ratio must be nonnegative")


def step_margin(system: EvoSystem, dt: float) -> float:
    """Smallest eigenvalue of the symmetric part of the step matrix.

    The step matrix is M0/dt + M1(dt) + A in the layout weights; A drops
    out of the symmetric part.  A positive margin guarantees each backward
    Euler step is uniquely solvable, and for a certified system with
    1/dt at or above the sampled rates the margin is at least c0 minus the
    resolvent relaxation, itself of size O(dt).
    """
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    root = np.sqrt(system.layout.weights)
    core = system.M0.matrix / dt + system.M1(dt)
    hat = sp.diags(root) @ core @ sp.diags(1.0 / root)
    hat = 0.5 * (hat + hat.T)
    if system.size <= _DENSE_CUTOFF:
        return float(np.linalg.eigvalsh(hat.toarray())[0])
    val = spla.eigsh(hat.tocsc(), k=1, which="SA", maxiter=10000)[0][0]
    return float(val)


def solve(
    system: EvoSystem, F: Trajectory, *, allow_uncertified: bool = False
) -> SolveReport:
    """March the system through the source's time grid.

    One sparse direct factorization of the step matrix is computed and
    reused for every step.  The output trajectory carries the layout
    weights, its stability ratio is evaluated at the grid's own rate, and
    the returned residual re-checks the discrete equation a posteriori.
    """
    layout = system.layout
    n = layout.size
    if F.state_size != n:
        raise ValueError(f"source has state size {F.state_size}, system expects {n}")
    if not allow_uncertified and not (system.c0 > 0):
        raise ValueError(
            "system has no positive certified constant; attach c0 from "
            "check_posdef or pass allow_uncertified=True"
        )
    grid = F.grid
    dt = grid.dt
    margin = step_margin(system, dt)
    if margin <= 0:
        raise ArithmeticError(
            f"step matrix singular: symmetric part has lambda_min={margin:.3e} "
            f"(nu={grid.nu:g}, dt={dt:g})"
        )
    blocks = system.M1.blocks
    cores = [blk.resolvent(dt) for blk in blocks]
    m1_eff = sp.csr_matrix(system.M1.instant)
    for blk, core in zip(blocks, cores):
        m1_eff = m1_eff + blk.left @ sp.csr_matrix(core) @ blk.right
    m0_dt = sp.csr_matrix(system.M0.matrix / dt)
    lu = spla.splu(sp.csc_matrix(m0_dt + m1_eff + system.A.matrix))

    src = F.values.reshape(F.n_steps, -1)
    states = np.zeros((F.n_steps, n))
    aux = [np.zeros((F.n_steps, blk.aux_dim)) for blk in blocks]
    integrals = [np.zeros(blk.aux_dim) for blk in blocks]
    u_prev = np.zeros(n)
    for idx in range(F.n_steps):
        rhs = src[idx] + m0_dt @ u_prev
        for k, blk in enumerate(blocks):
            rhs = rhs + blk.left @ (cores[k] @ (blk.alpha @ integrals[k]))
        u_prev = lu.solve(rhs)
        states[idx] = u_prev
        for k, blk in enumerate(blocks):
            w_now = cores[k] @ (blk.right @ u_prev - blk.alpha @ integrals[k])
            integrals[k] += dt * w_now
            aux[k][idx] = integrals[k]
    traj = Trajectory(grid, states, layout.weights)
    aux_trajs = tuple(Trajectory(grid, vals) for vals in aux)
    return SolveReport(
        trajectory=traj,
        aux_states=aux_trajs,
        stability_ratio=_ratio(traj, F, grid.nu),
        residual_max=_residual_parts(system, traj, aux_trajs, F),
    )


def _attach_weights(traj: Trajectory, weights: np.ndarray | None) -> Trajectory:
    if weights is None or (
        traj.state_weights is not None
        and np.array_equal(traj.state_weights, weights)
    ):
        return traj
    return Trajectory(traj.grid, traj.values, weights)


def _ratio(u_traj: Trajectory, f_traj: Trajectory, nu: float) -> float:
    f_traj = _attach_weights(f_traj, u_traj.state_weights)
    denom = weighted_norm(f_traj, nu)
    if denom == 0.0:
        return 0.0
    return weighted_norm(u_traj, nu) / denom


def stability_ratio(report: SolveReport, F: Trajectory, nu: float) -> float:
    """Weighted solution norm over weighted source norm at the rate nu.

    Both norms use the solver's state weights; a zero source gives 0.  For
    a certified system the ratio is compared against 1/c0.
    """
    return _ratio(report.trajectory, F, nu)


def residual(system: EvoSystem, report: SolveReport, F: Trajectory) -> float:
    """Max weighted step residual with auxiliary states eliminated.

    Recomputes ||M0*backward-difference + M1_realized + A) U_n - F_n|| /
    (1 + ||F_n||) over all steps, where M1_realized applies the instant
    part to U_n and each block's stored auxiliary variable through B1.
    Direct-solver runs stay at roundoff level.
    """
    return _residual_parts(system, report.trajectory, report.aux_states, F)


def _residual_parts(
    system: EvoSystem,
    traj: Trajectory,
    aux_states: tuple[Trajectory, ...],
    F: Trajectory,
) -> float:
    n = system.size
    if traj.state_size != n or F.state_size != n:
        raise ValueError("trajectory/source state size does not match the system")
    if F.n_steps != traj.n_steps:
        raise ValueError("trajectory and source live on different numbers of steps")
    blocks = system.M1.blocks
    if len(aux_states) != len(blocks):
        raise ValueError(
            f"report has {len(aux_states)} auxiliary trajectories, "
            f"system has {len(blocks)} resolvent blocks"
        )
    if traj.n_steps == 0:
        return 0.0
    u_vals = traj.values.reshape(traj.n_steps, -1)
    src = F.values.reshape(F.n_steps, -1)
    bdiff = differentiate_causal(traj).values.reshape(traj.n_steps, -1)
    res = (
        (system.M0.matrix @ bdiff.T).T
        + (system.M1.instant @ u_vals.T).T
        + (system.A.matrix @ u_vals.T).T
        - src
    )
    for blk, jw in zip(blocks, aux_states):
        if jw.state_size != blk.aux_dim or jw.n_steps != traj.n_steps:
            raise ValueError("auxiliary trajectory does not match its block")
        w_vals = differentiate_causal(jw).values.reshape(jw.n_steps, -1)
        res = res + (blk.left @ w_vals.T).T
    w = system.layout.weights
    num = np.sqrt(np.einsum("ni,i,ni->n", res, w, res))
    den = 1.0 + np.sqrt(np.einsum("ni,i,ni->n", src, w, src))
    return float((num / den).max())
