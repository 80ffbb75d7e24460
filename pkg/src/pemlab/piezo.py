"""Coupled elastic/electromagnetic block systems on staggered grids.

Two assemblies of the causal material system

    d0 M0 U + M1(d0^{-1}) U + A U = F,    U = (v, T, E, H),

are provided.  The clamped/electric-wall build pins the tangential dofs of
v and E; the state is reduced to the interior dofs, so the pinned values
are zero by construction and A stays exactly skew in the layout weights.
The impedance-wall build keeps the full grids and appends two trace
blocks tau_T, tau_H in graph-orthonormal boundary coordinates; the traces
are closed by the rational boundary law

    S(z) (tau_H; tau_T) + (iota_curl* E; iota_Grad* v) = 0,

    S(z) = [[1 + c Q* R(z) Q c,  c Q* R(z)],
            [R(z) Q c,           R(z)]],      R(z) = (1 + Q Q* + alpha z)^{-1},

realized through one shared resolvent block of M1, so the march remains
causal with O(1) memory.  ``c`` is a square compression of the curl on the
magnetic trace space; the build uses the exactly skew part of the
collocated curl compression, whose symmetric defect shrinks under
refinement.  The product identity S(z) [[1, -cQ*], [-Qc, 1 + alpha z]] = 1
holds exactly when c*c = -1, the algebraic signature of the rotation the
curl induces on its trace space; ``random_skew_orthogonal`` draws such
compressions on even-dimensional spaces.

Lifting helpers convert inhomogeneous boundary values or a nonzero
initial state into equivalent interior sources for the clamped build,
with exact boundary-dof bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .bdspace import BoundarySpace, DottedOperator, compute_boundary_space, dotted_operator
from .evosolve import EvoSystem, SolveReport
from .material import (
    BoundaryCoupling,
    Coefficients,
    RationalFamily,
    StateLayout,
    assemble_M0,
    assemble_M1,
    check_posdef,
)
from .spatialops import (
    DiscreteOperator,
    GridSpec,
    OperatorPair,
    assemble_skew_block,
    boundary_closed_dual,
    build_pair,
    collocated_curl,
    scalar_em_pair_1d,
)
from .timeweight import Trajectory, differentiate_causal

__all__ = [
    "PiezoState",
    "BoundaryData",
    "LeontovichParams",
    "random_skew_orthogonal",
    "random_leontovich_params",
    "build_dirichlet_system",
    "build_leontovich_system",
    "S_of_z",
    "original_of_z",
    "boundary_residual",
    "trace_compatibility",
    "lift_boundary_data",
    "lift_initial_data",
]

FIELD_NAMES = ("velocity", "strain", "efield", "hfield")


@dataclass(frozen=True)
class PiezoState:
    """One snapshot of the coupled state, split by physical field.

    Trace components are present exactly when the state belongs to an
    impedance-wall system; ``from_vector``/``to_vector`` translate between
    the split form and the flat layout ordering.
    """

    v: np.ndarray
    T: np.ndarray
    E: np.ndarray
    H: np.ndarray
    tau_T: np.ndarray | None = None
    tau_H: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("v", "T", "E", "H"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        for name in ("tau_T", "tau_H"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float).ravel())
        if (self.tau_T is None) != (self.tau_H is None):
            raise ValueError("trace components must be given together or not at all")

    @classmethod
    def from_vector(cls, layout: StateLayout, vec: np.ndarray) -> "PiezoState":
        vec = np.asarray(vec, dtype=float).ravel()
        if vec.size != layout.size:
            raise ValueError(f"state vector has {vec.size} entries, layout needs {layout.size}")
        parts = layout.split(vec)
        return cls(
            v=parts["velocity"],
            T=parts["strain"],
            E=parts["efield"],
            H=parts["hfield"],
            tau_T=parts.get("strain_bnd"),
            tau_H=parts.get("efield_bnd"),
        )

    def to_vector(self, layout: StateLayout) -> np.ndarray:
        has_traces = "strain_bnd" in layout.names
        if has_traces != (self.tau_T is not None):
            kind = "carries" if self.tau_T is not None else "lacks"
            raise ValueError(f"state {kind} trace components but the layout does not match")
        fields = {"velocity": self.v, "strain": self.T, "efield": self.E, "hfield": self.H}
        if has_traces:
            fields["strain_bnd"] = self.tau_T
            fields["efield_bnd"] = self.tau_H
        out = np.zeros(layout.size)
        for name, val in fields.items():
            if val.size != layout.size_of(name):
                raise ValueError(
                    f"field {name} has {val.size} dofs, layout block holds {layout.size_of(name)}"
                )
            out[layout.block(name)] = val
        return out


@dataclass(frozen=True)
class BoundaryData:
    """Prescribed boundary values, as coordinate trajectories.

    ``v_bnd`` lives in the graph-orthonormal coordinates of the gradient
    boundary space, ``E_bnd`` in those of the curl boundary space.  Any
    trajectory is accepted; rough data degrades the temporal accuracy of
    the lifted solve but not its causality.
    """

    v_bnd: Trajectory
    E_bnd: Trajectory

    def __post_init__(self) -> None:
        if self.v_bnd.grid != self.E_bnd.grid:
            raise ValueError("boundary trajectories live on different time grids")


@dataclass(frozen=True)
class LeontovichParams:
    """Impedance coupling between the two trace spaces.

    ``Q`` maps curl-trace coordinates into gradient-trace coordinates;
    ``alpha`` acts on the gradient-trace side and is integrated in time by
    the boundary law.  Scalars broadcast to multiples of the (possibly
    rectangular) identity once the trace dimensions are known.  A
    nonnegative symmetric ``alpha`` keeps the implicit step well posed for
    every dt; the solver asserts the step margin either way.
    """

    Q: np.ndarray | float = 0.0
    alpha: np.ndarray | float = 0.0

    def __post_init__(self) -> None:
        for name in ("Q", "alpha"):
            val = getattr(self, name)
            arr = np.asarray(val, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must have finite entries")
            object.__setattr__(self, name, float(arr) if arr.ndim == 0 else np.atleast_2d(arr))

    def resolved(self, n_grad: int, n_curl: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense (Q, alpha) for trace spaces of the given dimensions."""
        q = self.Q * np.eye(n_grad, n_curl) if np.isscalar(self.Q) else np.asarray(self.Q)
        a = self.alpha * np.eye(n_grad) if np.isscalar(self.alpha) else np.asarray(self.alpha)
        if q.shape != (n_grad, n_curl):
            raise ValueError(f"Q has shape {q.shape}, trace spaces need ({n_grad}, {n_curl})")
        if a.shape != (n_grad, n_grad):
            raise ValueError(f"alpha has shape {a.shape}, gradient trace needs ({n_grad}, {n_grad})")
        return q, a


def _orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    qmat, rmat = np.linalg.qr(rng.standard_normal((dim, dim)))
    return qmat * np.sign(np.diag(rmat))[None, :]


def random_skew_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random c with c^T = -c and c^2 = -1 (needs an even dimension)."""
    if dim % 2:
        raise ValueError(f"no skew-orthogonal matrix exists in odd dimension {dim}")
    spin = sp.block_diag([np.array([[0.0, -1.0], [1.0, 0.0]])] * (dim // 2)).toarray()
    omat = _orthogonal(dim, rng)
    return omat @ spin @ omat.T


def random_leontovich_params(
    n_grad: int,
    n_curl: int,
    rng: np.random.Generator,
    q_scale: float = 1.0,
    alpha_scale: float = 1.0,
) -> LeontovichParams:
    """Draw a coupling from orthogonal factors and a symmetric PSD alpha."""
    k = min(n_grad, n_curl)
    q = q_scale * (_orthogonal(n_grad, rng)[:, :k] @ _orthogonal(n_curl, rng)[:k, :])
    root = rng.standard_normal((n_grad, n_grad)) / np.sqrt(max(n_grad, 1))
    return LeontovichParams(Q=q, alpha=alpha_scale * (root @ root.T))


def _field_pairs(grid: GridSpec) -> tuple[OperatorPair, OperatorPair]:
    grad = build_pair(grid, "grad")
    em = scalar_em_pair_1d(grid) if grid.dim == 1 else build_pair(grid, "curl")
    return grad, em


def _unitarize_skew(mat: np.ndarray) -> np.ndarray:
    """Skew-orthogonal polar factor of the skew part of ``mat``.

    The result is exactly skew and squares to -1 on its range (kernel
    directions stay uncoupled), matching the algebraic signature of the
    continuum compression; the raw compression converges to it under
    refinement but has inflated norm on coarse grids, which would wreck
    the trace positivity bound.
    """
    skew = 0.5 * (mat - mat.T)
    u, svals, vt = np.linalg.svd(skew)
    keep = svals > (svals[0] * 1e-12 if svals.size else 0.0)
    polar = u[:, keep] @ vt[keep, :]
    return 0.5 * (polar - polar.T)


def build_dirichlet_system(
    grid: GridSpec,
    coeffs: Coefficients,
    nu_range: tuple[float, ...] = (1.0, 2.0, 4.0),
) -> EvoSystem:
    """Clamped / electric-wall system on the interior dofs.

    The velocity and electric blocks keep only interior dofs, so the
    boundary values are identically zero rather than approximately so.
    Off-diagonal couplings are the one-sided stencils with zeroed boundary
    columns; the skew completion supplies the adjoint rows, which gives
    the weighted skewness of A at roundoff level.  The positivity
    certificate over ``nu_range`` is stored on the returned system; a
    nonpositive constant is a valid outcome that the solver will refuse
    without an explicit override.
    """
    grad, em = _field_pairs(grid)
    iv = grad.mask.interior_dofs()
    ie = em.mask.interior_dofs()
    wv = grad.hom.dom_weights[iv]
    we = em.hom.dom_weights[ie]
    wt = grad.hom.cod_weights
    wh = em.hom.cod_weights
    op_grad = DiscreteOperator(
        -grad.hom.matrix.tocsc()[:, iv].tocsr(), "velocity", "strain", wv, wt
    )
    op_curl = DiscreteOperator(
        em.hom.matrix.tocsc()[:, ie].tocsr(), "efield", "hfield", we, wh
    )
    a_op = assemble_skew_block(
        [(1, 0, op_grad), (3, 2, op_curl)],
        spaces=[("velocity", wv), ("strain", wt), ("efield", we), ("hfield", wh)],
    )
    layout = StateLayout(
        names=FIELD_NAMES,
        sizes=(iv.size, wt.size, ie.size, wh.size),
        weights=a_op.dom_weights,
        meta={
            "mode": "dirichlet",
            "grid": grid,
            "coeffs": coeffs,
            "pairs": {"grad": grad, "em": em},
            "interior": {"velocity": iv, "efield": ie},
            "nu_range": tuple(float(nu) for nu in nu_range),
        },
    )
    m0 = assemble_M0(coeffs, layout)
    m1 = assemble_M1(coeffs, layout)
    report = check_posdef(m0, m1, nu_range)
    layout.meta["certificate"] = report
    return EvoSystem(M0=m0, M1=m1, A=a_op, layout=layout, c0=report.c0)


def _projector(bs: BoundarySpace, dom: str, cod: str, dom_w: np.ndarray) -> DiscreteOperator:
    """Graph-orthonormal trace map iota* as a block of A."""
    mat = sp.csr_matrix((bs.graph_metric @ bs.basis).T)
    return DiscreteOperator(mat, dom, cod, dom_w, np.ones(bs.dim))


def build_leontovich_system(
    grid: GridSpec,
    coeffs: Coefficients,
    params: LeontovichParams,
    nu_range: tuple[float, ...] = (1.0, 2.0, 4.0),
    curl_comp: np.ndarray | None = None,
) -> EvoSystem:
    """Impedance-wall system with dynamic trace blocks.

    The state is (v, T, tau_T, E, H, tau_H) with traces in the
    graph-orthonormal coordinates of the gradient and curl boundary
    spaces.  A couples v into (T, tau_T) through the full gradient stencil
    stacked with the trace map, and E into (H, tau_H) likewise; the skew
    completion supplies the adjoint rows, so no boundary dof is lost and A
    stays exactly skew.  M0 stores no energy in the traces; the boundary
    law sits in M1 as one shared resolvent block built from ``params``.

    ``curl_comp`` overrides the compression of the curl on the magnetic
    trace space; by default the skew-orthogonal polar factor of the
    collocated curl compression is used.  Exact skewness keeps the
    zero-order symmetric part of the boundary law block-diagonal on the
    traces, and unit norm inherits the continuum positivity bound
    lambda_min >= (1 + ||Q||^2)^{-1} for it.
    """
    grad, em = _field_pairs(grid)
    bs_g = compute_boundary_space(grad)
    bs_e = compute_boundary_space(em)
    qmat, alpha = params.resolved(bs_g.dim, bs_e.dim)
    if curl_comp is None:
        comp = _unitarize_skew(
            dotted_operator(bs_e, bs_e, collocated_curl(grid, em)).matrix
        )
    else:
        comp = np.asarray(curl_comp, dtype=float)
        if comp.shape != (bs_e.dim, bs_e.dim):
            raise ValueError(
                f"curl compression has shape {comp.shape}, trace space has dim {bs_e.dim}"
            )
    wv = grad.full.dom_weights
    wt = grad.full.cod_weights
    we = em.full.dom_weights
    wh = em.full.cod_weights
    op_grad = DiscreteOperator(-grad.full.matrix, "velocity", "strain", wv, wt)
    op_curl = DiscreteOperator(em.full.matrix, "efield", "hfield", we, wh)
    a_op = assemble_skew_block(
        [
            (1, 0, op_grad),
            (2, 0, _projector(bs_g, "velocity", "strain_bnd", wv)),
            (4, 3, op_curl),
            (5, 3, _projector(bs_e, "efield", "efield_bnd", we)),
        ],
        spaces=[
            ("velocity", wv),
            ("strain", wt),
            ("strain_bnd", np.ones(bs_g.dim)),
            ("efield", we),
            ("hfield", wh),
            ("efield_bnd", np.ones(bs_e.dim)),
        ],
    )
    layout = StateLayout(
        names=("velocity", "strain", "strain_bnd", "efield", "hfield", "efield_bnd"),
        sizes=(wv.size, wt.size, bs_g.dim, we.size, wh.size, bs_e.dim),
        weights=a_op.dom_weights,
        meta={
            "mode": "leontovich",
            "grid": grid,
            "coeffs": coeffs,
            "pairs": {"grad": grad, "em": em},
            "bspaces": {"grad": bs_g, "em": bs_e},
            "q": qmat,
            "alpha": alpha,
            "curl_comp": comp,
            "nu_range": tuple(float(nu) for nu in nu_range),
        },
    )
    m0 = assemble_M0(coeffs, layout)
    m1 = assemble_M1(
        coeffs, layout, BoundaryCoupling(q=qmat, alpha=alpha, curl_comp=comp)
    )
    report = check_posdef(m0, m1, nu_range)
    layout.meta["certificate"] = report
    return EvoSystem(M0=m0, M1=m1, A=a_op, layout=layout, c0=report.c0)


def _compression_matrix(curl_dot) -> np.ndarray:
    if isinstance(curl_dot, DottedOperator):
        return np.asarray(curl_dot.matrix, dtype=float)
    return np.atleast_2d(np.asarray(curl_dot))


def _boundary_resolvent(qmat: np.ndarray, alpha: np.ndarray, z) -> np.ndarray:
    mat = np.eye(qmat.shape[0]) + qmat @ qmat.T + alpha * z
    svals = np.linalg.svd(mat, compute_uv=False)
    if svals[-1] <= 1e-13 * max(svals[0], 1.0):
        raise ValueError(f"boundary resolvent singular at z={z}")
    return np.linalg.inv(mat)


def S_of_z(params: LeontovichParams, curl_dot, z) -> np.ndarray:
    """Boundary symbol on (tau_H; tau_T) coordinates.

    Returns the dense block matrix
    [[1 + c Q* R Q c, c Q* R], [R Q c, R]] with R = (1 + Q Q* + alpha z)^{-1};
    rows and columns are ordered magnetic trace first, gradient trace
    second.  The resolvent is checked for invertibility at the given z.
    """
    comp = _compression_matrix(curl_dot)
    nb = comp.shape[0]
    if comp.shape != (nb, nb):
        raise ValueError("curl compression must be square")
    ng_guess = params.Q.shape[0] if not np.isscalar(params.Q) else nb
    qmat, alpha = params.resolved(ng_guess, nb)
    res = _boundary_resolvent(qmat, alpha, z)
    cqt = comp @ qmat.T
    qc = qmat @ comp
    ng = qmat.shape[0]
    out = np.zeros((nb + ng, nb + ng), dtype=np.result_type(res, comp))
    out[:nb, :nb] = np.eye(nb) + cqt @ res @ qc
    out[:nb, nb:] = cqt @ res
    out[nb:, :nb] = res @ qc
    out[nb:, nb:] = res
    return out


def original_of_z(params: LeontovichParams, curl_dot, z) -> np.ndarray:
    """Uninverted boundary block [[1, -c Q*], [-Q c, 1 + alpha z]].

    ``S_of_z`` is its exact inverse precisely when the curl compression
    satisfies c^2 = -1.
    """
    comp = _compression_matrix(curl_dot)
    nb = comp.shape[0]
    ng_guess = params.Q.shape[0] if not np.isscalar(params.Q) else nb
    qmat, alpha = params.resolved(ng_guess, nb)
    ng = qmat.shape[0]
    out = np.zeros((nb + ng,) * 2, dtype=np.result_type(alpha * z, comp))
    out[:nb, :nb] = np.eye(nb)
    out[:nb, nb:] = -(comp @ qmat.T)
    out[nb:, :nb] = -(qmat @ comp)
    out[nb:, nb:] = np.eye(ng) + alpha * z
    return out


def _require_mode(system: EvoSystem, mode: str, what: str) -> dict:
    meta = system.layout.meta
    if meta.get("mode") != mode:
        raise ValueError(f"{what} needs a {mode} system, got mode {meta.get('mode')!r}")
    return meta


def boundary_residual(system: EvoSystem, report: SolveReport) -> Trajectory:
    """Per-step defect of the realized boundary law.

    Evaluates S(d0^{-1})(tau_H; tau_T) + (iota_curl* E; iota_Grad* v) at
    every step through the solver's auxiliary states, returning the
    stacked coordinate trajectory (magnetic trace first).  For a solve
    with zero boundary sources this is the boundary-row residual of the
    march and sits at solver roundoff.
    """
    meta = _require_mode(system, "leontovich", "boundary residual")
    if len(report.aux_states) != 1:
        raise ValueError(f"expected one auxiliary state block, report has {len(report.aux_states)}")
    layout = system.layout
    vals = report.trajectory.values
    v = vals[:, layout.block("velocity")]
    efield = vals[:, layout.block("efield")]
    tau_h = vals[:, layout.block("efield_bnd")]
    w = differentiate_causal(report.aux_states[0]).values
    comp, qmat = meta["curl_comp"], meta["q"]
    bs_g, bs_e = meta["bspaces"]["grad"], meta["bspaces"]["em"]
    proj_g = (bs_g.graph_metric @ bs_g.basis).T
    proj_e = (bs_e.graph_metric @ bs_e.basis).T
    res_h = tau_h + w @ (comp @ qmat.T).T + efield @ proj_e.T
    res_g = w + v @ proj_g.T
    return Trajectory(report.trajectory.grid, np.hstack([res_h, res_g]))


def trace_compatibility(system: EvoSystem, report: SolveReport) -> dict[str, np.ndarray]:
    """Per-step defect of the trace identities, as a refinement diagnostic.

    Compares the evolved traces against the dotted-operator images of the
    bulk fields: tau_T against Div-dot iota_Div* T and tau_H against
    curl-dot iota_curl* H.  The defects are discretization errors, not
    residuals; they shrink under refinement together with the dotted
    adjoint identities.
    """
    meta = _require_mode(system, "leontovich", "trace compatibility")
    layout = system.layout
    grad, em = meta["pairs"]["grad"], meta["pairs"]["em"]
    bs_g, bs_e = meta["bspaces"]["grad"], meta["bspaces"]["em"]
    grid = meta["grid"]
    if "dual_bspaces" not in meta:
        meta["dual_bspaces"] = {
            "div": compute_boundary_space(grad.dual()),
            "hcurl": compute_boundary_space(em.dual()),
        }
    bs_div = meta["dual_bspaces"]["div"]
    bs_h = meta["dual_bspaces"]["hcurl"]
    # the transpose-built dual operators carry zero rows at the boundary
    # dofs, where the graph projection samples; the closed variants carry
    # consistent one-sided rows there
    div_dot = dotted_operator(bs_div, bs_g, boundary_closed_dual(grid, grad))
    curl_dot = dotted_operator(bs_h, bs_e, boundary_closed_dual(grid, em))
    vals = report.trajectory.values
    stress = vals[:, layout.block("strain")]
    hfield = vals[:, layout.block("hfield")]
    tau_t = vals[:, layout.block("strain_bnd")]
    tau_h = vals[:, layout.block("efield_bnd")]
    proj_div = (bs_div.graph_metric @ bs_div.basis).T
    proj_h = (bs_h.graph_metric @ bs_h.basis).T
    img_t = stress @ proj_div.T @ div_dot.matrix.T
    img_h = hfield @ proj_h.T @ curl_dot.matrix.T
    return {
        "tau_T": np.linalg.norm(tau_t - img_t, axis=1),
        "tau_H": np.linalg.norm(tau_h - img_h, axis=1),
    }


def _apply_family(family: RationalFamily, vals: np.ndarray, dt: float) -> np.ndarray:
    """Causal realization of M1(d0^{-1}) applied to a known trajectory."""
    out = (family.instant @ vals.T).T.copy()
    for blk in family.blocks:
        core = blk.resolvent(dt)
        integral = np.zeros(blk.aux_dim)
        for n in range(vals.shape[0]):
            w = core @ (blk.right @ vals[n] - blk.alpha @ integral)
            integral = integral + dt * w
            out[n] += blk.left @ w
    return out


def _full_assembly(system: EvoSystem) -> dict:
    """Unreduced layout and material operators for the clamped build.

    Coefficient entries must make sense on the full spaces; scalars and
    full-grid diagonals always do.
    """
    meta = system.layout.meta
    if "full" not in meta:
        grad, em = meta["pairs"]["grad"], meta["pairs"]["em"]
        weights = np.concatenate(
            [
                grad.full.dom_weights,
                grad.full.cod_weights,
                em.full.dom_weights,
                em.full.cod_weights,
            ]
        )
        layout = StateLayout(
            names=FIELD_NAMES,
            sizes=(
                grad.full.dom_weights.size,
                grad.full.cod_weights.size,
                em.full.dom_weights.size,
                em.full.cod_weights.size,
            ),
            weights=weights,
        )
        coeffs = meta["coeffs"]
        meta["full"] = {
            "layout": layout,
            "m0": assemble_M0(coeffs, layout),
            "m1": assemble_M1(coeffs, layout),
        }
    return meta["full"]


def _scatter(layout_full: StateLayout, system: EvoSystem, reduced: np.ndarray) -> np.ndarray:
    """Embed reduced-state history into the full layout by zero padding."""
    meta = system.layout.meta
    out = np.zeros((reduced.shape[0], layout_full.size))
    red = system.layout
    iv, ie = meta["interior"]["velocity"], meta["interior"]["efield"]
    out[:, layout_full.offset("velocity") + iv] = reduced[:, red.block("velocity")]
    out[:, layout_full.block("strain")] = reduced[:, red.block("strain")]
    out[:, layout_full.offset("efield") + ie] = reduced[:, red.block("efield")]
    out[:, layout_full.block("hfield")] = reduced[:, red.block("hfield")]
    return out


def lift_boundary_data(
    system: EvoSystem,
    data: BoundaryData,
    F: Trajectory,
) -> tuple[Trajectory, Callable[[Trajectory], Trajectory]]:
    """Source-equivalent form of inhomogeneous boundary values.

    Embeds the prescribed coordinates through the boundary-space bases to
    a grid extension Lambda = (iota v_bnd, 0, iota E_bnd, 0) and returns

        rhs = F - (d0 M0 + M1) Lambda + (0, Grad iota v_bnd, 0, -curl iota E_bnd)

    on the reduced state, with d0 realized as the backward difference of
    the data (zero prehistory).  The correction terms are the full
    stencils applied to the extensions, which agree exactly with the
    dotted-image embeddings because the extensions lie in the boundary
    spaces.  ``reconstruct`` maps the homogeneous solution to the full
    grids and adds Lambda back; the boundary dofs of v - iota v_bnd and
    E - iota E_bnd vanish identically because the reduced state never
    carried them.
    """
    meta = _require_mode(system, "dirichlet", "boundary lifting")
    if data.v_bnd.grid != F.grid:
        raise ValueError("boundary data and source live on different time grids")
    if "bspaces" not in meta:
        meta["bspaces"] = {
            "grad": compute_boundary_space(meta["pairs"]["grad"]),
            "em": compute_boundary_space(meta["pairs"]["em"]),
        }
    bs_g, bs_e = meta["bspaces"]["grad"], meta["bspaces"]["em"]
    vb, eb = data.v_bnd.values, data.E_bnd.values
    if vb.shape[1] != bs_g.dim or eb.shape[1] != bs_e.dim:
        raise ValueError(
            f"boundary coordinates have widths ({vb.shape[1]}, {eb.shape[1]}), "
            f"trace spaces have dims ({bs_g.dim}, {bs_e.dim})"
        )
    full = _full_assembly(system)
    layout_full: StateLayout = full["layout"]
    if F.values.shape[1] != system.size:
        raise ValueError(f"source has state size {F.values.shape[1]}, system has {system.size}")
    grad, em = meta["pairs"]["grad"], meta["pairs"]["em"]
    v_ext = vb @ bs_g.basis.T
    e_ext = eb @ bs_e.basis.T
    lam = np.zeros((F.values.shape[0], layout_full.size))
    lam[:, layout_full.block("velocity")] = v_ext
    lam[:, layout_full.block("efield")] = e_ext
    dt = F.grid.dt
    dlam = differentiate_causal(Trajectory(F.grid, lam)).values
    corr = dlam @ full["m0"].matrix.T + _apply_family(full["m1"], lam, dt)
    corr[:, layout_full.block("strain")] -= v_ext @ grad.full.matrix.T
    corr[:, layout_full.block("hfield")] += e_ext @ em.full.matrix.T
    iv, ie = meta["interior"]["velocity"], meta["interior"]["efield"]
    red = system.layout
    rhs = F.values.copy()
    rhs[:, red.block("velocity")] -= corr[:, layout_full.offset("velocity") + iv]
    rhs[:, red.block("strain")] -= corr[:, layout_full.block("strain")]
    rhs[:, red.block("efield")] -= corr[:, layout_full.offset("efield") + ie]
    rhs[:, red.block("hfield")] -= corr[:, layout_full.block("hfield")]

    def reconstruct(traj: Trajectory) -> Trajectory:
        if traj.values.shape != (lam.shape[0], system.size):
            raise ValueError("homogeneous solution does not match the lifted problem")
        return Trajectory(traj.grid, _scatter(layout_full, system, traj.values) + lam,
                          layout_full.weights)

    return Trajectory(F.grid, rhs, system.layout.weights), reconstruct


def lift_initial_data(
    system: EvoSystem,
    U0: "PiezoState | np.ndarray",
    F: Trajectory,
) -> tuple[Trajectory, Callable[[Trajectory], Trajectory]]:
    """Source-equivalent form of a nonzero initial state.

    Writes the solution as U = V + U0 on every step, where V solves the
    same system against rhs = F - M1(d0^{-1})(U0 held constant) - A U0.
    The uncompensated jump of M0 U0 at the first step is exactly the
    impulse that imposes U(0+) = U0, so ``reconstruct`` only adds the
    constant back.  Works on any system; for the clamped build a split
    initial state must carry zero boundary dofs, which are dropped by the
    reduction.
    """
    if isinstance(U0, PiezoState):
        meta = system.layout.meta
        if meta.get("mode") == "dirichlet":
            full = _full_assembly(system)
            vec_full = U0.to_vector(full["layout"])
            iv, ie = meta["interior"]["velocity"], meta["interior"]["efield"]
            u0 = np.zeros(system.size)
            red = system.layout
            lf = full["layout"]
            u0[red.block("velocity")] = vec_full[lf.block("velocity")][iv]
            u0[red.block("strain")] = vec_full[lf.block("strain")]
            u0[red.block("efield")] = vec_full[lf.block("efield")][ie]
            u0[red.block("hfield")] = vec_full[lf.block("hfield")]
        else:
            u0 = U0.to_vector(system.layout)
    else:
        u0 = np.asarray(U0, dtype=float).ravel()
    if u0.size != system.size:
        raise ValueError(f"initial state has {u0.size} dofs, system has {system.size}")
    if F.values.shape[1] != system.size:
        raise ValueError(f"source has state size {F.values.shape[1]}, system has {system.size}")
    held = np.broadcast_to(u0, F.values.shape)
    rhs = F.values - _apply_family(system.M1, np.array(held), F.grid.dt)
    rhs = rhs - (system.A.matrix @ u0)[None, :]

    def reconstruct(traj: Trajectory) -> Trajectory:
        if traj.values.shape[1] != system.size:
            raise ValueError("homogeneous solution does not match the lifted problem")
        return Trajectory(traj.grid, traj.values + u0[None, :], traj.state_weights)

    return Trajectory(F.grid, rhs, system.layout.weights), reconstruct
