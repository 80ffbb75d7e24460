"""Material law operators, positivity certificates, and congruence transforms.

The coupled model splits its material response into an instantaneous
symmetric part M0 and a causal correction M1 evaluated at the inverse time
derivative.  M0 carries the inverse elasticity, the coupling of stresses to
the electric field, and the magnetic permeability; M1 carries conductivity
and the rational boundary blocks of impedance-type couplings, each of the
form left*(G + alpha*z)^{-1}*right with G symmetric positive definite.

Well-posedness hinges on a single number: the smallest eigenvalue of
nu*M0 + sym(M1(0)) over the sampled weight rates.  That certificate, the
symmetric-Gauss congruence that diagonalizes the stress/field block, and
general congruence transforms of whole systems live here.  All symmetry
statements are with respect to the weighted inner product of the state
space; eigenvalue computations conjugate into that frame first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

from .spatialops import DiscreteOperator

__all__ = [
    "StateLayout",
    "Coefficients",
    "ResolventBlock",
    "RationalFamily",
    "BoundaryCoupling",
    "PosdefReport",
    "assemble_M0",
    "assemble_M1",
    "check_posdef",
    "gauss_congruence",
    "nonlocal_coefficient",
    "congruence_transform",
]

# invertibility threshold: relative lambda_min below this is rejected,
# and every certificate in this module carries the same cutoff
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class StateLayout:
    """Named contiguous blocks of the solver state vector.

    ``weights`` is the concatenated weighted-inner-product diagonal; blocks
    holding orthonormal boundary coordinates contribute ones.  ``meta`` is
    free-form storage for builders (boundary space handles, restriction
    maps); it does not affect equality or layout arithmetic.
    """

    names: tuple[str, ...]
    sizes: tuple[int, ...]
    weights: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.names) != len(self.sizes):
            raise ValueError("names and sizes differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate block names")
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.size != sum(self.sizes):
            raise ValueError("weights length does not match total size")
        if w.size and not w.min() > 0:
            raise ValueError("weights must be positive")

    @property
    def size(self) -> int:
        return int(sum(self.sizes))

    def offset(self, name: str) -> int:
        i = self.names.index(name)
        return int(sum(self.sizes[:i]))

    def block(self, name: str) -> slice:
        off = self.offset(name)
        return slice(off, off + self.sizes[self.names.index(name)])

    def size_of(self, name: str) -> int:
        return self.sizes[self.names.index(name)]

    def split(self, state: np.ndarray) -> dict[str, np.ndarray]:
        return {name: state[self.block(name)] for name in self.names}


def _as_matrix(value, rows: int, cols: int | None = None) -> sp.csr_matrix:
    """Normalize a coefficient spec to a sparse matrix of the given shape.

    Scalars broadcast to multiples of the identity (square only), 1D arrays
    to multiplication operators, 2D arrays/sparse matrices pass through, a
    3D array of shape (c, c, cells) is a cellwise block coefficient on a
    component-major dof ordering, and grid operators contribute their
    matrix.
    """
    cols = rows if cols is None else cols
    if hasattr(value, "matrix") and hasattr(value, "dom_space"):
        value = value.matrix
    if sp.issparse(value):
        mat = sp.csr_matrix(value)
    else:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            if rows != cols:
                if float(arr) != 0.0:
                    raise ValueError("nonzero scalar coefficient needs a square slot")
                mat = sp.csr_matrix((rows, cols))
            else:
                mat = sp.identity(rows, format="csr") * float(arr)
        elif arr.ndim == 1:
            if rows != cols or arr.size != rows:
                raise ValueError(f"diagonal of length {arr.size} in slot ({rows},{cols})")
            mat = sp.diags(arr).tocsr()
        elif arr.ndim == 2:
            mat = sp.csr_matrix(arr)
        elif arr.ndim == 3:
            ncomp, ncomp2, ncell = arr.shape
            if ncomp != ncomp2 or ncomp * ncell != rows or rows != cols:
                raise ValueError(f"cellwise blocks {arr.shape} in slot ({rows},{cols})")
            dev = np.abs(arr - arr.transpose(1, 0, 2)).max()
            ref = max(np.abs(arr).max(), 1.0)
            if dev > 1e-13 * ref:
                raise ValueError(
                    "cellwise coefficient violates the block symmetry relations "
                    f"(defect {dev:.2e})"
                )
            i, j = np.meshgrid(np.arange(ncomp), np.arange(ncomp), indexing="ij")
            cell = np.arange(ncell)
            rows_idx = (i[:, :, None] * ncell + cell).ravel()
            cols_idx = (j[:, :, None] * ncell + cell).ravel()
            mat = sp.csr_matrix((arr.ravel(), (rows_idx, cols_idx)), shape=(rows, rows))
        else:
            raise ValueError(f"cannot interpret coefficient of ndim {arr.ndim}")
    if mat.shape != (rows, cols):
        raise ValueError(f"coefficient shape {mat.shape}, slot needs ({rows},{cols})")
    return mat


def _weighted_adjoint_mat(mat: sp.spmatrix, w_dom: np.ndarray, w_cod: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(sp.diags(1.0 / w_dom) @ mat.T @ sp.diags(w_cod))


def _sym_defect(mat: sp.spmatrix, w: np.ndarray) -> float:
    weighted = sp.diags(w) @ mat
    diff = weighted - weighted.T
    norm = spla.norm(weighted) if mat.nnz else 0.0
    return spla.norm(diff) / max(norm, 1.0)


def _require_spd(mat: sp.spmatrix, w: np.ndarray, label: str, nonneg: bool = False) -> None:
    if _sym_defect(mat, w) > 1e-13:
        raise ValueError(f"{label} is not symmetric in the weighted inner product")
    diag = mat.diagonal()
    if (mat - sp.diags(diag)).nnz == 0:
        low, top = float(diag.min()), max(float(diag.max()), 1.0)
    else:
        hat = _hat(mat, w)
        vals = np.linalg.eigvalsh(0.5 * (hat + hat.T))
        low, top = float(vals[0]), max(float(vals[-1]), 1.0)
    if nonneg:
        if low < -SINGULAR_RTOL * top:
            raise ValueError(f"{label} must be positive semidefinite (got {low:.3e})")
    elif low <= SINGULAR_RTOL * top:
        raise ValueError(f"{label} must be positive definite (got {low:.3e})")


def _hat(mat, w: np.ndarray) -> np.ndarray:
    """Conjugate into the frame where the weighted product is Euclidean."""
    mat = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)
    r = np.sqrt(w)
    return (r[:, None] * mat) / r[None, :]


@dataclass(frozen=True)
class Coefficients:
    """Material data: density, elasticity, coupling, permittivity,
    permeability, conductivity.

    Each entry may be a scalar, a per-dof diagonal, an explicit matrix, or
    (for the elasticity) a cellwise block array; matrices must be
    self-adjoint in the weighted product where symmetry is claimed.  The
    coupling maps the electric block into the stress block and may be any
    bounded operator.
    """

    rho: Any = 1.0
    C: Any = 1.0
    e: Any = 0.0
    eps: Any = 1.0
    mu: Any = 1.0
    sigma: Any = 0.0


def _field_weights(layout: StateLayout, name: str) -> np.ndarray:
    return layout.weights[layout.block(name)]


def assemble_M0(coeffs: Coefficients, layout: StateLayout) -> "sp.csr_matrix":
    """Instantaneous material operator on the state layout.

    Velocity block rho, magnetic block mu, and the coupled 2x2 block
    [[C^-1, C^-1 e], [e* C^-1, eps + e* C^-1 e]] on (strain, efield).
    Blocks named ``*_bnd`` (orthonormal boundary coordinates) are zero:
    the material stores no energy in the traces.  Self-adjointness in the
    layout weights is exact by construction up to the factorization
    roundoff of C.
    """
    nv = layout.size_of("velocity")
    nt = layout.size_of("strain")
    ne = layout.size_of("efield")
    nh = layout.size_of("hfield")
    wv = _field_weights(layout, "velocity")
    wt = _field_weights(layout, "strain")
    we = _field_weights(layout, "efield")
    wh = _field_weights(layout, "hfield")

    rho = _as_matrix(coeffs.rho, nv)
    cmat = _as_matrix(coeffs.C, nt)
    emat = _as_matrix(coeffs.e, nt, ne)
    eps = _as_matrix(coeffs.eps, ne)
    mu = _as_matrix(coeffs.mu, nh)
    _require_spd(rho, wv, "rho")
    _require_spd(cmat, wt, "C")
    _require_spd(mu, wh, "mu")
    _require_spd(eps, we, "eps", nonneg=True)

    diag_c = cmat.diagonal()
    if (cmat - sp.diags(diag_c)).nnz == 0:
        cinv = sp.diags(1.0 / diag_c).tocsr()
        cinv_e = sp.csr_matrix(cinv @ emat)
    else:
        dense_inv = np.linalg.inv(cmat.toarray())
        dense_inv = 0.5 * (dense_inv + _weighted_adjoint_mat(sp.csr_matrix(dense_inv), wt, wt).toarray())
        cinv = sp.csr_matrix(dense_inv)
        cinv_e = sp.csr_matrix(dense_inv @ emat.toarray())
    e_adj = _weighted_adjoint_mat(emat, we, wt)
    e_cinv = _weighted_adjoint_mat(cinv_e, we, wt)
    lower_right = sp.csr_matrix(eps + e_adj @ cinv_e)

    blocks: dict[str, dict[str, sp.spmatrix]] = {
        "velocity": {"velocity": rho},
        "strain": {"strain": cinv, "efield": cinv_e},
        "efield": {"strain": e_cinv, "efield": lower_right},
        "hfield": {"hfield": mu},
    }
    mat = sp.lil_matrix((layout.size, layout.size))
    for row, cols in blocks.items():
        for col, sub in cols.items():
            mat[layout.block(row), layout.block(col)] = sub
    out = sp.csr_matrix(mat)
    wmat = sp.diags(layout.weights) @ out
    out = sp.csr_matrix(sp.diags(1.0 / layout.weights) @ (0.5 * (wmat + wmat.T)))
    return DiscreteOperator(out, "state", "state", layout.weights, layout.weights)


@dataclass(frozen=True)
class ResolventBlock:
    """One rational term left*(G + alpha*z)^{-1}*right on the state space."""

    left: sp.csr_matrix
    gmat: np.ndarray
    alpha: np.ndarray
    right: sp.csr_matrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "left", sp.csr_matrix(self.left))
        object.__setattr__(self, "right", sp.csr_matrix(self.right))
        g = np.asarray(self.gmat, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        object.__setattr__(self, "gmat", g)
        object.__setattr__(self, "alpha", a)
        m = g.shape[0]
        if g.shape != (m, m) or a.shape != (m, m):
            raise ValueError("G and alpha must be square and equally sized")
        if np.abs(g - g.T).max() > 1e-13 * max(np.abs(g).max(), 1.0):
            raise ValueError("G must be symmetric")
        if m and np.linalg.eigvalsh(g)[0] <= 0:
            raise ValueError("G must be positive definite")
        if self.left.shape[1] != m or self.right.shape[0] != m:
            raise ValueError("left/right widths do not match the resolvent size")

    @property
    def aux_dim(self) -> int:
        return self.gmat.shape[0]

    def resolvent(self, z: float) -> np.ndarray:
        return np.linalg.inv(self.gmat + z * self.alpha)

    def evaluate(self, z: float) -> sp.csr_matrix:
        core = sp.csr_matrix(self.resolvent(z))
        return sp.csr_matrix(self.left @ core @ self.right)


@dataclass(frozen=True)
class RationalFamily:
    """z -> instant + sum of resolvent blocks, the causal material
    correction evaluated at z = (time antiderivative)."""

    dim: int
    instant: sp.csr_matrix
    blocks: tuple[ResolventBlock, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "instant", sp.csr_matrix(self.instant))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.instant.shape != (self.dim, self.dim):
            raise ValueError("instant part is not square on the family dimension")
        for blk in self.blocks:
            if blk.left.shape[0] != self.dim or blk.right.shape[1] != self.dim:
                raise ValueError("block placement does not match the family dimension")

    def __call__(self, z: float) -> sp.csr_matrix:
        out = self.instant.copy()
        for blk in self.blocks:
            out = out + blk.evaluate(z)
        return sp.csr_matrix(out)


@dataclass(frozen=True)
class BoundaryCoupling:
    """Impedance-type boundary data for the rational material blocks.

    ``q`` maps the magnetic-trace coordinates into the stress-trace
    coordinates, ``alpha`` acts on the stress-trace side, ``curl_comp`` is
    the square compressed curl on the magnetic-trace side.  ``tau_t`` and
    ``tau_h`` name the layout blocks holding the two traces.
    """

    q: np.ndarray
    alpha: np.ndarray
    curl_comp: np.ndarray
    tau_t: str = "strain_bnd"
    tau_h: str = "efield_bnd"


def _placement(layout: StateLayout, name: str, width: int) -> sp.csr_matrix:
    """Tall selector embedding a block of the given width into the state."""
    sl = layout.block(name)
    if sl.stop - sl.start != width:
        raise ValueError(f"block {name} has size {sl.stop - sl.start}, expected {width}")
    rows = np.arange(sl.start, sl.stop)
    return sp.csr_matrix(
        (np.ones(width), (rows, np.arange(width))), shape=(layout.size, width)
    )


def assemble_M1(
    coeffs: Coefficients,
    layout: StateLayout,
    boundary: BoundaryCoupling | None = None,
) -> RationalFamily:
    """Causal material correction: conductivity plus boundary blocks.

    The conductivity sits as a constant block on the electric field.  With
    boundary data, one shared resolvent (G + alpha*z)^{-1}, G = 1 + q q*,
    feeds all four trace blocks: the stress trace couples through the
    identity, the magnetic trace through q composed with the compressed
    curl, and the z-independent identity on the magnetic trace is part of
    the instant term.
    """
    ne = layout.size_of("efield")
    sigma = _as_matrix(coeffs.sigma, ne)
    pe = _placement(layout, "efield", ne)
    instant = sp.csr_matrix(pe @ sigma @ pe.T)
    blocks: tuple[ResolventBlock, ...] = ()
    if boundary is not None:
        q = np.atleast_2d(np.asarray(boundary.q, dtype=float))
        alpha = np.atleast_2d(np.asarray(boundary.alpha, dtype=float))
        c = np.atleast_2d(np.asarray(boundary.curl_comp, dtype=float))
        ng, nb = q.shape
        if layout.size_of(boundary.tau_t) != ng:
            raise ValueError("q's rows do not match the stress-trace block")
        if layout.size_of(boundary.tau_h) != nb or c.shape != (nb, nb):
            raise ValueError("q's columns / curl compression do not match the magnetic trace")
        if alpha.shape != (ng, ng):
            raise ValueError("alpha must be square on the stress-trace side")
        pt = _placement(layout, boundary.tau_t, ng)
        ph = _placement(layout, boundary.tau_h, nb)
        instant = instant + sp.csr_matrix(ph @ ph.T)
        # magnetic-trace side takes the compression unconjugated (c q*);
        # for skew c this makes sym M1(0) block-diagonal on the traces
        qc = q @ c
        gmat = np.eye(ng) + q @ q.T
        left = sp.csr_matrix(pt + ph @ sp.csr_matrix(c @ q.T))
        right = sp.csr_matrix(pt.T + sp.csr_matrix(qc) @ ph.T)
        blocks = (ResolventBlock(left=left, gmat=gmat, alpha=alpha, right=right),)
    return RationalFamily(dim=layout.size, instant=instant, blocks=blocks)


@dataclass(frozen=True)
class PosdefReport:
    """Sampled positivity certificate for nu*M0 + sym(M1(0))."""

    c0: float
    per_nu: tuple[tuple[float, float], ...]
    null_dim: int
    null_space_bound: float
    well_posed: bool
    threshold: float = SINGULAR_RTOL


def check_posdef(M0, M1: RationalFamily, nu_range: Sequence[float]) -> PosdefReport:
    """Smallest eigenvalue of nu*M0 + sym(M1(0)) over the sampled rates.

    Also reports the structural split: the smallest eigenvalue of sym(M1(0))
    restricted to an orthonormal basis of the null space of M0.  When that
    bound is positive the certificate extends to every sufficiently large
    rate, not just the sampled ones.  A nonpositive c0 is a valid outcome
    and flags the system as not well posed.
    """
    if not nu_range:
        raise ValueError("need at least one weight rate to sample")
    mat0 = M0.matrix if hasattr(M0, "matrix") else sp.csr_matrix(np.asarray(M0, dtype=float))
    n = mat0.shape[0]
    w = M0.dom_weights if hasattr(M0, "dom_weights") else np.ones(n)
    for nu in nu_range:
        if not nu > 0:
            raise ValueError(f"weight rates must be positive, got {nu}")
    root = np.sqrt(w)
    scale = sp.diags(root)
    unscale = sp.diags(1.0 / root)
    m0_hat = scale @ mat0 @ unscale
    m0_hat = 0.5 * (m0_hat + m0_hat.T)
    m1_hat = scale @ M1(0.0) @ unscale
    m1_hat = 0.5 * (m1_hat + m1_hat.T)
    per_nu = []
    if n <= 2500:
        d0, d1 = m0_hat.toarray(), m1_hat.toarray()
        for nu in nu_range:
            vals = np.linalg.eigvalsh(nu * d0 + d1)
            per_nu.append((float(nu), float(vals[0])))
        evals, evecs = eigh(d0)
        top = max(float(np.abs(evals).max()), 1.0)
        null = evecs[:, np.abs(evals) <= SINGULAR_RTOL * top]
        null_dim = null.shape[1]
        restricted = null.T @ d1 @ null
    else:
        # desk grids beyond the dense cutoff: Lanczos for the edge
        # eigenvalue, structural zero rows as the null-space basis
        for nu in nu_range:
            val = spla.eigsh(
                (nu * m0_hat + m1_hat).tocsc(), k=1, which="SA", maxiter=10000
            )[0][0]
            per_nu.append((float(nu), float(val)))
        row_mass = np.asarray(np.abs(m0_hat).sum(axis=1)).ravel()
        null_rows = np.flatnonzero(row_mass == 0.0)
        null_dim = null_rows.size
        restricted = m1_hat.toarray()[np.ix_(null_rows, null_rows)] if null_dim else None
    c0 = min(v for _, v in per_nu)
    if null_dim:
        null_bound = float(np.linalg.eigvalsh(restricted)[0])
    else:
        null_bound = math.inf
    return PosdefReport(
        c0=float(c0),
        per_nu=tuple(per_nu),
        null_dim=int(null_dim),
        null_space_bound=null_bound,
        well_posed=c0 > 0,
    )


def gauss_congruence(block, split: int):
    """Symmetric-Gauss congruence diagonalizing the coupled material block.

    For the self-adjoint 2x2 block [[A, B], [B*, C]] with A positive
    definite, returns (W, D) with W = [[1, 0], [-X*, 1]], X = A^{-1}B, and
    D = W block W* block-diagonal.  For the stress/field block assembled
    here X* is exactly the coupling adjoint, so D = diag(C^-1, eps).
    """
    mat = block.matrix.toarray() if hasattr(block, "matrix") else np.asarray(block, dtype=float)
    w = block.dom_weights if hasattr(block, "dom_weights") else np.ones(mat.shape[0])
    name = getattr(block, "dom_space", "state")
    n = mat.shape[0]
    if not 0 < split < n:
        raise ValueError(f"split {split} outside (0, {n})")
    a = mat[:split, :split]
    b = mat[:split, split:]
    vals = np.linalg.eigvalsh(_hat_sub(a, w[:split]))
    if vals[0] <= SINGULAR_RTOL * max(vals[-1], 1.0):
        raise ValueError("leading block is numerically singular")
    x = np.linalg.solve(a, b)
    xadj = (x.T * w[:split][None, :]) / w[split:][:, None]
    wmat = np.eye(n)
    wmat[split:, :split] = -xadj
    wop = DiscreteOperator(sp.csr_matrix(wmat), name, name, w, w)
    wadj = _weighted_adjoint_mat(sp.csr_matrix(wmat), w, w).toarray()
    d = wmat @ mat @ wadj
    dop = DiscreteOperator(sp.csr_matrix(d), name, name, w, w)
    return wop, dop


def _hat_sub(mat: np.ndarray, w: np.ndarray) -> np.ndarray:
    hat = _hat(mat, w)
    return 0.5 * (hat + hat.T)


def nonlocal_coefficient(
    alpha0: np.ndarray,
    weights: np.ndarray,
    kernel: Sequence[tuple[np.ndarray, np.ndarray]] | np.ndarray | None = None,
    space: str = "field",
):
    """Multiplication plus integral-kernel coefficient on one dof space.

    kernel as rank-r pairs (a_k, b_k) contributes sum_k a_k (weights*b_k)^T,
    the quadrature realization of an integral operator with separable
    kernel; a full 2D array is treated as the tabulated kernel and gets the
    quadrature weights on its columns.  No kernel means plain multiplication.
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = alpha0.size
    if weights.size != n:
        raise ValueError("weights and alpha0 differ in length")
    mat = np.diag(alpha0).astype(float)
    if kernel is not None:
        if isinstance(kernel, np.ndarray) and kernel.ndim == 2:
            if kernel.shape != (n, n):
                raise ValueError(f"tabulated kernel shape {kernel.shape}, grid has {n} dofs")
            mat = mat + kernel * weights[None, :]
        else:
            for a_k, b_k in kernel:
                a_k = np.asarray(a_k, dtype=float)
                b_k = np.asarray(b_k, dtype=float)
                if a_k.size != n or b_k.size != n:
                    raise ValueError("kernel factor length does not match the grid")
                mat = mat + np.outer(a_k, weights * b_k)
    return DiscreteOperator(sp.csr_matrix(mat), space, space, weights, weights)


def congruence_transform(system, W):
    """Transform a whole system by an invertible state map.

    Produces (W M0 W*, W M1(.) W*, W A W*) on the same layout; adjoints are
    in the layout weights, so symmetry of M0 and skewness of A survive
    exactly.  The certified constant is replaced by the guaranteed lower
    bound c0 / ||W^-*||^2; callers wanting a sharp constant re-certify.
    Nearly singular transforms are rejected.
    """
    wmat = W.matrix.toarray() if hasattr(W, "matrix") else np.asarray(W, dtype=float)
    weights = system.M0.dom_weights
    n = system.M0.shape[0]
    if wmat.shape != (n, n):
        raise ValueError(f"transform shape {wmat.shape}, state has {n} dofs")
    sv = np.linalg.svd(_hat(wmat, weights), compute_uv=False)
    if sv[-1] <= SINGULAR_RTOL * max(sv[0], 1.0):
        cond = sv[0] / sv[-1] if sv[-1] > 0 else math.inf
        raise ValueError(f"transform numerically singular (condition {cond:.3e})")
    wsp = sp.csr_matrix(wmat)
    wadj = _weighted_adjoint_mat(wsp, weights, weights)
    inv_adj_norm = 1.0 / sv[-1]

    def conj(mat: sp.spmatrix) -> sp.csr_matrix:
        return sp.csr_matrix(wsp @ mat @ wadj)

    m0 = replace(system.M0, matrix=conj(system.M0.matrix))
    a = replace(system.A, matrix=conj(system.A.matrix))
    m1 = RationalFamily(
        dim=system.M1.dim,
        instant=conj(system.M1.instant),
        blocks=tuple(
            ResolventBlock(
                left=sp.csr_matrix(wsp @ blk.left),
                gmat=blk.gmat,
                alpha=blk.alpha,
                right=sp.csr_matrix(blk.right @ wadj),
            )
            for blk in system.M1.blocks
        ),
    )
    return replace(system, M0=m0, M1=m1, A=a, c0=system.c0 / inv_adj_norm**2)
