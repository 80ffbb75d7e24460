"""Mimetic staggered-grid operators on rectangular boxes with cell masks.

Displacement velocities live at nodes, symmetric strains/stresses at cell
centers, electric fields on edges, magnetic fields on faces (Yee layout in
3D, a TE reduction in 2D, a scalar transmission-line reduction in 1D).
The primal stencils are ordinary divided differences combined with
transverse averaging; every dual operator is *defined* as a signed weighted
transpose of a primal one, so the discrete integration-by-parts identities
hold to machine precision instead of up to truncation error.

A grid may carry an active-cell mask.  Degrees of freedom not incident to
any active cell are dropped; quadrature weights count only active incident
cells, which generalizes the trapezoid/Yee weights to masked regions.  A
dof is a *boundary* dof when it is active but sees fewer incident active
cells than an interior dof of its kind would.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridSpec",
    "DofMask",
    "DiscreteOperator",
    "OperatorPair",
    "SpaceDef",
    "build_spaces",
    "build_pair",
    "boundary_closed_dual",
    "collocated_curl",
    "scalar_em_pair_1d",
    "edge_to_center_average",
    "containment_check",
    "assemble_skew_block",
    "weighted_adjoint",
    "dump_coo",
]

# Voigt-style component order; off-diagonal shears carry weight multiplicity 2
# so the weighted inner product matches the tensor Frobenius pairing.
_STRAIN_COMPS = {
    1: (("exx", 1.0),),
    2: (("exx", 1.0), ("eyy", 1.0), ("exy", 2.0)),
    3: (("exx", 1.0), ("eyy", 1.0), ("ezz", 1.0), ("eyz", 2.0), ("exz", 2.0), ("exy", 2.0)),
}


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Rectangular box of cells, optionally masked or periodic."""

    dim: int
    cells: tuple[int, ...]
    h: tuple[float, ...]
    active_cells: np.ndarray | None = None
    periodic: bool = False

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        cells = self.cells if isinstance(self.cells, tuple) else tuple(np.atleast_1d(self.cells))
        cells = tuple(int(c) for c in cells)
        if len(cells) == 1 and self.dim > 1:
            cells = cells * self.dim
        h = self.h if isinstance(self.h, tuple) else tuple(np.atleast_1d(self.h))
        h = tuple(float(v) for v in h)
        if len(h) == 1 and self.dim > 1:
            h = h * self.dim
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "h", h)
        if len(cells) != self.dim or len(h) != self.dim:
            raise ValueError("cells and h must have one entry per dimension")
        if any(c < 2 for c in cells):
            raise ValueError(f"need at least 2 cells per axis, got {cells}")
        if any(v <= 0 for v in h):
            raise ValueError(f"spacings must be positive, got {h}")
        if self.active_cells is not None:
            if self.periodic:
                raise ValueError("cell masks and periodic wrap are mutually exclusive")
            act = np.asarray(self.active_cells, dtype=bool)
            if act.shape != self.shape_rev:
                raise ValueError(
                    f"active_cells shape {act.shape} must be {self.shape_rev} "
                    "(reversed cell counts, C order with x fastest)"
                )
            if not act.any():
                raise ValueError("active_cells mask removes every cell")
            object.__setattr__(self, "active_cells", act)

    @property
    def shape_rev(self) -> tuple[int, ...]:
        """Cell-array shape in numpy axis order (x fastest, i.e. last)."""
        return tuple(reversed(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def active_rev(self) -> np.ndarray:
        if self.active_cells is not None:
            return self.active_cells
        return np.ones(self.shape_rev, dtype=bool)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Halve the mesh width (masks refine cell-wise)."""
        act = self.active_cells
        if act is not None:
            for ax in range(self.dim):
                act = np.repeat(act, factor, axis=ax)
        return GridSpec(
            dim=self.dim,
            cells=tuple(c * factor for c in self.cells),
            h=tuple(v / factor for v in self.h),
            active_cells=act,
            periodic=self.periodic,
        )


@dataclass(frozen=True)
class DofMask:
    """Indices of boundary dofs inside a domain space of given size."""

    boundary_dofs: np.ndarray
    size: int

    def __post_init__(self) -> None:
        idx = np.asarray(self.boundary_dofs, dtype=np.int64)
        idx = np.unique(idx)
        object.__setattr__(self, "boundary_dofs", idx)
        if idx.size and (idx[0] < 0 or idx[-1] >= self.size):
            raise ValueError("boundary dof indices outside the domain index range")

    def __len__(self) -> int:
        return int(self.boundary_dofs.size)

    def boolean(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=bool)
        out[self.boundary_dofs] = True
        return out

    def interior_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.boolean())


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse matrix between two weighted dof spaces."""

    matrix: sp.spmatrix
    dom_space: str
    cod_space: str
    dom_weights: np.ndarray
    cod_weights: np.ndarray

    def __post_init__(self) -> None:
        mat = sp.csr_matrix(self.matrix)
        object.__setattr__(self, "matrix", mat)
        dw = np.asarray(self.dom_weights, dtype=float)
        cw = np.asarray(self.cod_weights, dtype=float)
        object.__setattr__(self, "dom_weights", dw)
        object.__setattr__(self, "cod_weights", cw)
        if mat.shape != (cw.size, dw.size):
            raise ValueError(
                f"matrix shape {mat.shape} does not match weights ({cw.size}, {dw.size})"
            )
        if dw.size and not dw.min() > 0 or cw.size and not cw.min() > 0:
            raise ValueError("space weights must be strictly positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u


def weighted_adjoint(op: DiscreteOperator, sign: float = 1.0) -> DiscreteOperator:
    """sign * W_dom^{-1} M^T W_cod, the adjoint in the weighted inner products."""
    mat = (
        sp.diags(1.0 / op.dom_weights)
        @ op.matrix.T.tocsr()
        @ sp.diags(op.cod_weights)
    )
    if sign != 1.0:
        mat = mat * sign
    return DiscreteOperator(
        matrix=mat,
        dom_space=op.cod_space,
        cod_space=op.dom_space,
        dom_weights=op.cod_weights,
        cod_weights=op.dom_weights,
    )


@dataclass(frozen=True)
class CompDef:
    label: str
    shape: tuple[int, ...]
    box_offset: int
    active_offset: int
    keep_local: np.ndarray  # active dof indices within this component's box


@dataclass(frozen=True)
class SpaceDef:
    """Bookkeeping for one staggered dof space (possibly several components)."""

    name: str
    comps: tuple[CompDef, ...]
    keep: np.ndarray       # active dof indices into the stacked box enumeration
    weights: np.ndarray    # per active dof
    boundary: np.ndarray   # bool per active dof

    @property
    def size(self) -> int:
        return int(self.keep.size)

    @property
    def box_size(self) -> int:
        last = self.comps[-1]
        return last.box_offset + int(np.prod(last.shape))

    def mask(self) -> DofMask:
        return DofMask(np.flatnonzero(self.boundary), self.size)


def _axis_counts(active: np.ndarray, nodal_axes: Sequence[bool]) -> np.ndarray:
    """Incident active-cell counts on a lattice nodal along the given array axes."""
    out = active.astype(np.int64)
    for ax, nodal in enumerate(nodal_axes):
        if not nodal:
            continue
        pad = [(0, 0)] * out.ndim
        pad[ax] = (1, 1)
        padded = np.pad(out, pad)
        lo = [slice(None)] * out.ndim
        hi = [slice(None)] * out.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out = padded[tuple(lo)] + padded[tuple(hi)]
    return out


def _make_space(grid: GridSpec, name: str, comps: Sequence[tuple[str, tuple[bool, ...], float]]) -> SpaceDef:
    """comps: (label, nodal flags in coordinate order x..z, weight multiplicity)."""
    act = grid.active_rev()
    vol = grid.cell_volume
    comp_defs: list[CompDef] = []
    keep_parts: list[np.ndarray] = []
    weight_parts: list[np.ndarray] = []
    boundary_parts: list[np.ndarray] = []
    box_offset = 0
    active_offset = 0
    for label, nodal_xyz, mult in comps:
        nodal_axes = tuple(reversed(nodal_xyz))  # array axes, x last
        if grid.periodic:
            shape = grid.shape_rev
            counts = np.full(shape, 2 ** sum(nodal_axes), dtype=np.int64)
        else:
            shape = tuple(
                n + 1 if nodal else n for n, nodal in zip(grid.shape_rev, nodal_axes)
            )
            counts = _axis_counts(act, nodal_axes)
        ref = 2 ** sum(nodal_axes)
        flat = counts.reshape(-1)
        keep_local = np.flatnonzero(flat > 0)
        comp_defs.append(
            CompDef(
                label=label,
                shape=shape,
                box_offset=box_offset,
                active_offset=active_offset,
                keep_local=keep_local,
            )
        )
        keep_parts.append(keep_local + box_offset)
        weight_parts.append(vol * mult * flat[keep_local] / ref)
        boundary_parts.append(flat[keep_local] < ref)
        box_offset += flat.size
        active_offset += keep_local.size
    return SpaceDef(
        name=name,
        comps=tuple(comp_defs),
        keep=np.concatenate(keep_parts),
        weights=np.concatenate(weight_parts),
        boundary=np.concatenate(boundary_parts),
    )


def _d1(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """Divided difference, n+1 nodes -> n cells (wraps when periodic)."""
    if periodic:
        mat = sp.diags([-np.ones(n), np.ones(n - 1), [1.0]], [0, 1, -(n - 1)], (n, n))
        return sp.csr_matrix(mat / h)
    e = np.ones(n)
    return sp.csr_matrix(sp.diags([-e, e], [0, 1], (n, n + 1)) / h)


def _a1(n: int, periodic: bool) -> sp.csr_matrix:
    """Two-point average, n+1 nodes -> n cells (wraps when periodic)."""
    if periodic:
        mat = sp.diags([np.ones(n), np.ones(n - 1), [1.0]], [0, 1, -(n - 1)], (n, n))
        return sp.csr_matrix(0.5 * mat)
    e = np.ones(n)
    return sp.csr_matrix(0.5 * sp.diags([e, e], [0, 1], (n, n + 1)))


def _a1_back(n: int, periodic: bool) -> sp.csr_matrix:
    """Two-point average, n cells -> nodes; second-order extrapolated ends."""
    if periodic:
        return sp.csr_matrix(_a1(n, True).T)
    if n == 1:
        return sp.csr_matrix(np.ones((2, 1)))
    body = 0.5 * sp.diags([np.ones(n - 1), np.ones(n - 1)], [0, 1], (n - 1, n))
    first = sp.csr_matrix(([1.5, -0.5], ([0, 0], [0, 1])), shape=(1, n))
    last = sp.csr_matrix(([-0.5, 1.5], ([0, 0], [n - 2, n - 1])), shape=(1, n))
    return sp.csr_matrix(sp.vstack([first, body, last]))


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr")


def _kron(*factors: sp.spmatrix) -> sp.csr_matrix:
    """Tensor stencil; factors given in coordinate order x, y, z (x fastest)."""
    return sp.csr_matrix(reduce(lambda a, b: sp.kron(b, a, format="csr"), factors))


def _restrict(mat: sp.spmatrix, keep_rows: np.ndarray, keep_cols: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(mat.tocsr()[keep_rows][:, keep_cols])


def build_spaces(grid: GridSpec) -> dict[str, SpaceDef]:
    """All staggered dof spaces of the coupled model on this grid."""
    d = grid.dim
    node = (True,) * d
    cell = (False,) * d
    spaces = {
        "velocity": _make_space(
            grid, "velocity", [(f"v{ax}", node, 1.0) for ax in "xyz"[:d]]
        ),
        "strain": _make_space(
            grid,
            "strain",
            [(label, cell, mult) for label, mult in _STRAIN_COMPS[d]],
        ),
    }
    if d == 1:
        spaces["efield"] = _make_space(grid, "efield", [("e", (True,), 1.0)])
        spaces["hfield"] = _make_space(grid, "hfield", [("h", (False,), 1.0)])
    elif d == 2:
        spaces["efield"] = _make_space(
            grid, "efield", [("ex", (False, True), 1.0), ("ey", (True, False), 1.0)]
        )
        spaces["hfield"] = _make_space(grid, "hfield", [("h", cell, 1.0)])
    else:
        spaces["efield"] = _make_space(
            grid,
            "efield",
            [
                ("ex", (False, True, True), 1.0),
                ("ey", (True, False, True), 1.0),
                ("ez", (True, True, False), 1.0),
            ],
        )
        spaces["hfield"] = _make_space(
            grid,
            "hfield",
            [
                ("hx", (True, False, False), 1.0),
                ("hy", (False, True, False), 1.0),
                ("hz", (False, False, True), 1.0),
            ],
        )
    spaces["centers"] = _make_space(
        grid, "centers", [(f"c{ax}", cell, 1.0) for ax in "xyz"[:d]]
    )
    return spaces


def _grad_box(grid: GridSpec) -> sp.csr_matrix:
    """Symmetric-gradient stencil, stacked velocity comps -> stacked strains."""
    p = grid.periodic
    if grid.dim == 1:
        return _d1(grid.cells[0], grid.h[0], p)
    if grid.dim == 2:
        nx, ny = grid.cells
        hx, hy = grid.h
        Dx, Ax = _d1(nx, hx, p), _a1(nx, p)
        Dy, Ay = _d1(ny, hy, p), _a1(ny, p)
        return sp.csr_matrix(
            sp.bmat(
                [
                    [_kron(Dx, Ay), None],
                    [None, _kron(Ax, Dy)],
                    [0.5 * _kron(Ax, Dy), 0.5 * _kron(Dx, Ay)],
                ]
            )
        )
    nx, ny, nz = grid.cells
    hx, hy, hz = grid.h
    Dx, Ax = _d1(nx, hx, p), _a1(nx, p)
    Dy, Ay = _d1(ny, hy, p), _a1(ny, p)
    Dz, Az = _d1(nz, hz, p), _a1(nz, p)
    dxx = _kron(Dx, Ay, Az)
    dyy = _kron(Ax, Dy, Az)
    dzz = _kron(Ax, Ay, Dz)
    return sp.csr_matrix(
        sp.bmat(
            [
                [dxx, None, None],
                [None, dyy, None],
                [None, None, dzz],
                [None, 0.5 * dzz, 0.5 * dyy],
                [0.5 * dzz, None, 0.5 * dxx],
                [0.5 * dyy, 0.5 * dxx, None],
            ]
        )
    )


def _curl_box(grid: GridSpec) -> sp.csr_matrix:
    """Yee circulation stencil, stacked edge comps -> stacked face comps."""
    p = grid.periodic
    if grid.dim == 2:
        nx, ny = grid.cells
        hx, hy = grid.h
        # H at cells; Ex is cell-like in x, Ey cell-like in y
        return sp.csr_matrix(
            sp.bmat([[-_kron(_eye(nx), _d1(ny, hy, p)), _kron(_d1(nx, hx, p), _eye(ny))]])
        )
    nx, ny, nz = grid.cells
    hx, hy, hz = grid.h

    def n_of(n: int) -> int:
        return n if p else n + 1

    Dx, Dy, Dz = _d1(nx, hx, p), _d1(ny, hy, p), _d1(nz, hz, p)
    # face rows: (hx, hy, hz); edge cols: (ex, ey, ez)
    fx_ez = _kron(_eye(n_of(nx)), Dy, _eye(nz))
    fx_ey = _kron(_eye(n_of(nx)), _eye(ny), Dz)
    fy_ex = _kron(_eye(nx), _eye(n_of(ny)), Dz)
    fy_ez = _kron(Dx, _eye(n_of(ny)), _eye(nz))
    fz_ey = _kron(Dx, _eye(ny), _eye(n_of(nz)))
    fz_ex = _kron(_eye(nx), Dy, _eye(n_of(nz)))
    return sp.csr_matrix(
        sp.bmat(
            [
                [None, -fx_ey, fx_ez],
                [fy_ex, None, -fy_ez],
                [-fz_ex, fz_ey, None],
            ]
        )
    )


@dataclass(frozen=True)
class OperatorPair:
    """A primal stencil with its homogeneous variant and weighted-transpose dual.

    ``hom`` is the full stencil with boundary columns zeroed; ``full_adjoint``
    is the signed weighted transpose of ``hom``: the maximal dual operator
    (divergence for the grad kind), carrying zero rows at the boundary dofs.
    ``full`` is the unmasked stencil, the parent of the domain-side boundary
    data space.  ``dual_full`` is the signed weighted transpose of ``full``,
    which is the homogeneous dual operator (boundary condition by duality);
    ``dual_mask`` flags the codomain dofs in the stencil shadow of the
    domain mask.

    Iterating yields ``(hom, full_adjoint, mask)``.
    """

    kind: str
    hom: DiscreteOperator
    full_adjoint: DiscreteOperator
    mask: DofMask
    full: DiscreteOperator
    dual_full: DiscreteOperator
    dual_mask: DofMask
    sign: float

    def __iter__(self) -> Iterator:
        return iter((self.hom, self.full_adjoint, self.mask))

    def dual(self) -> "OperatorPair":
        """The pair as seen from the codomain side.

        The weighted transpose of ``dual_full`` is exactly ``full`` and vice
        versa, so the dual of a pair is a plain field swap and ``dual()`` is
        an involution.  The dual pair's boundary data space (its ``full`` is
        the maximal dual operator) is the codomain-side space the lifting
        machinery needs.
        """
        base = self.kind[:-5] if self.kind.endswith("_dual") else self.kind + "_dual"
        return OperatorPair(
            kind=base,
            hom=self.dual_full,
            full_adjoint=self.full,
            mask=self.dual_mask,
            full=self.full_adjoint,
            dual_full=self.hom,
            dual_mask=self.mask,
            sign=self.sign,
        )


def _pair_from_parts(
    kind: str,
    stencil: sp.csr_matrix,
    dom: SpaceDef,
    cod: SpaceDef,
    sign: float,
) -> OperatorPair:
    full = DiscreteOperator(stencil, dom.name, cod.name, dom.weights, cod.weights)
    mask = dom.mask()
    zero = sp.diags((~mask.boolean()).astype(float))
    hom = DiscreteOperator(
        sp.csr_matrix(stencil @ zero), dom.name, cod.name, dom.weights, cod.weights
    )
    dual_full = weighted_adjoint(full, sign)
    touches = np.abs(stencil) @ mask.boolean().astype(float)
    dual_mask = DofMask(np.flatnonzero(touches > 0), cod.size)
    return OperatorPair(
        kind=kind,
        hom=hom,
        full_adjoint=weighted_adjoint(hom, sign),
        mask=mask,
        full=full,
        dual_full=dual_full,
        dual_mask=dual_mask,
        sign=sign,
    )


def build_pair(grid: GridSpec, kind: str) -> OperatorPair:
    """Primal/homogeneous/dual operator triple for the requested kind.

    kind="grad": symmetric gradient from nodal velocities to cell strains,
    with the dual -W^{-1}(Grad_hom)^T W playing the row-wise divergence.
    kind="curl": Yee circulation (3D) or its TE reduction (2D); the dual
    carries a plus sign.  curl in 1D is not a thing here; the scalar
    transmission-line reduction lives in :func:`scalar_em_pair_1d`.
    """
    spaces = build_spaces(grid)
    if kind == "grad":
        box = _grad_box(grid)
        dom, cod = spaces["velocity"], spaces["strain"]
        sign = -1.0
    elif kind == "curl":
        if grid.dim == 1:
            raise ValueError("curl needs dim 2 (TE reduction) or 3; see scalar_em_pair_1d")
        box = _curl_box(grid)
        dom, cod = spaces["efield"], spaces["hfield"]
        sign = 1.0
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    stencil = _restrict(box, cod.keep, dom.keep)
    return _pair_from_parts(kind, stencil, dom, cod, sign)


def scalar_em_pair_1d(grid: GridSpec) -> OperatorPair:
    """1D scalar Maxwell reduction: E at nodes, H at cells, plus-signed dual."""
    if grid.dim != 1:
        raise ValueError("scalar EM pair is the 1D reduction only")
    spaces = build_spaces(grid)
    dom, cod = spaces["efield"], spaces["hfield"]
    box = _d1(grid.cells[0], grid.h[0], grid.periodic)
    stencil = _restrict(box, cod.keep, dom.keep)
    return _pair_from_parts("curl1d", stencil, dom, cod, sign=1.0)


def boundary_closed_dual(grid: GridSpec, pair: OperatorPair) -> DiscreteOperator:
    """Maximal dual operator with consistent one-sided boundary closures.

    The transpose-built dual carries exactly zero rows at the primal boundary
    dofs (its matrix is the transpose of an operator with zero columns there),
    so it cannot be sampled pointwise at the boundary.  Diagnostics that need
    such samples (the dotted compressions of the dual operator) get each
    boundary row replaced by the row of the nearest off-boundary dof of the
    same staggering component: a constant extrapolation of the interior
    stencil, first-order consistent.  All other rows are untouched.
    """
    dual = pair.full_adjoint
    bnd = pair.mask.boundary_dofs
    if bnd.size == 0:
        return dual
    space = build_spaces(grid)[dual.cod_space]
    if space.size != dual.shape[0]:
        raise ValueError("pair was not built on this grid")
    ndim = len(space.comps[0].shape)
    comp_id = np.empty(space.size, dtype=np.int64)
    coords = np.empty((space.size, ndim), dtype=np.int64)
    for k, comp in enumerate(space.comps):
        sl = slice(comp.active_offset, comp.active_offset + comp.keep_local.size)
        comp_id[sl] = k
        coords[sl] = np.stack(np.unravel_index(comp.keep_local, comp.shape), axis=1)
    interior = ~space.boundary
    mat = dual.matrix.tocsr()
    rows, cols, vals = [], [], []
    for b in bnd:
        same = np.flatnonzero(interior & (comp_id == comp_id[b]))
        if same.size == 0:
            raise RuntimeError(
                f"component {space.comps[comp_id[b]].label} has no interior dof "
                "to close its boundary rows"
            )
        dist = np.abs(coords[same] - coords[b]).sum(axis=1)
        src = int(same[np.flatnonzero(dist == dist.min())[0]])
        lo, hi = mat.indptr[src], mat.indptr[src + 1]
        rows.append(np.full(hi - lo, b, dtype=np.int64))
        cols.append(mat.indices[lo:hi].astype(np.int64))
        vals.append(mat.data[lo:hi])
    closure = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=mat.shape,
    )
    return DiscreteOperator(
        mat + closure, dual.dom_space, dual.cod_space, dual.dom_weights, dual.cod_weights
    )


def collocated_curl(grid: GridSpec, pair: OperatorPair) -> DiscreteOperator:
    """Square curl realization on the edge space itself.

    The staggered circulation stencil lands on face dofs; averaging each face
    component back to the edge locations of the same coordinate direction
    yields a map from edge fields to edge fields whose interior rows are
    second-order collocations of the continuum curl.  Boundary nodes use the
    unique two-cell extrapolation of matching order, so the consistency order
    is uniform up to the boundary.  The boundary-space compression of this
    operator carries the skew-symmetry defect that the refinement diagnostics
    track; the plain rectangular stencil cannot, since its compression pairs
    two different half-staggered spaces.
    """
    full = pair.full
    if (full.dom_space, full.cod_space) != ("efield", "hfield"):
        raise ValueError("square curl realization needs an edge-to-face pair")
    spaces = build_spaces(grid)
    dom, cod = spaces["hfield"], spaces["efield"]
    if full.shape != (dom.size, cod.size):
        raise ValueError("pair was not built on this grid")
    p = grid.periodic
    if grid.dim == 1:
        box = _a1_back(grid.cells[0], p)
    elif grid.dim == 2:
        nx, ny = grid.cells
        box = sp.bmat(
            [
                [_kron(_eye(nx), _a1_back(ny, p))],
                [_kron(_a1_back(nx, p), _eye(ny))],
            ]
        )
    else:
        nx, ny, nz = grid.cells
        box = sp.bmat(
            [
                [_kron(_a1(nx, p), _a1_back(ny, p), _a1_back(nz, p)), None, None],
                [None, _kron(_a1_back(nx, p), _a1(ny, p), _a1_back(nz, p)), None],
                [None, None, _kron(_a1_back(nx, p), _a1_back(ny, p), _a1(nz, p))],
            ]
        )
    average = _restrict(sp.csr_matrix(box), cod.keep, dom.keep)
    return DiscreteOperator(
        sp.csr_matrix(average @ full.matrix),
        cod.name,
        cod.name,
        cod.weights,
        cod.weights,
    )


def edge_to_center_average(grid: GridSpec) -> DiscreteOperator:
    """Componentwise averaging of edge fields to cell-center vectors."""
    spaces = build_spaces(grid)
    p = grid.periodic
    if grid.dim == 1:
        box = _a1(grid.cells[0], p)
    elif grid.dim == 2:
        nx, ny = grid.cells
        box = sp.bmat(
            [
                [_kron(_eye(nx), _a1(ny, p)), None],
                [None, _kron(_a1(nx, p), _eye(ny))],
            ]
        )
    else:
        nx, ny, nz = grid.cells
        box = sp.bmat(
            [
                [_kron(_eye(nx), _a1(ny, p), _a1(nz, p)), None, None],
                [None, _kron(_a1(nx, p), _eye(ny), _a1(nz, p)), None],
                [None, None, _kron(_a1(nx, p), _a1(ny, p), _eye(nz))],
            ]
        )
    dom, cod = spaces["efield"], spaces["centers"]
    stencil = _restrict(sp.csr_matrix(box), cod.keep, dom.keep)
    return DiscreteOperator(stencil, dom.name, cod.name, dom.weights, cod.weights)


def containment_check(
    hom: DiscreteOperator, full: DiscreteOperator, mask: DofMask
) -> float:
    """Max codomain-norm discrepancy of full vs hom on zero-extended interior dofs.

    Zero certifies that the homogeneous operator is the restriction of the
    full one, i.e. the discrete domain inclusion.
    """
    if hom.shape != full.shape:
        raise ValueError(f"shape mismatch {hom.shape} vs {full.shape}")
    if mask.size != hom.shape[1]:
        raise ValueError("mask indexes a different domain size")
    diff = (full.matrix - hom.matrix).tocsc()[:, mask.interior_dofs()]
    if diff.nnz == 0:
        return 0.0
    sq = diff.multiply(diff)
    col_norms = np.sqrt(np.asarray(sq.T @ full.cod_weights).ravel())
    return float(np.max(col_norms))


def assemble_skew_block(
    off_diagonal_blocks: Sequence[tuple[int, int, DiscreteOperator]],
    spaces: Sequence[tuple[str, np.ndarray]] | None = None,
) -> DiscreteOperator:
    """Block operator with given strictly-lower blocks and skew-completed uppers.

    Each upper block is the negative weighted transpose of the mirrored lower
    one, so W A = -(W A)^T holds by construction.  ``spaces`` pins the block
    structure (name, weights) explicitly; otherwise it is inferred from the
    blocks, in which case every block row/column must be touched.
    """
    seen: set[tuple[int, int]] = set()
    for r, c, _ in off_diagonal_blocks:
        if not 0 <= c < r:
            raise ValueError(
                f"block slot ({r},{c}) is not strictly lower triangular; "
                "diagonal or upper placement of a raw block would break skewness"
            )
        if (r, c) in seen:
            raise ValueError(f"slot ({r},{c}) assigned twice")
        seen.add((r, c))
    if spaces is None:
        if not off_diagonal_blocks:
            return DiscreteOperator(
                sp.csr_matrix((0, 0)), "empty", "empty", np.empty(0), np.empty(0)
            )
        n_blocks = max(r for r, _, _ in off_diagonal_blocks) + 1
        names: list[str | None] = [None] * n_blocks
        weights: list[np.ndarray | None] = [None] * n_blocks
        for r, c, op in off_diagonal_blocks:
            for idx, name, w in ((r, op.cod_space, op.cod_weights), (c, op.dom_space, op.dom_weights)):
                if names[idx] is None:
                    names[idx], weights[idx] = name, w
                elif weights[idx].shape != w.shape or not np.array_equal(weights[idx], w):
                    raise ValueError(f"conflicting weights for block {idx} ({names[idx]} vs {name})")
        if any(w is None for w in weights):
            missing = [i for i, w in enumerate(weights) if w is None]
            raise ValueError(f"blocks {missing} have no operator; pass spaces= to pin them")
    else:
        names = [name for name, _ in spaces]
        weights = [np.asarray(w, dtype=float) for _, w in spaces]
        n_blocks = len(spaces)

    grid_blocks: list[list[sp.spmatrix | None]] = [
        [None] * n_blocks for _ in range(n_blocks)
    ]
    for r, c, op in off_diagonal_blocks:
        if r >= n_blocks:
            raise ValueError(f"block row {r} outside the declared {n_blocks} spaces")
        if op.shape != (weights[r].size, weights[c].size):
            raise ValueError(f"block at ({r},{c}) has shape {op.shape}, expected "
                             f"({weights[r].size}, {weights[c].size})")
        if not np.array_equal(op.cod_weights, weights[r]) or not np.array_equal(
            op.dom_weights, weights[c]
        ):
            raise ValueError(f"block at ({r},{c}) carries incompatible weights")
        grid_blocks[r][c] = op.matrix
        grid_blocks[c][r] = -(
            sp.diags(1.0 / weights[c]) @ op.matrix.T.tocsr() @ sp.diags(weights[r])
        )
    for i in range(n_blocks):
        if all(b is None for b in grid_blocks[i]) and all(
            row[i] is None for row in grid_blocks
        ):
            grid_blocks[i][i] = sp.csr_matrix((weights[i].size, weights[i].size))
    full_weights = np.concatenate(weights) if n_blocks else np.empty(0)
    name = "+".join(str(n) for n in names)
    mat = sp.csr_matrix(sp.bmat(grid_blocks)) if n_blocks else sp.csr_matrix((0, 0))
    return DiscreteOperator(mat, name, name, full_weights, full_weights)


def dump_coo(op: DiscreteOperator, path: str) -> None:
    """Debug dump in `row col value` coordinate text format."""
    coo = op.matrix.tocoo()
    with open(path, "w", encoding="ascii") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
