"""End-to-end acceptance checks, one test per shipped guarantee.

Each test pins a user-facing contract of the package on desk-scale grids:
structural skewness and symmetry of the assembled operators, positivity
certificates with the diagonalizing congruence, causality and certified
stability of the solver, boundary-space dimensions and refinement trends,
the boundary-symbol inverse, impedance-wall dynamics, covariance under
congruence transforms, data lifting, and the decoupling of the elastic and
electromagnetic subsystems.  The tolerances asserted here are part of the
package contract; run with ``pytest -v tests/test_acceptance.py`` to get
one pass/fail line per guarantee.
"""

import numpy as np
import scipy.sparse as sp

from pemlab.bdspace import (
    adjoint_identity_report,
    compute_boundary_space,
    dotted_operator,
)
from pemlab.evosolve import EvoSystem, solve, state_operator
from pemlab.material import (
    Coefficients,
    RationalFamily,
    StateLayout,
    check_posdef,
    congruence_transform,
    gauss_congruence,
)
from pemlab.piezo import (
    BoundaryData,
    LeontovichParams,
    S_of_z,
    boundary_residual,
    build_dirichlet_system,
    build_leontovich_system,
    lift_boundary_data,
    lift_initial_data,
    original_of_z,
    random_leontovich_params,
    random_skew_orthogonal,
)
from pemlab.spatialops import (
    DiscreteOperator,
    GridSpec,
    boundary_closed_dual,
    build_pair,
    collocated_curl,
)
from pemlab.timeweight import (
    TimeGrid,
    Trajectory,
    causality_defect,
    cutoff,
    weighted_norm,
)

SPIN = np.array([[0.0, -1.0], [1.0, 0.0]])


def unit_grid(dim, n):
    return GridSpec(dim=dim, cells=(n,) * dim, h=(1.0 / n,) * dim)


def weighted_defects(system):
    """Relative weighted skewness of A and symmetry defect of M0."""
    w = sp.diags(system.layout.weights)
    wa = w @ system.A.matrix
    wm = w @ system.M0.matrix
    skew = sp.linalg.norm(wa + wa.T) / max(sp.linalg.norm(wa), 1.0)
    sym = sp.linalg.norm(wm - wm.T) / max(sp.linalg.norm(wm), 1.0)
    return skew, sym


def block_source(system, tg, rng, names=("velocity", "efield"), pad=0):
    layout = system.layout
    vals = np.zeros((tg.n_steps, system.size))
    for name in names:
        blk = layout.block(name)
        lo, hi = blk.start + pad, blk.stop - pad
        vals[:, lo:hi] = rng.standard_normal((tg.n_steps, hi - lo))
    return Trajectory(tg, vals, layout.weights)


def both_builds(grid, coeffs):
    return (
        build_dirichlet_system(grid, coeffs),
        build_leontovich_system(grid, coeffs, LeontovichParams(Q=0.4, alpha=0.2)),
    )


def test_01_weighted_skewness_and_symmetry():
    """A is weighted-skew and M0 weighted-symmetric at roundoff, all builds."""
    for dim, n in ((1, 16), (2, 6), (3, 4)):
        for system in both_builds(unit_grid(dim, n), Coefficients(sigma=1.0)):
            skew, sym = weighted_defects(system)
            assert skew <= 1e-13
            assert sym <= 1e-13


def test_02_positivity_certificate_and_gauss_residual():
    """Default materials certify at every rate; the congruence diagonalizes M0."""
    rng = np.random.default_rng(202)
    for dim, n in ((1, 16), (2, 6)):
        grid = unit_grid(dim, n)
        lay = build_dirichlet_system(grid, Coefficients()).layout
        nt, ne = lay.size_of("strain"), lay.size_of("efield")
        e = 0.5 * rng.standard_normal((nt, ne)) / np.sqrt(ne)
        system = build_dirichlet_system(
            grid, Coefficients(e=e, sigma=1.0), nu_range=(1.0, 2.0, 4.0)
        )
        cert = system.layout.meta["certificate"]
        assert cert.c0 > 0
        vals = [val for _, val in cert.per_nu]
        assert [nu for nu, _ in cert.per_nu] == [1.0, 2.0, 4.0]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        lay = system.layout
        sl = slice(lay.offset("strain"), lay.block("efield").stop)
        sub = system.M0.matrix.toarray()[sl, sl]
        w_sub = lay.weights[sl]
        blk = DiscreteOperator(sp.csr_matrix(sub), "b", "b", w_sub, w_sub)
        wop, _ = gauss_congruence(blk, nt)
        wmat = wop.matrix.toarray()
        wadj = (wmat.T * w_sub[None, :]) / w_sub[:, None]
        # with identity elasticity and permittivity the diagonalized block is 1
        resid = np.linalg.norm(wmat @ sub @ wadj - np.eye(nt + ne), 2)
        assert resid <= 1e-12 * np.linalg.norm(sub, 2)


def test_03_causal_dependence_on_sources():
    """Sources supported on t >= a produce no response before a."""
    tg = TimeGrid(nu=1.0, dt=0.05, n_steps=24)
    a = 0.6
    systems = []
    for dim, n in ((1, 24), (2, 6)):
        systems.extend(both_builds(unit_grid(dim, n), Coefficients(sigma=1.0)))
    for k, system in enumerate(systems):
        assert system.c0 > 0
        F = block_source(system, tg, np.random.default_rng(300 + k))
        defect = causality_defect(lambda src: solve(system, src), F, a)
        assert defect <= 1e-14 * weighted_norm(cutoff(F, a, "after"))


def test_04_certified_stability_bound():
    """Weighted solution norm stays within (1 + 1e-6)/c0 of the source norm."""
    tg = TimeGrid(nu=1.0, dt=0.02, n_steps=30)
    for system in both_builds(unit_grid(1, 16), Coefficients(sigma=1.0)):
        assert system.c0 > 0
        bound = (1 + 1e-6) / system.c0
        for seed in range(20):
            F = block_source(system, tg, np.random.default_rng(400 + seed))
            assert solve(system, F).stability_ratio <= bound


def test_05_boundary_space_dimension_and_span():
    """1D spaces are two-dimensional and span {cosh, sinh}; masked grids
    carry exactly one basis vector per boundary dof."""
    errs = {"cosh": [], "sinh": []}
    for n in (8, 16, 32):
        bs = compute_boundary_space(build_pair(unit_grid(1, n), "grad"))
        assert bs.dim == 2
        x = np.linspace(0.0, 1.0, n + 1)
        for label, f in (("cosh", np.cosh), ("sinh", np.sinh)):
            vals = f(x)
            k = bs.graph_metric
            resid = vals - bs.basis @ (bs.basis.T @ (k @ vals))
            errs[label].append(
                np.sqrt(resid @ (k @ resid)) / np.sqrt(vals @ (k @ vals))
            )
    for seq in errs.values():
        orders = [np.log2(seq[i] / seq[i + 1]) for i in range(2)]
        assert min(orders) >= 1.9
    act2 = np.ones((4, 5), dtype=bool)
    act2[0, :2] = False
    act3 = np.ones((3, 4, 3), dtype=bool)
    act3[0, 0, 0] = False
    masked = (
        build_pair(GridSpec(2, (5, 4), (0.2, 0.25), active_cells=act2), "grad"),
        build_pair(GridSpec(3, (3, 4, 3), (0.3, 0.25, 0.3), active_cells=act3), "curl"),
    )
    for pair in masked:
        assert compute_boundary_space(pair).dim == pair.mask.boundary_dofs.size


def test_06_dotted_operator_trends():
    """Compressed gradient/divergence adjointness and unitarity defects
    shrink by 1.5x per 1D halving; the compressed-curl symmetry defect
    decreases on the 3D ladder."""
    defects, units = [], []
    for n in (8, 16, 32, 64):
        g = unit_grid(1, n)
        pair = build_pair(g, "grad")
        ng = compute_boundary_space(pair)
        nd = compute_boundary_space(pair.dual())
        gd = dotted_operator(ng, nd, pair.full)
        dv = dotted_operator(nd, ng, boundary_closed_dual(g, pair))
        defects.append(adjoint_identity_report(gd, dv))
        units.append(np.linalg.norm(gd.matrix.T @ gd.matrix - np.eye(2), 2))
    for seq in (defects, units):
        ratios = [seq[i] / seq[i + 1] for i in range(3)]
        assert min(ratios) >= 1.5
    curl_defects = []
    for n in (4, 6, 8):
        g = unit_grid(3, n)
        pair = build_pair(g, "curl")
        ne = compute_boundary_space(pair)
        sq = dotted_operator(ne, ne, collocated_curl(g, pair))
        curl_defects.append(
            adjoint_identity_report(sq, sq, sign=-1.0) / np.linalg.norm(sq.matrix, 2)
        )
    assert all(b < a for a, b in zip(curl_defects, curl_defects[1:]))
    np.testing.assert_allclose(
        curl_defects, [1.107147, 1.050760, 1.035893], rtol=5e-4
    )


def test_07_boundary_symbol_inverse():
    """S(z) inverts the uninverted wall block; scalar entries are exact."""
    rng = np.random.default_rng(707)
    for _ in range(10):
        nb = int(rng.choice([2, 4, 6]))
        ng = int(rng.integers(2, 6))
        comp = random_skew_orthogonal(nb, rng)
        params = random_leontovich_params(ng, nb, rng, q_scale=0.8, alpha_scale=0.5)
        for z in (0.0, 0.1, 0.5):
            s = S_of_z(params, comp, z)
            m = original_of_z(params, comp, z)
            assert np.linalg.norm(s @ m - np.eye(nb + ng), 2) <= 1e-10
    s0 = S_of_z(LeontovichParams(Q=2.0, alpha=0.0), [[1.0]], 0.0)
    np.testing.assert_allclose(
        s0, [[1.0 + 4.0 / 5.0, 2.0 / 5.0], [2.0 / 5.0, 1.0 / 5.0]], atol=1e-14
    )


def test_08_wall_law_dynamics():
    """Certified wall runs satisfy the impedance law at every step, and the
    uncoupled wall reduces to pure trace projections."""
    rng = np.random.default_rng(808)
    params = random_leontovich_params(2, 2, rng, 0.6, 0.3)
    system = build_leontovich_system(
        unit_grid(1, 24), Coefficients(sigma=1.0), params, curl_comp=SPIN
    )
    assert system.c0 > 0
    tg = TimeGrid(nu=1.0, dt=0.01, n_steps=40)
    report = solve(system, block_source(system, tg, rng, pad=4))
    res = boundary_residual(system, report)
    assert np.linalg.norm(res.values, axis=1).max() <= 1e-8

    uncoupled = build_leontovich_system(
        unit_grid(1, 24), Coefficients(), LeontovichParams()
    )
    layout = uncoupled.layout
    F = block_source(uncoupled, tg, np.random.default_rng(809), pad=6)
    vals = solve(uncoupled, F).trajectory.values
    bs_g = layout.meta["bspaces"]["grad"]
    bs_e = layout.meta["bspaces"]["em"]
    proj_g = (bs_g.graph_metric @ bs_g.basis).T
    proj_e = (bs_e.graph_metric @ bs_e.basis).T
    tau_t = vals[:, layout.block("strain_bnd")]
    tau_h = vals[:, layout.block("efield_bnd")]
    v = vals[:, layout.block("velocity")]
    efield = vals[:, layout.block("efield")]
    assert np.abs(tau_t + v @ proj_g.T).max() <= 1e-10
    assert np.abs(tau_h + efield @ proj_e.T).max() <= 1e-10


def test_09_congruence_covariance():
    """Transformed systems solve to the adjoint-transformed solution and
    keep at least the guaranteed share of the certificate."""
    system = build_dirichlet_system(unit_grid(1, 12), Coefficients(sigma=1.0))
    n = system.size
    w = system.layout.weights
    tg = TimeGrid(nu=1.0, dt=0.02, n_steps=25)
    for seed in (900, 901):
        rng = np.random.default_rng(seed)
        wmat = np.eye(n) + 0.2 * rng.standard_normal((n, n)) / np.sqrt(n)
        out = congruence_transform(system, wmat)
        F = block_source(system, tg, rng)
        base = solve(system, F).trajectory.values
        transformed = solve(out, F.replace_values(F.values @ wmat.T)).trajectory.values
        wadj = (wmat.T * w[None, :]) / w[:, None]
        expected = np.linalg.solve(wadj, base.T).T
        rel = np.linalg.norm(transformed - expected) / np.linalg.norm(expected)
        assert rel <= 1e-8
        hat = (np.sqrt(w)[:, None] * wmat) / np.sqrt(w)[None, :]
        smin = np.linalg.svd(hat, compute_uv=False)[-1]
        fresh = check_posdef(out.M0, out.M1, (1.0, 2.0, 4.0)).c0
        assert fresh >= system.c0 * smin**2 - 1e-10


def _toy_system(mass, skew, conduct):
    n = np.asarray(mass).shape[0]
    layout = StateLayout(("field",), (n,), np.ones(n))
    M1 = RationalFamily(dim=n, instant=sp.csr_matrix(np.asarray(conduct, dtype=float)))
    M0 = state_operator(mass, layout)
    A = state_operator(skew, layout)
    return EvoSystem(M0, M1, A, layout, c0=check_posdef(M0, M1, (1.0,)).c0)


def _initial_errors(system, u0, exact):
    errs = []
    for dt in (0.01, 0.005):
        n_steps = int(round(1.0 / dt))
        tg = TimeGrid(nu=1.0, dt=dt, n_steps=n_steps, t0=dt)
        F = Trajectory(tg, np.zeros((n_steps, system.size)))
        rhs, reconstruct = lift_initial_data(system, u0, F)
        full = reconstruct(solve(system, rhs).trajectory)
        errs.append(np.abs(full.values - exact(tg.times)).max())
    return errs


def test_10_data_lifting():
    """Boundary lifting reproduces the prescribed traces exactly, commutes
    with the gradient on extensions, and initial lifting converges on
    closed-form decay and rotation."""
    for dim, n in ((1, 32), (2, 6)):
        system = build_dirichlet_system(unit_grid(dim, n), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.01, n_steps=20)
        F = Trajectory(tg, np.zeros((20, system.size)), system.layout.weights)
        meta = system.layout.meta
        grad, em = meta["pairs"]["grad"], meta["pairs"]["em"]
        bs_g = compute_boundary_space(grad)
        bs_e = compute_boundary_space(em)
        t = tg.times
        vb = np.sin(2 * t)[:, None] * (1.0 + np.arange(bs_g.dim))[None, :] / bs_g.dim
        eb = (1 - np.cos(t))[:, None] * (1.0 - 0.5 * np.arange(bs_e.dim))[None, :]
        data = BoundaryData(Trajectory(tg, vb), Trajectory(tg, eb))
        rhs, reconstruct = lift_boundary_data(system, data, F)
        full = reconstruct(solve(system, rhs).trajectory)
        layout_full = meta["full"]["layout"]
        v_ext = data.v_bnd.values @ bs_g.basis.T
        e_ext = data.E_bnd.values @ bs_e.basis.T
        bv, be = grad.mask.boundary_dofs, em.mask.boundary_dofs
        v_traj = full.values[:, layout_full.block("velocity")]
        e_traj = full.values[:, layout_full.block("efield")]
        assert np.abs(v_traj[:, bv] - v_ext[:, bv]).max() <= 1e-12
        assert np.abs(e_traj[:, be] - e_ext[:, be]).max() <= 1e-12

    grad = build_pair(unit_grid(1, 32), "grad")
    bs_g = compute_boundary_space(grad)
    bs_div = compute_boundary_space(grad.dual())
    grad_dot = dotted_operator(bs_g, bs_div, grad.full)
    coords = np.array([0.7, -0.3])
    lhs = grad.full.matrix @ (bs_g.basis @ coords)
    rhs_vec = bs_div.basis @ (grad_dot.matrix @ coords)
    assert np.abs(lhs - rhs_vec).max() <= 1e-12

    decay = _toy_system([[1.0]], [[0.0]], [[1.0]])
    errs = _initial_errors(decay, np.array([1.0]), lambda t: np.exp(-t)[:, None])
    assert errs[0] / errs[1] >= 2**0.9
    rotation = _toy_system(np.eye(2), SPIN, np.zeros((2, 2)))
    errs = _initial_errors(
        rotation,
        np.array([1.0, 0.0]),
        lambda t: np.stack([np.cos(t), -np.sin(t)], axis=1),
    )
    assert errs[0] / errs[1] >= 2**0.9


def test_11_elastic_electromagnetic_decoupling():
    """Without coupling, conductivity, or wall impedance, elastic sources
    leave the electromagnetic fields at exact zero."""
    tg = TimeGrid(nu=1.0, dt=0.02, n_steps=25)
    rng = np.random.default_rng(111)
    systems = (
        build_dirichlet_system(unit_grid(2, 6), Coefficients()),
        build_leontovich_system(unit_grid(1, 24), Coefficients(), LeontovichParams()),
    )
    for system in systems:
        F = block_source(system, tg, rng, names=("velocity", "strain"))
        vals = solve(system, F).trajectory.values
        lay = system.layout
        for name in ("efield", "hfield", "efield_bnd"):
            if name in lay.names:
                assert np.abs(vals[:, lay.block(name)]).max() <= 1e-12
