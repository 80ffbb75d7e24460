"""Coupled-system assembly: skewness, certificates, boundary law, lifting."""

import numpy as np
import pytest
import scipy.sparse as sp

from pemlab.bdspace import compute_boundary_space, dotted_operator
from pemlab.evosolve import EvoSystem, SolveReport, solve, state_operator
from pemlab.material import Coefficients, RationalFamily, StateLayout, check_posdef
from pemlab.piezo import (
    BoundaryData,
    LeontovichParams,
    PiezoState,
    S_of_z,
    boundary_residual,
    build_dirichlet_system,
    build_leontovich_system,
    lift_boundary_data,
    lift_initial_data,
    original_of_z,
    random_leontovich_params,
    random_skew_orthogonal,
    trace_compatibility,
)
from pemlab.spatialops import GridSpec
from pemlab.timeweight import TimeGrid, Trajectory, causality_defect

SPIN = np.array([[0.0, -1.0], [1.0, 0.0]])


def unit_grid(dim, n):
    return GridSpec(dim=dim, cells=(n,) * dim, h=(1.0 / n,) * dim)


def weighted_skew_defect(system):
    w = sp.diags(system.layout.weights)
    wa = w @ system.A.matrix
    return sp.linalg.norm(wa + wa.T) / max(sp.linalg.norm(wa), 1.0)


def weighted_sym_defect(system):
    w = sp.diags(system.layout.weights)
    wm = w @ system.M0.matrix
    return sp.linalg.norm(wm - wm.T) / max(sp.linalg.norm(wm), 1.0)


def block_source(system, tg, rng, names=("velocity", "efield"), pad=0):
    """Random source on the named blocks, optionally away from block edges."""
    layout = system.layout
    vals = np.zeros((tg.n_steps, system.size))
    for name in names:
        blk = layout.block(name)
        lo, hi = blk.start + pad, blk.stop - pad
        vals[:, lo:hi] = rng.standard_normal((tg.n_steps, hi - lo))
    return Trajectory(tg, vals, layout.weights)


class TestStateContainers:
    def test_roundtrip_without_traces(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients())
        rng = np.random.default_rng(0)
        vec = rng.standard_normal(system.size)
        state = PiezoState.from_vector(system.layout, vec)
        assert state.tau_T is None and state.tau_H is None
        np.testing.assert_array_equal(state.to_vector(system.layout), vec)

    def test_roundtrip_with_traces(self):
        system = build_leontovich_system(unit_grid(1, 8), Coefficients(), LeontovichParams())
        rng = np.random.default_rng(1)
        vec = rng.standard_normal(system.size)
        state = PiezoState.from_vector(system.layout, vec)
        assert state.tau_T.size == 2 and state.tau_H.size == 2
        np.testing.assert_array_equal(state.to_vector(system.layout), vec)

    def test_traces_come_in_pairs(self):
        with pytest.raises(ValueError, match="together"):
            PiezoState(v=np.zeros(3), T=np.zeros(3), E=np.zeros(3), H=np.zeros(3),
                       tau_T=np.zeros(2))

    def test_layout_trace_mismatch(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients())
        state = PiezoState(v=np.zeros(7), T=np.zeros(8), E=np.zeros(7), H=np.zeros(8),
                           tau_T=np.zeros(2), tau_H=np.zeros(2))
        with pytest.raises(ValueError, match="trace"):
            state.to_vector(system.layout)

    def test_field_size_mismatch(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients())
        state = PiezoState(v=np.zeros(3), T=np.zeros(8), E=np.zeros(7), H=np.zeros(8))
        with pytest.raises(ValueError, match="velocity"):
            state.to_vector(system.layout)

    def test_vector_length_checked(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients())
        with pytest.raises(ValueError, match="entries"):
            PiezoState.from_vector(system.layout, np.zeros(3))


class TestParams:
    def test_scalar_broadcast(self):
        q, a = LeontovichParams(Q=2.0, alpha=0.5).resolved(3, 2)
        np.testing.assert_allclose(q, 2.0 * np.eye(3, 2))
        np.testing.assert_allclose(a, 0.5 * np.eye(3))

    def test_shape_validation(self):
        params = LeontovichParams(Q=np.ones((2, 3)), alpha=np.eye(2))
        with pytest.raises(ValueError, match="Q has shape"):
            params.resolved(3, 3)
        with pytest.raises(ValueError, match="alpha has shape"):
            LeontovichParams(Q=np.ones((3, 3)), alpha=np.eye(2)).resolved(3, 3)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            LeontovichParams(Q=np.array([[np.nan]]))

    def test_random_params_norms(self):
        rng = np.random.default_rng(2)
        params = random_leontovich_params(5, 3, rng, q_scale=0.7, alpha_scale=0.4)
        svals = np.linalg.svd(params.Q, compute_uv=False)
        np.testing.assert_allclose(svals[: min(5, 3)], 0.7, atol=1e-12)
        np.testing.assert_allclose(params.alpha, params.alpha.T)
        assert np.linalg.eigvalsh(params.alpha)[0] >= 0

    def test_skew_orthogonal_properties(self):
        rng = np.random.default_rng(3)
        for dim in (2, 4, 8):
            c = random_skew_orthogonal(dim, rng)
            np.testing.assert_allclose(c + c.T, 0, atol=1e-14)
            np.testing.assert_allclose(c @ c, -np.eye(dim), atol=1e-13)

    def test_skew_orthogonal_odd_dim(self):
        with pytest.raises(ValueError, match="odd"):
            random_skew_orthogonal(3, np.random.default_rng(0))


class TestDirichletBuild:
    def test_layout_sizes_1d(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients())
        assert system.layout.names == ("velocity", "strain", "efield", "hfield")
        # interior nodes only for v and E, all cells for T and H
        assert system.layout.sizes == (15, 16, 15, 16)

    @pytest.mark.parametrize("dim,n", [(1, 16), (2, 6), (3, 4)])
    def test_operator_defects(self, dim, n):
        system = build_dirichlet_system(unit_grid(dim, n), Coefficients(sigma=1.0))
        assert weighted_skew_defect(system) <= 1e-13
        assert weighted_sym_defect(system) <= 1e-13

    def test_default_certificate(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients(sigma=1.0))
        cert = system.layout.meta["certificate"]
        assert system.c0 == cert.c0 == pytest.approx(1.0)
        rates, values = zip(*cert.per_nu)
        assert rates == (1.0, 2.0, 4.0)
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert cert.null_dim == 0

    def test_random_coupling_certificate(self):
        # bounded random coupling keeps the system certified at every rate
        rng = np.random.default_rng(4)
        probe = build_dirichlet_system(unit_grid(1, 16), Coefficients())
        nt = probe.layout.size_of("strain")
        ne = probe.layout.size_of("efield")
        emat = 0.5 * rng.standard_normal((nt, ne)) / np.sqrt(ne)
        system = build_dirichlet_system(
            unit_grid(1, 16), Coefficients(e=emat, sigma=1.0)
        )
        cert = system.layout.meta["certificate"]
        assert cert.c0 > 0
        values = [v for _, v in cert.per_nu]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_zero_source_zero_solution(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=12)
        report = solve(system, Trajectory(tg, np.zeros((12, system.size))))
        np.testing.assert_array_equal(report.trajectory.values, 0.0)

    @pytest.mark.parametrize("dim,n", [(1, 24), (2, 6)])
    def test_elastic_source_leaves_em_dark(self, dim, n):
        # e = 0 and sigma = 0 decouple the two halves exactly
        system = build_dirichlet_system(unit_grid(dim, n), Coefficients())
        tg = TimeGrid(nu=1.0, dt=0.02, n_steps=25)
        rng = np.random.default_rng(5)
        F = block_source(system, tg, rng, names=("velocity", "strain"))
        report = solve(system, F)
        layout = system.layout
        em = np.hstack([
            report.trajectory.values[:, layout.block("efield")],
            report.trajectory.values[:, layout.block("hfield")],
        ])
        assert np.abs(em).max() <= 1e-12
        elastic = report.trajectory.values[:, layout.block("velocity")]
        assert np.abs(elastic).max() > 1e-3

    def test_causal_and_stable(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=24)
        rng = np.random.default_rng(6)
        F = block_source(system, tg, rng)
        from pemlab.timeweight import weighted_norm

        defect = causality_defect(lambda src: solve(system, src), F, a=0.6)
        assert defect <= 1e-14 * weighted_norm(F)
        for seed in range(3):
            src = block_source(system, tg, np.random.default_rng(seed))
            report = solve(system, src)
            assert report.stability_ratio <= (1 + 1e-6) / system.c0


class TestLeontovichBuild:
    def test_layout_and_trace_dims(self):
        grid = unit_grid(1, 16)
        system = build_leontovich_system(grid, Coefficients(), LeontovichParams())
        assert system.layout.names == (
            "velocity", "strain", "strain_bnd", "efield", "hfield", "efield_bnd"
        )
        assert system.layout.sizes == (17, 16, 2, 17, 16, 2)
        for name in ("strain_bnd", "efield_bnd"):
            blk = system.layout.block(name)
            np.testing.assert_array_equal(system.layout.weights[blk], 1.0)

    @staticmethod
    def trace_dims(dim, n):
        probe = build_leontovich_system(unit_grid(dim, n), Coefficients(), LeontovichParams())
        return (probe.layout.size_of("strain_bnd"), probe.layout.size_of("efield_bnd"))

    @pytest.mark.parametrize("dim,n", [(1, 16), (2, 6), (3, 4)])
    def test_extended_skewness(self, dim, n):
        rng = np.random.default_rng(7)
        ng, ne = self.trace_dims(dim, n)
        params = random_leontovich_params(ng, ne, rng, 0.6, 0.3)
        system = build_leontovich_system(unit_grid(dim, n), Coefficients(sigma=1.0), params)
        assert weighted_skew_defect(system) <= 1e-13
        assert weighted_sym_defect(system) <= 1e-13

    @pytest.mark.parametrize("dim,n", [(1, 16), (2, 6), (3, 4)])
    def test_certificate_matches_trace_bound(self, dim, n):
        # orthogonal-factor Q attains lambda_min(sym S(0)) = (1+|Q|^2)^{-1}
        rng = np.random.default_rng(8)
        ng, ne = self.trace_dims(dim, n)
        params = random_leontovich_params(ng, ne, rng, q_scale=0.7, alpha_scale=0.4)
        extended = build_leontovich_system(unit_grid(dim, n), Coefficients(sigma=1.0), params)
        cert = extended.layout.meta["certificate"]
        assert cert.null_dim == ng + ne
        assert cert.null_space_bound == pytest.approx(1.0 / 1.49, rel=1e-9)
        assert extended.c0 == pytest.approx(1.0 / 1.49, rel=1e-9)
        values = [v for _, v in cert.per_nu]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_default_compression_algebra(self):
        system = build_leontovich_system(unit_grid(2, 6), Coefficients(), LeontovichParams())
        c = system.layout.meta["curl_comp"]
        np.testing.assert_allclose(c + c.T, 0, atol=1e-14)
        evals = np.linalg.eigvalsh(c @ c)
        # square is -1 on the range and 0 on the kernel
        assert np.all((np.abs(evals) <= 1e-10) | (np.abs(evals + 1) <= 1e-10))

    def test_default_compression_1d_is_spin(self):
        system = build_leontovich_system(unit_grid(1, 16), Coefficients(), LeontovichParams())
        c = system.layout.meta["curl_comp"]
        np.testing.assert_allclose(np.abs(c), np.abs(SPIN), atol=1e-12)
        np.testing.assert_allclose(c @ c, -np.eye(2), atol=1e-12)

    def test_curl_comp_override_validated(self):
        with pytest.raises(ValueError, match="trace space has dim"):
            build_leontovich_system(
                unit_grid(1, 16), Coefficients(), LeontovichParams(),
                curl_comp=np.zeros((3, 3)),
            )

    def test_uncoupled_traces_bound_is_one(self):
        system = build_leontovich_system(unit_grid(1, 16), Coefficients(), LeontovichParams())
        cert = system.layout.meta["certificate"]
        assert cert.null_space_bound == pytest.approx(1.0, rel=1e-12)


class TestBoundarySymbol:
    def test_scalar_entries_frozen(self):
        S = S_of_z(LeontovichParams(Q=2.0, alpha=0.0), 1.0, 0.0)
        expected = np.array([[1 + 4 / 5, 2 / 5], [2 / 5, 1 / 5]])
        np.testing.assert_allclose(S, expected, atol=1e-14)

    def test_product_identity_random_draws(self):
        rng = np.random.default_rng(9)
        for draw in range(10):
            nb = (2, 4, 6)[draw % 3]
            ng = (2, 3, 5)[draw % 3]
            c = random_skew_orthogonal(nb, rng)
            params = random_leontovich_params(ng, nb, rng, 1.2, 0.8)
            for z in (0.0, 0.1, 0.5):
                S = S_of_z(params, c, z)
                M = original_of_z(params, c, z)
                defect = np.abs(S @ M - np.eye(nb + ng)).max()
                assert defect <= 1e-10

    def test_product_identity_complex_rate(self):
        rng = np.random.default_rng(10)
        c = random_skew_orthogonal(4, rng)
        params = random_leontovich_params(3, 4, rng)
        z = 0.3 + 0.2j
        S = S_of_z(params, c, z)
        M = original_of_z(params, c, z)
        assert np.abs(S @ M - np.eye(7)).max() <= 1e-12

    def test_singular_resolvent_rejected(self):
        params = LeontovichParams(Q=0.0, alpha=np.eye(2))
        with pytest.raises(ValueError, match="singular"):
            S_of_z(params, random_skew_orthogonal(2, np.random.default_rng(0)), -1.0)

    def test_non_square_compression_rejected(self):
        with pytest.raises(ValueError, match="square"):
            S_of_z(LeontovichParams(), np.ones((2, 3)), 0.0)


class TestBoundaryResidualLaw:
    def test_residual_at_roundoff_1d(self):
        rng = np.random.default_rng(11)
        params = random_leontovich_params(2, 2, rng, q_scale=0.8, alpha_scale=0.5)
        system = build_leontovich_system(
            unit_grid(1, 24), Coefficients(sigma=1.0), params, curl_comp=SPIN
        )
        assert system.c0 > 0
        tg = TimeGrid(nu=1.0, dt=0.01, n_steps=40)
        F = block_source(system, tg, rng, pad=4)
        report = solve(system, F)
        res = boundary_residual(system, report)
        assert np.linalg.norm(res.values, axis=1).max() <= 1e-8
        assert res.values.shape == (40, 4)

    def test_residual_at_roundoff_2d_default(self):
        rng = np.random.default_rng(12)
        grid = unit_grid(2, 6)
        probe = build_leontovich_system(grid, Coefficients(), LeontovichParams())
        ng = probe.layout.size_of("strain_bnd")
        ne = probe.layout.size_of("efield_bnd")
        params = random_leontovich_params(ng, ne, rng, 0.5, 0.3)
        system = build_leontovich_system(grid, Coefficients(sigma=1.0), params)
        tg = TimeGrid(nu=1.0, dt=0.02, n_steps=20)
        F = block_source(system, tg, rng)
        report = solve(system, F)
        res = boundary_residual(system, report)
        assert np.linalg.norm(res.values, axis=1).max() <= 1e-8

    def test_uncoupled_reduction_identities(self):
        # Q = 0, alpha = 0: tau_H = -iota* E and tau_T = -iota* v per step
        system = build_leontovich_system(unit_grid(1, 24), Coefficients(), LeontovichParams())
        layout = system.layout
        tg = TimeGrid(nu=1.0, dt=0.01, n_steps=30)
        F = block_source(system, tg, np.random.default_rng(13), pad=6)
        report = solve(system, F)
        bs_g = layout.meta["bspaces"]["grad"]
        bs_e = layout.meta["bspaces"]["em"]
        proj_g = (bs_g.graph_metric @ bs_g.basis).T
        proj_e = (bs_e.graph_metric @ bs_e.basis).T
        vals = report.trajectory.values
        tau_t = vals[:, layout.block("strain_bnd")]
        tau_h = vals[:, layout.block("efield_bnd")]
        v = vals[:, layout.block("velocity")]
        efield = vals[:, layout.block("efield")]
        assert np.abs(tau_t + v @ proj_g.T).max() <= 1e-10
        assert np.abs(tau_h + efield @ proj_e.T).max() <= 1e-10

    def test_wrong_mode_rejected(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=5)
        report = solve(system, Trajectory(tg, np.zeros((5, system.size))))
        with pytest.raises(ValueError, match="leontovich"):
            boundary_residual(system, report)

    def test_missing_aux_rejected(self):
        system = build_leontovich_system(unit_grid(1, 8), Coefficients(), LeontovichParams())
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=5)
        report = solve(system, Trajectory(tg, np.zeros((5, system.size))))
        stripped = SolveReport(
            trajectory=report.trajectory, aux_states=(),
            stability_ratio=0.0, residual_max=0.0,
        )
        with pytest.raises(ValueError, match="auxiliary"):
            boundary_residual(system, stripped)


class TestInteriorAgreement:
    def test_uncoupled_walls_match_clamped_interior(self):
        # with Q = alpha = 0, e = sigma = 0 and sources supported away from
        # the walls, the two builds agree on the interior fields
        grid = unit_grid(1, 64)
        co = Coefficients()
        clamped = build_dirichlet_system(grid, co)
        walled = build_leontovich_system(grid, co, LeontovichParams())
        tg = TimeGrid(nu=1.0, dt=1e-3, n_steps=20)
        rng = np.random.default_rng(14)
        lay_w = walled.layout
        lay_c = clamped.layout
        iv = lay_c.meta["interior"]["velocity"]
        ie = lay_c.meta["interior"]["efield"]
        src_v = np.zeros((20, lay_w.size_of("velocity")))
        src_v[:, 28:36] = rng.standard_normal((20, 8))
        src_e = np.zeros((20, lay_w.size_of("efield")))
        src_e[:, 7:9] = rng.standard_normal((20, 2))
        f_w = np.zeros((20, walled.size))
        f_w[:, lay_w.block("velocity")] = src_v
        f_w[:, lay_w.block("efield")] = src_e
        f_c = np.zeros((20, clamped.size))
        f_c[:, lay_c.block("velocity")] = src_v[:, iv]
        f_c[:, lay_c.block("efield")] = src_e[:, ie]
        rep_w = solve(walled, Trajectory(tg, f_w, lay_w.weights))
        rep_c = solve(clamped, Trajectory(tg, f_c, lay_c.weights))
        for name, idx in (("velocity", iv), ("strain", None),
                          ("efield", ie), ("hfield", None)):
            full = rep_w.trajectory.values[:, lay_w.block(name)]
            if idx is not None:
                full = full[:, idx]
            red = rep_c.trajectory.values[:, lay_c.block(name)]
            assert np.abs(full - red).max() <= 1e-8


class TestTraceCompatibility:
    def test_defect_shrinks_under_refinement(self):
        co = Coefficients()
        defects_t, defects_h = [], []
        for n in (4, 8, 16):
            system = build_leontovich_system(unit_grid(2, n), co, LeontovichParams())
            layout = system.layout
            tg = TimeGrid(nu=1.0, dt=0.02, n_steps=25)
            vals = np.zeros((25, system.size))
            prof = np.sin(np.pi * tg.times / tg.times[-1])
            vals[:, layout.block("velocity")] = prof[:, None]
            vals[:, layout.block("efield")] = prof[:, None]
            report = solve(system, Trajectory(tg, vals, layout.weights))
            tc = trace_compatibility(system, report)
            defects_t.append(tc["tau_T"].max())
            defects_h.append(tc["tau_H"].max())
        for seq in (defects_t, defects_h):
            assert seq[0] / seq[1] >= 1.5
            assert seq[1] / seq[2] >= 1.5

    def test_wrong_mode_rejected(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=5)
        report = solve(system, Trajectory(tg, np.zeros((5, system.size))))
        with pytest.raises(ValueError, match="leontovich"):
            trace_compatibility(system, report)


class TestLiftBoundary:
    @staticmethod
    def smooth_data(tg, bs_g, bs_e):
        t = tg.times
        vb = np.stack([np.sin(2 * t)] * bs_g.dim, axis=1)
        vb *= (1.0 + np.arange(bs_g.dim))[None, :] / bs_g.dim
        eb = np.stack([1 - np.cos(t)] * bs_e.dim, axis=1)
        eb *= (1.0 - 0.5 * np.arange(bs_e.dim))[None, :]
        return BoundaryData(Trajectory(tg, vb), Trajectory(tg, eb))

    @pytest.mark.parametrize("dim,n", [(1, 32), (2, 6)])
    def test_boundary_dofs_match_exactly(self, dim, n):
        system = build_dirichlet_system(unit_grid(dim, n), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.01, n_steps=20)
        F = Trajectory(tg, np.zeros((20, system.size)), system.layout.weights)
        meta = system.layout.meta
        grad, em = meta["pairs"]["grad"], meta["pairs"]["em"]
        bs_g = compute_boundary_space(grad)
        bs_e = compute_boundary_space(em)
        data = self.smooth_data(tg, bs_g, bs_e)
        rhs, reconstruct = lift_boundary_data(system, data, F)
        report = solve(system, rhs)
        full = reconstruct(report.trajectory)
        layout_full = meta["full"]["layout"]
        v_ext = data.v_bnd.values @ bs_g.basis.T
        e_ext = data.E_bnd.values @ bs_e.basis.T
        v_traj = full.values[:, layout_full.block("velocity")]
        e_traj = full.values[:, layout_full.block("efield")]
        bv = grad.mask.boundary_dofs
        be = em.mask.boundary_dofs
        assert np.abs(v_traj[:, bv] - v_ext[:, bv]).max() <= 1e-12
        assert np.abs(e_traj[:, be] - e_ext[:, be]).max() <= 1e-12

    def test_extension_identity(self):
        # Grad applied to the embedded data equals the embedded dotted image
        system = build_dirichlet_system(unit_grid(1, 32), Coefficients())
        grad = system.layout.meta["pairs"]["grad"]
        bs_g = compute_boundary_space(grad)
        bs_div = compute_boundary_space(grad.dual())
        grad_dot = dotted_operator(bs_g, bs_div, grad.full)
        coords = np.array([0.7, -0.3])
        lhs = grad.full.matrix @ (bs_g.basis @ coords)
        rhs = bs_div.basis @ (grad_dot.matrix @ coords)
        assert np.abs(lhs - rhs).max() <= 1e-12

    def test_zero_data_is_identity(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients(sigma=1.0))
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=8)
        rng = np.random.default_rng(15)
        F = block_source(system, tg, rng)
        zero = BoundaryData(Trajectory(tg, np.zeros((8, 2))), Trajectory(tg, np.zeros((8, 2))))
        rhs, reconstruct = lift_boundary_data(system, zero, F)
        np.testing.assert_allclose(rhs.values, F.values, atol=1e-14)
        report = solve(system, rhs)
        full = reconstruct(report.trajectory)
        layout_full = system.layout.meta["full"]["layout"]
        iv = system.layout.meta["interior"]["velocity"]
        np.testing.assert_allclose(
            full.values[:, layout_full.offset("velocity") + iv],
            report.trajectory.values[:, system.layout.block("velocity")],
            atol=1e-14,
        )

    def test_validation_errors(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients())
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=8)
        other = TimeGrid(nu=1.0, dt=0.04, n_steps=8)
        F = Trajectory(tg, np.zeros((8, system.size)))
        mismatch = BoundaryData(
            Trajectory(other, np.zeros((8, 2))), Trajectory(other, np.zeros((8, 2)))
        )
        with pytest.raises(ValueError, match="time grids"):
            lift_boundary_data(system, mismatch, F)
        wrong_width = BoundaryData(
            Trajectory(tg, np.zeros((8, 3))), Trajectory(tg, np.zeros((8, 2)))
        )
        with pytest.raises(ValueError, match="widths"):
            lift_boundary_data(system, wrong_width, F)
        leon = build_leontovich_system(unit_grid(1, 8), Coefficients(), LeontovichParams())
        good = BoundaryData(Trajectory(tg, np.zeros((8, 2))), Trajectory(tg, np.zeros((8, 2))))
        with pytest.raises(ValueError, match="dirichlet"):
            lift_boundary_data(leon, good, F)

    def test_reconstruct_validates_shape(self):
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients())
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=8)
        F = Trajectory(tg, np.zeros((8, system.size)))
        data = BoundaryData(Trajectory(tg, np.zeros((8, 2))), Trajectory(tg, np.zeros((8, 2))))
        _, reconstruct = lift_boundary_data(system, data, F)
        with pytest.raises(ValueError, match="match"):
            reconstruct(Trajectory(tg, np.zeros((8, 3))))


class TestLiftInitial:
    @staticmethod
    def toy_system(mass, skew, conduct):
        n = np.asarray(mass).shape[0]
        layout = StateLayout(("field",), (n,), np.ones(n))
        M1 = RationalFamily(dim=n, instant=sp.csr_matrix(np.asarray(conduct, dtype=float)))
        M0 = state_operator(mass, layout)
        A = state_operator(skew, layout)
        c0 = check_posdef(M0, M1, (1.0,)).c0
        return EvoSystem(M0, M1, A, layout, c0=c0)

    def run_lifted(self, system, u0, dt, n_steps):
        tg = TimeGrid(nu=1.0, dt=dt, n_steps=n_steps, t0=dt)
        F = Trajectory(tg, np.zeros((n_steps, system.size)))
        rhs, reconstruct = lift_initial_data(system, u0, F)
        return tg, reconstruct(solve(system, rhs).trajectory)

    def test_decay_first_order(self):
        # u' + u = 0, u(0) = 1: backward Euler converges at first order
        system = self.toy_system([[1.0]], [[0.0]], [[1.0]])
        errs = []
        for dt in (0.01, 0.005):
            tg, full = self.run_lifted(system, np.array([1.0]), dt, int(round(1.0 / dt)))
            errs.append(np.abs(full.values[:, 0] - np.exp(-tg.times)).max())
        assert errs[0] / errs[1] >= 2 ** 0.9

    def test_rotation_first_order(self):
        system = self.toy_system(np.eye(2), [[0.0, -1.0], [1.0, 0.0]], np.zeros((2, 2)))
        errs = []
        for dt in (0.01, 0.005):
            tg, full = self.run_lifted(system, np.array([1.0, 0.0]), dt, int(round(1.0 / dt)))
            exact = np.stack([np.cos(tg.times), -np.sin(tg.times)], axis=1)
            errs.append(np.abs(full.values - exact).max())
        assert errs[0] / errs[1] >= 2 ** 0.9

    def test_state_path_matches_direct_impulse(self):
        # lifting a split state equals adding M0 u0 / dt to the first step
        system = build_dirichlet_system(unit_grid(1, 16), Coefficients(sigma=1.0))
        rng = np.random.default_rng(16)
        v = np.zeros(17)
        v[1:-1] = rng.standard_normal(15)
        E = np.zeros(17)
        E[1:-1] = rng.standard_normal(15)
        state = PiezoState(v=v, T=rng.standard_normal(16), E=E, H=rng.standard_normal(16))
        tg = TimeGrid(nu=1.0, dt=0.02, n_steps=15, t0=0.02)
        F = block_source(system, tg, rng)
        rhs, reconstruct = lift_initial_data(system, state, F)
        lifted = reconstruct(solve(system, rhs).trajectory)

        u0 = np.concatenate([v[1:-1], state.T, E[1:-1], state.H])
        direct_vals = F.values.copy()
        direct_vals[0] += system.M0.matrix @ u0 / tg.dt
        direct = solve(system, Trajectory(tg, direct_vals, system.layout.weights))
        np.testing.assert_allclose(lifted.values, direct.trajectory.values, atol=1e-12)

    def test_state_without_traces_rejected_on_extended_layout(self):
        system = build_leontovich_system(unit_grid(1, 8), Coefficients(), LeontovichParams())
        state = PiezoState(v=np.zeros(9), T=np.zeros(8), E=np.zeros(9), H=np.zeros(8))
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=4)
        F = Trajectory(tg, np.zeros((4, system.size)))
        with pytest.raises(ValueError, match="trace"):
            lift_initial_data(system, state, F)

    def test_size_mismatch_rejected(self):
        system = build_dirichlet_system(unit_grid(1, 8), Coefficients())
        tg = TimeGrid(nu=1.0, dt=0.05, n_steps=4)
        F = Trajectory(tg, np.zeros((4, system.size)))
        with pytest.raises(ValueError, match="dofs"):
            lift_initial_data(system, np.zeros(3), F)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
