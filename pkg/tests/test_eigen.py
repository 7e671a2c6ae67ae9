import os

import numpy as np
import pytest
import scipy.linalg as sla

from fheig import eigen
from fheig import nonlocal_form as nf
from fheig.errors import ConvergenceError, ValidationError
from fheig.grid import build_interval_grid, restrict
from fheig.hardy import HardyParams
from fheig.weights import constant_weight, example_weight, expression_weight, perturbed_weight, scale_weight

V1 = constant_weight(1.0)


def _setup(alpha=0.25, p=2.0, m=64, dom=(0.0, 1.0), mu=0.0):
    params = HardyParams(1, alpha, p)
    grid = build_interval_grid(dom[0], dom[1], m, 1.0)
    return params, grid, nf.assemble(params, grid, mu)


class TestSolveLambda1:
    def test_matches_dense_pencil(self):
        _, _, form = _setup(m=64)
        pair = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=3))
        oracle = pair.diagnostics["pencil_lambda"]
        assert abs(pair.value - oracle) / oracle <= 1e-8
        assert pair.converged

    def test_eigenpair_invariants(self):
        _, _, form = _setup(m=48)
        opts = eigen.SolverOptions(seed=5)
        pair = eigen.solve_lambda1(form, V1, opts)
        # lambda equals the energy of the reported eigenfunction
        assert pair.value == pytest.approx(nf.energy(form, pair.function), rel=1e-10)
        assert pair.constraint_residual <= 1e-10
        g = nf.gradient(form, pair.function)
        w = form.grid.interior_weights
        vv = V1.eval(form.grid.interior_coords)
        resid = g - pair.value * 2.0 * w * vv * pair.function
        assert np.max(np.abs(resid)) <= opts.tol * np.max(np.abs(g)) * (1 + 1e-9)
        # deterministic sign: nonnegative weighted mean
        assert float(np.dot(w, pair.function)) >= 0.0

    def test_weight_scaling_quarter(self):
        _, _, form = _setup(m=32)
        lam = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=2)).value
        lam4 = eigen.solve_lambda1(form, scale_weight(V1, 4.0), eigen.SolverOptions(seed=2)).value
        assert lam4 == pytest.approx(lam / 4.0, rel=1e-10)

    def test_p3_multistart_and_random_cloud_bound(self):
        params, grid, form = _setup(alpha=0.3, p=3.0, m=16)
        values = []
        funcs = []
        for seed in range(20):
            pair = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=100 + seed))
            assert pair.converged
            values.append(pair.value)
            funcs.append(pair.function)
        values = np.array(values)
        assert (values.max() - values.min()) / values.min() <= 1e-6
        for k in range(1, 20):
            align = abs(float(np.dot(funcs[0], funcs[k])))
            align /= np.linalg.norm(funcs[0]) * np.linalg.norm(funcs[k])
            assert align >= 1.0 - 1e-6

        # brute-force upper bound: a million normalized random candidates
        rng = np.random.default_rng(12345)
        wv = form.grid.interior_weights * V1.eval(form.grid.interior_coords)
        best = np.inf
        total = 0
        while total < 1_000_000:
            batch = min(20_000, 1_000_000 - total)
            U = rng.standard_normal((batch, form.n_dof))
            psi = (np.abs(U) ** 3 @ wv)
            keep = psi > 0
            U = U[keep] / psi[keep, None] ** (1.0 / 3.0)
            du = np.abs(U[:, :, None] - U[:, None, :]) ** 3
            energies = np.einsum("kij,ij->k", du, form.K) + np.abs(U) ** 3 @ form.energy_coef
            best = min(best, float(energies.min()))
            total += batch
        assert best >= values.min() - 1e-9 * abs(best)

    def test_vplus_zero_rejected(self):
        _, _, form = _setup(m=16)
        with pytest.raises(ValidationError):
            eigen.solve_lambda1(form, constant_weight(-1.0), eigen.SolverOptions(seed=1))

    def test_inadmissible_weight_rejected_and_overridable(self):
        params, grid, form = _setup(alpha=0.3, m=16)
        w4 = example_weight("W4", params)      # fails the local limit at 0
        with pytest.raises(ValidationError):
            eigen.solve_lambda1(form, w4, eigen.SolverOptions(seed=1))
        with pytest.warns(UserWarning):
            pair = eigen.solve_lambda1(
                form, w4, eigen.SolverOptions(seed=1, allow_inadmissible=True))
        assert pair.converged

    def test_nonconvergence_raises(self):
        _, _, form = _setup(m=32)
        with pytest.raises(ConvergenceError):
            eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=1, max_iter=2, tol=1e-30))

    def test_parallel_trials_deterministic(self):
        _, _, form = _setup(m=24)
        opts = eigen.SolverOptions(seed=7, trials=4)
        serial = eigen.solve_lambda1(form, V1, opts)
        os.environ["FHE_MAX_THREADS"] = "4"
        try:
            parallel = eigen.solve_lambda1(form, V1, opts)
        finally:
            del os.environ["FHE_MAX_THREADS"]
        assert serial.value == parallel.value
        assert np.array_equal(serial.function, parallel.function)

    def test_mu_cap_refusal(self):
        params, grid, _ = _setup(alpha=0.25, m=24, dom=(-1.0, 1.0))
        form = nf.assemble(params, grid, 0.5)
        with pytest.raises(ValidationError):
            eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=1, mu_cap=1e-9))

    def test_mu_monotonicity(self):
        params, grid, _ = _setup(alpha=0.25, m=32, dom=(-1.0, 1.0))
        c_sharp = 1.4037085997664525
        lams = []
        for mu in (0.0, 0.4 * c_sharp, 0.8 * c_sharp):
            form = nf.assemble(params, grid, mu)
            lams.append(eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=4)).value)
        assert lams[0] > lams[1] > lams[2]


class TestSequence:
    def test_matches_generalized_eigh_oracle(self):
        _, _, form = _setup(m=64)
        report = eigen.solve_sequence_p2(form, V1, 5)
        A = form.quadratic_matrix()
        w = form.grid.interior_weights
        B = np.diag(w * V1.eval(form.grid.interior_coords))
        oracle = np.sort(sla.eigh(A, B, eigvals_only=True))[:5]
        assert np.allclose(report.values, oracle, rtol=1e-10)

    def test_k1_equals_solve_lambda1(self):
        _, _, form = _setup(m=48)
        report = eigen.solve_sequence_p2(form, V1, 1)
        pair = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=6))
        assert report.values[0] == pytest.approx(pair.value, rel=1e-8)

    def test_refinement_stable(self):
        # staggered node sets are not nested, so strict decrease under
        # refinement is not guaranteed; the sequence must be stable
        vals = {}
        for m in (32, 64):
            _, _, form = _setup(alpha=0.4, m=m, dom=(-1.0, 1.0))
            vals[m] = eigen.solve_sequence_p2(form, V1, 3).values
        assert np.all(np.abs(vals[64] / vals[32] - 1.0) <= 0.10)

    def test_orthogonality_energy_and_weight(self):
        _, _, form = _setup(m=32)
        report = eigen.solve_sequence_p2(form, V1, 4)
        A = form.quadratic_matrix()
        wv = form.grid.interior_weights * V1.eval(form.grid.interior_coords)
        for i in range(4):
            for j in range(i + 1, 4):
                ui, uj = report.pairs[i].function, report.pairs[j].function
                assert abs(ui @ (A @ uj)) <= 1e-8 * report.values[j]
                assert abs(np.dot(wv * ui, uj)) <= 1e-8

    def test_p3_refused(self):
        _, _, form = _setup(alpha=0.3, p=3.0, m=16)
        with pytest.raises(ValidationError):
            eigen.solve_sequence_p2(form, V1, 3)

    def test_sign_changing_weight_reports_available(self):
        _, _, form = _setup(m=32, dom=(-1.0, 1.0))
        v = expression_weight("1 - 2.5*r")     # negative outer region
        with pytest.warns(UserWarning):
            report = eigen.solve_sequence_p2(form, v, 40)
        assert 0 < report.available_k < 40
        assert np.all(np.diff(report.values) >= -1e-9)


class TestSimplicityAndSigns:
    def test_simplicity_pencil_gap(self):
        _, _, form = _setup(m=48)
        report = eigen.solve_sequence_p2(form, V1, 2)
        assert report.simplicity_gap > 1e-3

    def test_simplicity_descent(self):
        _, _, form = _setup(alpha=0.3, p=3.0, m=24)
        rep = eigen.verify_simplicity(form, V1, 4, eigen.SolverOptions(seed=60), alignment_tol=1e-6)
        assert rep.passed

    def test_sign_structure(self):
        _, _, form = _setup(m=64)
        report = eigen.solve_sequence_p2(form, V1, 5)
        sign = eigen.verify_sign_properties(report)
        assert sign.passed
        assert sign.first_one_signed
        assert all(sign.higher_sign_changing)

    def test_constant_fake_input_flagged_one_signed(self):
        assert not eigen._has_sign_change(np.ones(10))
        assert eigen._has_sign_change(np.array([1.0, -1.0]))


class TestMonotonicities:
    def test_weight_bump_strict(self):
        _, _, form = _setup(m=32, dom=(-1.0, 1.0))
        rep = eigen.verify_weight_monotonicity(form, V1, perturbed_weight(V1), eigen.SolverOptions(seed=8))
        assert rep.passed
        assert rep.margin > 0.0

    def test_equal_weights_not_strict(self):
        _, _, form = _setup(m=32)
        with pytest.raises(ValidationError):
            eigen.verify_weight_monotonicity(form, V1, V1, eigen.SolverOptions(seed=8))
        # the two solves themselves agree to rounding
        a = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=8)).value
        b = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=9)).value
        assert a == pytest.approx(b, rel=1e-9)

    def test_domain_interval_pair(self):
        params = HardyParams(1, 0.25, 2.0)
        parent = build_interval_grid(-1.0, 1.0, 64, 1.0)
        rel = restrict(parent, lambda x: x[0] > 0.0)
        rep = eigen.verify_domain_monotonicity(rel, V1, params, 0.0, eigen.SolverOptions(seed=10))
        assert rep.passed
        assert rep.margin > 0.0

    def test_domain_nested_chain(self):
        params = HardyParams(1, 0.25, 2.0)
        parent = build_interval_grid(-1.0, 1.0, 48, 1.0)
        rel_mid = restrict(parent, lambda x: x[0] > -1.0 / 3.0)
        rel_small = restrict(parent, lambda x: x[0] > 1.0 / 3.0)
        lam = []
        for g in (parent, rel_mid.child, rel_small.child):
            form = nf.assemble(params, g, 0.0)
            lam.append(eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=11)).value)
        assert lam[0] < lam[1] < lam[2]


class TestScaling:
    def test_r_equal_one_is_base_quotient(self):
        params, grid, form = _setup(alpha=0.4, m=32, dom=(-1.0, 1.0))
        X = grid.interior_coords
        u0 = np.exp(-np.sum(X ** 2, axis=1) / 0.08)
        wv = grid.interior_weights * V1.eval(X)
        base = nf.energy(form, u0) / float(np.dot(wv, np.abs(u0) ** 2))
        table = eigen.scaling_collapse_test(params, grid, V1, u0, [1.0], "origin")
        assert table.quotients[0] == pytest.approx(base, rel=1e-12)

    def test_collapse_for_supercritical_weight(self):
        params, grid, _ = _setup(alpha=0.4, m=48, dom=(-1.0, 1.0))
        X = grid.interior_coords
        u0 = np.exp(-np.sum(X ** 2, axis=1) / 0.08)
        pa = params.p_alpha
        v_sing = expression_weight(f"r**(-{pa + 0.5!r})", singular_radii=(0.0,))
        rs = 2.0 ** -np.arange(0, 9)
        table = eigen.scaling_collapse_test(params, grid, v_sing, u0, rs, "origin")
        assert table.monotone_decreasing
        assert table.collapse_ratio >= 10.0

    def test_admissible_control_stays_up(self):
        params, grid, _ = _setup(alpha=0.4, m=48, dom=(-1.0, 1.0))
        X = grid.interior_coords
        u0 = np.exp(-np.sum(X ** 2, axis=1) / 0.08)
        rs = 2.0 ** -np.arange(0, 9)
        table = eigen.scaling_collapse_test(params, grid, example_weight("W1", params), u0, rs, "origin")
        assert float(np.min(table.quotients)) >= 0.5 * table.quotients[0]

    def test_support_violation(self):
        params, grid, _ = _setup(alpha=0.4, m=32, dom=(-1.0, 1.0))
        u0 = np.ones(grid.n_interior)
        with pytest.raises(ValidationError):
            eigen.scaling_collapse_test(params, grid, V1, u0, [2.0, 4.0], "infinity")

    def test_infinity_direction_collapse(self):
        # constant V has |x|^(p*alpha) V unbounded at infinity: spreading
        # the profile out drives the quotient down
        params, grid, _ = _setup(alpha=0.4, m=48, dom=(-1.0, 1.0))
        X = grid.interior_coords
        u0 = np.exp(-np.sum((X - 0.5) ** 2, axis=1) / 0.01)
        u0[grid.radii("interior") < 2.0 * grid.cell_diameter] = 0.0
        rs = 2.0 ** np.arange(0, 7)
        table = eigen.scaling_collapse_test(params, grid, V1, u0, rs, "infinity")
        assert table.monotone_decreasing
        assert table.quotients[-1] < 0.2 * table.quotients[0]


class TestGrowth:
    def test_k1_trivially_passes(self):
        _, _, form = _setup(m=32)
        report = eigen.solve_sequence_p2(form, V1, 1)
        g = eigen.lambda_growth_check(report, ratio_threshold=1.0)
        assert g.passed

    def test_threshold(self):
        _, _, form = _setup(alpha=0.4, m=64, dom=(-1.0, 1.0))
        report = eigen.solve_sequence_p2(form, V1, 10)
        g = eigen.lambda_growth_check(report, ratio_threshold=5.0)
        assert g.nondecreasing
        assert g.passed


class TestTwoDimensional:
    def _setup2d(self, mu_frac=0.0):
        params = HardyParams(2, 0.25, 2.0)
        grid = __import__("fheig.grid", fromlist=["build_box_grid"]).build_box_grid(
            (0.0, 0.0), (1.0, 1.0), (8, 8), 1.0)
        mu = 0.0
        if mu_frac:
            from fheig.hardy import hardy_constant
            mu = mu_frac * hardy_constant(params, tol=1e-6).value
        return params, grid, nf.assemble(params, grid, mu)

    def test_descent_matches_pencil(self):
        _, _, form = self._setup2d()
        pair = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=2))
        assert pair.diagnostics["pencil_rel_gap"] <= 1e-10

    def test_hardy_term_lowers_lambda(self):
        _, _, form0 = self._setup2d()
        _, _, form_mu = self._setup2d(mu_frac=0.3)
        lam0 = eigen.solve_lambda1(form0, V1, eigen.SolverOptions(seed=2)).value
        lam_mu = eigen.solve_lambda1(form_mu, V1, eigen.SolverOptions(seed=2)).value
        assert lam_mu < lam0

    def test_square_degenerate_pair_ordered_deterministically(self):
        # the second and third modes of the square coincide; the tie-break
        # must order them reproducibly and flag both as sign-changing
        _, _, form = self._setup2d()
        rep1 = eigen.solve_sequence_p2(form, V1, 4)
        rep2 = eigen.solve_sequence_p2(form, V1, 4)
        assert rep1.values[1] == pytest.approx(rep1.values[2], rel=1e-9)
        assert np.array_equal(rep1.pairs[1].function, rep2.pairs[1].function)
        sign = eigen.verify_sign_properties(rep1)
        assert sign.passed

    def test_zero_extension_2d(self):
        params, grid, form = self._setup2d()
        rel = restrict(grid, lambda x: x[0] > 0)
        fc = nf.assemble(params, rel.child, 0.0)
        u = np.random.default_rng(1).standard_normal(rel.child.n_interior)
        assert nf.energy(fc, u) == pytest.approx(nf.energy(form, rel.inject(u)), rel=1e-12)

    def test_discrete_hardy_2d(self):
        _, _, form = self._setup2d()
        ratio = nf.discrete_hardy_min_ratio(form, 300, seed=3)
        assert ratio >= 0.5 * 12.44395847174766   # frozen sharp constant (2, 0.25, 2)


class TestIndependentOptimizerRoute:
    def test_p3_matches_scipy_lbfgs(self):
        # third route through the nonlinear path: generic quasi-Newton
        # minimization of the quotient itself
        from scipy.optimize import minimize

        params, grid, form = _setup(alpha=0.3, p=3.0, m=16)
        wv = grid.interior_weights * V1.eval(grid.interior_coords)
        p = 3.0

        def quotient(u):
            psi = float(np.dot(wv, np.abs(u) ** p))
            return nf.energy(form, u) / psi

        def quotient_grad(u):
            psi = float(np.dot(wv, np.abs(u) ** p))
            g = nf.gradient(form, u)
            gpsi = p * wv * np.sign(u) * np.abs(u) ** (p - 1)
            return (g * psi - nf.energy(form, u) * gpsi) / psi ** 2

        rng = np.random.default_rng(0)
        best = np.inf
        for _ in range(8):
            x0 = np.abs(rng.standard_normal(form.n_dof)) + 0.1
            res = minimize(quotient, x0, jac=quotient_grad, method="L-BFGS-B",
                           options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
            best = min(best, res.fun)
        mine = eigen.solve_lambda1(form, V1, eigen.SolverOptions(seed=5)).value
        assert mine == pytest.approx(best, rel=1e-9)


class TestTrueDiscreteHardyInfimum:
    def test_decreases_toward_sharp_with_box_growth(self):
        # inf Gagliardo / Hardy over all discrete functions equals the
        # least pencil eigenvalue with weight |x|^(-p*alpha); the Hardy
        # extremal decays like r^(-(n - p*alpha)/p), so truncation
        # converges only slowly from above
        params = HardyParams(1, 0.25, 2.0)
        sharp = 1.4037085997664525
        pa = params.p_alpha
        vals = []
        for box, m in ((4.0, 128), (8.0, 256)):
            grid = build_interval_grid(-box, box, m, 2.0)
            form = nf.assemble(params, grid, 0.0)
            v_hardy = expression_weight(f"r**(-{pa!r})", singular_radii=(0.0,))
            vals.append(eigen.pencil_eigensolve(form, v_hardy, 1)[0][0])
        assert vals[1] < vals[0]
        assert vals[1] > sharp
