import numpy as np
import pytest

from sctlab import (
    Density,
    SolverConfig,
    apply_transfer,
    constant,
    fd_response,
    linear_response,
    linearized_matrix,
    mean_field,
    mean_field_sensitivity,
    response_at_zero,
    response_report,
    response_sweep,
    sensitivity_matrix,
    solve_fixed_density,
    transfer_matrix,
)
from sctlab import TensorTrigKernel, perturbed_linear, sample
from sctlab.transfer import fourier_modes, random_cone_density

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def rho_at_002(doubling_mod, sin4pi_mod):
    return solve_fixed_density(doubling_mod, sin4pi_mod, 0.02).rho


@pytest.fixture(scope="module")
def doubling_mod():
    return perturbed_linear(2, 0.0)


@pytest.fixture(scope="module")
def sin4pi_mod():
    return TensorTrigKernel([(1.0, 2, "sin", 0, "cos")])


class TestSensitivity:
    def test_uncoupled_closed_form(self, doubling, sin4pi_kernel):
        rho = Density.uniform(256)
        out = mean_field_sensitivity(sin4pi_kernel, 0.0, rho, constant(1.0, 256))
        expect = 4 * np.pi * np.cos(4 * np.pi * out.grid)
        assert np.max(np.abs(out.values - expect)) < 1e-11

    def test_uncoupled_is_product_derivative(self, sin4pi_kernel, rng):
        rho = random_cone_density(rng, 256, llc=1.0)
        g = random_cone_density(rng, 256, llc=1.5).fn
        out = mean_field_sensitivity(sin4pi_kernel, 0.0, rho, g)
        expect = (rho.fn * mean_field(sin4pi_kernel, g)).derivative(1)
        # identical up to the dealiasing round trip of the unit divisor
        assert np.max(np.abs(out.values - expect.values)) < 1e-11

    def test_mean_zero(self, sin4pi_kernel, rng, rho_at_002):
        g = random_cone_density(rng, 256, llc=1.0).fn
        out = mean_field_sensitivity(sin4pi_kernel, 0.02, rho_at_002, g)
        assert abs(out.integral()) < 1e-12


class TestMatrices:
    def test_linearized_equals_transfer_at_zero(self, doubling, sin4pi_kernel):
        rho = Density.uniform(64)
        a = linearized_matrix(doubling, sin4pi_kernel, 0.0, rho)
        b = transfer_matrix(doubling, 64)
        assert np.max(np.abs(a - b)) < 1e-13

    def test_mode_zero_column_mass(self, doubling_mod, sin4pi_mod, rho_at_002):
        mat = linearized_matrix(doubling_mod, sin4pi_mod, 0.02, rho_at_002)
        m = (mat.shape[0] - 1) // 2
        assert mat[m, m] == pytest.approx(1.0, abs=1e-12)

    def test_fixed_density_is_eigenvector(self, doubling_mod, sin4pi_mod, rho_at_002):
        mat = linearized_matrix(doubling_mod, sin4pi_mod, 0.02, rho_at_002)
        m = (mat.shape[0] - 1) // 2
        v = fourier_modes(rho_at_002.fn, m)
        assert np.max(np.abs(mat @ v - v)) < 1e-9

    def test_requires_fixed_density(self, doubling, sin4pi_kernel, rng):
        not_fixed = random_cone_density(rng, 256, llc=1.0)
        with pytest.raises(ValueError):
            linearized_matrix(doubling, sin4pi_kernel, 0.02, not_fixed)

    def test_sensitivity_matrix_zero_kernel(self, doubling, zero_kernel):
        rho = solve_fixed_density(doubling, zero_kernel, 0.1).rho
        mat = sensitivity_matrix(doubling, zero_kernel, 0.1, rho)
        assert np.max(np.abs(mat)) < 1e-13

    def test_sensitivity_mode_zero_row(self, doubling_mod, sin4pi_mod, rho_at_002):
        mat = sensitivity_matrix(doubling_mod, sin4pi_mod, 0.02, rho_at_002)
        m = (mat.shape[0] - 1) // 2
        assert np.max(np.abs(mat[m, :])) < 1e-12

    def test_sensitivity_matrix_mode_zero_column(self, doubling, sin4pi_kernel):
        # column of mode 0: modes of P((A_1)') = P(4 pi cos 4 pi x) = 4 pi cos 2 pi x
        rho = Density.uniform(64)
        mat = sensitivity_matrix(doubling, sin4pi_kernel, 0.0, rho)
        m = (mat.shape[0] - 1) // 2
        expect = fourier_modes(
            apply_transfer(
                perturbed_linear(2, 0.0),
                sample(lambda x: 4 * np.pi * np.cos(4 * np.pi * x), 64),
            ),
            m,
        )
        assert np.max(np.abs(mat[:, m] - expect)) < 1e-12


class TestLinearResponse:
    def test_zero_kernel_zero_response(self, doubling, zero_kernel):
        rho = solve_fixed_density(doubling, zero_kernel, 0.1).rho
        out = linear_response(doubling, zero_kernel, 0.1, rho)
        assert np.max(np.abs(out.values)) < 1e-13

    def test_closed_form(self, doubling, sin4pi_kernel):
        rho0 = solve_fixed_density(doubling, sin4pi_kernel, 0.0).rho
        out = linear_response(doubling, sin4pi_kernel, 0.0, rho0)
        expect = -4 * np.pi * np.cos(TWO_PI * out.grid)
        assert np.max(np.abs(out.values - expect)) < 1e-10

    def test_odd_kernel_killed(self, doubling, sin2pi_kernel):
        # rhs = -P(2 pi cos 2 pi x) = 0 for the doubling map
        rho0 = solve_fixed_density(doubling, sin2pi_kernel, 0.0).rho
        out = linear_response(doubling, sin2pi_kernel, 0.0, rho0)
        assert np.max(np.abs(out.values)) < 1e-11

    def test_general_path_degenerates(self, doubling, sin4pi_kernel):
        rho0 = solve_fixed_density(doubling, sin4pi_kernel, 0.0).rho
        a = linear_response(doubling, sin4pi_kernel, 0.0, rho0)
        b = response_at_zero(doubling, sin4pi_kernel, rho0)
        assert np.max(np.abs(a.values - b.values)) < 1e-12

    def test_mean_zero(self, doubling_mod, sin4pi_mod, rho_at_002):
        out = linear_response(doubling_mod, sin4pi_mod, 0.02, rho_at_002)
        assert abs(out.integral()) < 1e-12


class TestFdOracle:
    def test_zero_kernel(self, doubling, zero_kernel):
        out = fd_response(doubling, zero_kernel, 0.0, 1e-4)
        assert np.max(np.abs(out.values)) < 2e-8  # 2 tol / delta noise floor

    def test_truncation_scale_and_ratio(self, doubling, sin4pi_kernel):
        # oracle-measured central-difference truncation: the third
        # t-derivative of the fixed density has sup ~ 3.7e4 here, so the
        # delta = 1e-4 gap sits near 6e-5 and halving delta divides it by 4
        rho0 = solve_fixed_density(doubling, sin4pi_kernel, 0.0).rho
        dr = linear_response(doubling, sin4pi_kernel, 0.0, rho0)
        gap1 = np.max(np.abs(fd_response(doubling, sin4pi_kernel, 0.0, 1e-4).values - dr.values))
        gap2 = np.max(np.abs(fd_response(doubling, sin4pi_kernel, 0.0, 5e-5).values - dr.values))
        assert 1e-5 < gap1 < 1.2e-4
        assert 3.2 < gap1 / gap2 < 4.8

    def test_formula_at_nonzero_t(self, doubling_mod, sin4pi_mod, rho_at_002):
        dr = linear_response(doubling_mod, sin4pi_mod, 0.02, rho_at_002)
        fd1 = fd_response(doubling_mod, sin4pi_mod, 0.02, 1e-4)
        fd2 = fd_response(doubling_mod, sin4pi_mod, 0.02, 5e-5)
        gap1 = np.max(np.abs(dr.values - fd1.values))
        gap2 = np.max(np.abs(dr.values - fd2.values))
        assert 3.2 < gap1 / gap2 < 4.8


class TestOperatorDerivative:
    def test_frozen_operator_t_derivative(self, doubling_mod, sin4pi_mod):
        # d/dt of t -> P Q_{t,rho(t)} applied to a fixed test function:
        # the derivative is -P(((phi/Phi') A_{rho + t*drho}) o Phi^{-1})'
        from sctlab.system import make_diffeo
        from sctlab.transfer import _apply_coupling_fixed

        emap, kernel = doubling_mod, sin4pi_mod
        phi = Density(sample(lambda x: 1 + 0.3 * np.cos(TWO_PI * x), 256))

        def frozen(t):
            rho = solve_fixed_density(emap, kernel, t).rho
            d = make_diffeo(kernel, rho.fn, t)
            return apply_transfer(emap, _apply_coupling_fixed(d, phi.fn)).values

        for t_hat in (0.0, 0.01):
            rho = solve_fixed_density(emap, kernel, t_hat).rho
            drho = linear_response(emap, kernel, t_hat, rho)
            generator = rho.fn + t_hat * drho
            diffeo = make_diffeo(kernel, rho.fn, t_hat)
            formula = -apply_transfer(
                emap,
                mean_field_sensitivity(kernel, t_hat, phi, generator, diffeo=diffeo),
            ).values
            gap1 = np.max(np.abs((frozen(t_hat + 1e-4) - frozen(t_hat - 1e-4)) / 2e-4 - formula))
            gap2 = np.max(np.abs((frozen(t_hat + 5e-5) - frozen(t_hat - 5e-5)) / 1e-4 - formula))
            assert gap1 < 1e-4  # measured truncation scale ~2.4e-5
            assert 3.0 < gap1 / gap2 < 5.0  # pure O(delta^2) residual


class TestReport:
    def test_report_invariants(self, doubling, sin4pi_kernel, tmp_path):
        rep = response_report(doubling, sin4pi_kernel, 0.0, delta=1e-4)
        assert abs(rep.drho.integral()) < 1e-11
        assert rep.solver_residual <= 1e-10
        assert rep.sup_error < 1.2e-4
        path = tmp_path / "cmp.csv"
        rep.comparison_to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "x,drho_formula,drho_fd"
        d = rep.to_json_dict()
        assert d["fd_delta"] == 1e-4


class TestSweep:
    def test_single_point(self, doubling, sin4pi_kernel):
        res = response_sweep(doubling, sin4pi_kernel, [0.0])
        p = res.points[0]
        assert p.error is None
        expect = -4 * np.pi * np.cos(TWO_PI * p.drho.grid)
        assert np.max(np.abs(p.drho.values - expect)) < 1e-10

    def test_failures_recorded_and_continue(self, doubling, sin2pi_kernel):
        res = response_sweep(doubling, sin2pi_kernel, [0.0, 0.2, 0.01])
        assert res.points[0].error is None
        assert "DiffeoViolation" in res.points[1].error
        assert res.points[2].error is None
        assert res.largest_solved_t == pytest.approx(0.01)

    def test_t_flip_conjugation(self, doubling):
        # h even under joint reflection + odd-symmetric f:
        # rho(-t)(x) = rho(t)(-x)
        ker = TensorTrigKernel([(1.0, 1, "sin", 1, "sin")])
        rp = solve_fixed_density(doubling, ker, 0.015).rho.fn.values
        rm = solve_fixed_density(doubling, ker, -0.015).rho.fn.values
        reflected = np.concatenate([[rp[0]], rp[1:][::-1]])
        assert np.max(np.abs(rm - reflected)) < 1e-9

    def test_reflection_symmetry_odd_kernel(self, doubling, sin4pi_kernel):
        # h odd under joint reflection => rho(t) itself is even in x
        r = solve_fixed_density(doubling, sin4pi_kernel, 0.015).rho.fn.values
        reflected = np.concatenate([[r[0]], r[1:][::-1]])
        assert np.max(np.abs(r - reflected)) < 1e-12

    def test_taylor_consistency(self, doubling, sin4pi_kernel):
        res = response_sweep(doubling, sin4pi_kernel, [0.0, 0.01, 0.02])
        errs = dict((round(t, 6), e) for t, e in res.c1_errors)
        # first-order consistency errors are O(dt^2): both present & small
        assert errs[0.0] < 0.05 and errs[0.01] < 0.1
        rho0 = res.points[0].rho.fn.values
        drho0 = res.points[0].drho.values
        quad = []
        for p in res.points[1:]:
            rem = np.max(np.abs(p.rho.fn.values - rho0 - p.t * drho0))
            quad.append(rem / p.t**2)
        # quadratic remainder coefficient roughly constant across t
        assert 0.3 < quad[0] / quad[1] < 3.0

    def test_csv_and_summary(self, doubling, sin4pi_kernel, tmp_path):
        res = response_sweep(
            doubling, sin4pi_kernel, [-0.02, 0.0, 0.02], SolverConfig(resolution=64)
        )
        csv_path = tmp_path / "sweep.csv"
        res.to_csv(csv_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "t,x,rho,drho,fd_drho"
        assert len(lines) == 1 + 3 * 64
        summary = res.summary_json_dict()
        assert len(summary["points"]) == 3
        assert summary["largest_solved_abs_t"] == pytest.approx(0.02)
