"""Theory checks: invariant measures, homogenization, control, spectra."""

import math

import numpy as np
import pytest

from pdeopt import analysis
from pdeopt.grid import GridFunction
from pdeopt.objectives import (
    CustomObjective,
    make_double_well,
    make_quadratic,
    make_quadratic_form,
    make_rugged_1d,
)
from pdeopt.pde_lab import PdeSolveConfig, prox_point, solve_heat, solve_viscous_hj_cole_hopf


def gauss_quadrature_moments(Q, p, x, gamma, beta):
    """Oracle: mean/cov of exp(-beta [f(y) + |y-x|^2/(2 gamma)]) by direct
    numerical integration (1D only)."""
    ys = np.linspace(-10, 10, 200_001)
    f = p * ys + 0.5 * Q * ys**2
    w = np.exp(-beta * (f + (ys - x) ** 2 / (2 * gamma)))
    w /= np.trapezoid(w, ys)
    mean = np.trapezoid(w * ys, ys)
    var = np.trapezoid(w * (ys - mean) ** 2, ys)
    return mean, var


class TestQuadraticClosedForm:
    def test_symmetry_gives_zero_mean(self):
        m = analysis.quadratic_invariant_closed_form(np.eye(2), np.zeros(2), np.zeros(2), 0.5, 2.0)
        np.testing.assert_allclose(m.mean, 0.0, atol=1e-15)

    def test_reference_case(self):
        m = analysis.quadratic_invariant_closed_form(np.eye(3), np.zeros(3),
                                                     2.0 * np.eye(3)[0], 1.0, 1.0)
        np.testing.assert_allclose(m.mean, [1.0, 0.0, 0.0], atol=1e-14)
        np.testing.assert_allclose(m.covariance, 0.5 * np.eye(3), atol=1e-14)

    def test_matches_numerical_integration(self):
        # independent quadrature oracle in 1D, nontrivial p and x
        Q, p, x, gamma, beta = 1.7, 0.3, -0.8, 0.6, 2.0
        mean_o, var_o = gauss_quadrature_moments(Q, p, x, gamma, beta)
        m = analysis.quadratic_invariant_closed_form(
            np.array([[Q]]), np.array([p]), np.array([x]), gamma, beta)
        assert m.mean[0] == pytest.approx(mean_o, abs=1e-8)
        assert m.covariance[0, 0] == pytest.approx(var_o, abs=1e-8)

    def test_penalty_variants_differ(self):
        Q = np.array([[2.0]])
        a = analysis.quadratic_invariant_closed_form(Q, [0.0], [1.0], 0.5, 1.0)
        b = analysis.quadratic_invariant_closed_form(Q, [0.0], [1.0], 0.5, 1.0, penalty="gamma")
        assert a.covariance[0, 0] == pytest.approx(1.0 / (2.0 + 2.0))
        assert b.covariance[0, 0] == pytest.approx(1.0 / (2.0 + 0.5))

    def test_neumann_series_validity(self):
        Q = 0.5 * np.eye(2)
        m = analysis.quadratic_invariant_closed_form(Q, np.zeros(2), np.ones(2), 0.5, 1.0,
                                                     neumann=True)
        assert m.neumann_valid  # gamma ||Q|| = 0.25 < 1
        exact = analysis.quadratic_invariant_closed_form(Q, np.zeros(2), np.ones(2), 0.5, 1.0)
        np.testing.assert_allclose(m.covariance, exact.covariance, atol=0.05)

    def test_singular_precision_rejected(self):
        with pytest.raises(ValueError):
            analysis.quadratic_invariant_closed_form(-10.0 * np.eye(1), [0.0], [0.0], 1.0, 1.0)


class TestSampleInvariantMeasure:
    def test_quadratic_reference(self):
        q = make_quadratic(1.0, 0.0, 1)
        est = analysis.sample_invariant_measure(q, np.array([2.0]), 1.0, 1.0,
                                                n_steps=200_000, burn_in=2000, seed=42)
        assert abs(est.mean[0] - 1.0) <= 3 * est.mean_stderr[0]
        assert abs(est.covariance[0, 0] - 0.5) <= 3 * est.variance_stderr[0]

    def test_free_particle_ornstein_uhlenbeck(self):
        zero = CustomObjective(1, lambda x: 0.0, lambda x: np.zeros(1),
                               value_batch_fn=lambda X: np.zeros(len(X)))
        zero.grad_batch = lambda X: np.zeros_like(np.atleast_2d(X))
        est = analysis.sample_invariant_measure(zero, np.array([0.5]), 2.0, 0.25,
                                                n_steps=200_000, burn_in=2000, seed=1)
        assert est.covariance[0, 0] == pytest.approx(0.25 * 2.0, rel=0.05)
        assert est.mean[0] == pytest.approx(0.5, abs=4 * est.mean_stderr[0])

    def test_low_temperature_concentrates_at_prox(self):
        dw = make_double_well(1.0)
        x, gamma = np.array([1.2]), 0.2
        est = analysis.sample_invariant_measure(dw, x, gamma, 1e-3,
                                                n_steps=100_000, burn_in=5000, seed=3,
                                                step_size=2e-3)
        y_star = prox_point(dw, x, gamma).y
        assert est.mean[0] == pytest.approx(y_star[0], abs=0.01)

    def test_matches_closed_form_random_spd(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 3))
        Q = A @ A.T + 0.5 * np.eye(3)
        p = rng.standard_normal(3)
        x = rng.standard_normal(3)
        obj = make_quadratic_form(Q, p)
        cf = analysis.quadratic_invariant_closed_form(Q, p, x, 0.8, 2.0)
        est = analysis.sample_invariant_measure(obj, x, 0.8, 0.5,
                                                n_steps=400_000, burn_in=3000, seed=7)
        assert np.all(np.abs(est.mean - cf.mean) <= 3 * est.mean_stderr)
        assert np.all(np.abs(np.diag(est.covariance) - np.diag(cf.covariance))
                      <= 3 * est.variance_stderr)

    def test_divergence_detected(self):
        # concave objective overwhelms the coupling: gamma too large
        bad = CustomObjective(1, lambda x: -5.0 * x[0] ** 2, lambda x: -10.0 * x,
                              value_batch_fn=lambda X: -5.0 * X[:, 0] ** 2)
        bad.grad_batch = lambda X: -10.0 * np.atleast_2d(X)
        with pytest.raises(RuntimeError):
            analysis.sample_invariant_measure(bad, np.array([0.1]), 10.0, 0.01,
                                              n_steps=200_000, burn_in=100, seed=0)

    def test_burn_in_validation(self):
        q = make_quadratic(1.0, 0.0, 1)
        with pytest.raises(ValueError):
            analysis.sample_invariant_measure(q, np.array([0.0]), 1.0, 1.0,
                                              n_steps=100, burn_in=100, seed=0)


class TestAutocorrelation:
    def test_iid_series_time_is_one(self):
        rng = np.random.default_rng(0)
        tau = analysis.integrated_autocorrelation_time(rng.standard_normal(20_000))
        assert tau == pytest.approx(1.0, abs=0.2)

    def test_ar1_series(self):
        rng = np.random.default_rng(1)
        phi = 0.95
        x = np.empty(200_000)
        x[0] = 0.0
        eps = rng.standard_normal(len(x))
        for i in range(1, len(x)):
            x[i] = phi * x[i - 1] + eps[i]
        tau = analysis.integrated_autocorrelation_time(x)
        expected = (1 + phi) / (1 - phi)  # = 39
        assert tau == pytest.approx(expected, rel=0.2)


class TestHomogenization:
    def test_double_well_drift_matches_smoothed_gradient(self):
        dw = make_double_well(1.0)
        probes = [-1.6, -0.75, 0.55, 1.35]
        table = analysis.verify_homogenization(dw, probes, gamma=0.3, beta_inv=1e-8,
                                               epsilons=[1e-1, 1e-2], n_seeds=8, seed=0)
        assert table.rows[-1].max_rel_deviation <= 0.05
        assert table.is_monotone()

    def test_quadratic_closed_form_reference(self):
        q = make_quadratic(1.0, 0.0, 1)
        table = analysis.verify_homogenization(q, [2.0], gamma=1.0, beta_inv=1e-10,
                                               epsilons=[1e-2, 1e-3], n_seeds=4, seed=0)
        # the smoothed-gradient at x=2, gamma=1 is 2/(1+1) = 1
        assert table.reference_grad[0] == pytest.approx(1.0, abs=1e-6)
        assert table.rows[-1].max_rel_deviation <= 0.02

    def test_zero_objective_deviation_within_noise(self):
        zero = CustomObjective(1, lambda x: 0.0, lambda x: np.zeros(1),
                               value_batch_fn=lambda X: np.zeros(len(X)))
        n_seeds = 8
        table = analysis.verify_homogenization(zero, [0.3], gamma=0.5, beta_inv=1e-6,
                                               epsilons=[1e-1, 1e-2], n_seeds=n_seeds, seed=0)
        assert np.allclose(table.reference_grad, 0.0)
        # the signed seed-averaged drift must vanish within its sampling error
        for ei in range(2):
            samples = table.drift_samples[ei, 0]
            se = samples.std(ddof=1) / np.sqrt(n_seeds)
            assert abs(samples.mean()) <= max(3 * se, 1e-9)


class TestControlImprovement:
    def test_zero_horizon_trivial(self):
        dw = make_double_well(1.0)
        grid = GridFunction.geometry([-2.5], [2.5], [257])
        comp = analysis.control_improvement_experiment(
            dw, dw.value_batch, T=0.0, beta_inv=0.2, n_paths=500, seed=0,
            x0=np.array([0.4]), grid=grid)
        assert comp.terminal_ctrl == comp.terminal_plain == pytest.approx(dw.value(np.array([0.4])))
        assert comp.control_energy == 0.0

    def test_quadratic_strict_improvement(self):
        q = make_quadratic(1.0, 0.0, 1)
        grid = GridFunction.geometry([-3.0], [3.0], [513])
        comp = analysis.control_improvement_experiment(
            q, q.value_batch, T=1.0, beta_inv=0.3, n_paths=4000, seed=1,
            x0=np.array([1.0]), grid=grid)
        assert comp.improvement_holds
        assert comp.strict_gap
        assert comp.gap > 0

    def test_double_well_improvement(self):
        dw = make_double_well(1.0)
        grid = GridFunction.geometry([-2.5], [2.5], [513])
        comp = analysis.control_improvement_experiment(
            dw, dw.value_batch, T=1.0, beta_inv=0.2, n_paths=3000, seed=2,
            x0=np.array([0.0]), grid=grid)
        assert comp.improvement_holds
        assert comp.gap > 0
        assert comp.exit_fraction <= 0.01


class TestSemiconcavity:
    def test_quadratic_meets_bound_with_equality(self):
        q = make_quadratic(1.0, 0.0, 1)
        grid = GridFunction.geometry([-2.0], [2.0], [513])
        series = []
        for t in (0.25, 0.5, 1.0):
            cfg = PdeSolveConfig(beta_inv=0.1, t_final=t)
            series.append((t, solve_viscous_hj_cole_hopf(q, cfg, grid)))
        C, C_lap = analysis.initial_semiconcavity_constants(q, grid)
        assert C[0] == pytest.approx(1.0, abs=1e-6)
        rows = analysis.semiconcavity_report(series, C=C, C_lap=C_lap)
        for r in rows:
            if r.quantity == "axis0":
                # exact solution attains 1/(1 + t)
                assert r.measured == pytest.approx(r.bound, abs=10 * grid.spacing[0])
                assert not r.violated

    def test_rugged_no_violations(self):
        obj = make_rugged_1d(7, 5)
        grid = GridFunction.geometry([-3.0], [3.0], [1025])
        series = []
        for t in (0.1, 0.2, 0.5):
            cfg = PdeSolveConfig(beta_inv=0.1, t_final=t)
            series.append((t, solve_viscous_hj_cole_hopf(obj, cfg, grid)))
        rows = analysis.semiconcavity_report(series)  # bound 1/t
        assert not any(r.violated for r in rows if r.quantity == "axis0")

    def test_heat_flow_decays_slower(self):
        # eigenfunction decay exp(-beta_inv t / 2) stays above the 1/(1/C0+t)
        # curve for small t, so the curvature check must flag the heat flow
        sin_obj = CustomObjective(1, lambda x: float(np.sin(x[0])), lambda x: np.cos(x),
                                  value_batch_fn=lambda X: np.sin(X[:, 0]))
        grid = GridFunction.geometry([0.0], [2 * np.pi], [513])
        beta_inv = 0.1
        series = []
        for t in (0.5, 1.0):
            cfg = PdeSolveConfig(beta_inv=beta_inv, t_final=t, scheme="heat", boundary="periodic")
            series.append((t, solve_heat(sin_obj, cfg, grid)))
        rows = analysis.semiconcavity_report(series, C=[1.0], tol_spacings=1.0)
        axis_rows = [r for r in rows if r.quantity == "axis0"]
        for r, (t, _) in zip(axis_rows, series):
            assert r.measured == pytest.approx(math.exp(-beta_inv * t / 2), abs=1e-3)
            assert r.measured > 1.0 / (1.0 + t)  # slower decay than the 1/(C^-1+t) rate
            assert r.violated

    def test_rejects_nonpositive_time(self):
        grid = GridFunction.geometry([-1.0], [1.0], [33])
        with pytest.raises(ValueError):
            analysis.semiconcavity_report([(0.0, grid)])


class TestHarmonicMean:
    def test_constant_vector(self):
        assert analysis.harmonic_mean([1.0, 1.0, 1.0]) == 1.0

    def test_two_values(self):
        assert analysis.harmonic_mean([1.0, 3.0]) == pytest.approx(1.5)

    def test_sandwich_on_random_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            v = rng.uniform(0.01, 10.0, size=rng.integers(2, 20))
            hm = analysis.harmonic_mean(v)
            assert v.min() - 1e-12 <= hm <= len(v) * v.min() + 1e-12

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            analysis.harmonic_mean([1.0, 0.0])
        with pytest.raises(ValueError):
            analysis.harmonic_mean([1.0, -2.0])


class TestSpectrumSummary:
    def test_2x2_closed_form(self):
        obj = make_quadratic_form(np.array([[2.0, 1.0], [1.0, 2.0]]))
        s = analysis.spectrum_summary(obj, np.zeros(2))
        np.testing.assert_allclose(s.eigenvalues, [1.0, 3.0], atol=1e-12)
        assert s.hm_lambda == pytest.approx(1.5)
        assert s.hm_diag == pytest.approx(2.0)
        assert s.satisfies_eig_diag

    def test_diagonal_hessian_equality(self):
        obj = make_quadratic_form(np.diag([0.5, 2.0, 4.0]))
        s = analysis.spectrum_summary(obj, np.zeros(3))
        assert s.hm_lambda == pytest.approx(s.hm_diag)

    def test_random_spd_100_draws(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            A = rng.standard_normal((8, 8))
            obj = make_quadratic_form(A @ A.T + 0.1 * np.eye(8))
            s = analysis.spectrum_summary(obj, np.zeros(8))
            assert s.satisfies_eig_diag

    def test_smoothed_bound(self):
        obj = make_quadratic_form(np.diag([1.0, 2.0]))
        s = analysis.spectrum_summary(obj, np.zeros(2), t=0.5, C=[1.0, 2.0])
        hm_c = analysis.harmonic_mean([1.0, 2.0])
        assert s.hm_bound == pytest.approx(1.0 / (0.5 + 1.0 / hm_c))

    def test_indefinite_warns_and_flags(self):
        obj = make_quadratic_form(np.diag([1.0, -0.5]))
        with pytest.warns(UserWarning):
            s = analysis.spectrum_summary(obj, np.zeros(2))
        assert s.indefinite

    def test_rejects_noncritical_point(self):
        obj = make_quadratic(1.0, 0.0, 2)
        with pytest.raises(ValueError):
            analysis.spectrum_summary(obj, np.array([1.0, 0.0]))
