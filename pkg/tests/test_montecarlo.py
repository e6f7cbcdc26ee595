import numpy as np
import pytest

from anisorf.errors import ParameterError, SingularityError
from anisorf.gaussmoments import Activation, kappa_constants
from anisorf.montecarlo import (TrainedStudent, empirical_errors,
                                empirical_order_params, get_covariance_check,
                                logistic_fit, ridge_fit, sample_dataset,
                                sample_feature_map)
from anisorf.replica import BlockModel, Channel, scalar_stats

ISO = BlockModel.isotropic()
TANH = Activation("tanh")


class TestSampling:
    def test_bit_identical_under_same_seed(self):
        a = sample_dataset(ISO, Channel("regression_gaussian", 0.3), 50, 40, seed=9)
        b = sample_dataset(ISO, Channel("regression_gaussian", 0.3), 50, 40, seed=9)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.teacher, b.teacher)
        assert np.array_equal(a.labels, b.labels)
        fa = sample_feature_map(30, 40, TANH, seed=9)
        fb = sample_feature_map(30, 40, TANH, seed=9)
        assert np.array_equal(fa.f_matrix, fb.f_matrix)

    def test_streams_are_independent_of_each_other(self):
        ds = sample_dataset(ISO, Channel("regression_gaussian", 0.0), 10, 20, seed=3)
        fmap = sample_feature_map(10, 20, TANH, seed=3)
        assert not np.array_equal(ds.inputs[:10, :10], fmap.f_matrix[:10, :10])

    def test_unit_variance_coordinates(self):
        ds = sample_dataset(ISO, Channel("regression_gaussian", 0.0), 10000, 8, seed=0)
        var = ds.inputs.var(axis=0)
        se = np.sqrt(2.0 / 10000)      # var of the sample variance of a Gaussian
        assert np.all(np.abs(var - 1.0) < 5 * se)

    def test_clean_classification_labels_are_signs(self):
        ds = sample_dataset(ISO, Channel("classification_square", 0.0), 200, 50, seed=1)
        assert np.array_equal(ds.labels, np.sign(ds.clean_scores))

    def test_two_block_variances(self):
        model = BlockModel.strong_weak(0.1, 10.0, 1.0)
        ds = sample_dataset(model, Channel("regression_gaussian", 0.0), 20000, 40, seed=2)
        first, second = ds.inputs[:, :4], ds.inputs[:, 4:]
        for block, sigma in ((first, model.sigma_x[0]), (second, model.sigma_x[1])):
            var = block.var()
            se = sigma * np.sqrt(2.0 / block.size)
            assert abs(var - sigma) < 5 * se

    def test_dimension_too_small_for_fractions(self):
        model = BlockModel.strong_weak(0.01, 10.0, 1.0)
        with pytest.raises(ParameterError):
            sample_dataset(model, Channel("regression_gaussian", 0.0), 10, 20, seed=0)


class TestRidgeFit:
    def test_identity_design_interpolates(self):
        y = np.arange(5, dtype=float)
        student = ridge_fit(np.eye(5), y, lam=0.0)
        assert np.allclose(student.weights, y, atol=1e-12)

    def test_huge_ridge_shrinks_to_zero(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((40, 10))
        y = rng.standard_normal(40)
        student = ridge_fit(z, y, lam=1e12)
        assert np.linalg.norm(student.weights) <= np.linalg.norm(z.T @ y) / 1e12

    def test_matches_gradient_descent_oracle(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal((50, 30))
        y = rng.standard_normal(50)
        lam = 0.5
        student = ridge_fit(z, y, lam)
        w = np.zeros(30)
        step = 1.0 / (np.linalg.eigvalsh(z.T @ z).max() + lam)
        for _ in range(200000):
            grad = z.T @ (z @ w - y) + lam * w
            w -= step * grad
            if np.linalg.norm(grad) < 1e-10:
                break
        assert np.linalg.norm(grad) < 1e-10
        assert np.max(np.abs(student.weights - w)) < 1e-8

    def test_dual_and_primal_paths_agree(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((20, 60))
        y = rng.standard_normal(20)
        wide = ridge_fit(z, y, lam=0.3).weights
        direct = np.linalg.solve(z.T @ z + 0.3 * np.eye(60), z.T @ y)
        assert np.allclose(wide, direct, atol=1e-10)

    def test_singular_negative_ridge_raises(self):
        z = np.eye(3)
        with pytest.raises(SingularityError):
            ridge_fit(z, np.ones(3), lam=-1.0)


class TestLogisticFit:
    def test_gradient_certificate(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((30, 12))
        student = logistic_fit(z, np.ones(30), lam=1.0, tol=1e-9)
        assert student.grad_norm <= 1e-9

    def test_label_flip_negates_weights_exactly(self):
        rng = np.random.default_rng(7)
        z = rng.standard_normal((25, 10))
        y = np.sign(rng.standard_normal(25))
        a = logistic_fit(z, y, lam=0.1)
        b = logistic_fit(z, -y, lam=0.1)
        assert np.array_equal(a.weights, -b.weights)

    def test_reproducible_within_tolerance(self):
        rng = np.random.default_rng(8)
        z = rng.standard_normal((40, 15))
        y = np.sign(rng.standard_normal(40))
        tol = 1e-9
        a = logistic_fit(z, y, lam=0.5, tol=tol)
        b = logistic_fit(z, y, lam=0.5, tol=tol)
        assert np.max(np.abs(a.weights - b.weights)) <= 10 * tol

    def test_matches_grid_search_oracle(self):
        z = np.array([[1.0, 0.5], [-0.3, 1.2], [0.8, -1.0], [-1.1, -0.4]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        lam = 0.7
        student = logistic_fit(z, y, lam, tol=1e-12)

        def objective(w1, w2):
            u = z[:, 0][:, None, None] * w1 + z[:, 1][:, None, None] * w2
            return (np.logaddexp(0.0, -y[:, None, None] * u).sum(axis=0)
                    + 0.5 * lam * (w1 ** 2 + w2 ** 2))

        # coarse pass over [-5, 5]^2, then a dense 1e-3 grid around the argmin
        coarse = np.linspace(-5, 5, 501)
        w1, w2 = np.meshgrid(coarse, coarse, indexing="ij")
        obj = objective(w1, w2)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        c1, c2 = coarse[i], coarse[j]
        fine1 = np.arange(c1 - 0.05, c1 + 0.05, 1e-3)
        fine2 = np.arange(c2 - 0.05, c2 + 0.05, 1e-3)
        w1, w2 = np.meshgrid(fine1, fine2, indexing="ij")
        obj = objective(w1, w2)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        assert abs(student.weights[0] - fine1[i]) < 2e-3
        assert abs(student.weights[1] - fine2[j]) < 2e-3

    def test_dual_path_certificate_for_wide_design(self):
        rng = np.random.default_rng(9)
        z = rng.standard_normal((20, 200)) / np.sqrt(200)
        y = np.sign(rng.standard_normal(20))
        student = logistic_fit(z, y, lam=1e-3, tol=1e-9)
        assert student.grad_norm <= 1e-9

    def test_zero_lam_rejected(self):
        with pytest.raises(ParameterError):
            logistic_fit(np.eye(3), np.ones(3), lam=0.0)


class TestEmpiricalMeasurements:
    def test_zero_student_is_at_chance(self):
        channel = Channel("classification_square", 0.0)
        train = sample_dataset(ISO, channel, 50, 30, seed=0)
        test = sample_dataset(ISO, channel, 5000, 30, seed=1, teacher=train.teacher)
        fmap = sample_feature_map(20, 30, TANH, seed=2)
        student = TrainedStudent(weights=np.zeros(20), lam=0.0, loss="square",
                                 iterations=0, grad_norm=0.0)
        _, eps_g = empirical_errors(student, fmap, train, test)
        assert abs(eps_g - 0.5) < 5 * 0.5 / np.sqrt(5000)

    def test_linear_noiseless_student_recovers_teacher(self):
        channel = Channel("regression_gaussian", 0.0)
        d, p, n = 60, 240, 240
        train = sample_dataset(ISO, channel, n, d, seed=3)
        test = sample_dataset(ISO, channel, 2000, d, seed=4, teacher=train.teacher)
        fmap = sample_feature_map(p, d, Activation("identity"), seed=5)
        student = ridge_fit(fmap.features(train.inputs), train.labels, lam=1e-10)
        eps_t, eps_g = empirical_errors(student, fmap, train, test)
        assert eps_t < 1e-10
        assert eps_g < 1e-3

    def test_corrupted_test_flag_measures_against_noisy_labels(self):
        channel = Channel("classification_square", 0.4)
        train = sample_dataset(ISO, channel, 60, 30, seed=20)
        test = sample_dataset(ISO, channel, 8000, 30, seed=21, teacher=train.teacher)
        fmap = sample_feature_map(90, 30, TANH, seed=22)
        student = ridge_fit(fmap.features(train.inputs), train.labels, lam=1e-2)
        _, clean = empirical_errors(student, fmap, train, test)
        _, noisy = empirical_errors(student, fmap, train, test, corrupted_test=True)
        # flipping 40% of the reference labels pushes a below-chance error up
        assert noisy > clean

    def test_zero_weights_give_zero_order_params(self):
        fmap = sample_feature_map(10, 20, TANH, seed=6)
        student = TrainedStudent(weights=np.zeros(10), lam=0.0, loss="square",
                                 iterations=0, grad_norm=0.0)
        params = empirical_order_params(student, fmap, np.ones(20), ISO)
        assert np.all(params.m_s == 0) and np.all(params.q_s == 0) and params.q_w == 0

    def test_cauchy_schwarz_per_block(self):
        model = BlockModel.strong_weak(0.25, 4.0, 2.0)
        channel = Channel("regression_gaussian", 0.1)
        d = 80
        train = sample_dataset(model, channel, 100, d, seed=7)
        fmap = sample_feature_map(120, d, TANH, seed=8)
        student = ridge_fit(fmap.features(train.inputs), train.labels, lam=1e-2)
        params = empirical_order_params(student, fmap, train.teacher, model)
        from anisorf.blockspectra import block_sizes
        start = 0
        for i, size in enumerate(block_sizes(model.phis, d)):
            beta_norm = float(train.teacher[start:start + size] @ train.teacher[start:start + size]) / d
            assert params.m_s[i] ** 2 <= params.q_s[i] * beta_norm * (1 + 1e-12)
            start += size

    def test_order_params_match_converged_theory(self):
        # 10-seed average at D=400 against the saddle-point solution
        from anisorf.replica import solve_saddle_point
        model = BlockModel.strong_weak(0.1, 10.0, 100.0)
        channel = Channel("regression_gaussian", 0.3)
        d, pod = 400, 2.0
        n, p = d, int(pod * d)
        sol = solve_saddle_point(model, channel, TANH, alpha=1.0 / pod,
                                 gamma=1.0 / pod, lam=1e-3, tol=1e-10)
        assert sol.converged
        samples = {"m_s0": [], "m_s1": [], "q_s0": [], "q_s1": [], "q_w": []}
        for seed in range(10):
            train = sample_dataset(model, channel, n, d, seed=400 + seed)
            fmap = sample_feature_map(p, d, TANH, seed=500 + seed)
            student = ridge_fit(fmap.features(train.inputs), train.labels, lam=1e-3)
            params = empirical_order_params(student, fmap, train.teacher, model)
            samples["m_s0"].append(params.m_s[0])
            samples["m_s1"].append(params.m_s[1])
            samples["q_s0"].append(params.q_s[0])
            samples["q_s1"].append(params.q_s[1])
            samples["q_w"].append(params.q_w)
        theory = {"m_s0": sol.order.m_s[0], "m_s1": sol.order.m_s[1],
                  "q_s0": sol.order.q_s[0], "q_s1": sol.order.q_s[1],
                  "q_w": sol.order.q_w}
        for key, values in samples.items():
            se = np.std(values, ddof=1) / np.sqrt(len(values))
            assert abs(np.mean(values) - theory[key]) < 3 * se + 1e-4, key

    def test_order_params_reproduce_score_covariance(self):
        # the measured overlaps, pushed through the surrogate composition,
        # match the covariance/variance of actual student scores on fresh data
        channel = Channel("regression_gaussian", 0.3)
        d, n, p, seeds = 400, 400, 400, 10
        kset = kappa_constants(TANH, ISO.r)
        diff_m, diff_q = [], []
        for seed in range(seeds):
            train = sample_dataset(ISO, channel, n, d, seed=100 + seed)
            fmap = sample_feature_map(p, d, TANH, seed=200 + seed)
            student = ridge_fit(fmap.features(train.inputs), train.labels, lam=1e-3)
            params = empirical_order_params(student, fmap, train.teacher, ISO)
            stats = scalar_stats(params, ISO, kset)
            probe = sample_dataset(ISO, channel, 20000, d, seed=300 + seed,
                                   teacher=train.teacher)
            scores = fmap.features(probe.inputs) @ student.weights
            teacher_scores = probe.clean_scores
            diff_m.append(float(np.mean(scores * teacher_scores)) - stats.m)
            diff_q.append(float(np.mean(scores ** 2)) - stats.q)
        for diffs in (diff_m, diff_q):
            se = np.std(diffs, ddof=1) / np.sqrt(seeds)
            assert abs(np.mean(diffs)) < 3 * se + 1e-3


class TestCovarianceCheck:
    def test_identity_activation_prediction_is_exact(self):
        z = get_covariance_check(ISO, Activation("identity"), d=500, pairs=30,
                                 samples=20000, seed=0)
        assert z <= 5.0

    def test_tanh_isotropic(self):
        z = get_covariance_check(ISO, TANH, d=1000, pairs=40, samples=30000, seed=1)
        assert z <= 5.0

    def test_small_dimension_rejected(self):
        with pytest.raises(ParameterError):
            get_covariance_check(ISO, TANH, d=100, pairs=10, samples=100, seed=0)
