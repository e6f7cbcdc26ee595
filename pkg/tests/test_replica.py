import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import expit, ndtr

from anisorf.blockspectra import block_sizes
from anisorf.errors import ParameterError, SingularityError
from anisorf.gaussmoments import Activation, kappa_constants
from anisorf.replica import (BlockModel, Channel, HatParams, OrderParams,
                             ScalarStats, default_init, energetic_update,
                             entropic_update, proximal, scalar_stats,
                             solve_saddle_point, teacher_partition, train_error)
from anisorf.replica import test_error as generalization_error

REG = Channel("regression_gaussian", 0.3)
CLF = Channel("classification_square", 0.3)
LOG = Channel("classification_logistic", 0.0)


def make_stats(rho=1.0, m=0.5, q=1.0, v=0.5):
    return ScalarStats(rho=rho, m=m, q=q, v=v)


class TestModelAndChannel:
    def test_strong_weak_normalization(self):
        model = BlockModel.strong_weak(0.1, 10.0, 100.0)
        assert abs(model.r - 1.0) < 1e-12
        assert abs(model.rho - 1.0) < 1e-12

    def test_fraction_validation(self):
        with pytest.raises(ParameterError):
            BlockModel(blocks=((0.5, 1.0, 1.0), (0.4, 1.0, 1.0)))

    def test_empty_teacher_rejected(self):
        with pytest.raises(ParameterError):
            BlockModel(blocks=((1.0, 1.0, 0.0),))

    def test_flip_probability_range(self):
        with pytest.raises(ParameterError):
            Channel("classification_square", 1.5)
        Channel("regression_gaussian", 2.0)   # variance > 1 is fine


class TestScalarStats:
    def test_single_block_substitution(self):
        model = BlockModel.isotropic()
        kset = kappa_constants(Activation("tanh"), model.r)
        order = OrderParams(m_s=np.array([1.0]), q_s=np.array([1.0]),
                            v_s=np.array([0.0]), q_w=0.0, v_w=0.0)
        stats = scalar_stats(order, model, kset)
        assert stats.rho == pytest.approx(1.0)
        assert stats.m == pytest.approx(kset.kappa1)
        assert stats.q == pytest.approx(kset.kappa1 ** 2)
        assert stats.v == 0.0

    def test_zero_order_params(self):
        model = BlockModel.strong_weak(0.2, 5.0, 2.0)
        kset = kappa_constants(Activation("relu"), model.r)
        order = OrderParams(m_s=np.zeros(2), q_s=np.zeros(2), v_s=np.zeros(2),
                            q_w=0.0, v_w=0.0)
        stats = scalar_stats(order, model, kset)
        assert stats.m == 0.0 and stats.q == 0.0 and stats.v == 0.0
        assert stats.rho == pytest.approx(model.rho)


class TestErrors:
    def test_aligned_student_has_zero_error(self):
        assert generalization_error(make_stats(1, 1, 1, 0), CLF) == pytest.approx(0.0)
        assert generalization_error(make_stats(1, 1, 1, 0), REG) == pytest.approx(0.0)

    def test_orthogonal_student_guesses_at_chance(self):
        assert generalization_error(make_stats(1, 0, 1, 0), CLF) == pytest.approx(0.5)

    def test_quarter_error_at_45_degrees(self):
        assert generalization_error(make_stats(1, 1 / np.sqrt(2), 1, 0), CLF) == pytest.approx(0.25)

    def test_regression_train_error_formula(self):
        stats = make_stats(1, 0.5, 1, 1)     # eps_g = 0.5
        channel = Channel("regression_gaussian", 0.2)
        assert train_error(stats, channel) == pytest.approx(0.15)

    def test_noiseless_interpolation(self):
        assert train_error(make_stats(1, 1, 1, 0), Channel("regression_gaussian", 0.0)) \
            == pytest.approx(0.0)

    def test_pure_noise_flip_kills_m_dependence(self):
        channel = Channel("classification_square", 0.5)
        a = train_error(make_stats(1, 0.9, 1.5, 0.3), channel)
        b = train_error(make_stats(1, -0.9, 1.5, 0.3), channel)
        assert a == pytest.approx(b)
        assert a == pytest.approx((1 + 1.5) / (2 * 1.3 ** 2))

    def test_full_flip_equals_mirrored_student(self):
        # training with all labels flipped = the M -> -M error combination
        stats = make_stats(1, 0.4, 1.2, 0.6)
        mirrored = make_stats(1, -0.4, 1.2, 0.6)
        assert train_error(stats, Channel("classification_square", 1.0)) \
            == pytest.approx(train_error(mirrored, Channel("classification_square", 0.0)))

    def test_logistic_train_loss_vanishes_for_giant_aligned_student(self):
        values = [train_error(make_stats(1, np.sqrt(q) * 0.999, q, 1.0), LOG)
                  for q in (10.0, 100.0, 1000.0, 10000.0)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 5e-3

    def test_v_domain_guard(self):
        with pytest.raises(ParameterError):
            train_error(make_stats(v=-1.5), REG)


class TestProximal:
    def test_zero_width_is_identity(self):
        for loss in ("square", "logistic"):
            assert proximal(1.0, 0.7, 0.0, loss) == pytest.approx(0.7)

    def test_square_closed_form(self):
        assert proximal(1.0, 0.0, 1.0, "square") == pytest.approx(0.5)
        assert proximal(-1.0, 0.3, 2.0, "square") == pytest.approx((0.3 - 2.0) / 3.0)

    def test_logistic_root_and_residual(self):
        got = proximal(1.0, 0.0, 1.0, "logistic")
        oracle = brentq(lambda x: x * (1 + np.exp(x)) - 1, 0.0, 1.0, xtol=1e-15)
        assert abs(got - oracle) < 1e-12
        assert abs(got - 0.40) < 5e-3

    @pytest.mark.parametrize("y", [1.0, -1.0])
    @pytest.mark.parametrize("omega", [-30.0, -2.0, 0.0, 1.5, 40.0])
    @pytest.mark.parametrize("v", [1e-4, 0.5, 3.0, 200.0])
    def test_logistic_optimality_residual(self, y, omega, v):
        x = proximal(y, omega, v, "logistic")
        # the certificate through the returned x cannot beat the floating
        # representation of x - omega, which costs eps * |x| / v
        floor = 4 * np.finfo(float).eps * (1.0 + abs(x)) / v
        assert abs((x - omega) / v - y * expit(-y * x)) <= max(1e-12, floor)

    def test_negative_width_rejected(self):
        with pytest.raises(ParameterError):
            proximal(1.0, 0.0, -0.1, "square")


class TestTeacherPartition:
    def test_fair_coin_labels(self):
        channel = Channel("classification_square", 0.5)
        for omega in (-3.0, 0.0, 7.0):
            assert teacher_partition(1.0, omega, 1.0, channel) == pytest.approx(0.5)

    def test_sure_positive_teacher(self):
        channel = Channel("classification_square", 0.0)
        assert teacher_partition(1.0, 60.0, 1.0, channel) == pytest.approx(1.0)

    def test_mixture_closed_form_against_integration(self):
        channel = Channel("classification_square", 0.1)
        got = teacher_partition(1.0, 0.0, 1.0, channel)
        assert got == pytest.approx(0.5)
        for omega, v0 in [(0.4, 0.7), (-1.2, 2.0)]:
            got = teacher_partition(1.0, omega, v0, channel)
            def integrand(x):
                dens = np.exp(-0.5 * (x - omega) ** 2 / v0) / np.sqrt(2 * np.pi * v0)
                return dens * (0.9 if x > 0 else 0.1)
            want, _ = quad(integrand, -30, 30, limit=200)
            assert got == pytest.approx(want, abs=1e-10)

    def test_regression_is_a_gaussian_density(self):
        channel = Channel("regression_gaussian", 0.5)
        got = teacher_partition(0.3, 1.0, 2.0, channel)
        var = 2.0 + 0.5
        assert got == pytest.approx(np.exp(-0.5 * (0.3 - 1.0) ** 2 / var)
                                    / np.sqrt(2 * np.pi * var))

    def test_degenerate_variance_rejected(self):
        with pytest.raises(ParameterError):
            teacher_partition(1.0, 0.0, 0.0, REG)


def isotropic_entropic_oracle(sigma_beta, vhat_s, mhat, qhat_s, vhat_w, qhat_w,
                              lam, gamma):
    """Independently coded single-block update: scalar quadratic for the
    resolvent, analytic derivative, then the one-block update formulas."""
    c = lam + vhat_w
    z = -c
    a_coef, b_coef, c_coef = z * gamma * vhat_s, -(z - vhat_s + gamma * vhat_s), 1.0
    roots = np.roots([a_coef, b_coef, c_coef])
    q = float(roots[(roots < 0)][0])
    dq = (q - gamma * vhat_s * q ** 2) / (2 * z * gamma * vhat_s * q - z + vhat_s
                                          - gamma * vhat_s)
    t, u = -q, -dq
    chat = sigma_beta * mhat ** 2 + qhat_s
    m_s = sigma_beta * mhat * (1 - c * t) / vhat_s
    q_s = (chat / vhat_s ** 2) * (1 - 2 * c * t + c ** 2 * u) \
        + (qhat_w / vhat_s) * (t - c * u)
    v_s = (1 - c * t) / vhat_s
    v_w = (1 - gamma) / c + gamma * t
    q_w = qhat_w * ((1 - gamma) / c ** 2 + gamma * u) + gamma * (chat / vhat_s) * (t - c * u)
    return m_s, q_s, v_s, q_w, v_w


class TestEntropicUpdate:
    def test_zero_sources_give_zero_overlaps(self):
        model = BlockModel.strong_weak(0.3, 4.0, 2.0)
        hats = HatParams(m_hat=np.zeros(2), q_hat=np.zeros(2),
                         v_hat=np.array([1.0, 0.5]), q_hat_w=0.0, v_hat_w=0.8)
        out = entropic_update(hats, model, lam=0.1, gamma=0.5)
        assert np.allclose(out.m_s, 0.0) and np.allclose(out.q_s, 0.0)
        assert np.all(out.v_s > 0) and out.v_w > 0

    def test_matches_independent_isotropic_code_on_random_inputs(self):
        rng = np.random.default_rng(7)
        model = BlockModel.isotropic()
        for _ in range(50):
            vhat_s, mhat, qhat_s, vhat_w, qhat_w = rng.uniform(0.05, 3.0, size=5)
            lam = rng.uniform(1e-4, 1.0)
            gamma = rng.uniform(0.1, 5.0)
            hats = HatParams(m_hat=np.array([mhat]), q_hat=np.array([qhat_s]),
                             v_hat=np.array([vhat_s]), q_hat_w=qhat_w,
                             v_hat_w=vhat_w)
            got = entropic_update(hats, model, lam, gamma)
            want = isotropic_entropic_oracle(1.0, vhat_s, mhat, qhat_s, vhat_w,
                                             qhat_w, lam, gamma)
            for g, w in zip([got.m_s[0], got.q_s[0], got.v_s[0], got.q_w, got.v_w], want):
                assert abs(g - w) < 1e-10 * max(1.0, abs(w))

    def test_trace_identity_against_dense_matrix(self):
        # (1/P) tr (I_D + Vhat_s/(lam+vhat_w) FF^T/P)^{-1} = gamma c sum_i t_i
        from anisorf.blockspectra import BlockSpectrumSpec, block_resolvent_moments
        model = BlockModel.strong_weak(0.1, 10.0, 100.0)
        vhat = np.array([2.0, 0.4])
        lam, vhat_w, gamma = 1e-2, 0.7, 0.5
        c = lam + vhat_w
        spec = BlockSpectrumSpec(phis=tuple(model.phis), vhats=tuple(vhat), gamma=gamma)
        mom = block_resolvent_moments(spec, c)
        rhs = gamma * c * float(np.sum(mom.t))
        d = 1500
        p = int(d / gamma)
        rng = np.random.default_rng(0)
        sizes = block_sizes(model.phis, d)
        vhat_diag = np.concatenate([np.full(s, v) for s, v in zip(sizes, vhat)])
        f = rng.standard_normal((d, p))
        gram = f @ f.T / p
        inner = np.eye(d) + vhat_diag[:, None] * gram / c
        lhs = np.trace(np.linalg.inv(inner)) / p
        assert abs(lhs - rhs) / rhs < 0.015

    def test_negative_effective_ridge_raises(self):
        model = BlockModel.isotropic()
        hats = HatParams(m_hat=np.array([0.1]), q_hat=np.array([0.1]),
                         v_hat=np.array([1.0]), q_hat_w=0.1, v_hat_w=0.05)
        with pytest.raises(SingularityError):
            entropic_update(hats, model, lam=-0.2, gamma=1.0)


class TestEnergeticUpdate:
    def test_regression_substitution(self):
        model = BlockModel.isotropic()
        kset = kappa_constants(Activation("tanh"), 1.0)
        stats = make_stats(1.0, 0.0, 1.0, 0.0)
        hats = energetic_update(stats, Channel("regression_gaussian", 0.0),
                                alpha=0.7, gamma=0.5, model=model, kappas=kset)
        assert hats.q_hat_w == pytest.approx(2 * 0.7 * kset.kappa_star ** 2)
        assert hats.v_hat_w == pytest.approx(0.7 * kset.kappa_star ** 2)
        assert hats.m_hat[0] == pytest.approx(kset.kappa1 * 0.7 / 0.5)

    def test_pure_noise_classification_has_no_m_dependence(self):
        model = BlockModel.isotropic()
        kset = kappa_constants(Activation("relu"), 1.0)
        channel = Channel("classification_square", 0.5)
        a = energetic_update(make_stats(m=0.5), channel, 1.0, 1.0, model, kset)
        b = energetic_update(make_stats(m=-0.5), channel, 1.0, 1.0, model, kset)
        assert np.allclose(a.q_hat, b.q_hat) and a.q_hat_w == pytest.approx(b.q_hat_w)
        assert np.allclose(a.m_hat, 0.0)

    def test_logistic_integrals_match_adaptive_quadrature(self):
        model = BlockModel.isotropic()
        kset = kappa_constants(Activation("tanh"), 1.0)
        stats = make_stats(1.0, 0.5, 1.0, 1.0)
        channel = Channel("classification_logistic", 0.0)
        hats = energetic_update(stats, channel, alpha=1.0, gamma=1.0,
                                model=model, kappas=kset)

        def prox_oracle(y, omega, v):
            lo, hi = (omega, omega + v) if y > 0 else (omega - v, omega)
            return brentq(lambda x: (x - omega) / v - y * expit(-y * x),
                          lo - 1e-9, hi + 1e-9, xtol=1e-14)

        rho, m, q, v = stats.rho, stats.m, stats.q, stats.v
        v0 = rho - m * m / q

        def node(y, xi, what):
            om0, om1 = m / np.sqrt(q) * xi, np.sqrt(q) * xi
            z0 = ndtr(y * om0 / np.sqrt(v0))
            eta = prox_oracle(y, om1, v)
            s = expit(-y * eta)
            if what == "iv":
                return z0 * s * (1 - s) / (1 + v * s * (1 - s))
            if what == "iq":
                return z0 * s ** 2
            dz0 = y * np.exp(-0.5 * (om0 / np.sqrt(v0)) ** 2) / np.sqrt(2 * np.pi * v0)
            return dz0 * y * s

        gauss = lambda xi: np.exp(-xi ** 2 / 2) / np.sqrt(2 * np.pi)
        oracle = {}
        for what in ("iv", "iq", "im"):
            total = 0.0
            for y in (1.0, -1.0):
                val, err = quad(lambda xi: node(y, xi, what) * gauss(xi),
                                -10, 10, limit=300, epsabs=1e-11, epsrel=1e-11)
                assert err < 1e-8
                total += val
            oracle[what] = total
        assert hats.v_hat_w == pytest.approx(kset.kappa_star ** 2 * oracle["iv"], abs=1e-6)
        assert hats.q_hat_w == pytest.approx(kset.kappa_star ** 2 * oracle["iq"], abs=1e-6)
        assert hats.m_hat[0] == pytest.approx(kset.kappa1 * oracle["im"], abs=1e-6)


class TestSolveSaddlePoint:
    def test_pure_noise_classification_lands_at_chance(self):
        model = BlockModel.isotropic()
        sol = solve_saddle_point(model, Channel("classification_square", 0.5),
                                 Activation("tanh"), alpha=1.0, gamma=1.0,
                                 lam=1e-3, tol=1e-11)
        assert sol.converged
        assert abs(sol.stats.m) < 1e-9
        assert sol.eps_g == pytest.approx(0.5, abs=1e-6)

    def test_overdetermined_noiseless_linear_ridge_recovers_teacher(self):
        model = BlockModel.isotropic()
        sol = solve_saddle_point(model, Channel("regression_gaussian", 0.0),
                                 Activation("identity"), alpha=1.0, gamma=0.25,
                                 lam=1e-8, tol=1e-12)
        assert sol.converged
        assert sol.eps_g < 1e-3

    def test_classification_error_range(self):
        model = BlockModel.strong_weak(0.1, 10.0, 100.0)
        for pod in (0.5, 1.0, 4.0):
            sol = solve_saddle_point(model, Channel("classification_square", 0.1),
                                     Activation("relu"), alpha=1.0 / pod,
                                     gamma=1.0 / pod, lam=1e-2)
            assert sol.converged and sol.stats.m >= 0
            assert 0.0 <= sol.eps_g <= 0.5

    def test_fixed_point_self_consistency(self):
        model = BlockModel.strong_weak(0.1, 10.0, 0.01)
        channel = Channel("regression_gaussian", 0.3)
        act = Activation("tanh")
        tol = 1e-10
        sol = solve_saddle_point(model, channel, act, alpha=0.5, gamma=0.5,
                                 lam=1e-3, tol=tol)
        assert sol.converged
        again = solve_saddle_point(model, channel, act, alpha=0.5, gamma=0.5,
                                   lam=1e-3, tol=tol, init=sol.order, max_iter=1)
        drift = np.max(np.abs(again.order.as_vector() - sol.order.as_vector()))
        assert drift <= 10 * tol

    def test_regression_train_test_link_is_exact(self):
        model = BlockModel.isotropic()
        channel = Channel("regression_gaussian", 0.4)
        sol = solve_saddle_point(model, channel, Activation("relu"), alpha=0.5,
                                 gamma=0.5, lam=1e-2)
        expected = (sol.eps_g + channel.delta / 2) / (1 + sol.stats.v) ** 2
        assert sol.eps_t == pytest.approx(expected, rel=1e-12)

    def test_nonconvergence_is_flagged_not_raised(self):
        model = BlockModel.isotropic()
        sol = solve_saddle_point(model, Channel("classification_logistic", 0.0),
                                 Activation("tanh"), alpha=0.5, gamma=0.5,
                                 lam=1e-3, max_iter=3)
        assert not sol.converged
        assert sol.iterations == 3 and sol.residual > 0

    def test_default_init_matches_documented_values(self):
        model = BlockModel.strong_weak(0.25, 2.0, 3.0)
        init = default_init(model)
        assert np.allclose(init.m_s, 0.1 * np.sqrt(model.phis * model.sigma_beta))
        assert np.allclose(init.q_s, model.phis)
        assert init.q_w == 1.0 and init.v_w == 1.0
