import math

import numpy as np
import pytest

from smallball.norms import RegNorm
from smallball.rates import (
    CORRELATED,
    ISO_GAUSSIAN,
    RADEMACHER,
    DesignModel,
    NoiseModel,
    RateConstants,
    critical_radii,
    excess_loss_decomposition,
    gauss_cdf,
    small_ball_estimate,
    width_closed_form,
    width_mc,
)
from smallball.solver import Dataset


def iso(shape):
    return DesignModel(ISO_GAUSSIAN, shape)


class TestNoiseModel:
    def test_gaussian_lq_matches_quadrature(self):
        from scipy.integrate import quad
        from scipy.stats import norm as gauss

        for q in (2.1, 2.5, 4.0):
            moment, _ = quad(lambda x: 2 * x**q * gauss.pdf(x), 0, np.inf)
            expect = moment ** (1 / q)
            got = NoiseModel("gaussian", 1.0, q=q).lq_norm
            assert got == pytest.approx(expect, rel=1e-8)

    def test_student_t_lq_matches_quadrature(self):
        from scipy.integrate import quad
        from scipy.stats import t as student

        moment, _ = quad(lambda x: 2 * x**2.5 * student.pdf(x, 3.0), 0, np.inf)
        expect = moment ** (1 / 2.5)
        got = NoiseModel("student-t", 1.0, dof=3.0, q=2.5).lq_norm
        assert got == pytest.approx(expect, rel=1e-6)

    def test_scaling_and_zero(self):
        base = NoiseModel("gaussian", 1.0).lq_norm
        assert NoiseModel("gaussian", 2.5).lq_norm == pytest.approx(2.5 * base)
        assert NoiseModel("gaussian", 0.0).lq_norm == 0.0

    def test_q_must_be_below_dof(self):
        with pytest.raises(ValueError):
            NoiseModel("student-t", 1.0, dof=3.0, q=3.0)
        with pytest.raises(ValueError):
            NoiseModel("gaussian", 1.0, q=2.0)


class TestDesignModel:
    def test_isotropic_row_bound(self):
        assert iso(8).row_bound == 1.0
        assert DesignModel(RADEMACHER, 8).row_bound == 1.0

    def test_correlated_row_bound_is_sqrt_diag(self):
        cov = np.array([[4.0, 0.2], [0.2, 1.0]])
        dm = DesignModel(CORRELATED, 2, cov)
        assert dm.row_bound == pytest.approx(2.0, rel=1e-9)
        root = dm.cov_root()
        assert np.allclose(root @ root, cov, atol=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            DesignModel(CORRELATED, 2, np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            DesignModel(ISO_GAUSSIAN, 2, np.eye(2))
        with pytest.raises(ValueError):
            DesignModel("uniform", 2)


class TestWidthClosedForm:
    def test_l1_dense_regime(self):
        # rho >= r*sqrt(d): the l2-ball term wins, with exact constant 1
        assert width_closed_form(RegNorm.l1(4), 10.0, 1.0, iso(4)) == pytest.approx(2.0)

    def test_slope_k1_branch(self):
        # the k = 1 branch has no l2 term, so the bound never exceeds
        # rho * max_i sqrt(log(ed/i)) / beta_i
        n = RegNorm.slope(d=16, C=1.0)
        d = 16
        i = np.arange(1, d + 1)
        k1 = 3.0 * np.max(np.sqrt(np.log(np.e * d / i)) / n.weights)
        assert width_closed_form(n, 3.0, 0.5, iso(16)) <= k1 + 1e-12

    def test_trace_hand_value(self):
        assert width_closed_form(RegNorm.trace(3, 3), 10.0, 1.0, iso(9)) == pytest.approx(3.0)

    @pytest.mark.parametrize(
        "norm",
        [RegNorm.l1(32), RegNorm.slope(d=32, C=1.3), RegNorm.trace(4, 8)],
        ids=["l1", "slope", "trace"],
    )
    def test_monotone_and_homogeneous(self, norm):
        design = iso(norm.shape if norm.kind != "trace" else (4, 8))
        for rho in [0.1, 0.5, 1.0, 3.0, 10.0]:
            for r in [0.05, 0.3, 1.0, 2.0, 8.0]:
                w = width_closed_form(norm, rho, r, design)
                assert width_closed_form(norm, rho * 1.01, r, design) >= w - 1e-12
                assert width_closed_form(norm, rho, r * 1.01, design) >= w - 1e-12
                for c in (0.3, 2.5):
                    scaled = width_closed_form(norm, c * rho, c * r, design)
                    assert scaled == pytest.approx(c * w, rel=1e-9)

    def test_noniso_l1(self):
        cov = np.diag([4.0, 1.0])
        dm = DesignModel(CORRELATED, 2, cov)
        w = width_closed_form(RegNorm.l1(2), 1.0, 0.2, dm)
        assert w == pytest.approx(
            min(0.2 * math.sqrt(2), 2.0 * math.sqrt(math.log(2 * math.e)))
        )

    def test_noniso_slope_homogeneous(self):
        cov = np.array([[1.0, 0.4], [0.4, 1.0]])
        dm = DesignModel(CORRELATED, 2, cov)
        n = RegNorm.slope(d=2, C=1.0)
        base = width_closed_form(n, 1.0, 0.5, dm)
        assert width_closed_form(n, 3.0, 1.5, dm) == pytest.approx(3 * base, rel=1e-12)

    def test_trace_correlated_unsupported(self):
        with pytest.raises(ValueError):
            width_closed_form(
                RegNorm.trace(2, 2), 1.0, 1.0, DesignModel(CORRELATED, 4, np.eye(4))
            )


class TestWidthMc:
    def test_one_dimensional_gaussian_mean(self):
        est = width_mc(RegNorm.l1(1), 1.0, 1.0, iso(1), 10_000, seed=1)
        target = math.sqrt(2 / math.pi)
        assert abs(est.upper_mean - target) <= 2 * est.upper_se
        assert abs(est.lower_mean - target) <= 2 * est.lower_se

    def test_large_rho_reaches_l2_ball(self):
        d = 16
        est = width_mc(RegNorm.l1(d), 1e6, 1.0, iso(d), 2000, seed=2)
        assert est.upper_mean <= math.sqrt(d)
        # E||g||_2 for d=16 is ~3.94
        assert est.upper_mean == pytest.approx(3.94, abs=0.1)

    @pytest.mark.parametrize("d", [16, 256])
    def test_sandwich_against_closed_form(self, d):
        norm = RegNorm.l1(d)
        for i, rho in enumerate([0.25, 0.5, 1.0, 2.0, 4.0]):
            for j, r in enumerate([0.25, 0.5, 1.0, 2.0, 4.0]):
                est = width_mc(norm, rho, r, iso(d), 2000, seed=100 + 10 * i + j)
                cf = width_closed_form(norm, rho, r, iso(d))
                assert est.lower_mean <= est.upper_mean + 1e-12
                assert est.upper_mean <= cf + 3 * est.upper_se

    def test_slope_and_trace_sandwich_order(self):
        for norm in [RegNorm.slope(d=12, C=1.0), RegNorm.trace(4, 3)]:
            est = width_mc(norm, 1.5, 0.7, iso(norm.shape), 1500, seed=5)
            assert est.lower_mean <= est.upper_mean

    def test_correlated_sandwich_order(self):
        cov = np.array([[0.5 ** abs(i - j) for j in range(8)] for i in range(8)])
        dm = DesignModel(CORRELATED, 8, cov)
        est = width_mc(RegNorm.l1(8), 1.0, 0.5, dm, 1000, seed=6)
        assert est.lower_mean <= est.upper_mean

    def test_too_few_trials(self):
        with pytest.raises(ValueError):
            width_mc(RegNorm.l1(2), 1.0, 1.0, iso(2), 50, seed=0)


class TestCriticalRadii:
    def test_rq_zero_when_samples_dominate_dimension(self):
        rep = critical_radii(
            RegNorm.l1(64), iso(64), NoiseModel("gaussian", 1.0), N=128, rho=1.0
        )
        assert rep.r_q == 0.0
        assert rep.r == rep.r_m > 0

    def test_rq_positive_small_sample(self):
        rep = critical_radii(
            RegNorm.l1(64), iso(64), NoiseModel("gaussian", 0.0), N=8, rho=1.0
        )
        assert rep.r_m == 0.0
        assert rep.r_q > 0
        # fixed point: width(rho, r_q) == c_q * r_q * sqrt(N)
        w = width_closed_form(RegNorm.l1(64), 1.0, rep.r_q, iso(64))
        assert w == pytest.approx(rep.r_q * math.sqrt(8), rel=1e-6)

    def test_rm_solves_fixed_point(self):
        noise = NoiseModel("gaussian", 1.0)
        rep = critical_radii(RegNorm.l1(256), iso(256), noise, N=1024, rho=1.0)
        w = width_closed_form(RegNorm.l1(256), 1.0, rep.r_m, iso(256))
        assert noise.lq_norm * w == pytest.approx(rep.r_m**2 * 32.0, rel=1e-6)

    def test_lasso_small_rho_display_shape(self):
        # r_M^2 tracks rho * ||xi||_q * sqrt(log(e d r^2/rho^2)/N) with the
        # constant carried by the l1 width bound
        noise = NoiseModel("gaussian", 1.0)
        d, N = 256, 1024
        for rho in (0.25, 0.5, 1.0):
            rep = critical_radii(RegNorm.l1(d), iso(d), noise, N=N, rho=rho)
            pred = (
                math.sqrt(2.0)
                * rho
                * noise.lq_norm
                * math.sqrt(math.log(math.e * d * rep.r_m**2 / rho**2) / N)
            )
            assert rep.r_m**2 == pytest.approx(pred, rel=1e-6)

    def test_rm_sublinear_in_rho(self):
        noise = NoiseModel("gaussian", 1.0)
        rep1 = critical_radii(RegNorm.l1(128), iso(128), noise, N=512, rho=1.0)
        rep2 = critical_radii(RegNorm.l1(128), iso(128), noise, N=512, rho=2.0)
        assert rep2.r_m**2 <= 2 * rep1.r_m**2 * (1 + 1e-9)
        assert rep2.r >= rep1.r - 1e-12
        assert rep2.r / 2.0 <= rep1.r * (1 + 1e-9)  # r(rho)/rho nonincreasing

    def test_gamma_o_bound_exact(self):
        rep = critical_radii(
            RegNorm.l1(32), iso(32), NoiseModel("gaussian", 1.0), N=128, rho=1.0
        )
        assert rep.gamma_o_bound == rep.theta * rep.r**2 / 8.0

    def test_bracket_failure_diagnostics(self):
        # c_m so large the multiplier condition holds everywhere: r_m = 0;
        # c_q tiny with N < 2d makes the quadratic condition fail everywhere
        with pytest.raises(RuntimeError, match="r_Q"):
            critical_radii(
                RegNorm.l1(64), iso(64), NoiseModel("gaussian", 1.0), N=8, rho=1.0,
                constants=RateConstants(c_q=1e-12, c_m=1.0),
            )


class TestSmallBall:
    def test_gaussian_half_kappa(self):
        eps, theta = small_ball_estimate(iso(8), 0.5, 100_000, seed=0)
        expect = 2 * (1 - gauss_cdf(0.5))
        assert expect == pytest.approx(0.617, abs=1e-3)
        assert abs(eps - expect) <= 0.02
        assert theta == pytest.approx(0.25 * eps / 16.0)

    def test_tiny_kappa_full_mass(self):
        eps, _ = small_ball_estimate(iso(4), 0.001, 2000, seed=1)
        assert eps >= 0.99

    def test_rademacher_coordinate_direction(self):
        e1 = np.zeros(8)
        e1[0] = 1.0
        eps, _ = small_ball_estimate(
            DesignModel(RADEMACHER, 8), 0.5, 2000, seed=2, directions=e1
        )
        assert eps == 1.0

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            small_ball_estimate(iso(2), 0.5, 100, seed=0)


class TestDecomposition:
    def test_zero_at_target(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((20, 5))
        t_star = rng.standard_normal(5)
        y = X @ t_star - rng.standard_normal(20)
        q, c, tot = excess_loss_decomposition(Dataset(X, y), t_star, t_star)
        assert q == 0 and c == 0 and tot == 0

    def test_algebraic_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            N = int(rng.integers(2, 40))
            d = int(rng.integers(1, 10))
            X = rng.standard_normal((N, d))
            t_star = rng.standard_normal(d)
            t = rng.standard_normal(d)
            y = X @ t_star - rng.standard_normal(N)
            q, c, tot = excess_loss_decomposition(Dataset(X, y), t, t_star)
            assert tot == pytest.approx(q + c, rel=1e-10, abs=1e-12)

    def test_quadratic_concentration(self):
        # unit-l2 difference, N = 1e3: the quadratic term sits in [0.8, 1.2]
        # in at least 95% of 200 seeded draws
        hits = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((1000, 6))
            t_star = np.zeros(6)
            diff = rng.standard_normal(6)
            t = t_star + diff / np.linalg.norm(diff)
            y = X @ t_star
            q, _, _ = excess_loss_decomposition(Dataset(X, y), t, t_star)
            hits += 0.8 <= q <= 1.2
        assert hits >= 190
