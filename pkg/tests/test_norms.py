import math

import numpy as np
import pytest

from smallball.norms import (
    RegNorm,
    decreasing_rearrangement,
    lp_interpolation,
    slope_weights,
    sparsity_weight,
)


class TestRearrangement:
    def test_basic(self):
        assert decreasing_rearrangement([1, -3, 2]).tolist() == [3, 2, 1]

    def test_zeros(self):
        assert decreasing_rearrangement([0, 0]).tolist() == [0, 0]

    def test_permutation_of_abs(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.standard_normal(rng.integers(1, 30))
            r = decreasing_rearrangement(x)
            assert np.isclose(r.sum(), np.abs(x).sum())
            assert np.all(np.diff(r) <= 0)

    def test_idempotent_and_permutation_invariant(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(20)
        r = decreasing_rearrangement(x)
        assert np.array_equal(decreasing_rearrangement(r), r)
        perm = rng.permutation(20)
        assert np.array_equal(decreasing_rearrangement(x[perm]), r)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            decreasing_rearrangement([])


class TestNormValues:
    def test_slope_hand_value(self):
        n = RegNorm.slope(weights=[2.0, 1.0])
        assert n.value([1.0, -3.0]) == pytest.approx(7.0)

    def test_trace_diagonal(self):
        assert RegNorm.trace(2, 2).value(np.diag([3.0, 1.0])) == pytest.approx(4.0)

    def test_slope_unit_weights_equals_l1(self):
        rng = np.random.default_rng(2)
        d = 17
        slope = RegNorm.slope(weights=np.ones(d))
        l1 = RegNorm.l1(d)
        for _ in range(100):
            x = rng.standard_normal(d)
            assert slope.value(x) == pytest.approx(l1.value(x), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            RegNorm.l1(4).value(np.ones(5))
        with pytest.raises(ValueError):
            RegNorm.trace(2, 3).value(np.ones((3, 3)))

    def test_weights_must_be_nonincreasing(self):
        with pytest.raises(ValueError):
            RegNorm.slope(weights=[1.0, 2.0])
        with pytest.raises(ValueError):
            RegNorm.slope(weights=[1.0, 0.0])


class TestDualNorm:
    def test_slope_hand_value(self):
        n = RegNorm.slope(weights=[2.0, 1.0])
        assert n.dual_value([3.0, 3.0]) == pytest.approx(2.0)

    def test_slope_unit_weights_is_linf(self):
        rng = np.random.default_rng(3)
        n = RegNorm.slope(weights=np.ones(9))
        for _ in range(50):
            g = rng.standard_normal(9)
            assert n.dual_value(g) == pytest.approx(np.abs(g).max(), rel=1e-12)

    def test_trace_dual_is_operator_norm(self):
        assert RegNorm.trace(2, 2).dual_value(np.diag([3.0, 1.0])) == pytest.approx(3.0)

    def test_pairing_inequality_exact(self):
        rng = np.random.default_rng(4)
        norms = [
            RegNorm.l1(8),
            RegNorm.slope(d=8, C=1.5),
            RegNorm.trace(3, 4),
        ]
        for norm in norms:
            for _ in range(200):
                g = rng.standard_normal(norm.dim)
                x = rng.standard_normal(norm.dim)
                lhs = norm.inner(g, x)
                rhs = norm.dual_value(g) * norm.value(x)
                assert lhs <= rhs + 1e-10 * max(1.0, rhs)

    def test_dual_matches_support_maximization(self):
        # dual norm == sup over the unit Psi ball of <g, x>; 1e4 random
        # unit-sphere points (dense and sparse sign patterns, so the ball's
        # vertices get visited) give a lower-bound sandwich within 5%
        rng = np.random.default_rng(5)
        for norm in [RegNorm.l1(5), RegNorm.slope(d=5, C=1.0)]:
            g = rng.standard_normal(5)
            dual = norm.dual_value(g)
            best = 0.0
            for _ in range(10_000):
                if rng.uniform() < 0.5:
                    x = rng.standard_normal(5)
                else:
                    x = np.zeros(5)
                    k = int(rng.integers(1, 6))
                    x[rng.choice(5, k, replace=False)] = rng.choice([-1.0, 1.0], k)
                x /= norm.value(x)
                best = max(best, abs(norm.inner(g, x)))
            assert best <= dual + 1e-10
            assert best >= 0.95 * dual


class TestSlopeWeights:
    def test_d4_values(self):
        beta = slope_weights(4, 1.0)
        assert beta[-1] == pytest.approx(1.0)
        assert beta[0] == pytest.approx(math.sqrt(math.log(4 * math.e)), abs=1e-10)
        assert beta[0] == pytest.approx(1.5447, abs=1e-4)

    def test_nonincreasing(self):
        for d in [1, 2, 7, 100]:
            beta = slope_weights(d, 2.0)
            assert np.all(np.diff(beta) <= 0)
            assert np.all(beta > 0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            slope_weights(0, 1.0)
        with pytest.raises(ValueError):
            slope_weights(4, 0.0)


class TestSparsityWeight:
    def test_unit_weights(self):
        val = sparsity_weight(np.ones(8), 4)
        assert val == pytest.approx(1 + 1 / math.sqrt(2) + 1 / math.sqrt(3) + 0.5)
        assert val == pytest.approx(2.7845, abs=1e-4)

    def test_single_term(self):
        beta = slope_weights(6, 1.3)
        assert sparsity_weight(beta, 1) == pytest.approx(beta[0])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            sparsity_weight(np.ones(4), 5)
        with pytest.raises(ValueError):
            sparsity_weight(np.ones(4), 0)

    def test_growth_bound_sweep(self):
        # B_s grows like sqrt(s log(ed/s)); constant 3.3 derived from the
        # sweep itself (the ratio peaks around 3.26 at s = d)
        for d in list(range(1, 50)) + [128, 1024, 10_000]:
            beta = slope_weights(d, 1.0)
            ss = range(1, d + 1) if d < 50 else np.unique(np.linspace(1, d, 25, dtype=int))
            for s in ss:
                bound = 3.3 * math.sqrt(s * math.log(math.e * d / s))
                assert sparsity_weight(beta, int(s)) <= bound


class TestLpInterpolation:
    def test_endpoints(self):
        assert lp_interpolation(4.0, 1.0, 1.0) == 4.0
        assert lp_interpolation(4.0, 1.0, 2.0) == 1.0

    def test_hand_value(self):
        assert lp_interpolation(4.0, 1.0, 4.0 / 3.0) == pytest.approx(2.0)

    def test_p_out_of_range(self):
        with pytest.raises(ValueError):
            lp_interpolation(1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            lp_interpolation(1.0, 1.0, 2.5)

    def test_is_upper_bound(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            x = rng.standard_normal(12)
            p = rng.uniform(1, 2)
            lp = np.sum(np.abs(x) ** p) ** (1 / p)
            bound = lp_interpolation(np.abs(x).sum(), np.linalg.norm(x), p)
            assert lp <= bound * (1 + 1e-10)


class TestNormAxioms:
    @pytest.mark.parametrize(
        "norm",
        [RegNorm.l1(10), RegNorm.slope(d=10, C=1.2), RegNorm.trace(4, 5)],
        ids=["l1", "slope", "trace"],
    )
    def test_triangle_and_homogeneity(self, norm):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            x = rng.standard_normal(norm.dim)
            y = rng.standard_normal(norm.dim)
            c = rng.standard_normal()
            vx, vy = norm.value(x), norm.value(y)
            assert norm.value(x + y) <= (vx + vy) * (1 + 1e-10)
            assert norm.value(c * x) == pytest.approx(abs(c) * vx, rel=1e-10, abs=1e-12)

    def test_effective_weight_constant(self):
        n = RegNorm.slope(d=16, C=2.5)
        assert n.effective_weight_constant() == pytest.approx(2.5)
        custom = RegNorm.slope(weights=slope_weights(16, 1.0) * 1.7)
        assert custom.effective_weight_constant() == pytest.approx(1.7, rel=1e-9)
