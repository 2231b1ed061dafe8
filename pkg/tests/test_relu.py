import time

import numpy as np
import pytest

from knotfit.meshgen import optimal_knots_xalpha
from knotfit.relu import (
    RawShallowNet,
    ReluModel,
    breakpoints_of,
    fks_to_relu,
    from_raw,
    relu_eval,
    relu_to_fks,
    t_matrix,
)
from knotfit.splines import FksModel, KnotVector, fks_eval, interpolating_fks, uniform_knots
from knotfit.targets import get_target


def random_model(rng, n, min_gap=1e-3):
    while True:
        interior = np.sort(rng.uniform(0.0, 1.0, n - 2))
        v = np.concatenate([[0.0], interior, [1.0]])
        if np.diff(v).min() >= min_gap:
            return FksModel(KnotVector(v), rng.standard_normal(n))


class TestBreakpoints:
    def test_inside_unit(self):
        raw = RawShallowNet(a=[1.0], b=[-0.3], c_out=[1.0])
        assert breakpoints_of(raw) == [(pytest.approx(0.3), True)]

    def test_outside_unit(self):
        raw = RawShallowNet(a=[2.0], b=[-3.0], c_out=[1.0])
        assert breakpoints_of(raw) == [(pytest.approx(1.5), False)]

    def test_zero_slope_skipped(self):
        raw = RawShallowNet(a=[0.0], b=[1.0], c_out=[1.0])
        assert breakpoints_of(raw) == []


class TestReluEval:
    def test_all_zero(self):
        m = ReluModel(uniform_knots(5), np.zeros(4), 0.0)
        assert np.all(relu_eval(m, np.linspace(0, 1, 11)) == 0.0)

    def test_identity_single_unit(self):
        m = ReluModel(uniform_knots(2), np.array([1.0]), 0.0)
        x = np.linspace(0, 1, 17)
        np.testing.assert_allclose(relu_eval(m, x), x, atol=1e-15)

    def test_matches_fks_on_grid(self):
        rng = np.random.default_rng(0)
        x = np.linspace(0.0, 1.0, 1000)
        for n in (2, 3, 9, 40):
            m = random_model(rng, n) if n > 2 else FksModel(
                uniform_knots(2), rng.standard_normal(2)
            )
            r = fks_to_relu(m)
            np.testing.assert_allclose(relu_eval(r, x), fks_eval(m, x), atol=1e-12)


class TestForwardMap:
    def test_breakpoints_equal_knots(self):
        rng = np.random.default_rng(1)
        m = random_model(rng, 10)
        r = fks_to_relu(m)
        np.testing.assert_array_equal(r.knots.values, m.knots.values)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        kv = random_model(rng, 12).knots
        w1 = rng.standard_normal(12)
        w2 = rng.standard_normal(12)
        c1 = fks_to_relu(FksModel(kv, w1))
        c2 = fks_to_relu(FksModel(kv, w2))
        c12 = fks_to_relu(FksModel(kv, w1 + w2))
        np.testing.assert_allclose(
            c12.scalings, c1.scalings + c2.scalings, atol=1e-13
        )
        assert c12.left_coef == pytest.approx(c1.left_coef + c2.left_coef)

    def test_constant_curvature_scalings(self):
        # For u'' = -2 on uniform knots the interior scalings are -2h.
        n = 20
        h = 1.0 / (n - 1)
        m = interpolating_fks(uniform_knots(n), get_target("u1"))
        r = fks_to_relu(m)
        np.testing.assert_allclose(r.scalings[1:], -2.0 * h, rtol=1e-10)

    def test_zero_weights_zero_scalings(self):
        m = FksModel(uniform_knots(8), np.zeros(8))
        r = fks_to_relu(m)
        assert np.all(r.scalings == 0.0) and r.left_coef == 0.0

    def test_singular_target_unbalanced_scalings(self):
        # The optimal-mesh interpolant of the singular target has a large
        # positive first scaling, a negative second, and magnitudes that
        # decay away from the singularity.
        kv, _ = optimal_knots_xalpha(2 / 3, 64)
        r = fks_to_relu(interpolating_fks(kv, get_target("u3")))
        c = r.scalings
        assert c[0] > 0 > c[1]
        assert np.max(np.abs(c[:4])) > 50 * np.max(np.abs(c[-16:]))


class TestInverseMap:
    def test_roundtrip_uniform_n128(self):
        rng = np.random.default_rng(3)
        kv = uniform_knots(128)
        w = rng.standard_normal(128)
        back = relu_to_fks(fks_to_relu(FksModel(kv, w)))
        assert np.max(np.abs(back.weights - w)) / np.max(np.abs(w)) < 1e-12

    def test_roundtrip_graded_n64(self):
        rng = np.random.default_rng(4)
        k = (np.arange(64) / 63.0) ** 2
        k[0], k[-1] = 0.0, 1.0
        kv = KnotVector(k)
        w = rng.standard_normal(64)
        back = relu_to_fks(fks_to_relu(FksModel(kv, w)))
        assert np.max(np.abs(back.weights - w)) / np.max(np.abs(w)) < 1e-10

    @pytest.mark.parametrize("n", [2, 3, 16, 256])
    def test_roundtrip_small_and_large(self, n):
        rng = np.random.default_rng(n)
        kv = uniform_knots(n)
        w = rng.standard_normal(n)
        back = relu_to_fks(fks_to_relu(FksModel(kv, w)))
        assert np.max(np.abs(back.weights - w)) / np.max(np.abs(w)) < 1e-12

    def test_zero_scalings_zero_weights(self):
        m = ReluModel(uniform_knots(9), np.zeros(8), 0.0)
        back = relu_to_fks(m)
        assert np.all(back.weights == 0.0)

    def test_general_left_value_carried(self):
        rng = np.random.default_rng(5)
        m = random_model(rng, 10)
        back = relu_to_fks(fks_to_relu(m))
        assert back.weights[0] == m.weights[0]


class TestScalingMapMatrix:
    def test_near_singularity_row_identity(self):
        # T applied to the all-ones vector vanishes except at the two ends.
        rng = np.random.default_rng(6)
        kv = random_model(rng, 20).knots
        out = t_matrix(kv).matvec(np.ones(18))
        assert np.max(np.abs(out[1:-1])) < 1e-12 * np.max(np.abs(out))
        assert abs(out[0]) > 0 and abs(out[-1]) > 0

    def test_uniform_matches_second_difference(self):
        n = 10
        tri = t_matrix(uniform_knots(n))
        np.testing.assert_allclose(tri.diag, -2.0 * (n - 1), rtol=1e-14)
        np.testing.assert_allclose(tri.lower, n - 1.0, rtol=1e-14)

    def test_inverse_cost_scales_linearly(self):
        # Timing check: doubling twice should cost about 4x, not 16x.
        def solve_time(n):
            rng = np.random.default_rng(n)
            m = fks_to_relu(FksModel(uniform_knots(n), rng.standard_normal(n)))
            best = np.inf
            for _ in range(5):
                t0 = time.perf_counter()
                relu_to_fks(m)
                best = min(best, time.perf_counter() - t0)
            return best

        t_small = solve_time(2**10)
        t_large = solve_time(2**12)
        assert t_large / t_small < 1.5 * 4.0


class TestRawIngest:
    def test_exact_on_domain(self):
        rng = np.random.default_rng(7)
        for seed in range(5):
            w = 16
            raw = RawShallowNet(
                a=rng.uniform(-1, 1, w),
                b=rng.uniform(-1, 1, w),
                c_out=rng.uniform(-0.5, 0.5, w),
                bias_out=float(rng.uniform(-0.5, 0.5)),
            )
            model = from_raw(raw)
            x = np.linspace(0.0, 1.0, 2000)
            np.testing.assert_allclose(relu_eval(model, x), raw(x), atol=1e-12)

    def test_affine_only_net(self):
        # No in-domain breakpoints: the canonical form still reproduces the
        # affine response exactly.
        raw = RawShallowNet(a=[1.0], b=[2.0], c_out=[0.7], bias_out=0.25)
        model = from_raw(raw)
        x = np.linspace(0.0, 1.0, 100)
        np.testing.assert_allclose(relu_eval(model, x), raw(x), atol=1e-13)


class TestSerialization:
    def test_csv_roundtrip(self):
        rng = np.random.default_rng(8)
        m = fks_to_relu(random_model(rng, 7))
        text = m.to_csv()
        lines = text.splitlines()
        assert lines[0].startswith("# left_coef=")
        assert lines[1] == "i,k,c"
        back = ReluModel.from_csv(text)
        np.testing.assert_array_equal(back.knots.values, m.knots.values)
        np.testing.assert_array_equal(back.scalings, m.scalings)
        assert back.left_coef == m.left_coef
