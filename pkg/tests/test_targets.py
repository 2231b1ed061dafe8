import numpy as np
import pytest

from knotfit.targets import TargetFunction, builtin_targets, get_target, register_target


def _probe_points(target, n=100, step=1e-5, guard=1e-6):
    x = np.linspace(0.0, 1.0, n + 2)[1:-1]
    for s in target.singular_points:
        x = x[np.abs(x - s) > 100 * step]
    x = x[x > guard]
    return x


class TestBuiltins:
    def test_exactly_five_with_expected_ids(self):
        targets = builtin_targets()
        assert [t.id for t in targets] == ["u1", "u2", "u3", "u4", "u5"]

    def test_u1_value_at_half(self):
        assert get_target("u1").f(0.5) == pytest.approx(0.25, abs=1e-15)

    def test_u3_endpoint_and_singularity(self):
        u3 = get_target("u3")
        assert u3.f(1.0) == pytest.approx(1.0, abs=1e-15)
        assert 0.0 in u3.singular_points

    def test_u2_second_derivative_at_half(self):
        u2 = get_target("u2")
        assert u2.d2(0.5) == pytest.approx(-np.pi**2, rel=1e-14)

    def test_length_scale_metadata(self):
        assert get_target("u4").smallest_length_scale == pytest.approx(0.01)
        assert get_target("u5").smallest_length_scale == pytest.approx(1 / np.sqrt(500))


class TestDerivativeConsistency:
    """d1 and d2 must agree with central differences of f to 1e-6 relative."""

    # Relative error is measured against the derivative's scale over the
    # probe set; pointwise ratios are meaningless near derivative zeros,
    # where the stencil truncation floor dominates.

    @pytest.mark.parametrize("tid", ["u1", "u2", "u3", "u4", "u5"])
    def test_first_derivative(self, tid):
        t = get_target(tid)
        x = _probe_points(t)
        h = 1e-5
        fd = (t.f(x + h) - t.f(x - h)) / (2 * h)
        assert np.max(np.abs(t.d1(x) - fd)) / np.max(np.abs(fd)) < 1e-6

    @pytest.mark.parametrize("tid", ["u1", "u2", "u3", "u4", "u5"])
    def test_second_derivative(self, tid):
        t = get_target(tid)
        x = _probe_points(t)
        h = 1e-5
        fd = (t.f(x + h) - 2.0 * t.f(x) + t.f(x - h)) / h**2
        assert np.max(np.abs(t.d2(x) - fd)) / np.max(np.abs(fd)) < 1e-6


class TestShapeProperties:
    def test_u3_monotone_increasing(self):
        u3 = get_target("u3")
        x = np.linspace(0.0, 1.0, 2001)
        assert np.all(np.diff(u3.f(x)) > 0)

    def test_u1_symmetric_about_half(self):
        u1 = get_target("u1")
        x = np.linspace(0.0, 0.5, 500)
        np.testing.assert_allclose(u1.f(x), u1.f(1.0 - x), atol=1e-14)


class TestRegistry:
    def test_unknown_id_raises(self):
        with pytest.raises(ValueError, match="unknown target"):
            get_target("nope")

    def test_register_and_lookup(self):
        t = TargetFunction(
            id="quadratic_test",
            f=lambda x: np.asarray(x) ** 2,
            d1=lambda x: 2.0 * np.asarray(x),
            d2=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        )
        register_target(t)
        assert get_target("quadratic_test") is t
