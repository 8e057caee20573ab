"""Loss family: exact values, stability on extreme inputs, derivative
agreement with central finite differences, and ordering properties."""

import numpy as np
import pytest

from robirank import losses
from robirank.losses import TransformKind

# reference values evaluated at 60-digit precision
LOG2_9 = 3.169925001442312
LOG2_1P5 = 0.5849625007211562
RHO2_AT_1 = 0.369070246428543  # 1 - 1/log2(3)
INV_LN2 = 1.4426950408889634
HALF_INV_LN2 = 0.7213475204444817


def central_diff(f, t, h=1e-5):
    return (f(t + h) - f(t - h)) / (2.0 * h)


class TestLogisticLoss:
    def test_exact_values(self):
        assert losses.logistic_loss(0.0) == 1.0
        np.testing.assert_allclose(losses.logistic_loss(-3.0), LOG2_9, rtol=1e-15)
        np.testing.assert_allclose(losses.logistic_loss(1.0), LOG2_1P5, rtol=1e-15)

    def test_positive_tail_vanishes(self):
        assert 0.0 < losses.logistic_loss(60.0) < 1e-17

    def test_negative_tail_linear(self):
        # true value is 50 + 1.2813706e-15; the offset is below one ulp at 50
        val = losses.logistic_loss(-50.0)
        assert abs(val - 50.0) < 1e-14
        assert val >= 50.0

    def test_no_overflow_at_extremes(self):
        assert losses.logistic_loss(1e6) == 0.0
        assert losses.logistic_loss(-1e6) == 1e6
        assert np.isfinite(losses.logistic_loss_grad(1e6))
        assert np.isfinite(losses.logistic_loss_grad(-1e6))

    def test_upper_bounds_indicator(self):
        t = np.linspace(-30, 30, 301)
        vals = losses.logistic_loss(t)
        assert np.all(vals >= np.where(t < 0, 1.0, 0.0) - 1e-15)
        assert np.all(vals > 0.0)
        assert np.all(vals >= np.maximum(0.0, -t))

    def test_strictly_decreasing(self):
        t = np.linspace(-30, 30, 301)
        assert np.all(np.diff(losses.logistic_loss(t)) < 0)

    def test_rejects_non_finite(self):
        for bad in (np.nan, np.inf, -np.inf):
            with pytest.raises(ValueError):
                losses.logistic_loss(bad)
            with pytest.raises(ValueError):
                losses.logistic_loss_grad(bad)
        with pytest.raises(ValueError):
            losses.logistic_loss(np.array([0.0, np.nan]))


class TestLogisticLossGrad:
    def test_exact_values(self):
        assert losses.logistic_loss_grad(0.0) == -0.5
        g = losses.logistic_loss_grad(60.0)
        assert -1e-17 < g < 0.0

    def test_range(self):
        t = np.linspace(-30, 30, 301)
        g = losses.logistic_loss_grad(t)
        assert np.all(g > -1.0)
        assert np.all(g < 0.0)

    @pytest.mark.parametrize("t", [-3.0, -1.0, 0.0, 1.0, 3.0])
    def test_matches_finite_difference(self, t):
        fd = central_diff(losses.logistic_loss, t)
        np.testing.assert_allclose(losses.logistic_loss_grad(t), fd, rtol=1e-6)


class TestTransform:
    def test_exact_values(self):
        assert losses.transform(TransformKind.RHO1, 0.0) == 0.0
        assert losses.transform(TransformKind.RHO1, 1.0) == 1.0
        assert losses.transform(TransformKind.RHO2, 0.0) == 0.0
        np.testing.assert_allclose(losses.transform(TransformKind.RHO2, 2.0), 0.5, rtol=1e-15)

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0, 1000.0])
    def test_rho1_dominates_rho2(self, t):
        assert losses.transform(TransformKind.RHO1, t) >= losses.transform(
            TransformKind.RHO2, t
        )

    def test_rho2_bounded(self):
        t = np.linspace(0, 1e6, 1000)
        vals = losses.transform(TransformKind.RHO2, t)
        assert np.all(vals >= 0.0)
        assert np.all(vals < 1.0)

    def test_strictly_increasing(self):
        t = np.linspace(0, 100, 500)
        for kind in TransformKind:
            assert np.all(np.diff(losses.transform(kind, t)) > 0)

    def test_domain_error(self):
        for kind in TransformKind:
            with pytest.raises(ValueError):
                losses.transform(kind, -0.5)
            with pytest.raises(ValueError):
                losses.transform_grad(kind, -0.5)


class TestTransformGrad:
    def test_exact_values(self):
        np.testing.assert_allclose(
            losses.transform_grad(TransformKind.RHO1, 0.0), INV_LN2, rtol=1e-15
        )
        np.testing.assert_allclose(
            losses.transform_grad(TransformKind.RHO2, 0.0), HALF_INV_LN2, rtol=1e-15
        )

    def test_strictly_positive(self):
        t = np.linspace(0, 1000, 500)
        for kind in TransformKind:
            assert np.all(losses.transform_grad(kind, t) > 0)

    @pytest.mark.parametrize("t", [0.0, 0.5, 5.0, 100.0])
    @pytest.mark.parametrize("kind", list(TransformKind))
    def test_matches_finite_difference(self, kind, t):
        tt = max(t, 1e-5)  # keep the stencil inside the domain
        fd = central_diff(lambda v: losses.transform(kind, v), tt)
        np.testing.assert_allclose(losses.transform_grad(kind, tt), fd, rtol=1e-6)


class TestRobustLoss:
    def test_exact_values(self):
        assert losses.robust_loss(TransformKind.RHO1, 0.0) == 1.0
        np.testing.assert_allclose(
            losses.robust_loss(TransformKind.RHO2, 0.0), RHO2_AT_1, rtol=1e-12
        )

    def test_rho2_saturates(self):
        assert losses.robust_loss(TransformKind.RHO2, -1e6) < 1.0

    def test_rho1_grows_with_vanishing_derivative(self):
        vals = losses.robust_loss(TransformKind.RHO1, np.array([-10.0, -100.0, -1000.0]))
        assert np.all(np.diff(vals) > 0)  # still unbounded going left
        assert abs(losses.robust_loss_grad(TransformKind.RHO1, -1000.0)) < 1e-2
        assert abs(losses.robust_loss_grad(TransformKind.RHO1, -1e6)) < 1e-5

    def test_rho1_dominates_rho2_everywhere(self):
        t = np.linspace(-40, 40, 401)
        s1 = losses.robust_loss(TransformKind.RHO1, t)
        s2 = losses.robust_loss(TransformKind.RHO2, t)
        assert np.all(s1 >= s2)


class TestDerivativeGrids:
    """Every derivative matches central differences on a dense grid."""

    def test_loss_grid(self):
        worst = 0.0
        for t in np.linspace(-20, 20, 100):
            fd = central_diff(losses.logistic_loss, t)
            g = losses.logistic_loss_grad(t)
            worst = max(worst, abs(fd - g) / abs(g))
            for kind in TransformKind:
                fd = central_diff(lambda v: losses.robust_loss(kind, v), t)
                g = losses.robust_loss_grad(kind, t)
                worst = max(worst, abs(fd - g) / abs(g))
        assert worst <= 1e-6

    def test_transform_grid(self):
        worst = 0.0
        for t in np.linspace(0, 40, 100):
            tt = max(t, 1e-5)
            for kind in TransformKind:
                fd = central_diff(lambda v: losses.transform(kind, v), tt)
                g = losses.transform_grad(kind, tt)
                worst = max(worst, abs(fd - g) / abs(g))
        assert worst <= 1e-6


class TestArrayInputs:
    def test_elementwise_agreement(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(-10, 10, 50)
        batch = losses.logistic_loss(t)
        singles = np.array([losses.logistic_loss(float(v)) for v in t])
        np.testing.assert_array_equal(batch, singles)

    def test_scalar_returns_float(self):
        assert isinstance(losses.logistic_loss(1.0), float)
        assert isinstance(losses.transform(TransformKind.RHO2, 1.0), float)
