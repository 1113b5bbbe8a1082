import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logit

from app.core.error_handler import AppException, ErrorCode
from app.services.loss_service import (
    LossSpec,
    base_score,
    grad_hess_stage1_binary,
    grad_hess_stage1_continuous,
    grad_hess_stage2_binary,
    grad_hess_stage2_continuous,
    inverse_transform_hte,
    optimal_aug_general,
    stage1_loss,
    stage2_loss,
    transform_hte,
    transform_stage1,
)

finite = dict(allow_nan=False, allow_infinity=False)


class TestScalarGradients:
    @pytest.mark.parametrize("y, a, w, g, h", [(1.0, 0.0, 2.0, -4.0, 4.0), (0.5, 0.5, 2.0, 0.0, 4.0),
                                               (-1.0, 1.0, 1.0, 4.0, 2.0)])
    def test_stage1_continuous(self, y, a, w, g, h):
        assert grad_hess_stage1_continuous(y, a, w) == pytest.approx((g, h))

    @pytest.mark.parametrize("y, g", [(1.0, -1.0), (0.0, 1.0)])
    def test_stage1_binary(self, y, g):
        assert grad_hess_stage1_binary(y, 0.0, 2.0) == pytest.approx((g, 0.5))

    def test_stage1_binary_saturated(self):
        g, h = grad_hess_stage1_binary(1.0, 50.0, 1.0)
        assert abs(g) < 1e-12 and abs(h) < 1e-12

    @pytest.mark.parametrize("y, a0, f, t, g", [(1.0, 0.5, 0.0, 1.0, -2.0), (1.0, 0.5, 0.5, 1.0, 0.0),
                                                (0.0, 0.5, 0.0, -1.0, -2.0)])
    def test_stage2_continuous(self, y, a0, f, t, g):
        assert grad_hess_stage2_continuous(y, a0, f, t, 2.0) == pytest.approx((g, 4.0))

    @pytest.mark.parametrize("y, a0, f, w, g, h", [(1.0, -0.2, 0.0, 2.0, -1.6, 2.0), (0.0, 0.0, 0.0, 1.0, 1.0, 0.0),
                                                   (1.0, 0.0, np.log(2.0), 1.0, -0.5, 0.5)])
    def test_stage2_binary(self, y, a0, f, w, g, h):
        assert grad_hess_stage2_binary(y, a0, f, 1.0, w) == pytest.approx((g, h))


def central_difference(loss, y, t, w, pred, eps=1e-5):
    up = loss.loss_values(y, t, w, pred + eps)
    down = loss.loss_values(y, t, w, pred - eps)
    return (up - down) / (2 * eps)


class TestLossSpec:
    @given(
        y=st.floats(-3, 3, **finite),
        a0=st.floats(-2, 2, **finite),
        pred=st.floats(-2, 2, **finite),
        t=st.sampled_from([-1.0, 1.0]),
        w=st.floats(0.1, 4, **finite),
    )
    @settings(max_examples=100, deadline=None)
    def test_meandiff_gradient_matches_finite_difference(self, y, a0, pred, t, w):
        loss = stage2_loss("meandiff", np.array([a0]))
        args = (np.array([y]), np.array([t]), np.array([w]), np.array([pred]))
        g, h = loss.grad_hess(*args)
        assert g[0] == pytest.approx(central_difference(loss, *args)[0], abs=1e-6)
        assert g[0] == pytest.approx(grad_hess_stage2_continuous(y, a0, pred, t, w)[0])

    @given(
        y=st.sampled_from([0.0, 1.0]),
        a0=st.floats(-1, 1, **finite),
        pred=st.floats(-2, 2, **finite),
        t=st.sampled_from([-1.0, 1.0]),
        w=st.floats(0.1, 4, **finite),
    )
    @settings(max_examples=100, deadline=None)
    def test_riskratio_gradient_matches_finite_difference(self, y, a0, pred, t, w):
        loss = stage2_loss("riskratio", np.array([a0]))
        args = (np.array([y]), np.array([t]), np.array([w]), np.array([pred]))
        g, h = loss.grad_hess(*args)
        assert g[0] == pytest.approx(central_difference(loss, *args)[0], abs=1e-5)
        assert h[0] >= 0.0

    @given(y=st.sampled_from([0.0, 1.0]), pred=st.floats(-5, 5, **finite), w=st.floats(0.1, 4, **finite))
    @settings(max_examples=60, deadline=None)
    def test_logistic_gradient_matches_finite_difference(self, y, pred, w):
        loss = stage1_loss("binary")
        args = (np.array([y]), np.array([1.0]), np.array([w]), np.array([pred]))
        g, _ = loss.grad_hess(*args)
        assert g[0] == pytest.approx(central_difference(loss, *args)[0], abs=1e-6)

    def test_augmented_kind_requires_vector(self):
        with pytest.raises(AppException) as exc:
            LossSpec("stage2_meandiff")
        assert exc.value.code == ErrorCode.VAL_INVALID_INPUT

    def test_noaug_kind_rejects_vector(self):
        with pytest.raises(AppException):
            LossSpec("stage2_meandiff_noaug", np.zeros(3))

    def test_unknown_kind(self):
        with pytest.raises(AppException) as exc:
            LossSpec("huber")
        assert exc.value.code == ErrorCode.VAL_UNKNOWN_IDENTIFIER

    def test_misaligned_aug(self):
        loss = stage2_loss("meandiff", np.zeros(2))
        with pytest.raises(AppException) as exc:
            loss.grad_hess(np.zeros(3), np.ones(3), np.ones(3), np.zeros(3))
        assert exc.value.code == ErrorCode.VAL_MISALIGNED

    def test_restrict(self):
        loss = stage2_loss("meandiff", np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(loss.restrict(np.array([2, 0])).aug, [3.0, 1.0])
        assert stage2_loss("meandiff", None).kind == "stage2_meandiff_noaug"

    def test_base_score(self):
        w = np.array([1.0, 3.0])
        assert base_score(stage1_loss("continuous"), np.array([0.0, 1.0]), w) == pytest.approx(0.75)
        assert base_score(stage1_loss("binary"), np.array([0.0, 1.0]), w) == pytest.approx(logit(0.75))
        assert base_score(stage2_loss("riskratio", None), np.array([0.0, 1.0]), w) == 0.0

    def test_base_score_constant_binary(self):
        with pytest.raises(AppException) as exc:
            base_score(stage1_loss("binary"), np.ones(4), np.ones(4))
        assert exc.value.code == ErrorCode.DATA_DEGENERATE


class TestAugmentation:
    @pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
    def test_meandiff_collapse(self, p):
        assert optimal_aug_general(1.0, 0.4, 0.3, p, "meandiff") == pytest.approx(0.7)

    @pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
    def test_riskratio_collapse(self, p):
        assert optimal_aug_general(0.4, 0.2, np.log(2.0), p, "riskratio") == pytest.approx(0.4)

    def test_null_model(self):
        assert optimal_aug_general(0.0, 0.0, 0.0, 0.5, "meandiff") == 0.0

    def test_riskratio_requires_probabilities(self):
        with pytest.raises(AppException):
            optimal_aug_general(1.2, 0.2, 0.0, 0.5, "riskratio")


class TestTransforms:
    def test_stage1(self):
        assert transform_stage1(0.7, "continuous") == pytest.approx(0.7)
        assert transform_stage1(0.0, "binary") == pytest.approx(0.0)
        assert transform_stage1(logit(0.3), "binary") == pytest.approx(0.4)
        assert transform_stage1(0.0, "binary", "meandiff") == pytest.approx(0.5)

    def test_stage1_riskratio_on_continuous(self):
        with pytest.raises(AppException) as exc:
            transform_stage1(0.0, "continuous", "riskratio")
        assert exc.value.code == ErrorCode.VAL_INVALID_INPUT

    @pytest.mark.parametrize("estimand, f, tau", [("meandiff", 0.4, 0.8), ("riskratio", 0.0, 1.0),
                                                  ("riskratio", np.log(2.0), 2.0)])
    def test_hte(self, estimand, f, tau):
        assert transform_hte(f, estimand) == pytest.approx(tau)
        assert inverse_transform_hte(tau, estimand) == pytest.approx(f)

    def test_unknown_estimand(self):
        with pytest.raises(AppException) as exc:
            transform_hte(0.0, "oddsratio")
        assert exc.value.code == ErrorCode.VAL_UNKNOWN_IDENTIFIER
