import numpy as np
import pytest

from motiontok import InvalidArgument, LossWeights, MotionSequence, commitment_loss, total_loss
from motiontok import autodiff as ad
from motiontok.losses import (
    body_recon_loss,
    body_velocity_loss,
    face_recon_loss,
    face_velocity_loss,
    generic_recon_loss,
    generic_velocity_loss,
)

W = LossWeights()


def _face(gt_psi, gt_jaw, T=4):
    """(1, 53, T) tensor with constant psi and jaw values."""
    x = np.zeros((1, 53, T))
    x[:, :50, :] = gt_psi
    x[:, 50:, :] = gt_jaw
    return x


class TestCommitment:
    def test_zero_when_equal(self):
        z = np.random.default_rng(0).normal(size=(1, 3, 4))
        assert commitment_loss(z, z.copy(), beta=0.02).data == 0.0

    def test_unit_difference(self):
        z = np.zeros((1, 3, 4))
        zh = np.ones((1, 3, 4))
        assert abs(commitment_loss(z, zh, beta=0.02).data - 0.02) < 1e-15

    def test_gradient_only_to_z(self):
        rng = np.random.default_rng(1)
        tape = ad.Tape()
        z = ad.param(rng.normal(size=(1, 3, 4)))
        zh = ad.param(rng.normal(size=(1, 3, 4)))
        out = commitment_loss(z, zh, beta=0.02, tape=tape)
        tape.backward(out, np.ones_like(out.data))
        assert z.grad is not None and np.any(z.grad != 0)
        assert zh.grad is None or not np.any(zh.grad)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            commitment_loss(np.zeros((1, 3, 4)), np.zeros((1, 3, 5)))

    def test_fd_gradient(self):
        rng = np.random.default_rng(2)
        z0 = rng.normal(size=(1, 2, 3))
        zh = rng.normal(size=(1, 2, 3))

        def scalar(zd):
            return float(commitment_loss(zd, zh, beta=0.02).data)

        tape = ad.Tape()
        z = ad.param(z0)
        out = commitment_loss(z, zh, beta=0.02, tape=tape)
        tape.backward(out, np.ones_like(out.data))
        num = ad.finite_diff_grad(scalar, z0, eps=1e-3)
        assert ad.rel_error(z.grad, num) < 1e-4


class TestFaceRecon:
    def test_zero_when_equal(self):
        gt = np.random.default_rng(3).normal(size=(1, 53, 5))
        assert face_recon_loss(gt, gt.copy(), W).data == 0.0

    def test_weighted_example(self):
        gt = _face(0.0, 0.0)
        pred = _face(0.1, 0.2)
        out = face_recon_loss(gt, pred, W)
        assert abs(out.data - 1.1) < 1e-12  # 1*0.1 + 5*0.2

    def test_jaw_l1_homogeneity(self):
        gt = _face(0.0, 0.0)
        a = face_recon_loss(gt, _face(0.1, 0.2), W).data
        b = face_recon_loss(gt, _face(0.1, 0.4), W).data
        assert abs((b - 0.1) - 2 * (a - 0.1)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            face_recon_loss(_face(0, 0, T=4), _face(0, 0, T=5), W)

    def test_fd_gradient(self):
        rng = np.random.default_rng(4)
        gt = rng.normal(size=(1, 53, 3))
        p0 = gt + rng.choice([-1.0, 1.0], size=gt.shape) * rng.uniform(0.2, 1.0, size=gt.shape)

        def scalar(pd):
            return float(face_recon_loss(gt, pd, W).data)

        tape = ad.Tape()
        p = ad.param(p0)
        out = face_recon_loss(gt, p, W, tape=tape)
        tape.backward(out, np.ones_like(out.data))
        num = ad.finite_diff_grad(scalar, p0, eps=1e-3)
        assert ad.rel_error(p.grad, num) < 1e-4


class TestFaceVelocity:
    def test_constant_offset_is_zero(self):
        rng = np.random.default_rng(5)
        gt = rng.normal(size=(1, 53, 6))
        pred = gt + rng.normal(size=(1, 53, 1))  # per-channel constant shift
        assert face_velocity_loss(gt, pred, W).data < 1e-12

    def test_zero_when_equal(self):
        gt = np.random.default_rng(6).normal(size=(1, 53, 6))
        assert face_velocity_loss(gt, gt.copy(), W).data == 0.0

    def test_three_frame_hand_oracle(self):
        gt = np.zeros((1, 53, 3))
        pred = np.zeros((1, 53, 3))
        gt[0, :50] = [0.0, 1.0, 3.0]  # psi velocities (1, 2)
        pred[0, :50] = [0.0, 1.5, 2.0]  # psi velocities (1.5, 0.5)
        gt[0, 50:] = [0.0, 0.2, 0.2]  # jaw velocities (0.2, 0.0)
        pred[0, 50:] = [0.0, 0.1, 0.4]  # jaw velocities (0.1, 0.3)
        psi_mae = (0.5 + 1.5) / 2.0
        jaw_mae = (0.1 + 0.3) / 2.0
        expect = psi_mae + 5.0 * jaw_mae
        assert abs(face_velocity_loss(gt, pred, W).data - expect) < 1e-12

    def test_single_valid_frame_warns_and_returns_zero(self):
        gt = np.random.default_rng(7).normal(size=(1, 53, 4))
        pred = np.random.default_rng(8).normal(size=(1, 53, 4))
        mask = np.array([[True, False, False, False]])
        with pytest.warns(RuntimeWarning):
            out = face_velocity_loss(gt, pred, W, mask=mask)
        assert out.data == 0.0

    def test_fd_gradient(self):
        rng = np.random.default_rng(9)
        gt = rng.normal(size=(1, 53, 4))
        p0 = rng.normal(size=(1, 53, 4)) * 3.0

        def scalar(pd):
            return float(face_velocity_loss(gt, pd, W).data)

        tape = ad.Tape()
        p = ad.param(p0)
        out = face_velocity_loss(gt, p, W, tape=tape)
        tape.backward(out, np.ones_like(out.data))
        num = ad.finite_diff_grad(scalar, p0, eps=1e-3)
        assert ad.rel_error(p.grad, num) < 1e-4


class TestBodyLosses:
    def test_zero_when_equal(self):
        gt = np.random.default_rng(10).normal(size=(1, 117, 5))
        assert body_recon_loss(gt, gt.copy(), W).data == 0.0
        assert body_velocity_loss(gt, gt.copy(), W).data == 0.0

    def test_three_components_sum(self):
        gt = np.zeros((1, 117, 4))
        pred = np.full((1, 117, 4), 0.1)
        assert abs(body_recon_loss(gt, pred, W).data - 0.3) < 1e-12

    def test_component_symmetry_with_face_structure(self):
        # body loss is a sum of per-part MAEs exactly like the face loss
        gt = np.zeros((1, 117, 3))
        pred = np.zeros((1, 117, 3))
        pred[0, :27] = 0.2  # ubody only
        assert abs(body_recon_loss(gt, pred, W).data - 0.2) < 1e-12
        pred2 = np.zeros((1, 117, 3))
        pred2[0, 27:72] = 0.2  # rhand only
        assert abs(body_recon_loss(gt, pred2, W).data - 0.2) < 1e-12

    def test_fd_gradient(self):
        rng = np.random.default_rng(11)
        gt = rng.normal(size=(1, 117, 3))
        p0 = gt + rng.choice([-1.0, 1.0], size=gt.shape) * rng.uniform(0.2, 1.0, size=gt.shape)

        def scalar(pd):
            return float(body_recon_loss(gt, pd, W).data)

        tape = ad.Tape()
        p = ad.param(p0)
        out = body_recon_loss(gt, p, W, tape=tape)
        tape.backward(out, np.ones_like(out.data))
        num = ad.finite_diff_grad(scalar, p0, eps=1e-3)
        assert ad.rel_error(p.grad, num) < 1e-4


class TestTotalLoss:
    def test_all_zero(self):
        z = np.zeros((1, 3, 2))
        gt = np.zeros((1, 4, 8))
        out, breakdown = total_loss("generic", z, z.copy(), gt, gt.copy(), W)
        assert out.data == 0.0
        assert breakdown["total"] == 0.0

    def test_weighted_sum_example(self):
        # recon_raw = 1 and vel_raw = 1 -> total = 1*1 + 0.5*1 = 1.5
        gt = np.zeros((1, 4, 2))
        pred = np.zeros((1, 4, 2))
        pred[..., 0] = 0.5
        pred[..., 1] = 1.5
        z = np.zeros((1, 3, 1))
        out, breakdown = total_loss("generic", z, z.copy(), gt, pred, W)
        assert abs(breakdown["recon_raw"] - 1.0) < 1e-12
        assert abs(breakdown["vel_raw"] - 1.0) < 1e-12
        assert abs(out.data - 1.5) < 1e-12

    def test_breakdown_sums_to_total(self):
        rng = np.random.default_rng(12)
        for kind, d in (("face", 53), ("body", 117), ("generic", 7)):
            gt = rng.normal(size=(1, d, 6))
            pred = rng.normal(size=(1, d, 6))
            z = rng.normal(size=(1, 3, 2))
            zh = rng.normal(size=(1, 3, 2))
            out, b = total_loss(kind, z, zh, gt, pred, W)
            assert abs(b["vq"] + b["recon"] + b["vel"] - b["total"]) < 1e-12
            assert abs(out.data - b["total"]) < 1e-12

    def test_padding_invariance(self):
        rng = np.random.default_rng(13)
        gt = rng.normal(size=(1, 53, 6))
        pred = rng.normal(size=(1, 53, 6))
        mask = np.array([[True, True, True, True, False, False]])
        z = rng.normal(size=(1, 3, 2))
        zh = rng.normal(size=(1, 3, 2))
        base, _ = total_loss("face", z, zh, gt, pred, W, frame_mask=mask)
        gt2, pred2 = gt.copy(), pred.copy()
        gt2[..., 4:] = 77.0
        pred2[..., 4:] = -55.0
        again, _ = total_loss("face", z, zh, gt2, pred2, W, frame_mask=mask)
        assert base.data == again.data

    def test_unknown_kind(self):
        z = np.zeros((1, 2, 2))
        with pytest.raises(InvalidArgument):
            total_loss("hands", z, z, np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), W)

    def test_motion_sequence_inputs(self):
        rng = np.random.default_rng(14)
        gt = MotionSequence(rng.normal(size=(53, 6)).astype(np.float32))
        pred = rng.normal(size=(1, 53, 6))
        z = np.zeros((1, 3, 2))
        out, _ = total_loss("face", z, z.copy(), gt, pred, W)
        assert out.data > 0


class TestReconKindSwitch:
    def test_l2(self):
        w2 = LossWeights(recon_kind="l2")
        gt = _face(0.0, 0.0)
        pred = _face(0.1, 0.1)
        out = face_recon_loss(gt, pred, w2)
        assert abs(out.data - (0.01 + 5 * 0.01)) < 1e-12

    def test_smooth_l1_small_errors_quadratic(self):
        ws = LossWeights(recon_kind="smooth_l1")
        gt = np.zeros((1, 7, 3))
        pred = np.full((1, 7, 3), 0.1)
        out = generic_recon_loss(gt, pred, ws)
        assert abs(out.data - 0.5 * 0.1 * 0.1) < 1e-12  # |x| < 1 -> x^2/2

    def test_velocity_always_l1(self):
        w2 = LossWeights(recon_kind="l2")
        gt = np.zeros((1, 5, 3))
        pred = np.zeros((1, 5, 3))
        pred[..., 1] = 0.3
        pred[..., 2] = 0.6
        out = generic_velocity_loss(gt, pred, w2)
        assert abs(out.data - 0.3) < 1e-12

    def test_bad_kind_rejected(self):
        with pytest.raises(InvalidArgument):
            LossWeights(recon_kind="l3")


class TestNonNegativity:
    @pytest.mark.parametrize("seed", range(5))
    def test_random_pairs_positive(self, seed):
        rng = np.random.default_rng(seed)
        gt = rng.normal(size=(1, 53, 5))
        pred = rng.normal(size=(1, 53, 5))
        assert face_recon_loss(gt, pred, W).data > 0
        assert body_recon_loss(rng.normal(size=(1, 117, 5)), rng.normal(size=(1, 117, 5)), W).data > 0
