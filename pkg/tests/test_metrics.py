import math

import numpy as np
import pytest

from motiontok import (
    InvalidArgument,
    MetricReport,
    MotionSequence,
    VertexMap,
    diversity,
    evaluate_pair_set,
    lvd,
    read_vmap,
    token_nll_ppl,
    variance,
    vmse,
    window_vertex_l2,
    write_vmap,
)
from motiontok.metrics import PAPER_SCALES


def _pair(T=12, d=5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(T, d)), rng.normal(size=(T, d))


def _affine_map(d=5, out=7, seed=100):
    rng = np.random.default_rng(seed)
    return VertexMap(basis=rng.normal(size=(out, d)), offset=rng.normal(size=out))


# -- scalar-loop oracles -------------------------------------------------------------


def _apply_map(vmap, frame):
    if vmap.basis is None:
        return [float(v) for v in frame]
    out = []
    for r in range(vmap.basis.shape[0]):
        acc = 0.0
        for c in range(vmap.basis.shape[1]):
            acc += float(vmap.basis[r, c]) * float(frame[c])
        if vmap.offset is not None:
            acc += float(vmap.offset[r])
        out.append(acc)
    return out


def _oracle_vmse(gt, pred, vmap):
    total = 0.0
    for t in range(gt.shape[0]):
        vg, vp = _apply_map(vmap, gt[t]), _apply_map(vmap, pred[t])
        total += sum((a - b) ** 2 for a, b in zip(vp, vg))
    return total / gt.shape[0]


def _oracle_lvd(gt, pred, vmap):
    total = 0.0
    for t in range(gt.shape[0]):
        vg, vp = _apply_map(vmap, gt[t]), _apply_map(vmap, pred[t])
        total += sum(abs(a - b) for a, b in zip(vp, vg))
    return total / gt.shape[0]


def _oracle_wvl2(gt, pred, vmap, window, stride):
    vals = []
    n = gt.shape[0]
    for s in range(0, n - window + 1, stride):
        vg = [_apply_map(vmap, gt[t]) for t in range(s, s + window)]
        vp = [_apply_map(vmap, pred[t]) for t in range(s, s + window)]
        dim = len(vg[0])
        acc = 0.0
        for c in range(dim):
            mg = sum(row[c] for row in vg) / window
            mp = sum(row[c] for row in vp) / window
            acc += (mp - mg) ** 2
        vals.append(acc)
    return sum(vals) / len(vals)


def _oracle_variance(mat):
    T, D = mat.shape
    acc = 0.0
    for c in range(D):
        mean = sum(float(mat[t, c]) for t in range(T)) / T
        acc += sum((float(mat[t, c]) - mean) ** 2 for t in range(T)) / T
    return acc / D


def _oracle_diversity(motions, k_pairs, repeats, seed):
    """Same pair sampling as the library; distances by scalar loops."""
    stack = [np.asarray(m, dtype=np.float64).reshape(-1) for m in motions]
    rng = np.random.default_rng(seed)
    n = len(stack)
    means = []
    for _ in range(repeats):
        i = rng.integers(0, n, size=k_pairs)
        j = rng.integers(0, n - 1, size=k_pairs)
        j = np.where(j >= i, j + 1, j)
        total = 0.0
        for a, b in zip(i, j):
            total += sum((x - y) ** 2 for x, y in zip(stack[a], stack[b]))
        means.append(total / k_pairs)
    return sum(means) / repeats


class TestVmse:
    def test_zero_when_equal(self):
        gt, _ = _pair()
        assert vmse(gt, gt.copy()) == 0.0

    def test_all_ones_difference_identity_map(self):
        gt = np.zeros((6, 5))
        pred = np.ones((6, 5))
        assert vmse(gt, pred) == pytest.approx(5.0)  # ||1||^2 = d

    @pytest.mark.parametrize("seed", range(4))
    def test_oracle_identity_map(self, seed):
        gt, pred = _pair(seed=seed)
        assert abs(vmse(gt, pred) - _oracle_vmse(gt, pred, VertexMap())) < 1e-9

    @pytest.mark.parametrize("seed", range(4))
    def test_oracle_affine_map(self, seed):
        gt, pred = _pair(seed=seed)
        vmap = _affine_map(seed=seed + 50)
        assert abs(vmse(gt, pred, vmap) - _oracle_vmse(gt, pred, vmap)) < 1e-9

    def test_symmetric(self):
        gt, pred = _pair(seed=9)
        assert vmse(gt, pred) == pytest.approx(vmse(pred, gt), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            vmse(np.zeros((5, 3)), np.zeros((6, 3)))

    def test_offset_cancels_in_affine_difference(self):
        gt, pred = _pair(seed=12)
        with_off = _affine_map(seed=1)
        no_off = VertexMap(basis=with_off.basis, offset=None)
        assert vmse(gt, pred, with_off) == pytest.approx(vmse(gt, pred, no_off), rel=1e-12)


class TestLvd:
    def test_zero_when_equal(self):
        gt, _ = _pair()
        assert lvd(gt, gt.copy()) == 0.0

    def test_all_ones_difference(self):
        assert lvd(np.zeros((4, 5)), np.ones((4, 5))) == pytest.approx(5.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_oracle(self, seed):
        gt, pred = _pair(seed=seed)
        vmap = _affine_map(seed=seed)
        assert abs(lvd(gt, pred, vmap) - _oracle_lvd(gt, pred, vmap)) < 1e-9

    def test_symmetric(self):
        gt, pred = _pair(seed=3)
        assert lvd(gt, pred) == pytest.approx(lvd(pred, gt), abs=1e-12)

    def test_cauchy_schwarz_frame_bound(self):
        # per frame ||x||_1^2 <= d * ||x||_2^2 links LVD to VMSE
        rng = np.random.default_rng(8)
        for _ in range(50):
            d = int(rng.integers(1, 12))
            x = rng.normal(size=d)
            l1 = np.abs(x).sum()
            assert l1 * l1 <= d * float((x * x).sum()) + 1e-12


class TestWindowVertexL2:
    def test_zero_when_equal(self):
        gt, _ = _pair(T=30)
        assert window_vertex_l2(gt, gt.copy(), window=10) == 0.0

    def test_zero_mean_noise_cancels(self):
        gt = np.random.default_rng(0).normal(size=(10, 4))
        noise = np.tile(np.array([1.0, -1.0]), 5)[:, None] * 0.37
        pred = gt + noise
        assert window_vertex_l2(gt, pred, window=10) == pytest.approx(0.0, abs=1e-18)

    @pytest.mark.parametrize("seed,window,stride", [(0, 5, 5), (1, 4, 2), (2, 7, 3)])
    def test_oracle(self, seed, window, stride):
        gt, pred = _pair(T=23, seed=seed)
        vmap = _affine_map(seed=seed + 7)
        got = window_vertex_l2(gt, pred, vmap, window=window, stride=stride)
        exp = _oracle_wvl2(gt, pred, vmap, window, stride)
        assert abs(got - exp) < 1e-9

    def test_remainder_dropped(self):
        gt, pred = _pair(T=25, seed=4)
        full = window_vertex_l2(gt[:20], pred[:20], window=10)
        with_tail = window_vertex_l2(gt, pred, window=10)
        assert with_tail == pytest.approx(full)  # frames 20..24 ignored

    def test_window_longer_than_sequence(self):
        with pytest.raises(InvalidArgument):
            window_vertex_l2(np.zeros((5, 2)), np.zeros((5, 2)), window=6)


class TestDiversity:
    def test_identical_motions_exact_zero(self):
        m = np.random.default_rng(0).normal(size=(6, 3))
        assert diversity([m, m.copy(), m.copy()], k_pairs=50, repeats=3) == 0.0

    def test_two_motions_equal_pair_distance(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        expect = float(((a - b) ** 2).sum())
        assert diversity([a, b], k_pairs=64, repeats=2) == pytest.approx(expect, rel=1e-12)

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(2)
        ms = [rng.normal(size=(4, 3)) for _ in range(5)]
        base = diversity(ms, k_pairs=100, repeats=2, seed=3)
        scaled = diversity([2 * m for m in ms], k_pairs=100, repeats=2, seed=3)
        assert scaled == pytest.approx(4 * base, rel=1e-12)

    def test_seeded_reproducible(self):
        rng = np.random.default_rng(4)
        ms = [rng.normal(size=(4, 3)) for _ in range(6)]
        assert diversity(ms, seed=7) == diversity(ms, seed=7)

    @pytest.mark.parametrize("seed", range(3))
    def test_oracle_same_sampling(self, seed):
        rng = np.random.default_rng(seed + 30)
        ms = [rng.normal(size=(3, 2)) for _ in range(5)]
        got = diversity(ms, k_pairs=40, repeats=3, seed=seed)
        exp = _oracle_diversity(ms, 40, 3, seed)
        assert abs(got - exp) < 1e-9

    def test_needs_two(self):
        with pytest.raises(InvalidArgument):
            diversity([np.zeros((3, 2))])


class TestVariance:
    def test_constant_exact_zero(self):
        assert variance(np.full((7, 4), 3.3)) == 0.0

    def test_two_point_channel(self):
        assert variance(np.array([[0.0], [2.0]])) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_oracle(self, seed):
        mat = np.random.default_rng(seed).normal(size=(9, 6))
        assert abs(variance(mat) - _oracle_variance(mat)) < 1e-9

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            variance(np.zeros((0, 3)))

    def test_masked_motion_sequence(self):
        data = np.zeros((2, 6), dtype=np.float32)
        data[:, :4] = np.array([[0, 2, 0, 2], [1, 1, 1, 1]], dtype=np.float32)
        mask = np.array([True] * 4 + [False] * 2)
        seq = MotionSequence(data, mask=mask)
        assert variance(seq) == pytest.approx(0.5)  # channel vars 1 and 0


class TestTokenNllPpl:
    def test_uniform_512(self):
        lp = np.full(40, -math.log(512.0))
        out = token_nll_ppl(lp, ["face"] * 40)
        assert abs(out["nll"] - math.log(512.0)) < 1e-12
        assert out["nll_face"] == pytest.approx(math.log(512.0), abs=1e-12)
        assert out["nll_text"] is None

    def test_probability_one(self):
        out = token_nll_ppl(np.zeros(5), ["text"] * 5)
        assert out["nll"] == 0.0 and out["ppl"] == 1.0

    def test_ppl_identity(self):
        rng = np.random.default_rng(0)
        lp = -rng.uniform(0.1, 5.0, size=30)
        cls = rng.choice(["text", "face", "body"], size=30).tolist()
        out = token_nll_ppl(lp, cls)
        assert out["ppl"] == pytest.approx(math.exp(out["nll"]), rel=1e-15)

    def test_per_class_hand_sum(self):
        lp = np.array([-1.0, -2.0, -3.0, -4.0])
        cls = ["text", "face", "text", "body"]
        out = token_nll_ppl(lp, cls)
        assert out["nll_text"] == pytest.approx(2.0)
        assert out["nll_face"] == pytest.approx(2.0)
        assert out["nll_body"] == pytest.approx(4.0)
        assert out["nll"] == pytest.approx(2.5)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            token_nll_ppl([], [])

    def test_unknown_class_rejected(self):
        with pytest.raises(InvalidArgument):
            token_nll_ppl([-1.0], ["word"])


class TestVertexMapIO:
    def test_round_trip(self, tmp_path):
        vmap = _affine_map(d=4, out=9)
        path = tmp_path / "m.vmap"
        write_vmap(path, vmap)
        back = read_vmap(path)
        np.testing.assert_allclose(back.basis, vmap.basis.astype(np.float32), atol=0)
        np.testing.assert_allclose(back.offset, vmap.offset.astype(np.float32), atol=0)

    def test_identity_default(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        np.testing.assert_array_equal(VertexMap().apply(x), x)

    def test_linearity(self):
        vmap = VertexMap(basis=_affine_map(d=3, out=5).basis, offset=None)
        a, b = np.random.default_rng(1).normal(size=(2, 4, 3))
        lhs = vmap.apply(2.0 * a + 0.5 * b)
        rhs = 2.0 * vmap.apply(a) + 0.5 * vmap.apply(b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestReportAndPairSet:
    def test_scales_table(self):
        assert PAPER_SCALES["face"]["vmse"] == 1e-1
        assert PAPER_SCALES["face"]["lvd"] == 1e-3
        assert PAPER_SCALES["face"]["wvl2"] == 1e-7
        assert PAPER_SCALES["body"]["vmse"] == 1.0
        assert PAPER_SCALES["body"]["lvd"] == 1e-1
        assert PAPER_SCALES["body"]["wvl2"] == 1e-4
        assert PAPER_SCALES["body"]["variance"] == 1e-1

    def test_scale_paper_divides(self):
        rep = MetricReport(vmse=0.2, lvd=0.004, wvl2=2e-7, diversity=1.0, variance=0.5,
                           scales=PAPER_SCALES["face"])
        d = rep.to_dict(scale_paper=True)
        assert d["vmse"] == pytest.approx(2.0)
        assert d["lvd"] == pytest.approx(4.0)
        assert d["wvl2"] == pytest.approx(2.0)

    def test_evaluate_pair_set_zero_on_identical(self):
        rng = np.random.default_rng(5)
        seqs = [MotionSequence(rng.normal(size=(4, 30)).astype(np.float32)) for _ in range(3)]
        rep = evaluate_pair_set(seqs, seqs, window=10)
        assert rep.vmse == 0.0 and rep.lvd == 0.0 and rep.wvl2 == 0.0

    def test_evaluate_pair_set_single_pair_has_no_diversity(self):
        rng = np.random.default_rng(6)
        a = [MotionSequence(rng.normal(size=(4, 30)).astype(np.float32))]
        b = [MotionSequence(rng.normal(size=(4, 30)).astype(np.float32))]
        rep = evaluate_pair_set(a, b, window=10)
        assert rep.diversity is None
        assert rep.to_dict()["diversity"] is None
