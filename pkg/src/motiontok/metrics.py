"""Reconstruction and diversity metrics, plus token-level NLL/PPL.

All distance metrics map frames through a VertexMap first; the default map
is the identity, which makes vertex space equal parameter space and keeps
the metrics self-contained (a real blendshape/skinned basis can be loaded
from a VMAP1 file when such assets are available).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ValidationError
from .motion import MotionSequence

VMAP_MAGIC = b"VMAP1"

# Display-scale conventions for reported tables: value_scaled = value / factor.
PAPER_SCALES = {
    "face": {"vmse": 1e-1, "lvd": 1e-3, "wvl2": 1e-7, "diversity": 1.0, "variance": 1.0},
    "body": {"vmse": 1.0, "lvd": 1e-1, "wvl2": 1e-4, "diversity": 1.0, "variance": 1e-1},
}


@dataclass(frozen=True)
class VertexMap:
    """Affine map from parameter frames (d) to vertex coordinates (3V)."""

    basis: np.ndarray = None
    offset: np.ndarray = None

    def apply(self, frames: np.ndarray) -> np.ndarray:
        """(N, d) parameter frames -> (N, out_dim) vertex frames."""
        frames = np.asarray(frames, dtype=np.float64)
        if self.basis is None:
            return frames
        b = np.asarray(self.basis, dtype=np.float64)
        if frames.shape[1] != b.shape[1]:
            raise InvalidArgument(f"frames width {frames.shape[1]} != basis input {b.shape[1]}")
        out = frames @ b.T
        if self.offset is not None:
            out = out + np.asarray(self.offset, dtype=np.float64)[None, :]
        return out


def write_vmap(path: str, vmap: VertexMap) -> None:
    b = np.ascontiguousarray(vmap.basis, dtype=np.float32)
    out_dim, d = b.shape
    off = (
        np.zeros(out_dim, dtype=np.float32)
        if vmap.offset is None
        else np.ascontiguousarray(vmap.offset, dtype=np.float32)
    )
    if off.shape != (out_dim,):
        raise InvalidArgument(f"offset shape {off.shape} != ({out_dim},)")
    with open(path, "wb") as f:
        f.write(VMAP_MAGIC)
        f.write(struct.pack("<II", d, out_dim))
        f.write(b.astype("<f4").tobytes())
        f.write(off.astype("<f4").tobytes())


def read_vmap(path: str) -> VertexMap:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(VMAP_MAGIC)] != VMAP_MAGIC:
        raise ValidationError(f"{path}: not a VMAP1 file")
    d, out_dim = struct.unpack_from("<II", raw, len(VMAP_MAGIC))
    off0 = len(VMAP_MAGIC) + 8
    need = off0 + 4 * (out_dim * d + out_dim)
    if len(raw) != need:
        raise ValidationError(f"{path}: expected {need} bytes, got {len(raw)}")
    basis = np.frombuffer(raw, dtype="<f4", count=out_dim * d, offset=off0).reshape(out_dim, d)
    offset = np.frombuffer(raw, dtype="<f4", count=out_dim, offset=off0 + 4 * out_dim * d)
    return VertexMap(basis=basis.astype(np.float64), offset=offset.astype(np.float64))


def _frames_of(x, mask=None):
    """Coerce to time-major (T, d) float64 valid frames."""
    if isinstance(x, MotionSequence):
        frames = x.data.T.astype(np.float64)
        m = x.mask
    else:
        frames = np.asarray(x, dtype=np.float64)
        if frames.ndim != 2:
            raise InvalidArgument(f"expected (T,d) frames, got shape {frames.shape}")
        m = None
    if mask is not None:
        m = np.asarray(mask, dtype=bool) if m is None else (m & np.asarray(mask, dtype=bool))
    return frames, m


def _paired_vertex_diff(gt, pred, vmap: VertexMap):
    g, gm = _frames_of(gt)
    p, pm = _frames_of(pred)
    if g.shape != p.shape:
        raise InvalidArgument(f"gt shape {g.shape} != pred shape {p.shape}")
    m = None
    if gm is not None or pm is not None:
        m = np.ones(g.shape[0], dtype=bool)
        if gm is not None:
            m &= gm
        if pm is not None:
            m &= pm
        g, p = g[m], p[m]
    if g.shape[0] == 0:
        raise InvalidArgument("no valid frames")
    return vmap.apply(p) - vmap.apply(g)


def vmse(gt, pred, vmap: VertexMap = VertexMap()) -> float:
    """Mean over frames of the squared vertex-space difference norm."""
    diff = _paired_vertex_diff(gt, pred, vmap)
    return float((diff * diff).sum(axis=1).mean())


def lvd(gt, pred, vmap: VertexMap = VertexMap()) -> float:
    """Mean over frames of the vertex-space L1 difference norm."""
    diff = _paired_vertex_diff(gt, pred, vmap)
    return float(np.abs(diff).sum(axis=1).mean())


def window_vertex_l2(
    gt, pred, vmap: VertexMap = VertexMap(), window: int = 25, stride: int = None
) -> float:
    """Mean over windows of the squared distance between window-mean vertices.

    Windows start at 0 and advance by stride (default: window, so windows are
    non-overlapping); a trailing remainder shorter than window is dropped.
    Masked sequences are first compressed to their valid frames.
    """
    if window < 1:
        raise InvalidArgument(f"window must be >= 1, got {window}")
    stride = window if stride is None else stride
    if stride < 1:
        raise InvalidArgument(f"stride must be >= 1, got {stride}")
    g, gm = _frames_of(gt)
    p, pm = _frames_of(pred)
    if g.shape != p.shape:
        raise InvalidArgument(f"gt shape {g.shape} != pred shape {p.shape}")
    if gm is not None:
        g = g[gm]
    if pm is not None:
        p = p[pm]
    if g.shape[0] != p.shape[0]:
        raise InvalidArgument("gt and pred have different valid-frame counts")
    n = g.shape[0]
    if window > n:
        raise InvalidArgument(f"window {window} exceeds sequence length {n}")
    vg, vp = vmap.apply(g), vmap.apply(p)
    vals = []
    for s in range(0, n - window + 1, stride):
        mg = vg[s : s + window].mean(axis=0)
        mp = vp[s : s + window].mean(axis=0)
        d = mp - mg
        vals.append(float((d * d).sum()))
    return float(np.mean(vals))


def diversity(motions, k_pairs: int = 1000, repeats: int = 10, seed: int = 0) -> float:
    """Mean squared parameter-space distance over random motion pairs.

    Pairs (i, j) are sampled uniformly with replacement over ordered pairs
    with i != j; the estimate is averaged over independent repeats.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in motions]
    if len(mats) < 2:
        raise InvalidArgument(f"diversity needs >= 2 motions, got {len(mats)}")
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise InvalidArgument("all motions must share one shape")
    stack = np.stack(mats).reshape(len(mats), -1)
    rng = np.random.default_rng(seed)
    n = stack.shape[0]
    means = []
    for _ in range(repeats):
        i = rng.integers(0, n, size=k_pairs)
        j = rng.integers(0, n - 1, size=k_pairs)
        j = np.where(j >= i, j + 1, j)  # uniform over j != i
        d = stack[i] - stack[j]
        means.append(float((d * d).sum(axis=1).mean()))
    return float(np.mean(means))


def variance(motion) -> float:
    """Population variance per channel of a (T, D) motion, averaged over D."""
    if isinstance(motion, MotionSequence):
        mat = motion.data.T[motion.mask].astype(np.float64)
    else:
        mat = np.asarray(motion, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise InvalidArgument(f"expected non-empty (T,D) matrix, got shape {mat.shape}")
    # shift by the first frame: variance is translation-invariant, and this
    # makes constant channels exactly zero instead of accumulating rounding
    mat = mat - mat[0]
    return float(mat.var(axis=0).mean())


def token_nll_ppl(logprobs, classes) -> dict:
    """Per-class negative log-likelihood and overall perplexity.

    logprobs: per-token natural-log probabilities; classes: matching labels
    in {"text", "face", "body"}. A class with no tokens reports None.
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    cls = list(classes)
    if lp.ndim != 1 or lp.size == 0:
        raise InvalidArgument("empty token stream")
    if len(cls) != lp.size:
        raise InvalidArgument(f"{lp.size} logprobs vs {len(cls)} class labels")
    known = {"text", "face", "body"}
    bad = sorted(set(cls) - known)
    if bad:
        raise InvalidArgument(f"unknown token classes: {bad}")
    out = {}
    for name in ("text", "face", "body"):
        sel = np.fromiter((c == name for c in cls), dtype=bool, count=lp.size)
        out[f"nll_{name}"] = float(-lp[sel].mean()) if sel.any() else None
    out["nll"] = float(-lp.mean())
    out["ppl"] = float(np.exp(out["nll"]))
    return out


@dataclass(frozen=True)
class MetricReport:
    """The five distance/diversity numbers with display-scale metadata."""

    vmse: float
    lvd: float
    wvl2: float
    diversity: float
    variance: float
    scales: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("vmse", "lvd", "wvl2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgument(f"{name} must be finite and >= 0, got {v}")
        for name in ("diversity", "variance"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise InvalidArgument(f"{name} must be finite")

    def to_dict(self, scale_paper: bool = False) -> dict:
        vals = {
            "vmse": self.vmse,
            "lvd": self.lvd,
            "wvl2": self.wvl2,
            "diversity": self.diversity,
            "variance": self.variance,
        }
        if not scale_paper:
            return dict(vals, scales={k: 1.0 for k in vals})
        scales = self.scales or PAPER_SCALES["face"]
        scaled = {
            k: (None if v is None else v / scales.get(k, 1.0)) for k, v in vals.items()
        }
        return scaled | {"scales": dict(scales)}


def evaluate_pair_set(gts, preds, vmap: VertexMap = VertexMap(), stream: str = "face",
                      window: int = 25, seed: int = 0) -> MetricReport:
    """Aggregate the five metrics over matched gt/pred sequence lists.

    vmse/lvd/wvl2 average their per-frame (per-window) values over the whole
    corpus; diversity and variance are computed on the predictions.
    """
    if len(gts) != len(preds) or not gts:
        raise InvalidArgument("need equal non-empty gt and pred lists")
    se_sum = l1_sum = 0.0
    n_frames = 0
    w_sum = 0.0
    n_windows = 0
    pred_mats = []
    var_sum = 0.0
    for gt, pred in zip(gts, preds):
        diff = _paired_vertex_diff(gt, pred, vmap)
        se_sum += float((diff * diff).sum(axis=1).sum())
        l1_sum += float(np.abs(diff).sum(axis=1).sum())
        n_frames += diff.shape[0]
        g, gm = _frames_of(gt)
        p, pm = _frames_of(pred)
        if gm is not None:
            g = g[gm]
        if pm is not None:
            p = p[pm]
        n = g.shape[0]
        if window <= n:
            vg, vp = vmap.apply(g), vmap.apply(p)
            for s in range(0, n - window + 1, window):
                d = vp[s : s + window].mean(axis=0) - vg[s : s + window].mean(axis=0)
                w_sum += float((d * d).sum())
                n_windows += 1
        pred_mats.append(p)
        var_sum += variance(p)
    if n_windows == 0:
        raise InvalidArgument(f"no sequence admits a window of {window} frames")
    shapes = {m.shape for m in pred_mats}
    div = (
        diversity(pred_mats, seed=seed)
        if len(pred_mats) >= 2 and len(shapes) == 1
        else None
    )
    return MetricReport(
        vmse=se_sum / n_frames,
        lvd=l1_sum / n_frames,
        wvl2=w_sum / n_windows,
        diversity=div,
        variance=var_sum / len(preds),
        scales=dict(PAPER_SCALES.get(stream, PAPER_SCALES["face"])),
    )
