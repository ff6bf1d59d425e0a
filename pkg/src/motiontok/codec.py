"""VQ codec: strided-conv encoder, nearest-neighbor quantizer, mirrored decoder.

A window of W frames with d channels is downsampled q-fold to tau = W/q latent
steps of dimension C, snapped to the nearest of K unit-norm codebook rows, and
decoded back to W frames. The codebook learns by exponential moving averages,
not by gradient, so its entries carry their own running count/sum state.

Checkpoints use the VQCKPT1 container: a magic string, a JSON block holding
the config and a tensor manifest, then the raw tensors little-endian in
manifest order. The README documents the layout table.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgument, InvalidState, ValidationError
from .motion import MotionSequence

CKPT_MAGIC = b"VQCKPT1"
_EMA_EPS = 1e-5


@dataclass(frozen=True)
class CodecConfig:
    """Hyperparameters of one codec (face and body each get their own)."""

    d: int
    W: int = 512
    q: int = 8
    K: int = 512
    C: int = 8
    hidden: tuple = (128, 256, 256)

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgument(f"d must be >= 1, got {self.d}")
        if self.q < 2 or (self.q & (self.q - 1)) != 0:
            raise InvalidArgument(f"q must be a power of 2 >= 2, got {self.q}")
        if self.W % self.q != 0:
            raise InvalidArgument(f"W={self.W} not divisible by q={self.q}")
        if self.K < 2:
            raise InvalidArgument(f"K must be >= 2, got {self.K}")
        if self.C < 1:
            raise InvalidArgument(f"C must be >= 1, got {self.C}")
        n_stages = self.q.bit_length() - 1
        if len(self.hidden) != n_stages:
            raise InvalidArgument(
                f"hidden widths {self.hidden} must have log2(q)={n_stages} entries"
            )
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def n_stages(self) -> int:
        return self.q.bit_length() - 1

    @property
    def tau(self) -> int:
        return self.W // self.q

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "W": self.W,
            "q": self.q,
            "K": self.K,
            "C": self.C,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CodecConfig":
        return cls(
            d=int(obj["d"]),
            W=int(obj["W"]),
            q=int(obj["q"]),
            K=int(obj["K"]),
            C=int(obj["C"]),
            hidden=tuple(obj["hidden"]),
        )


def face_config(**kw) -> CodecConfig:
    from .motion import FACE_DIM

    kw.setdefault("C", 8)
    return CodecConfig(d=FACE_DIM, **kw)


def body_config(**kw) -> CodecConfig:
    from .motion import BODY_DIM

    kw.setdefault("C", 16)
    return CodecConfig(d=BODY_DIM, **kw)


# -- codebook ------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """K unit-norm code rows plus the EMA state that maintains them.

    entries: (K, C) float32 rows, each unit L2 norm.
    ema_counts / ema_sums: float64 running averages of assignment counts and
    assigned-latent sums; entries are re-derived from these on every update.
    usage: int64 lifetime assignment counts, for dead-code bookkeeping.
    """

    entries: np.ndarray
    ema_counts: np.ndarray
    ema_sums: np.ndarray
    usage: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float32)
        counts = np.ascontiguousarray(self.ema_counts, dtype=np.float64)
        sums = np.ascontiguousarray(self.ema_sums, dtype=np.float64)
        usage = np.ascontiguousarray(self.usage, dtype=np.int64)
        k, c = entries.shape
        if counts.shape != (k,) or sums.shape != (k, c) or usage.shape != (k,):
            raise InvalidArgument("codebook field shapes disagree")
        if np.any(counts < 0):
            raise InvalidArgument("ema_counts must be non-negative")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "ema_counts", counts)
        object.__setattr__(self, "ema_sums", sums)
        object.__setattr__(self, "usage", usage)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def C(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def init(cls, K: int, C: int, rng: np.random.Generator) -> "Codebook":
        entries = rng.standard_normal((K, C))
        entries /= np.maximum(np.linalg.norm(entries, axis=1, keepdims=True), 1e-12)
        counts = np.ones(K, dtype=np.float64)
        sums = entries.astype(np.float64) * (counts + _EMA_EPS)[:, None]
        return cls(entries.astype(np.float32), counts, sums, np.zeros(K, dtype=np.int64))


def _normalize_rows(entries: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(entries, axis=1, keepdims=True)
    return entries / np.maximum(norms, 1e-12)


def ema_update(cb: Codebook, z: np.ndarray, assignments: np.ndarray, decay: float) -> Codebook:
    """One EMA step over a batch of assigned latents; returns a new Codebook.

    z: (N, C) latents, already restricted to valid timesteps.
    assignments: (N,) code indices for each row of z.
    """
    if not (0.0 < decay < 1.0):
        raise InvalidArgument(f"decay must be in (0,1), got {decay}")
    z = np.asarray(z, dtype=np.float64).reshape(-1, cb.C)
    assignments = np.asarray(assignments, dtype=np.int64).reshape(-1)
    if z.shape[0] != assignments.shape[0]:
        raise InvalidArgument("latents and assignments disagree in length")
    if assignments.size and (assignments.min() < 0 or assignments.max() >= cb.K):
        raise InvalidArgument("assignment index out of range")
    n_k = np.bincount(assignments, minlength=cb.K).astype(np.float64)
    sums_k = np.zeros((cb.K, cb.C), dtype=np.float64)
    np.add.at(sums_k, assignments, z)
    counts = decay * cb.ema_counts + (1.0 - decay) * n_k
    sums = decay * cb.ema_sums + (1.0 - decay) * sums_k
    entries = _normalize_rows(sums / (counts + _EMA_EPS)[:, None])
    usage = cb.usage + n_k.astype(np.int64)
    return Codebook(entries.astype(np.float32), counts, sums, usage)


def reseed_dead_codes(
    cb: Codebook, pool: np.ndarray, dead: np.ndarray, rng: np.random.Generator
) -> Codebook:
    """Replace dead code rows with random latents drawn from pool (N, C)."""
    pool = np.asarray(pool, dtype=np.float64).reshape(-1, cb.C)
    dead = np.asarray(dead, dtype=bool)
    n_dead = int(dead.sum())
    if n_dead == 0 or pool.shape[0] == 0:
        return cb
    picks = pool[rng.integers(0, pool.shape[0], size=n_dead)]
    picks = _normalize_rows(picks + 1e-12 * (np.abs(picks).sum(axis=1, keepdims=True) == 0))
    entries = cb.entries.copy().astype(np.float64)
    counts = cb.ema_counts.copy()
    sums = cb.ema_sums.copy()
    entries[dead] = picks
    counts[dead] = 1.0
    sums[dead] = picks * (1.0 + _EMA_EPS)
    return Codebook(entries.astype(np.float32), counts, sums, cb.usage.copy())


# -- quantizer -----------------------------------------------------------------


@dataclass(frozen=True)
class QuantizedClip:
    """Per-window quantization result.

    indices: (tau,) or (B, tau) code indices.
    straight_through_latent: z + (z_hat - z), same shape as z.
    source_mask: validity at latent resolution, same shape as indices.
    """

    indices: np.ndarray
    straight_through_latent: np.ndarray
    source_mask: np.ndarray
    z_hat: np.ndarray = field(repr=False, default=None)


def nearest_codes(flat: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Exhaustive nearest-row index per latent vector, lowest index on ties.

    Distances are formed by direct subtraction in float64 so results are
    insensitive to the usual expanded-norm cancellation.
    """
    zf = np.asarray(flat, dtype=np.float64)
    e = np.asarray(entries, dtype=np.float64)
    if zf.ndim != 2 or zf.shape[1] != e.shape[1]:
        raise InvalidArgument(f"latent width {zf.shape} does not match codebook {e.shape}")
    if e.shape[0] == 0:
        raise InvalidState("empty codebook")
    out = np.empty(zf.shape[0], dtype=np.int64)
    step = max(1, (1 << 22) // max(e.shape[0] * e.shape[1], 1))
    for s in range(0, zf.shape[0], step):
        chunk = zf[s : s + step]
        d2 = ((chunk[:, None, :] - e[None, :, :]) ** 2).sum(axis=2)
        out[s : s + step] = np.argmin(d2, axis=1)
    return out


def downsample_mask(mask: np.ndarray, q: int) -> np.ndarray:
    """Frame mask -> latent-step mask; a step is valid if any source frame is."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-1] % q != 0:
        raise InvalidArgument(f"mask length {mask.shape[-1]} not divisible by q={q}")
    return mask.reshape(mask.shape[:-1] + (mask.shape[-1] // q, q)).any(axis=-1)


def quantize(z: np.ndarray, cb: Codebook, source_mask=None) -> QuantizedClip:
    """Snap each latent timestep to its nearest codebook row.

    Accepts (tau, C) for one window or (B, C, tau) channel-major batches.
    """
    z = np.asarray(z)
    if z.ndim == 2:
        if z.shape[1] != cb.C:
            raise InvalidArgument(f"latent width {z.shape[1]} != codebook dim {cb.C}")
        flat = z
        idx = nearest_codes(flat, cb.entries)
        z_hat = cb.entries[idx].astype(z.dtype, copy=False)
        mask = (
            np.ones(z.shape[0], dtype=bool)
            if source_mask is None
            else np.asarray(source_mask, dtype=bool).reshape(z.shape[0])
        )
        st = z + (z_hat - z)
        return QuantizedClip(idx, st, mask, z_hat=z_hat)
    if z.ndim == 3:
        b, c, tau = z.shape
        if c != cb.C:
            raise InvalidArgument(f"latent width {c} != codebook dim {cb.C}")
        flat = z.transpose(0, 2, 1).reshape(b * tau, c)
        idx = nearest_codes(flat, cb.entries).reshape(b, tau)
        z_hat = cb.entries[idx].transpose(0, 2, 1).astype(z.dtype, copy=False)
        mask = (
            np.ones((b, tau), dtype=bool)
            if source_mask is None
            else np.asarray(source_mask, dtype=bool).reshape(b, tau)
        )
        st = z + (z_hat - z)
        return QuantizedClip(idx, st, mask, z_hat=z_hat)
    raise InvalidArgument(f"latents must be (tau,C) or (B,C,tau), got shape {z.shape}")


# -- encoder / decoder ---------------------------------------------------------


def _he(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


class Codec:
    """Encoder/decoder parameter bundle for one motion stream."""

    def __init__(self, config: CodecConfig, params: dict, codebook: Codebook):
        self.config = config
        self.params = params
        self.codebook = codebook

    @classmethod
    def init(cls, config: CodecConfig, seed: int = 0) -> "Codec":
        rng = np.random.default_rng(seed)
        h = list(config.hidden)
        widths = [h[0]] + h
        p = {}

        def conv_p(name, cout, cin, k):
            p[f"{name}.w"] = ad.param(_he(rng, (cout, cin, k), cin * k))
            p[f"{name}.b"] = ad.param(np.zeros(cout, dtype=np.float32))

        def convT_p(name, cin, cout, k):
            p[f"{name}.w"] = ad.param(_he(rng, (cin, cout, k), cin * k))
            p[f"{name}.b"] = ad.param(np.zeros(cout, dtype=np.float32))

        def res_p(name, ch):
            conv_p(f"{name}.c1", ch, ch, 3)
            conv_p(f"{name}.c2", ch, ch, 3)

        conv_p("enc.stem", widths[0], config.d, 3)
        for i in range(config.n_stages):
            conv_p(f"enc.down{i}", widths[i + 1], widths[i], 4)
            res_p(f"enc.res{i}", widths[i + 1])
        conv_p("enc.head", config.C, widths[-1], 3)

        conv_p("dec.stem", widths[-1], config.C, 3)
        res_p("dec.res_in", widths[-1])
        for j in range(config.n_stages):
            cin, cout = widths[config.n_stages - j], widths[config.n_stages - j - 1]
            convT_p(f"dec.up{j}", cin, cout, 4)
            res_p(f"dec.res{j}", cout)
        conv_p("dec.head", config.d, widths[0], 3)

        cb = Codebook.init(config.K, config.C, rng)
        return cls(config, p, cb)

    @property
    def param_names(self):
        return list(self.params.keys())

    def num_params(self) -> int:
        return sum(v.data.size for v in self.params.values())

    def _res_block(self, tape, h, name):
        p = self.params
        r = ad.conv1d(tape, h, p[f"{name}.c1.w"], p[f"{name}.c1.b"], stride=1, pad=1)
        r = ad.leaky_relu(tape, r)
        r = ad.conv1d(tape, r, p[f"{name}.c2.w"], p[f"{name}.c2.b"], stride=1, pad=1)
        return ad.add(tape, h, r)

    def encoder_forward(self, tape, x) -> ad.Var:
        """(B, d, W) -> (B, C, tau) latents."""
        p = self.params
        xv = x if isinstance(x, ad.Var) else ad.Var(np.asarray(x))
        if xv.data.ndim != 3 or xv.data.shape[1] != self.config.d:
            raise InvalidArgument(f"encoder expects (B,{self.config.d},T), got {xv.data.shape}")
        if xv.data.shape[2] != self.config.W:
            raise InvalidArgument(
                f"encoder expects window length {self.config.W}, got {xv.data.shape[2]}"
            )
        h = ad.conv1d(tape, xv, p["enc.stem.w"], p["enc.stem.b"], stride=1, pad=1)
        h = ad.leaky_relu(tape, h)
        for i in range(self.config.n_stages):
            h = ad.conv1d(tape, h, p[f"enc.down{i}.w"], p[f"enc.down{i}.b"], stride=2, pad=1)
            h = ad.leaky_relu(tape, h)
            h = self._res_block(tape, h, f"enc.res{i}")
        return ad.conv1d(tape, h, p["enc.head.w"], p["enc.head.b"], stride=1, pad=1)

    def decoder_forward(self, tape, zq) -> ad.Var:
        """(B, C, tau) quantized latents -> (B, d, W) reconstruction."""
        p = self.params
        zv = zq if isinstance(zq, ad.Var) else ad.Var(np.asarray(zq))
        if zv.data.ndim != 3 or zv.data.shape[1] != self.config.C:
            raise InvalidArgument(f"decoder expects (B,{self.config.C},tau), got {zv.data.shape}")
        if zv.data.shape[2] != self.config.tau:
            raise InvalidArgument(
                f"decoder expects {self.config.tau} latent steps, got {zv.data.shape[2]}"
            )
        h = ad.conv1d(tape, zv, p["dec.stem.w"], p["dec.stem.b"], stride=1, pad=1)
        h = ad.leaky_relu(tape, h)
        h = self._res_block(tape, h, "dec.res_in")
        for j in range(self.config.n_stages):
            h = ad.conv1d_transpose(tape, h, p[f"dec.up{j}.w"], p[f"dec.up{j}.b"], stride=2, pad=1)
            h = ad.leaky_relu(tape, h)
            h = self._res_block(tape, h, f"dec.res{j}")
        return ad.conv1d(tape, h, p["dec.head.w"], p["dec.head.b"], stride=1, pad=1)

    # public single-window API, time-major at the boundary

    def _window_array(self, seq) -> np.ndarray:
        if isinstance(seq, MotionSequence):
            if seq.width != self.config.d:
                raise InvalidArgument(f"sequence width {seq.width} != codec d {self.config.d}")
            if seq.num_frames != self.config.W:
                raise InvalidArgument(
                    f"sequence length {seq.num_frames} != window {self.config.W}"
                )
            return seq.data
        arr = np.asarray(seq, dtype=np.float32)
        if arr.shape != (self.config.W, self.config.d):
            raise InvalidArgument(
                f"expected ({self.config.W},{self.config.d}) window, got {arr.shape}"
            )
        return arr.T

    def encode(self, seq) -> np.ndarray:
        """Padded window (MotionSequence or (W,d) array) -> (tau, C) latents."""
        x = self._window_array(seq)[None, :, :]
        z = self.encoder_forward(None, x)
        return np.ascontiguousarray(z.data[0].T)

    def decode(self, clip, cb: Codebook = None) -> np.ndarray:
        """QuantizedClip or (tau,) indices -> (W, d) reconstruction."""
        cb = cb if cb is not None else self.codebook
        if isinstance(clip, QuantizedClip):
            idx = np.asarray(clip.indices).reshape(-1)
        else:
            idx = np.asarray(clip, dtype=np.int64).reshape(-1)
        if idx.shape[0] != self.config.tau:
            raise InvalidArgument(f"expected {self.config.tau} indices, got {idx.shape[0]}")
        if idx.size and (idx.min() < 0 or idx.max() >= cb.K):
            raise InvalidArgument("code index out of range")
        zq = cb.entries[idx].T[None, :, :]
        y = self.decoder_forward(None, zq.astype(np.float32))
        return np.ascontiguousarray(y.data[0].T)

    def encode_quantize(self, seq, source_mask=None) -> QuantizedClip:
        """Window -> QuantizedClip, downsampling a frame mask if given."""
        z = self.encode(seq)
        if source_mask is None and isinstance(seq, MotionSequence):
            source_mask = seq.mask
        lat_mask = None
        if source_mask is not None:
            source_mask = np.asarray(source_mask, dtype=bool)
            lat_mask = (
                downsample_mask(source_mask, self.config.q)
                if source_mask.shape[-1] == self.config.W
                else source_mask
            )
        return quantize(z, self.codebook, source_mask=lat_mask)


# -- checkpoint container --------------------------------------------------------


_DTYPES = {"f32": np.float32, "f64": np.float64, "u64": np.uint64}


def _cb_tensors(cb: Codebook):
    return [
        ("codebook.entries", cb.entries.astype(np.float32), "f32"),
        ("codebook.ema_counts", cb.ema_counts.astype(np.float32), "f32"),
        ("codebook.ema_sums", cb.ema_sums.astype(np.float32), "f32"),
        ("codebook.usage", cb.usage.astype(np.uint64), "u64"),
    ]


def save_checkpoint(path: str, codec: Codec) -> None:
    """Write a VQCKPT1 file atomically (temp file then rename)."""
    tensors = [(n, v.data.astype(np.float32), "f32") for n, v in codec.params.items()]
    tensors += _cb_tensors(codec.codebook)
    manifest = [{"name": n, "shape": list(a.shape), "dtype": d} for n, a, d in tensors]
    head = {"config": codec.config.to_dict(), "tensors": manifest}
    blob = json.dumps(head, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, arr, dt in tensors:
            f.write(np.ascontiguousarray(arr, dtype=_DTYPES[dt]).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Codec:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValidationError(f"{path}: not a VQCKPT1 checkpoint")
    off = len(CKPT_MAGIC)
    (blob_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    try:
        head = json.loads(raw[off : off + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValidationError(f"{path}: corrupt checkpoint header: {e}") from e
    off += blob_len
    config = CodecConfig.from_dict(head["config"])
    arrays = {}
    for spec in head["tensors"]:
        dt = _DTYPES[spec["dtype"]]
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape)) * np.dtype(dt).itemsize
        if off + nbytes > len(raw):
            raise ValidationError(f"{path}: truncated checkpoint")
        arrays[spec["name"]] = np.frombuffer(
            raw, dtype=np.dtype(dt).newbyteorder("<"), count=int(np.prod(shape)), offset=off
        ).reshape(shape)
        off += nbytes
    if off != len(raw):
        raise ValidationError(f"{path}: trailing bytes after declared tensors")
    cb = Codebook(
        arrays["codebook.entries"].astype(np.float32),
        arrays["codebook.ema_counts"].astype(np.float64),
        arrays["codebook.ema_sums"].astype(np.float64),
        arrays["codebook.usage"].astype(np.int64),
    )
    params = {}
    template = Codec.init(config, seed=0)
    for name in template.param_names:
        if name not in arrays:
            raise ValidationError(f"{path}: missing tensor {name}")
        if arrays[name].shape != template.params[name].data.shape:
            raise ValidationError(
                f"{path}: tensor {name} has shape {arrays[name].shape}, "
                f"expected {template.params[name].data.shape}"
            )
        params[name] = ad.param(arrays[name].astype(np.float32))
    return Codec(config, params, cb)
