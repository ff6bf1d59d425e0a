"""Codec training: warmup/decay schedule, AdamW, gradient accumulation, EMA.

The optimizer touches only encoder/decoder parameters; the codebook is
maintained by exponential moving averages applied once per accumulation
boundary over the pooled valid latents of that boundary's micro-batches, so
an accumulated update equals one step on the concatenated batch. Dead codes
are re-seeded from recent latents at epoch ends.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as ls
from .autodiff import Tape  # noqa: F401  (re-export: the engine the trainer drives)
from .codec import Codec, CodecConfig, downsample_mask, ema_update, quantize, reseed_dead_codes
from .errors import InvalidArgument
from .motion import MotionSequence

_ADAM_BETAS = (0.9, 0.99)
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-4
    epochs: int = 100
    warmup_frac: float = 0.10
    decay_points: tuple = ((0.50, 0.1), (0.75, 0.01))
    ema_decay: float = 0.99
    weight_decay: float = 0.1
    grad_clip_norm: float = 1.0
    grad_accum_steps: int = 4
    batch_size: int = 32
    seed: int = 0
    val_frac: float = 0.10

    def __post_init__(self):
        if not (0.0 < self.warmup_frac < 0.5):
            raise InvalidArgument(f"warmup_frac must be in (0, 0.5), got {self.warmup_frac}")
        for name in ("base_lr", "ema_decay", "weight_decay", "grad_clip_norm"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be non-negative")
        if self.base_lr <= 0:
            raise InvalidArgument("base_lr must be positive")
        if self.epochs < 1 or self.grad_accum_steps < 1 or self.batch_size < 1:
            raise InvalidArgument("epochs, grad_accum_steps, batch_size must be >= 1")
        if not (0.0 < self.ema_decay < 1.0):
            raise InvalidArgument("ema_decay must be in (0,1)")
        if not (0.0 < self.val_frac < 1.0):
            raise InvalidArgument("val_frac must be in (0,1)")


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Learning rate at an optimizer step: linear warmup, staged decay."""
    if total_steps <= 0:
        raise InvalidArgument(f"total_steps must be positive, got {total_steps}")
    if step < 0 or step > total_steps:
        raise InvalidArgument(f"step {step} outside [0, {total_steps}]")
    frac = step / total_steps
    factor = 1.0
    for point, f in sorted(cfg.decay_points):
        if frac >= point:
            factor = f
    warmup_steps = max(1, int(round(cfg.warmup_frac * total_steps)))
    base = cfg.base_lr * (step / warmup_steps) if step < warmup_steps else cfg.base_lr
    return base * factor


class Trainer:
    """Owns optimizer state and the accumulation buffers for one codec."""

    def __init__(
        self,
        codec: Codec,
        cfg: TrainConfig,
        kind: str = "generic",
        weights: ls.LossWeights = None,
        total_steps: int = None,
    ):
        if kind not in ("face", "body", "generic"):
            raise InvalidArgument(f"unknown stream kind {kind!r}")
        self.codec = codec
        self.cfg = cfg
        self.kind = kind
        self.weights = weights if weights is not None else ls.LossWeights()
        self.total_steps = total_steps
        self.opt_m = {n: np.zeros_like(v.data) for n, v in codec.params.items()}
        self.opt_v = {n: np.zeros_like(v.data) for n, v in codec.params.items()}
        self.adam_t = 0
        self.opt_step = 0
        self.micro_step = 0
        self._gsum = None
        self._n_accum = 0
        self._lat_pool = []
        self._idx_pool = []
        self.last_latent_pool = None

    def _lr(self) -> float:
        if self.total_steps is None:
            return self.cfg.base_lr
        return lr_at(min(self.opt_step + 1, self.total_steps), self.total_steps, self.cfg)

    def train_step(self, x: np.ndarray, mask: np.ndarray = None) -> dict:
        """One micro-batch: forward, backward, accumulate; apply at boundary.

        x: (B, d, W) float32 windows; mask: (B, W) frame validity or None.
        """
        cfg, codec = self.cfg, self.codec
        x = np.ascontiguousarray(x, dtype=np.float32)
        if mask is None:
            mask = np.ones((x.shape[0], x.shape[2]), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        lat_mask = downsample_mask(mask, codec.config.q)

        tape = Tape()
        z = codec.encoder_forward(tape, ad.Var(x))
        clip = quantize(z.data, codec.codebook, source_mask=lat_mask)
        st = ad.straight_through(tape, z, clip.z_hat)
        pred = codec.decoder_forward(tape, st)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            total, breakdown = ls.total_loss(
                self.kind, z, clip.z_hat, x, pred, self.weights,
                frame_mask=mask, latent_mask=lat_mask, tape=tape,
            )
        record = {
            "step": self.micro_step,
            "opt_step": self.opt_step,
            "lr": self._lr(),
            "loss": breakdown["total"],
            "vq": breakdown["vq"],
            "recon": breakdown["recon"],
            "vel": breakdown["vel"],
            "applied": False,
        }
        self.micro_step += 1
        if not math.isfinite(breakdown["total"]):
            record["aborted"] = True
            record["diagnostics"] = {
                k: v for k, v in breakdown.items() if not math.isfinite(v)
            }
            return record

        tape.backward(total)
        if self._gsum is None:
            self._gsum = {
                n: (v.grad.copy() if v.grad is not None else np.zeros_like(v.data))
                for n, v in codec.params.items()
            }
        else:
            for n, v in codec.params.items():
                if v.grad is not None:
                    self._gsum[n] += v.grad
        for v in codec.params.values():
            v.zero_grad()
        self._n_accum += 1
        lat = z.data.transpose(0, 2, 1)[lat_mask]
        self._lat_pool.append(lat.astype(np.float64))
        self._idx_pool.append(clip.indices[lat_mask])

        if self._n_accum >= cfg.grad_accum_steps:
            record.update(self.apply_update())
        return record

    def apply_update(self) -> dict:
        """Flush accumulated gradients into one optimizer step plus EMA."""
        if self._n_accum == 0:
            return {"applied": False}
        cfg, codec = self.cfg, self.codec
        inv = 1.0 / self._n_accum
        grads = {n: g * inv for n, g in self._gsum.items()}
        gnorm = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
        clip_scale = 1.0
        if cfg.grad_clip_norm > 0 and gnorm > cfg.grad_clip_norm:
            clip_scale = cfg.grad_clip_norm / gnorm
        lr = self._lr()
        self.adam_t += 1
        b1, b2 = _ADAM_BETAS
        bc1 = 1.0 - b1**self.adam_t
        bc2 = 1.0 - b2**self.adam_t
        for n, v in codec.params.items():
            g = grads[n] * clip_scale
            m = self.opt_m[n]
            s = self.opt_v[n]
            m *= b1
            m += (1 - b1) * g
            s *= b2
            s += (1 - b2) * g * g
            update = (m / bc1) / (np.sqrt(s / bc2) + _ADAM_EPS) + cfg.weight_decay * v.data
            v.data = v.data - np.float32(lr) * update.astype(np.float32)
        pool = np.concatenate(self._lat_pool, axis=0) if self._lat_pool else np.zeros((0, codec.config.C))
        idx = np.concatenate(self._idx_pool, axis=0) if self._idx_pool else np.zeros(0, dtype=np.int64)
        if pool.shape[0] > 0:
            codec.codebook = ema_update(codec.codebook, pool, idx, cfg.ema_decay)
            self.last_latent_pool = pool
        self.opt_step += 1
        self._gsum = None
        self._n_accum = 0
        self._lat_pool = []
        self._idx_pool = []
        return {"applied": True, "grad_norm": gnorm, "clip_scale": clip_scale, "lr": lr}


@dataclass
class TrainResult:
    codec: Codec
    curve: list = field(default_factory=list)
    initial_val_recon: float = math.nan
    best_val_recon: float = math.nan
    best_epoch: int = -1
    final_val_recon: float = math.nan
    epochs_run: int = 0
    codes_active_frac: float = 0.0


def _materialize(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 2:
        x, m = dataset
        return np.ascontiguousarray(x, dtype=np.float32), np.asarray(m, dtype=bool)
    xs, ms = [], []
    for item in dataset:
        if isinstance(item, MotionSequence):
            xs.append(item.data)
            ms.append(item.mask)
        else:
            arr = np.asarray(item, dtype=np.float32)
            xs.append(arr)
            ms.append(np.ones(arr.shape[-1], dtype=bool))
    if not xs:
        raise InvalidArgument("empty dataset")
    return np.stack(xs).astype(np.float32), np.stack(ms)


def validation_recon(codec: Codec, x: np.ndarray, mask: np.ndarray, kind: str,
                     weights: ls.LossWeights, batch_size: int = 32) -> float:
    """Mean raw reconstruction loss over a validation set, no gradients."""
    total, count = 0.0, 0
    recon_fn = ls._RECON[kind]
    for s in range(0, x.shape[0], batch_size):
        xb = x[s : s + batch_size]
        mb = mask[s : s + batch_size]
        z = codec.encoder_forward(None, xb)
        clip = quantize(z.data, codec.codebook, source_mask=downsample_mask(mb, codec.config.q))
        pred = codec.decoder_forward(None, clip.z_hat.astype(np.float32))
        val = float(recon_fn(xb, pred, weights, mask=mb, tape=None).data)
        total += val * xb.shape[0]
        count += xb.shape[0]
    return total / count


def fit(
    dataset,
    cfg: TrainConfig,
    codec_config: CodecConfig = None,
    kind: str = "face",
    weights: ls.LossWeights = None,
    codec: Codec = None,
    log_fn=None,
    stop_when_val_below: float = None,
    stop_when_val_frac: float = None,
) -> TrainResult:
    """Train a codec; returns the best-validation checkpoint and the curve.

    stop_when_val_below, if set, is an absolute validation-reconstruction
    target checked at epoch ends for early stopping. stop_when_val_frac is
    the same check expressed as a fraction of the pre-training validation
    value; when both are given the looser (larger) threshold wins.
    """
    x, mask = _materialize(dataset)
    n = x.shape[0]
    if n < 2:
        raise InvalidArgument(f"need at least 2 sequences to split validation, got {n}")
    weights = weights if weights is not None else ls.LossWeights()
    if codec is None:
        if codec_config is None:
            raise InvalidArgument("pass codec_config or a codec to resume")
        codec = Codec.init(codec_config, seed=cfg.seed)
    if x.shape[1] != codec.config.d or x.shape[2] != codec.config.W:
        raise InvalidArgument(
            f"dataset windows {x.shape[1:]} do not match codec (d,W)="
            f"({codec.config.d},{codec.config.W})"
        )

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_frac * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise InvalidArgument("validation split leaves no training data")
    xv, mv = x[val_idx], mask[val_idx]
    xt, mt = x[train_idx], mask[train_idx]

    micro_per_epoch = math.ceil(xt.shape[0] / cfg.batch_size)
    steps_per_epoch = math.ceil(micro_per_epoch / cfg.grad_accum_steps)
    total_steps = cfg.epochs * steps_per_epoch
    trainer = Trainer(codec, cfg, kind=kind, weights=weights, total_steps=total_steps)

    def emit(rec):
        if log_fn is not None:
            log_fn(rec)

    result = TrainResult(codec=codec)
    val0 = validation_recon(codec, xv, mv, kind, weights, cfg.batch_size)
    result.initial_val_recon = val0
    if stop_when_val_frac is not None:
        rel = stop_when_val_frac * val0
        stop_when_val_below = rel if stop_when_val_below is None else max(stop_when_val_below, rel)
    best_val, best_epoch = math.inf, -1
    best_params, best_cb = None, None
    curve = [{"epoch": 0, "step": 0, "val_recon": val0}]
    emit(curve[0])

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(xt.shape[0])
        usage_start = codec.codebook.usage.copy()
        for s in range(0, xt.shape[0], cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            rec = trainer.train_step(xt[b], mt[b])
            rec["epoch"] = epoch
            curve.append(rec)
            emit(rec)
        flush = trainer.apply_update()
        if flush.get("applied"):
            rec = {"epoch": epoch, "step": trainer.micro_step, "opt_step": trainer.opt_step,
                   "lr": flush["lr"], "flush": True}
            curve.append(rec)
            emit(rec)
        dead = (codec.codebook.usage - usage_start) == 0
        if dead.any() and trainer.last_latent_pool is not None:
            codec.codebook = reseed_dead_codes(
                codec.codebook, trainer.last_latent_pool, dead, rng
            )
        val = validation_recon(codec, xv, mv, kind, weights, cfg.batch_size)
        active = float(((codec.codebook.usage - usage_start) > 0).mean())
        rec = {"epoch": epoch, "step": trainer.micro_step, "val_recon": val,
               "codes_active_frac": active}
        curve.append(rec)
        emit(rec)
        result.epochs_run = epoch
        result.final_val_recon = val
        result.codes_active_frac = active
        if val < best_val:
            best_val, best_epoch = val, epoch
            best_params = {k: v.data.copy() for k, v in codec.params.items()}
            best_cb = copy.deepcopy(codec.codebook)
        if stop_when_val_below is not None and val <= stop_when_val_below:
            break

    if best_params is not None:
        for k, v in codec.params.items():
            v.data = best_params[k]
        codec.codebook = best_cb
    result.best_val_recon = best_val
    result.best_epoch = best_epoch
    result.curve = curve
    return result
