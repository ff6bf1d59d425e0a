"""Training objectives: commitment, part-weighted reconstruction, velocity.

All losses are per-element means over valid frames (MAE-style), so weights
stay scale-free across channel width and window length. Velocity terms only
count consecutive valid-frame pairs; a window with fewer than two valid
frames contributes zero and raises a RuntimeWarning as the degenerate flag.

Functions accept ndarrays, autodiff Vars, or MotionSequence pairs; pass a
Tape to make the result differentiable w.r.t. pred (and z for commitment).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgument
from .motion import BODY_DIM, FACE_DIM, HAND_DIM, JAW_DIM, PSI_DIM, UBODY_DIM, MotionSequence


@dataclass(frozen=True)
class LossWeights:
    """Objective weights; recon_kind switches the reconstruction distance."""

    beta: float = 0.02
    lambda_f_recon: float = 1.0
    lambda_psi: float = 1.0
    lambda_jaw: float = 5.0
    lambda_f_vel: float = 0.5
    lambda_theta: float = 5.0
    lambda_b_recon: float = 1.0
    lambda_b_vel: float = 0.5
    recon_kind: str = "l1"

    def __post_init__(self):
        for name in (
            "beta",
            "lambda_f_recon",
            "lambda_psi",
            "lambda_jaw",
            "lambda_f_vel",
            "lambda_theta",
            "lambda_b_recon",
            "lambda_b_vel",
        ):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be non-negative")
        if self.recon_kind not in ("l1", "l2", "smooth_l1"):
            raise InvalidArgument(f"unknown recon_kind {self.recon_kind!r}")


def _recon_primitive(kind: str):
    return {"l1": ad.masked_l1, "l2": ad.masked_sq, "smooth_l1": ad.masked_smooth_l1}[kind]


def _as_bct(x):
    """Coerce input to ((B,d,T) Var-or-array, frame mask (B,T) or None)."""
    if isinstance(x, MotionSequence):
        return x.data[None, :, :], x.mask[None, :]
    if isinstance(x, ad.Var):
        data = x.data
    else:
        data = np.asarray(x)
    if data.ndim == 2:
        if isinstance(x, ad.Var):
            raise InvalidArgument("Var inputs must already be batched (B,d,T)")
        return data[None, :, :], None
    if data.ndim == 3:
        return x, None
    raise InvalidArgument(f"expected (d,T) or (B,d,T), got shape {data.shape}")


def _shape_of(x):
    return x.data.shape if isinstance(x, ad.Var) else np.asarray(x).shape


def _frame_mask(gt_mask, explicit, shape):
    """Resolve a (B,T) frame mask into (B,1,T) for broadcasting, or None."""
    mask = explicit if explicit is not None else gt_mask
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    b, _, t = shape
    if mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != (b, t):
        raise InvalidArgument(f"frame mask shape {mask.shape} does not match (B,T)=({b},{t})")
    return mask[:, None, :]


def _parts(kind: str, d: int, w: LossWeights, velocity: bool):
    if kind == "face":
        if d != FACE_DIM:
            raise InvalidArgument(f"face losses need {FACE_DIM} channels, got {d}")
        if velocity:
            return [(0, PSI_DIM, 1.0), (PSI_DIM, PSI_DIM + JAW_DIM, w.lambda_theta)]
        return [(0, PSI_DIM, w.lambda_psi), (PSI_DIM, PSI_DIM + JAW_DIM, w.lambda_jaw)]
    if kind == "body":
        if d != BODY_DIM:
            raise InvalidArgument(f"body losses need {BODY_DIM} channels, got {d}")
        a, b = UBODY_DIM, UBODY_DIM + HAND_DIM
        return [(0, a, 1.0), (a, b, 1.0), (b, BODY_DIM, 1.0)]
    if kind == "generic":
        return [(0, d, 1.0)]
    raise InvalidArgument(f"unknown stream kind {kind!r}")


def _weighted_part_loss(tape, gt, pred, parts, mask3, primitive, time_delta: bool, w=None):
    gt_arr = gt.data if isinstance(gt, ad.Var) else np.asarray(gt)
    total = None
    for lo, hi, weight in parts:
        g = gt_arr[:, lo:hi, :]
        p = ad.slice_channels(tape, pred, lo, hi) if isinstance(pred, ad.Var) else np.asarray(pred)[:, lo:hi, :]
        m = mask3
        if time_delta:
            g = g[:, :, 1:] - g[:, :, :-1]
            p = ad.time_diff(tape, p) if isinstance(p, ad.Var) else p[:, :, 1:] - p[:, :, :-1]
            if mask3 is not None:
                m = mask3[:, :, 1:] & mask3[:, :, :-1]
        term = primitive(tape, p, g, mask=m)
        term = ad.scale(tape, term, weight) if weight != 1.0 else term
        total = term if total is None else ad.add(tape, total, term)
    return total


def commitment_loss(z, z_hat, beta: float = 0.02, mask=None, tape=None) -> ad.Var:
    """beta * mean((z - stopgrad(z_hat))^2); gradient reaches z only.

    mask, if given, marks valid latent steps: (tau,) for (tau,C) latents or
    (B,tau) for (B,C,tau) batches.
    """
    target = np.asarray(z_hat.data if isinstance(z_hat, ad.Var) else z_hat)
    shape = _shape_of(z)
    if shape != target.shape:
        raise InvalidArgument(f"latent shape {shape} != quantized shape {target.shape}")
    m = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if len(shape) == 2 and mask.shape == (shape[0],):
            m = mask[:, None]
        elif len(shape) == 3 and mask.shape == (shape[0], shape[2]):
            m = mask[:, None, :]
        else:
            raise InvalidArgument(f"latent mask shape {mask.shape} does not fit {shape}")
    sq = ad.masked_sq(tape, z, target, mask=m)
    return ad.scale(tape, sq, beta)


def _check_lengths(gt, pred):
    gs, ps = _shape_of(gt), _shape_of(pred)
    if gs != ps:
        raise InvalidArgument(f"gt shape {gs} != pred shape {ps}")


def _recon(kind, gt, pred, w, mask, tape):
    gt, gt_mask = _as_bct(gt)
    pred, _ = _as_bct(pred)
    _check_lengths(gt, pred)
    shape = _shape_of(gt)
    mask3 = _frame_mask(gt_mask, mask, shape)
    parts = _parts(kind, shape[1], w, velocity=False)
    return _weighted_part_loss(tape, gt, pred, parts, mask3, _recon_primitive(w.recon_kind), False)


def _vel(kind, gt, pred, w, mask, tape):
    gt, gt_mask = _as_bct(gt)
    pred, _ = _as_bct(pred)
    _check_lengths(gt, pred)
    shape = _shape_of(gt)
    mask3 = _frame_mask(gt_mask, mask, shape)
    if shape[2] < 2:
        warnings.warn("velocity loss needs >= 2 frames; returning 0", RuntimeWarning)
        return ad.Var(np.float64(0.0))
    if mask3 is not None:
        pairs = mask3[:, :, 1:] & mask3[:, :, :-1]
        if not pairs.any():
            warnings.warn("no consecutive valid frames; velocity loss is 0", RuntimeWarning)
            return ad.Var(np.float64(0.0))
    parts = _parts(kind, shape[1], w, velocity=True)
    return _weighted_part_loss(tape, gt, pred, parts, mask3, ad.masked_l1, True)


def face_recon_loss(gt, pred, w: LossWeights = LossWeights(), mask=None, tape=None) -> ad.Var:
    """lambda_psi * MAE(expression) + lambda_jaw * MAE(jaw) over valid frames."""
    return _recon("face", gt, pred, w, mask, tape)


def face_velocity_loss(gt, pred, w: LossWeights = LossWeights(), mask=None, tape=None) -> ad.Var:
    """MAE of frame differences: expression term + lambda_theta * jaw term."""
    return _vel("face", gt, pred, w, mask, tape)


def body_recon_loss(gt, pred, w: LossWeights = LossWeights(), mask=None, tape=None) -> ad.Var:
    """Sum of per-part MAE over upper body, right hand, left hand."""
    return _recon("body", gt, pred, w, mask, tape)


def body_velocity_loss(gt, pred, w: LossWeights = LossWeights(), mask=None, tape=None) -> ad.Var:
    """Velocity MAE summed over the three body parts, uniform weight."""
    return _vel("body", gt, pred, w, mask, tape)


def generic_recon_loss(gt, pred, w: LossWeights = LossWeights(), mask=None, tape=None) -> ad.Var:
    """Single-part reconstruction loss for arbitrary channel widths (toy configs)."""
    return _recon("generic", gt, pred, w, mask, tape)


def generic_velocity_loss(gt, pred, w: LossWeights = LossWeights(), mask=None, tape=None) -> ad.Var:
    return _vel("generic", gt, pred, w, mask, tape)


_RECON = {"face": face_recon_loss, "body": body_recon_loss, "generic": generic_recon_loss}
_VEL = {"face": face_velocity_loss, "body": body_velocity_loss, "generic": generic_velocity_loss}


def total_loss(
    kind: str,
    z,
    z_hat,
    gt,
    pred,
    w: LossWeights = LossWeights(),
    frame_mask=None,
    latent_mask=None,
    tape=None,
):
    """Full objective: commitment + weighted reconstruction + weighted velocity.

    Returns (scalar, breakdown) where breakdown holds the three weighted terms
    (keys vq, recon, vel) that sum to the total, plus the raw part values.
    """
    if kind not in _RECON:
        raise InvalidArgument(f"unknown stream kind {kind!r}")
    lam_recon = w.lambda_f_recon if kind == "face" else w.lambda_b_recon
    lam_vel = w.lambda_f_vel if kind == "face" else w.lambda_b_vel
    vq = commitment_loss(z, z_hat, beta=w.beta, mask=latent_mask, tape=tape)
    recon_raw = _RECON[kind](gt, pred, w, mask=frame_mask, tape=tape)
    vel_raw = _VEL[kind](gt, pred, w, mask=frame_mask, tape=tape)
    recon = ad.scale(tape, recon_raw, lam_recon)
    vel = ad.scale(tape, vel_raw, lam_vel)
    total = ad.add(tape, ad.add(tape, vq, recon), vel)
    breakdown = {
        "vq": float(vq.data),
        "recon": float(recon.data),
        "vel": float(vel.data),
        "recon_raw": float(recon_raw.data),
        "vel_raw": float(vel_raw.data),
        "total": float(total.data),
    }
    return total, breakdown
