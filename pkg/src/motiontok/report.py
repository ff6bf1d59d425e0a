"""Figure rendering for training and evaluation reports.

Every function writes a PNG to the given path and returns the path, so CLI
report paths can emit figures next to their delimited outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InvalidArgument


def save_training_curve(curve, path: str, figsize=(9, 4), dpi=120) -> str:
    """Two panels: micro-batch loss over steps, validation recon per epoch."""
    steps = [(r["step"], r["loss"]) for r in curve if "loss" in r]
    vals = [(r["epoch"], r["val_recon"]) for r in curve if "val_recon" in r]
    if not steps and not vals:
        raise InvalidArgument("curve has no loss or val_recon records")
    fig, axes = plt.subplots(1, 2, figsize=figsize)
    if steps:
        xs, ys = zip(*steps)
        axes[0].plot(xs, ys, lw=0.8)
        axes[0].set_xlabel("micro-batch")
        axes[0].set_ylabel("training loss")
        axes[0].set_title("loss")
    if vals:
        xe, ye = zip(*vals)
        axes[1].plot(xe, ye, marker="o", ms=3)
        axes[1].set_xlabel("epoch")
        axes[1].set_ylabel("validation recon")
        axes[1].set_title("validation")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def save_reconstruction_figure(
    gt: np.ndarray, pred: np.ndarray, path: str, channels=None, figsize=(9, 6), dpi=120
) -> str:
    """Overlay ground-truth and reconstructed traces for a few channels.

    gt, pred: (T, d) time-major arrays.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape or gt.ndim != 2:
        raise InvalidArgument(f"need matching (T,d) arrays, got {gt.shape} vs {pred.shape}")
    d = gt.shape[1]
    if channels is None:
        channels = list(range(min(4, d)))
    fig, axes = plt.subplots(len(channels), 1, figsize=figsize, sharex=True, squeeze=False)
    for ax, ch in zip(axes[:, 0], channels):
        ax.plot(gt[:, ch], lw=1.0, label="gt")
        ax.plot(pred[:, ch], lw=1.0, ls="--", label="recon")
        ax.set_ylabel(f"ch {ch}")
        ax.grid(True, alpha=0.3)
    axes[0, 0].legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def save_error_figure(gt: np.ndarray, pred: np.ndarray, path: str, figsize=(9, 3), dpi=120) -> str:
    """Per-frame mean absolute reconstruction error."""
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape or gt.ndim != 2:
        raise InvalidArgument(f"need matching (T,d) arrays, got {gt.shape} vs {pred.shape}")
    err = np.abs(pred - gt).mean(axis=1)
    fig, ax = plt.subplots(figsize=figsize)
    ax.plot(err, lw=1.0)
    ax.set_xlabel("frame")
    ax.set_ylabel("mean abs error")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def save_code_usage_figure(usage: np.ndarray, path: str, figsize=(9, 3), dpi=120) -> str:
    """Bar plot of codebook assignment counts, sorted descending."""
    usage = np.asarray(usage, dtype=np.float64).reshape(-1)
    order = np.argsort(usage)[::-1]
    fig, ax = plt.subplots(figsize=figsize)
    ax.bar(np.arange(usage.size), usage[order], width=1.0)
    active = int((usage > 0).sum())
    ax.set_xlabel(f"code (sorted; {active}/{usage.size} active)")
    ax.set_ylabel("assignments")
    ax.grid(True, alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
