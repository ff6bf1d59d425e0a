"""Synthetic motion corpus: smooth, band-limited channels for desk-scale runs.

Each channel is a sum of a few low-frequency sinusoids plus noise smoothed
with the same least-squares filter the ingest path uses, so sequences look
like slow parameter trajectories rather than white noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .motion import DEFAULT_FPS, MotionSequence, smooth_channels


@dataclass(frozen=True)
class SynthConfig:
    n_sequences: int
    W: int = 512
    d: int = 53
    seed: int = 0
    fps: float = DEFAULT_FPS
    n_waves: int = 3
    max_hz: float = 1.2
    amplitude: float = 0.5
    noise: float = 0.03
    rank: int = 0

    def __post_init__(self):
        if self.n_sequences < 1 or self.W < 1 or self.d < 1:
            raise InvalidArgument("n_sequences, W, d must be >= 1")
        if self.fps <= 0 or self.max_hz <= 0:
            raise InvalidArgument("fps and max_hz must be positive")
        if self.rank < 0 or self.rank > self.d:
            raise InvalidArgument(f"rank must be in [0, d], got {self.rank}")


def _mixing(cfg: SynthConfig) -> np.ndarray:
    """Fixed (d, rank) channel mixing, a function of the corpus seed only."""
    rng = np.random.default_rng([cfg.seed, cfg.d, cfg.rank])
    m = rng.standard_normal((cfg.d, cfg.rank))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _waves(n_channels: int, t: np.ndarray, cfg: SynthConfig, rng: np.random.Generator):
    data = np.zeros((n_channels, t.shape[0]), dtype=np.float64)
    for ch in range(n_channels):
        for _ in range(cfg.n_waves):
            amp = rng.uniform(0.2, 1.0) * cfg.amplitude / cfg.n_waves
            hz = rng.uniform(0.05, cfg.max_hz)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            data[ch] += amp * np.sin(2.0 * np.pi * hz * t + phase)
    return data


def synth_sequence(cfg: SynthConfig, rng: np.random.Generator) -> MotionSequence:
    t = np.arange(cfg.W, dtype=np.float64) / cfg.fps
    if cfg.rank > 0:
        # channels co-move: a fixed per-corpus mixing of a few latent waves,
        # the way rigged parameters follow a handful of activations
        data = _mixing(cfg) @ _waves(cfg.rank, t, cfg, rng)
    else:
        data = _waves(cfg.d, t, cfg, rng)
    if cfg.noise > 0:
        raw = rng.standard_normal((cfg.d, cfg.W)) * cfg.noise
        data += smooth_channels(raw, window=9, polyorder=2)
    return MotionSequence(data.astype(np.float32), fps=cfg.fps)


def synth_corpus(cfg: SynthConfig):
    """Deterministic list of n_sequences MotionSequences."""
    rng = np.random.default_rng(cfg.seed)
    return [synth_sequence(cfg, rng) for _ in range(cfg.n_sequences)]
