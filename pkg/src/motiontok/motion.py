"""Parameter-sequence types and deterministic preprocessing.

Sequences are stored channel-major: an array of shape (d, T) where d is the
per-frame parameter width (53 for face streams, 117 for body streams) and T
is the frame count. Values are float32; a per-frame boolean mask marks which
frames are observed (padding frames are all-zero and masked out).

The on-disk format "MSEQ1" is documented in the README: a little-endian
header {magic "MSEQ1", u32 d, u32 T, f32 fps} followed by T*d float32 values
row-major (frame by frame), then T mask bytes (0 or 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .errors import InvalidArgument, ValidationError

PSI_DIM = 50
JAW_DIM = 3
FACE_DIM = PSI_DIM + JAW_DIM  # 53

UBODY_DIM = 27
HAND_DIM = 45
BODY_DIM = UBODY_DIM + 2 * HAND_DIM  # 117

DEFAULT_FPS = 25.0

MSEQ_MAGIC = b"MSEQ1"
_MSEQ_HEADER = struct.Struct("<5sIIf")


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class FaceFrame:
    """One frame of facial parameters: 50 expression + 3 jaw coefficients."""

    psi: np.ndarray
    theta_jaw: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=np.float32).reshape(-1)
        jaw = np.asarray(self.theta_jaw, dtype=np.float32).reshape(-1)
        if psi.shape != (PSI_DIM,) or jaw.shape != (JAW_DIM,):
            raise InvalidArgument(
                f"face frame needs {PSI_DIM}+{JAW_DIM} values, got {psi.size}+{jaw.size}"
            )
        _check_finite("face frame", psi)
        _check_finite("face frame", jaw)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "theta_jaw", jaw)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.psi, self.theta_jaw])


@dataclass(frozen=True)
class BodyFrame:
    """One frame of body parameters: 27 upper-body + 45 per-hand axis-angles."""

    theta_ubody: np.ndarray
    theta_rhand: np.ndarray
    theta_lhand: np.ndarray

    def __post_init__(self):
        ub = np.asarray(self.theta_ubody, dtype=np.float32).reshape(-1)
        rh = np.asarray(self.theta_rhand, dtype=np.float32).reshape(-1)
        lh = np.asarray(self.theta_lhand, dtype=np.float32).reshape(-1)
        if ub.shape != (UBODY_DIM,) or rh.shape != (HAND_DIM,) or lh.shape != (HAND_DIM,):
            raise InvalidArgument(
                f"body frame needs {UBODY_DIM}+{HAND_DIM}+{HAND_DIM} values, "
                f"got {ub.size}+{rh.size}+{lh.size}"
            )
        for part in (ub, rh, lh):
            _check_finite("body frame", part)
        object.__setattr__(self, "theta_ubody", ub)
        object.__setattr__(self, "theta_rhand", rh)
        object.__setattr__(self, "theta_lhand", lh)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.theta_ubody, self.theta_rhand, self.theta_lhand])


@dataclass(frozen=True)
class WindowSpec:
    """Fixed training window: W frames of width d."""

    W: int
    d: int

    def __post_init__(self):
        if self.W <= 0 or self.d <= 0:
            raise InvalidArgument(f"window spec must be positive, got W={self.W}, d={self.d}")


class MotionSequence:
    """Fixed-rate sequence of parameter frames with a validity mask.

    `data` is channel-major (d, T) float32. Masked-out frames are forced to
    zero so padding can never leak values into downstream computation.
    Face/body streams use widths 53/117; other widths are accepted so the
    same container serves toy configurations and tests.
    """

    __slots__ = ("data", "fps", "mask")

    def __init__(self, data, fps: float = DEFAULT_FPS, mask=None):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise InvalidArgument(f"expected (d, T) array, got shape {arr.shape}")
        if fps <= 0:
            raise InvalidArgument(f"fps must be positive, got {fps}")
        d, t = arr.shape
        if d < 1:
            raise InvalidArgument("parameter width must be >= 1")
        if mask is None:
            mask = np.ones(t, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool).reshape(-1)
            if mask.shape != (t,):
                raise InvalidArgument(f"mask length {mask.size} != frame count {t}")
        arr = arr.copy()
        arr[:, ~mask] = 0.0
        _check_finite("motion sequence", arr)
        self.data = arr
        self.fps = float(fps)
        self.mask = mask.copy()

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_frames(cls, frames, fps: float = DEFAULT_FPS, mask=None) -> "MotionSequence":
        """Build from a homogeneous list of FaceFrame or BodyFrame."""
        if not frames:
            raise InvalidArgument("frame list is empty")
        kinds = {type(f) for f in frames}
        if len(kinds) != 1 or kinds.pop() not in (FaceFrame, BodyFrame):
            raise InvalidArgument("frames must all be FaceFrame or all be BodyFrame")
        stacked = np.stack([f.as_array() for f in frames], axis=1)
        return cls(stacked, fps=fps, mask=mask)

    @classmethod
    def face(cls, data, fps: float = DEFAULT_FPS, mask=None) -> "MotionSequence":
        seq = cls(data, fps=fps, mask=mask)
        if seq.width != FACE_DIM:
            raise InvalidArgument(f"face sequence must have width {FACE_DIM}, got {seq.width}")
        return seq

    @classmethod
    def body(cls, data, fps: float = DEFAULT_FPS, mask=None) -> "MotionSequence":
        seq = cls(data, fps=fps, mask=mask)
        if seq.width != BODY_DIM:
            raise InvalidArgument(f"body sequence must have width {BODY_DIM}, got {seq.width}")
        return seq

    # -- accessors ---------------------------------------------------------

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.num_frames

    def frame(self, i: int) -> np.ndarray:
        return self.data[:, i]

    def face_frame(self, i: int) -> FaceFrame:
        if self.width != FACE_DIM:
            raise InvalidArgument(f"not a face sequence (width {self.width})")
        col = self.data[:, i]
        return FaceFrame(psi=col[:PSI_DIM], theta_jaw=col[PSI_DIM:])

    def body_frame(self, i: int) -> BodyFrame:
        if self.width != BODY_DIM:
            raise InvalidArgument(f"not a body sequence (width {self.width})")
        col = self.data[:, i]
        return BodyFrame(
            theta_ubody=col[:UBODY_DIM],
            theta_rhand=col[UBODY_DIM : UBODY_DIM + HAND_DIM],
            theta_lhand=col[UBODY_DIM + HAND_DIM :],
        )

    def valid_frames(self) -> np.ndarray:
        """Channel-major view of the observed frames only."""
        return self.data[:, self.mask]


# -- operations -------------------------------------------------------------


def smooth_channels(x: np.ndarray, window: int = 9, polyorder: int = 2) -> np.ndarray:
    """Savitzky-Golay filter each channel of a (d, T) array independently.

    Mirror-reflection edge handling. Sequences shorter than the window are
    returned unchanged. Output dtype matches the input dtype.
    """
    x = np.asarray(x)
    if window % 2 == 0 or window <= 0:
        raise InvalidArgument(f"window must be odd and positive, got {window}")
    if polyorder < 0 or polyorder >= window - 1:
        raise InvalidArgument(f"polyorder must satisfy 0 <= polyorder < window-1, got {polyorder}")
    if x.shape[1] < window:
        return x.copy()
    out = savgol_filter(x.astype(np.float64, copy=False), window, polyorder, axis=1, mode="mirror")
    return out.astype(x.dtype, copy=False)


def smooth(seq: MotionSequence, window: int = 9, polyorder: int = 2) -> MotionSequence:
    """Smooth every parameter channel of a sequence.

    Intended to run before windowing/padding; masked frames stay zero.
    """
    filtered = smooth_channels(seq.data, window, polyorder)
    return MotionSequence(filtered, fps=seq.fps, mask=seq.mask)


def velocity(mat: np.ndarray) -> np.ndarray:
    """Frame-wise difference of a channel-major (d, T) matrix: out[:, l] = in[:, l+1] - in[:, l]."""
    mat = np.asarray(mat)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.shape[1] < 2:
        raise InvalidArgument(f"need at least 2 frames for velocity, got {mat.shape[1]}")
    return mat[:, 1:] - mat[:, :-1]


def pad_or_truncate(seq: MotionSequence, spec: WindowSpec) -> MotionSequence:
    """Fit a sequence to exactly spec.W frames.

    Shorter inputs are zero-padded (mask False on the padding); longer inputs
    keep the first W frames. The mask always records original validity.
    """
    if seq.width != spec.d:
        raise InvalidArgument(f"sequence width {seq.width} != window width {spec.d}")
    t = seq.num_frames
    if t == spec.W:
        return MotionSequence(seq.data, fps=seq.fps, mask=seq.mask)
    if t > spec.W:
        return MotionSequence(seq.data[:, : spec.W], fps=seq.fps, mask=seq.mask[: spec.W])
    pad = spec.W - t
    data = np.concatenate([seq.data, np.zeros((seq.width, pad), dtype=np.float32)], axis=1)
    mask = np.concatenate([seq.mask, np.zeros(pad, dtype=bool)])
    return MotionSequence(data, fps=seq.fps, mask=mask)


# -- MSEQ1 binary format -----------------------------------------------------


def write_mseq(path, seq: MotionSequence) -> None:
    """Write a sequence to an MSEQ1 file."""
    d, t = seq.data.shape
    header = _MSEQ_HEADER.pack(MSEQ_MAGIC, d, t, seq.fps)
    body = np.ascontiguousarray(seq.data.T, dtype="<f4").tobytes()
    mask = seq.mask.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)
        fh.write(mask)


def read_mseq(path) -> MotionSequence:
    """Read an MSEQ1 file back into a MotionSequence."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MSEQ_HEADER.size:
        raise ValidationError(f"{path}: truncated MSEQ1 header")
    magic, d, t, fps = _MSEQ_HEADER.unpack_from(raw, 0)
    if magic != MSEQ_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}, expected {MSEQ_MAGIC!r}")
    need = _MSEQ_HEADER.size + 4 * d * t + t
    if len(raw) != need:
        raise ValidationError(f"{path}: expected {need} bytes, found {len(raw)}")
    off = _MSEQ_HEADER.size
    data = np.frombuffer(raw, dtype="<f4", count=d * t, offset=off).reshape(t, d).T
    mask = np.frombuffer(raw, dtype=np.uint8, count=t, offset=off + 4 * d * t).astype(bool)
    return MotionSequence(data, fps=fps, mask=mask)
