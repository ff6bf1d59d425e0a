"""Container file I/O for the binding layer.

The binding talks to the codec CLI through files, so it carries its own
reader and writer for the MSEQ1 motion container and a parser for the
VQCKPT1 checkpoint preamble. Layouts are fixed by the version string at
the front of each file; nothing here is shared with the codec package.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MSEQ_FORMAT = "MSEQ1"
CHECKPOINT_FORMAT = "VQCKPT1"

_MSEQ_MAGIC = MSEQ_FORMAT.encode("ascii")
_CKPT_MAGIC = CHECKPOINT_FORMAT.encode("ascii")
_MSEQ_HEADER = struct.Struct("<5sIIf")
_U32 = struct.Struct("<I")


class FormatError(ValueError):
    """A container file does not match its declared layout."""


def write_mseq(path, frames, fps: float = 25.0, mask=None) -> None:
    """Write frames of shape (T, d) as an MSEQ1 file.

    The header packs (magic, d, T, fps); the body is the frame block in
    row-major float32 followed by T validity bytes. One copy happens
    here, from the caller's buffer into the serialized block; a missing
    mask marks every frame valid.
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise FormatError(f"frames must be 2-d (T, d), got shape {frames.shape}")
    t, d = frames.shape
    if mask is None:
        mask_u8 = np.ones(t, dtype=np.uint8)
    else:
        mask_u8 = np.asarray(mask).astype(bool).astype(np.uint8)
        if mask_u8.shape != (t,):
            raise FormatError(f"mask must have shape ({t},), got {mask_u8.shape}")
    with open(path, "wb") as f:
        f.write(_MSEQ_HEADER.pack(_MSEQ_MAGIC, d, t, float(fps)))
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())
        f.write(mask_u8.tobytes())


def read_mseq(path):
    """Read an MSEQ1 file.

    Returns (frames, mask, fps) with frames (T, d) float32 and mask a
    (T,) bool array of per-frame validity.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _MSEQ_HEADER.size or raw[:5] != _MSEQ_MAGIC:
        raise FormatError(f"{path}: not an MSEQ1 file")
    _, d, t, fps = _MSEQ_HEADER.unpack_from(raw, 0)
    body = _MSEQ_HEADER.size
    need = body + 4 * d * t + t
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    frames = np.frombuffer(raw, dtype="<f4", count=d * t, offset=body)
    mask = np.frombuffer(raw, dtype=np.uint8, count=t, offset=body + 4 * d * t)
    return frames.reshape(t, d).copy(), mask.astype(bool), float(fps)


def read_checkpoint_header(path) -> dict:
    """Parse the VQCKPT1 preamble, returning its embedded JSON as a dict.

    Only the preamble is read: the magic, a little-endian u32 byte
    length, and that many bytes of JSON holding the codec config and the
    tensor manifest. Tensor payloads stay on disk; the CLI owns their
    interpretation.
    """
    with open(path, "rb") as f:
        head = f.read(len(_CKPT_MAGIC) + _U32.size)
        if len(head) < len(_CKPT_MAGIC) + _U32.size or not head.startswith(_CKPT_MAGIC):
            raise FormatError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
        (blob_len,) = _U32.unpack_from(head, len(_CKPT_MAGIC))
        blob = f.read(blob_len)
    if len(blob) != blob_len:
        raise FormatError(f"{path}: truncated checkpoint header")
    try:
        meta = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad checkpoint header: {e}") from e
    if not isinstance(meta, dict) or "config" not in meta:
        raise FormatError(f"{path}: checkpoint header lacks a config block")
    return meta
