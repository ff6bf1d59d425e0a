"""The four bound operations, each a thin wrapper over one CLI subcommand.

Arrays cross the process boundary through container files in a per-call
temporary directory: one serialization on the way in, one read on the
way out, no further copies. Outputs are whatever the CLI produced,
parsed but never recomputed, so results agree with direct CLI runs byte
for byte.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import sys
import tempfile

import numpy as np

from .formats import read_mseq, write_mseq
from .handle import BindingError, BindingHandle, CLIError, ShapeMismatch


def cli_command() -> list:
    """argv prefix for the codec CLI: the console script when present, else the module."""
    exe = shutil.which("motiontok")
    if exe:
        return [exe]
    return [sys.executable, "-m", "motiontok.cli"]


def _run(argv):
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise CLIError(argv, proc.returncode, proc.stderr)
    return proc


def py_encode(handle: BindingHandle, frames, fps: float = 25.0) -> list:
    """Quantize one window of frames, returning its code indices as a list of ints.

    frames must be (W, d) for the handle's config; anything else raises
    ShapeMismatch before the CLI is invoked.
    """
    handle._require_open()
    frames = np.asarray(frames)
    expected = (handle.W, handle.d)
    if frames.shape != expected:
        raise ShapeMismatch(expected, frames.shape, what="frames")
    with tempfile.TemporaryDirectory(prefix="mtbind-") as tmp:
        src = os.path.join(tmp, "in.mseq")
        dst = os.path.join(tmp, "codes.txt")
        write_mseq(src, frames, fps=fps)
        _run(cli_command() + [
            "encode", "--ckpt", handle.checkpoint_path, "--input", src, "--out", dst,
        ])
        with open(dst, "r", encoding="utf-8") as f:
            return [int(line) for line in f if line.strip()]


def py_decode(handle: BindingHandle, indices, fps: float = 25.0) -> np.ndarray:
    """Reconstruct one window from code indices, returning frames (W, d) float32."""
    handle._require_open()
    idx = np.asarray(indices)
    expected = (handle.tau,)
    if idx.shape != expected:
        raise ShapeMismatch(expected, idx.shape, what="indices")
    if idx.dtype.kind not in "iu":
        raise BindingError(f"indices must be integers, got dtype {idx.dtype}")
    if idx.size and (int(idx.min()) < 0 or int(idx.max()) >= handle.K):
        raise BindingError(f"code indices must lie in [0, {handle.K}), got {idx.tolist()}")
    with tempfile.TemporaryDirectory(prefix="mtbind-") as tmp:
        src = os.path.join(tmp, "codes.txt")
        dst = os.path.join(tmp, "out.mseq")
        with open(src, "w", encoding="utf-8") as f:
            for i in idx.tolist():
                f.write(f"{int(i)}\n")
        _run(cli_command() + [
            "decode", "--ckpt", handle.checkpoint_path, "--input", src,
            "--out", dst, "--fps", str(float(fps)),
        ])
        frames, _, _ = read_mseq(dst)
    return frames


def py_tokenize(words, face_indices, body_indices, fps: float = 25.0, q: int = 8,
                t0: float = 0.0, role: str = "user", name: str = "") -> str:
    """Interleave timed words with code indices, returning the chat JSON line.

    words may be dicts with word/t_start/t_end keys or (word, t_start,
    t_end) triples. The return value is exactly the line the tokenize
    subcommand writes, minus the trailing newline.
    """
    rows = []
    for w in words:
        if isinstance(w, dict):
            rows.append({
                "word": str(w["word"]),
                "t_start": float(w["t_start"]),
                "t_end": float(w["t_end"]),
            })
        else:
            word, t_start, t_end = w
            rows.append({"word": str(word), "t_start": float(t_start), "t_end": float(t_end)})
    face_idx = [int(i) for i in face_indices]
    body_idx = [int(i) for i in body_indices]
    with tempfile.TemporaryDirectory(prefix="mtbind-") as tmp:
        words_path = os.path.join(tmp, "words.json")
        face_path = os.path.join(tmp, "face.txt")
        body_path = os.path.join(tmp, "body.txt")
        out_path = os.path.join(tmp, "chat.jsonl")
        with open(words_path, "w", encoding="utf-8") as f:
            json.dump(rows, f)
        for path, codes in ((face_path, face_idx), (body_path, body_idx)):
            with open(path, "w", encoding="utf-8") as f:
                f.write(" ".join(str(i) for i in codes) + "\n")
        _run(cli_command() + [
            "tokenize", "--words", words_path,
            "--face-codes", face_path, "--body-codes", body_path,
            "--fps", str(float(fps)), "--q", str(int(q)), "--t0", str(float(t0)),
            "--role", role, "--name", name, "--out", out_path,
        ])
        with open(out_path, "r", encoding="utf-8") as f:
            return f.read().rstrip("\n")


def py_metrics(gt, pred, fps: float = 25.0, stream: str = "face", window: int = 25,
               seed: int = 0, scale_paper: bool = False) -> dict:
    """Score a prediction against ground truth, returning the eval report dict.

    gt and pred are (T, d) arrays and must agree in shape. The dict is
    the parsed JSON the eval subcommand prints.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.ndim != 2:
        raise BindingError(f"gt must be 2-d (T, d), got shape {gt.shape}")
    if pred.shape != gt.shape:
        raise ShapeMismatch(gt.shape, pred.shape, what="pred")
    with tempfile.TemporaryDirectory(prefix="mtbind-") as tmp:
        gt_path = os.path.join(tmp, "gt.mseq")
        pred_path = os.path.join(tmp, "pred.mseq")
        write_mseq(gt_path, gt, fps=fps)
        write_mseq(pred_path, pred, fps=fps)
        argv = cli_command() + [
            "eval", "--gt", gt_path, "--pred", pred_path, "--stream", stream,
            "--window", str(int(window)), "--seed", str(int(seed)), "--json",
        ]
        if scale_paper:
            argv.append("--scale-paper")
        proc = _run(argv)
    return json.loads(proc.stdout)
