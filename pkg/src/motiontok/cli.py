"""Command-line entry point.

Subcommands: synth, train, encode, decode, tokenize, eval, ingest.
Exit codes: 0 success, 2 usage, 3 validation/state, 4 I/O. All subcommands
are deterministic for a fixed --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import ingest as ing
from . import metrics as mx
from . import report
from . import sequence as sq
from .codec import Codec, CodecConfig, load_checkpoint, save_checkpoint
from .errors import InvalidArgument, InvalidState, MotionTokError, SchemaError, ValidationError
from .losses import LossWeights
from .motion import (
    BODY_DIM,
    FACE_DIM,
    MotionSequence,
    WindowSpec,
    pad_or_truncate,
    read_mseq,
    write_mseq,
)
from .synth import SynthConfig, synth_corpus
from .trainer import TrainConfig, fit


def _parse_hidden(text: str):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        raise InvalidArgument(f"bad --hidden list {text!r}: {e}") from e


def _load_corpus(data_dir: str):
    names = sorted(n for n in os.listdir(data_dir) if n.endswith(".mseq"))
    if not names:
        raise InvalidArgument(f"no .mseq files in {data_dir}")
    return [read_mseq(os.path.join(data_dir, n)) for n in names], names


def _emit(obj, args) -> None:
    indent = None if getattr(args, "json", False) else 2
    print(json.dumps(obj, indent=indent, sort_keys=True))


# -- subcommand handlers -----------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_sequences=args.n, W=args.W, d=args.d, seed=args.seed, fps=args.fps, noise=args.noise
    )
    os.makedirs(args.out, exist_ok=True)
    paths = []
    for i, seq in enumerate(synth_corpus(cfg)):
        path = os.path.join(args.out, f"{i:04d}.mseq")
        write_mseq(path, seq)
        paths.append(path)
    _emit({"written": len(paths), "dir": args.out, "W": args.W, "d": args.d}, args)
    return 0


def cmd_train(args) -> int:
    seqs, _ = _load_corpus(args.data)
    d = seqs[0].width
    W = args.W if args.W else seqs[0].num_frames
    spec = WindowSpec(W=W, d=d)
    seqs = [pad_or_truncate(s, spec) for s in seqs]
    if args.stream == "face" and d != FACE_DIM:
        raise InvalidArgument(f"--stream face expects {FACE_DIM} channels, data has {d}")
    if args.stream == "body" and d != BODY_DIM:
        raise InvalidArgument(f"--stream body expects {BODY_DIM} channels, data has {d}")
    codec_cfg = CodecConfig(d=d, W=W, q=args.q, K=args.K, C=args.C, hidden=_parse_hidden(args.hidden))
    cfg = TrainConfig(
        base_lr=args.base_lr,
        epochs=args.epochs,
        ema_decay=args.ema_decay,
        grad_accum_steps=args.accum,
        batch_size=args.batch_size,
        seed=args.seed,
        val_frac=args.val_frac,
    )
    weights = LossWeights(recon_kind=args.recon_kind)
    log_f = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        log_fn = (lambda rec: log_f.write(json.dumps(rec) + "\n")) if log_f else None
        result = fit(
            seqs,
            cfg,
            codec_config=codec_cfg,
            kind=args.stream,
            weights=weights,
            log_fn=log_fn,
            stop_when_val_below=args.stop_val,
            stop_when_val_frac=args.stop_val_frac,
        )
    finally:
        if log_f:
            log_f.close()
    save_checkpoint(args.out, result.codec)
    if args.curve_fig:
        report.save_training_curve(result.curve, args.curve_fig)
    _emit(
        {
            "checkpoint": args.out,
            "initial_val_recon": result.initial_val_recon,
            "best_val_recon": result.best_val_recon,
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "codes_active_frac": result.codes_active_frac,
        },
        args,
    )
    return 0


def cmd_encode(args) -> int:
    codec = load_checkpoint(args.ckpt)
    seq = read_mseq(args.input)
    seq = pad_or_truncate(seq, WindowSpec(W=codec.config.W, d=codec.config.d))
    clip = codec.encode_quantize(seq)
    with open(args.out, "w", encoding="utf-8") as f:
        for idx in np.asarray(clip.indices).reshape(-1):
            f.write(f"{int(idx)}\n")
    return 0


def cmd_decode(args) -> int:
    codec = load_checkpoint(args.ckpt)
    with open(args.input, "r", encoding="utf-8") as f:
        try:
            indices = [int(line.strip()) for line in f if line.strip()]
        except ValueError as e:
            raise ValidationError(f"{args.input}: non-integer code line: {e}") from e
    frames = codec.decode(np.asarray(indices, dtype=np.int64))
    write_mseq(args.out, MotionSequence(frames.T.copy(), fps=args.fps))
    return 0


def _encode_windows(codec: Codec, seq: MotionSequence):
    spec = WindowSpec(W=codec.config.W, d=codec.config.d)
    return codec.encode_quantize(pad_or_truncate(seq, spec))


def cmd_tokenize(args) -> int:
    if args.annotation:
        ann = ing.load_annotation(args.annotation)
        uids = [args.utterance] if args.utterance else [
            u.utterance_id
            for u in ann.conversation
            if u.utterance_id in ann.facial_expression and u.utterance_id in ann.body_language
        ]
        face_codec = load_checkpoint(args.face_ckpt)
        body_codec = load_checkpoint(args.body_ckpt)
        messages = []
        for uid in uids:
            utt = ann.utterance(uid)
            face_clip = _encode_windows(face_codec, ing.utterance_motion(ann, uid, "face"))
            body_clip = _encode_windows(body_codec, ing.utterance_motion(ann, uid, "body"))
            t0 = float(ann.facial_expression[uid].frames[0]) / ann.fps
            seq = sq.build_interleaved(
                [(w.word, w.t_start, w.t_end) for w in utt.words],
                face_clip,
                body_clip,
                fps=ann.fps,
                q=face_codec.config.q,
                t0=t0,
                utterance_id=uid,
                role=args.role,
                name=args.name or uid,
            )
            messages.append(sq.chat_message(seq))
    else:
        if not (args.words and args.face_codes and args.body_codes):
            raise InvalidArgument(
                "tokenize needs --annotation or all of --words/--face-codes/--body-codes"
            )
        with open(args.words, "r", encoding="utf-8") as f:
            words = json.load(f)
        def read_codes(path):
            with open(path, "r", encoding="utf-8") as fh:
                return [int(x) for x in fh.read().split()]
        seq = sq.build_interleaved(
            words,
            read_codes(args.face_codes),
            read_codes(args.body_codes),
            fps=args.fps,
            q=args.q,
            t0=args.t0,
            role=args.role,
            name=args.name,
        )
        messages = [sq.chat_message(seq)]
    out = "\n".join(json.dumps(m, ensure_ascii=False) for m in messages)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(out + "\n")
    else:
        print(out)
    return 0


def _collect_pairs(gt_path: str, pred_path: str):
    if os.path.isdir(gt_path) != os.path.isdir(pred_path):
        raise InvalidArgument("--gt and --pred must both be files or both be directories")
    if os.path.isdir(gt_path):
        names = sorted(n for n in os.listdir(gt_path) if n.endswith(".mseq"))
        missing = [n for n in names if not os.path.exists(os.path.join(pred_path, n))]
        if missing:
            raise InvalidArgument(f"pred dir lacks matching files: {missing[:5]}")
        if not names:
            raise InvalidArgument(f"no .mseq files in {gt_path}")
        gts = [read_mseq(os.path.join(gt_path, n)) for n in names]
        preds = [read_mseq(os.path.join(pred_path, n)) for n in names]
        return gts, preds
    return [read_mseq(gt_path)], [read_mseq(pred_path)]


def cmd_eval(args) -> int:
    gts, preds = _collect_pairs(args.gt, args.pred)
    vmap = mx.read_vmap(args.vmap) if args.vmap else mx.VertexMap()
    rep = mx.evaluate_pair_set(
        gts, preds, vmap=vmap, stream=args.stream, window=args.window, seed=args.seed
    )
    if args.fig_dir:
        os.makedirs(args.fig_dir, exist_ok=True)
        g0 = gts[0].data.T[gts[0].mask]
        p0 = preds[0].data.T[preds[0].mask]
        report.save_reconstruction_figure(g0, p0, os.path.join(args.fig_dir, "reconstruction.png"))
        report.save_error_figure(g0, p0, os.path.join(args.fig_dir, "error.png"))
    _emit(rep.to_dict(scale_paper=args.scale_paper), args)
    return 0


def cmd_ingest(args) -> int:
    ann = ing.load_annotation(args.annotation)
    os.makedirs(args.out, exist_ok=True)
    table = ann.facial_expression if args.stream == "face" else ann.body_language
    written = []
    for uid in sorted(table.keys()):
        seq = ing.utterance_motion(ann, uid, args.stream)
        path = os.path.join(args.out, f"{uid}.mseq")
        write_mseq(path, seq)
        written.append(path)
    _emit({"written": written, "stream": args.stream, "fps": ann.fps}, args)
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="motiontok",
        description="Tokenize face/body motion parameter streams with VQ codecs.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic MSEQ1 corpus")
    sp.add_argument("--n", type=int, required=True, help="number of sequences")
    sp.add_argument("--W", type=int, default=512, help="frames per sequence")
    sp.add_argument("--d", type=int, default=53, help="channels per frame")
    sp.add_argument("--fps", type=float, default=25.0)
    sp.add_argument("--noise", type=float, default=0.03)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--json", action="store_true", help="compact JSON output")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train a codec on an MSEQ1 corpus")
    tp.add_argument("--data", required=True, help="directory of .mseq files")
    tp.add_argument("--out", required=True, help="checkpoint output path")
    tp.add_argument("--stream", choices=("face", "body", "generic"), default="face")
    tp.add_argument("--epochs", type=int, default=100)
    tp.add_argument("--batch-size", type=int, default=32)
    tp.add_argument("--base-lr", type=float, default=1e-4)
    tp.add_argument("--accum", type=int, default=4)
    tp.add_argument("--ema-decay", type=float, default=0.99)
    tp.add_argument("--val-frac", type=float, default=0.10)
    tp.add_argument("--K", type=int, default=512)
    tp.add_argument("--C", type=int, default=8)
    tp.add_argument("--q", type=int, default=8)
    tp.add_argument("--W", type=int, default=0, help="window length (default: data length)")
    tp.add_argument("--hidden", default="128,256,256")
    tp.add_argument("--recon-kind", choices=("l1", "l2", "smooth_l1"), default="l1")
    tp.add_argument("--stop-val", type=float, default=None,
                    help="stop early once val recon falls to this absolute value")
    tp.add_argument("--stop-val-frac", type=float, default=None,
                    help="stop early once val recon falls to this fraction of its initial value")
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--log", default=None, help="JSONL metrics path")
    tp.add_argument("--curve-fig", default=None, help="training-curve PNG path")
    tp.add_argument("--json", action="store_true")
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("encode", help="MSEQ1 window -> code indices, one per line")
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--input", required=True)
    ep.add_argument("--out", required=True)
    ep.set_defaults(func=cmd_encode)

    dp = sub.add_parser("decode", help="code indices -> reconstructed MSEQ1")
    dp.add_argument("--ckpt", required=True)
    dp.add_argument("--input", required=True)
    dp.add_argument("--out", required=True)
    dp.add_argument("--fps", type=float, default=25.0)
    dp.set_defaults(func=cmd_decode)

    kp = sub.add_parser("tokenize", help="emit chat-format JSON lines")
    kp.add_argument("--annotation", default=None)
    kp.add_argument("--utterance", default=None, help="single utterance id (default: all)")
    kp.add_argument("--face-ckpt", default=None)
    kp.add_argument("--body-ckpt", default=None)
    kp.add_argument("--words", default=None, help="JSON word list [{word,t_start,t_end}]")
    kp.add_argument("--face-codes", default=None, help="text file of face indices")
    kp.add_argument("--body-codes", default=None, help="text file of body indices")
    kp.add_argument("--fps", type=float, default=25.0)
    kp.add_argument("--q", type=int, default=8)
    kp.add_argument("--t0", type=float, default=0.0)
    kp.add_argument("--role", choices=("user", "assistant"), default="user")
    kp.add_argument("--name", default="")
    kp.add_argument("--out", default=None, help="JSONL path (default: stdout)")
    kp.set_defaults(func=cmd_tokenize)

    vp = sub.add_parser("eval", help="reconstruction/diversity metrics as JSON")
    vp.add_argument("--gt", required=True, help=".mseq file or directory")
    vp.add_argument("--pred", required=True, help=".mseq file or directory")
    vp.add_argument("--stream", choices=("face", "body"), default="face")
    vp.add_argument("--vmap", default=None, help="VMAP1 vertex-map file")
    vp.add_argument("--window", type=int, default=25)
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--scale-paper", action="store_true", help="report in table scale units")
    vp.add_argument("--fig-dir", default=None, help="write report figures here")
    vp.add_argument("--json", action="store_true")
    vp.set_defaults(func=cmd_eval)

    ip = sub.add_parser("ingest", help="annotation JSON -> per-utterance MSEQ1 files")
    ip.add_argument("--annotation", required=True)
    ip.add_argument("--out", required=True)
    ip.add_argument("--stream", choices=("face", "body"), default="face")
    ip.add_argument("--json", action="store_true")
    ip.set_defaults(func=cmd_ingest)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return args.func(args)
    except (ValidationError, SchemaError, InvalidArgument, InvalidState) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except MotionTokError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
