"""Interleaved word/face/body token streams: build, render, parse.

A tokenized utterance interleaves spoken words with the face and body code
indices of its motion windows. Each code window covers q source frames; the
window is attached to the word whose time span contains the window midpoint,
falling back to the nearest preceding word, then to the first word. The
rendered text places each word verbatim and glues that word's code tags into
one whitespace-separated block, e.g. `Yeah, <FACE_259><BODY_172> do you`.

Chat messages are JSON objects {role, name, content}; the system prompt that
frames them for a downstream chat model ships as data/system_prompt.txt.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InvalidArgument, ValidationError

_KINDS = ("word", "face", "body")
_TAG_RE = re.compile(r"<(FACE|BODY)_(\d+)>")


def system_prompt() -> str:
    return (
        resources.files("motiontok").joinpath("data/system_prompt.txt").read_text("utf-8").strip()
    )


@dataclass(frozen=True)
class Token:
    kind: str
    payload: object
    time: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgument(f"unknown token kind {self.kind!r}")
        if self.kind == "word":
            if not isinstance(self.payload, str) or not self.payload:
                raise InvalidArgument("word tokens need a non-empty string payload")
        else:
            idx = self.payload
            if not isinstance(idx, (int, np.integer)) or isinstance(idx, bool) or idx < 0:
                raise InvalidArgument(f"code tokens need a non-negative int payload, got {idx!r}")
            object.__setattr__(self, "payload", int(idx))


def word(text: str, time: float = 0.0) -> Token:
    return Token("word", text, time)


def face(idx: int, time: float = 0.0) -> Token:
    return Token("face", idx, time)


def body(idx: int, time: float = 0.0) -> Token:
    return Token("body", idx, time)


@dataclass(frozen=True)
class InterleavedSequence:
    """Ordered token stream plus chat-message metadata.

    Token times are non-decreasing. Within one timestamp the canonical order
    is word first, then its face/body codes (alternating face, body per
    window); the builder guarantees it, while parsed sequences carry uniform
    zero times.
    """

    tokens: tuple
    utterance_id: str = ""
    role: str = "user"
    name: str = ""

    def __post_init__(self):
        toks = tuple(self.tokens)
        for t in toks:
            if not isinstance(t, Token):
                raise InvalidArgument(f"not a Token: {t!r}")
        times = [t.time for t in toks]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidArgument("token times must be non-decreasing")
        if self.role not in ("user", "assistant", "system"):
            raise InvalidArgument(f"unknown role {self.role!r}")
        object.__setattr__(self, "tokens", toks)

    def __len__(self):
        return len(self.tokens)

    def counts(self) -> dict:
        out = {k: 0 for k in _KINDS}
        for t in self.tokens:
            out[t.kind] += 1
        return out

    def validate_indices(self, k_face: int = None, k_body: int = None) -> None:
        limits = {"face": k_face, "body": k_body}
        bad = [
            f"<{t.kind.upper()}_{t.payload}>"
            for t in self.tokens
            if t.kind in ("face", "body")
            and limits[t.kind] is not None
            and t.payload >= limits[t.kind]
        ]
        if bad:
            raise ValidationError(f"code indices out of range: {', '.join(bad)}")


def _word_triples(words):
    out = []
    for w in words:
        if isinstance(w, dict):
            out.append((str(w["word"]), float(w["t_start"]), float(w["t_end"])))
        else:
            text, ts, te = w
            out.append((str(text), float(ts), float(te)))
    for text, ts, te in out:
        if te < ts:
            raise InvalidArgument(f"word {text!r} has t_end {te} < t_start {ts}")
    if any(b[1] < a[1] for a, b in zip(out, out[1:])):
        raise InvalidArgument("words must be ordered by start time")
    return out


def _indices_of(clip) -> np.ndarray:
    idx = getattr(clip, "indices", clip)
    return np.asarray(idx, dtype=np.int64).reshape(-1)


def build_interleaved(
    words,
    face_clip,
    body_clip,
    fps: float,
    q: int,
    t0: float = 0.0,
    utterance_id: str = "",
    role: str = "user",
    name: str = "",
) -> InterleavedSequence:
    """Attach each code window to its owner word and emit the interleaving.

    words: iterable of (word, t_start, t_end) or dicts with those keys, in
    absolute seconds. t0 is the time of the first motion frame, so window t
    has its midpoint at t0 + (t*q + q/2)/fps; shifting t0 and all word times
    together leaves the assignment unchanged.
    """
    if fps <= 0:
        raise InvalidArgument(f"fps must be positive, got {fps}")
    if q < 1:
        raise InvalidArgument(f"q must be >= 1, got {q}")
    f_idx = _indices_of(face_clip)
    b_idx = _indices_of(body_clip)
    if f_idx.shape[0] != b_idx.shape[0]:
        raise InvalidArgument(
            f"face has {f_idx.shape[0]} windows but body has {b_idx.shape[0]}"
        )
    ws = _word_triples(words)
    tau = f_idx.shape[0]
    mids = [t0 + (t * q + q / 2.0) / fps for t in range(tau)]

    owners = []
    for mid in mids:
        owner = None
        for i, (_, ts, te) in enumerate(ws):
            if ts <= mid < te:
                owner = i
                break
        if owner is None:
            preceding = [i for i, (_, ts, _) in enumerate(ws) if ts <= mid]
            owner = preceding[-1] if preceding else (0 if ws else -1)
        owners.append(owner)

    toks = []
    if not ws:
        for t in range(tau):
            toks.append(face(int(f_idx[t]), mids[t]))
            toks.append(body(int(b_idx[t]), mids[t]))
    else:
        for i, (text, ts, _) in enumerate(ws):
            toks.append(word(text, ts))
            for t in range(tau):
                if owners[t] == i:
                    tick = max(mids[t], ts)
                    toks.append(face(int(f_idx[t]), tick))
                    toks.append(body(int(b_idx[t]), tick))
    return InterleavedSequence(tuple(toks), utterance_id=utterance_id, role=role, name=name)


def render_chat(seq: InterleavedSequence) -> str:
    """Content string: words verbatim, runs of code tokens glued into blocks."""
    chunks = []
    run = ""
    for t in seq.tokens:
        if t.kind == "word":
            if run:
                chunks.append(run)
                run = ""
            chunks.append(t.payload)
        else:
            run += f"<{t.kind.upper()}_{t.payload}>"
    if run:
        chunks.append(run)
    return " ".join(chunks)


def chat_message(seq: InterleavedSequence) -> dict:
    return {"role": seq.role, "name": seq.name, "content": render_chat(seq)}


def parse_chat(text: str, k_face: int = None, k_body: int = None) -> InterleavedSequence:
    """Inverse of render_chat; unknown angle-bracket tags stay words.

    With k_face/k_body given, out-of-range code indices raise a validation
    error naming every offending tag.
    """
    toks = []
    offenders = []
    for chunk in text.split():
        pos = 0
        for m in _TAG_RE.finditer(chunk):
            if m.start() > pos:
                toks.append(word(chunk[pos : m.start()]))
            kind = m.group(1).lower()
            idx = int(m.group(2))
            limit = k_face if kind == "face" else k_body
            if limit is not None and idx >= limit:
                offenders.append(m.group(0))
            toks.append(Token(kind, idx))
            pos = m.end()
        if pos < len(chunk):
            toks.append(word(chunk[pos:]))
    if offenders:
        raise ValidationError(f"code indices out of range: {', '.join(offenders)}")
    return InterleavedSequence(tuple(toks))


@dataclass(frozen=True)
class FactorizationPlan:
    """Per-position class schedule for autoregressive prediction.

    Each entry is (kind, within_class_index, prefix_sequential,
    prefix_parallel): the two prefix lengths record both conditioning
    readings — body codes either condition on the face code just emitted
    for the same window (sequential, the emission order) or on the shared
    prefix that excludes it (parallel).
    """

    entries: tuple
    n_words: int
    n_pairs: int

    def kinds(self):
        return [e[0] for e in self.entries]

    def __len__(self):
        return len(self.entries)


def factorization_order(seq: InterleavedSequence) -> FactorizationPlan:
    entries = []
    counters = {k: 0 for k in _KINDS}
    prev = None
    for pos, t in enumerate(seq.tokens):
        counters[t.kind] += 1
        prefix_seq = pos
        prefix_par = pos
        if t.kind == "body" and prev is not None and prev.kind == "face":
            prefix_par = pos - 1
        entries.append((t.kind, counters[t.kind], prefix_seq, prefix_par))
        prev = t
    n_pairs = min(counters["face"], counters["body"])
    return FactorizationPlan(tuple(entries), n_words=counters["word"], n_pairs=n_pairs)


def write_chat_jsonl(path: str, seqs) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for seq in seqs:
            f.write(json.dumps(chat_message(seq), ensure_ascii=False) + "\n")


def read_chat_jsonl(path: str, k_face: int = None, k_body: int = None):
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {e}") from e
            if not isinstance(obj, dict) or "content" not in obj:
                raise ValidationError(f"{path}:{lineno}: expected a chat message object")
            seq = parse_chat(str(obj["content"]), k_face=k_face, k_body=k_body)
            out.append(
                InterleavedSequence(
                    seq.tokens,
                    role=str(obj.get("role", "user")),
                    name=str(obj.get("name", "")),
                )
            )
    return out
