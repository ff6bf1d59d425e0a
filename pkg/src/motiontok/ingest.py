"""Annotation parsing and the deterministic video-preprocessing formulas.

Annotations are JSON documents with ten top-level keys (channel_id,
video_id, duration, fps, segment_id, conversation, facial_expression,
body_language, speaker_bbox, harmful_utterance_id); a machine-readable
schema ships as data/venus_annotation.schema.json and a small fixture as
data/fixture_annotation.json.

Raw per-frame features are wider than what the codecs consume: face rows
carry 153 values (100 shape, 50 expression, 3 jaw; a 156-wide variant
appends a 3-d global rotation), body rows carry 179 values (3 root, 63 body
pose, 45 left hand, 45 right hand, 3 jaw, 10 shape, 10 expression).
Projection keeps the 53-d face (expression + jaw) and 117-d body (9 upper
body joints + right hand + left hand) subsets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InvalidArgument, SchemaError, ValidationError
from .motion import BODY_DIM, FACE_DIM, MotionSequence

FACE_RAW_WIDTHS = (153, 156)
BODY_RAW_WIDTH = 179
HARMFUL_LIMIT_S = 180.0

_TOP_KEYS = (
    "channel_id",
    "video_id",
    "duration",
    "fps",
    "segment_id",
    "conversation",
    "facial_expression",
    "body_language",
    "speaker_bbox",
    "harmful_utterance_id",
)

# Column slices of the raw feature rows.
_FACE_PSI = slice(100, 150)
_FACE_JAW = slice(150, 153)
_BODY_POSE = slice(3, 66)  # 21 joints * 3, after the 3-d root
_BODY_LHAND = slice(66, 111)
_BODY_RHAND = slice(111, 156)
# Upper-body joints, 1-based positions inside the 21-joint body pose:
# spine1, spine3, neck, shoulders, elbows, wrists.
UBODY_JOINTS = (3, 9, 12, 16, 17, 18, 19, 20, 21)


def face_project(raw: np.ndarray) -> np.ndarray:
    """(N, 153|156) raw face rows -> (N, 53) expression + jaw."""
    raw = np.asarray(raw, dtype=np.float32)
    if raw.ndim != 2 or raw.shape[1] not in FACE_RAW_WIDTHS:
        raise ValidationError(
            f"face features must be (N, 153) or (N, 156), got {raw.shape}"
        )
    out = np.concatenate([raw[:, _FACE_PSI], raw[:, _FACE_JAW]], axis=1)
    assert out.shape[1] == FACE_DIM
    return out


def body_project(raw: np.ndarray) -> np.ndarray:
    """(N, 179) raw body rows -> (N, 117) upper body + right hand + left hand."""
    raw = np.asarray(raw, dtype=np.float32)
    if raw.ndim != 2 or raw.shape[1] != BODY_RAW_WIDTH:
        raise ValidationError(f"body features must be (N, {BODY_RAW_WIDTH}), got {raw.shape}")
    pose = raw[:, _BODY_POSE]
    ubody = np.concatenate([pose[:, 3 * (j - 1) : 3 * j] for j in UBODY_JOINTS], axis=1)
    out = np.concatenate([ubody, raw[:, _BODY_RHAND], raw[:, _BODY_LHAND]], axis=1)
    assert out.shape[1] == BODY_DIM
    return out


# -- annotation records ----------------------------------------------------------


@dataclass(frozen=True)
class WordSpan:
    word: str
    t_start: float
    t_end: float


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    speaker: str
    text: str
    t_start: float
    t_end: float
    words: tuple = ()


class FrameFeatures:
    """Frame indices with one feature row per frame."""

    def __init__(self, frames, features):
        self.frames = np.asarray(frames, dtype=np.int64).reshape(-1)
        self.features = np.asarray(features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[0] != self.frames.shape[0]:
            raise ValidationError(
                f"{self.frames.shape[0]} frames vs features shape {self.features.shape}"
            )

    def __eq__(self, other):
        return (
            isinstance(other, FrameFeatures)
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.features, other.features)
        )

    def __repr__(self):
        return f"FrameFeatures(n={self.frames.shape[0]}, width={self.features.shape[1]})"


class FrameBoxes:
    """Per-frame speaker boxes [x_top, y_top, x_bottom, y_bottom]."""

    def __init__(self, frames, boxes):
        self.frames = np.asarray(frames, dtype=np.int64).reshape(-1)
        self.boxes = np.asarray(boxes, dtype=np.float64)
        if self.boxes.ndim != 2 or self.boxes.shape != (self.frames.shape[0], 4):
            raise ValidationError(
                f"{self.frames.shape[0]} frames vs boxes shape {self.boxes.shape}"
            )
        if np.any(self.boxes[:, 0] >= self.boxes[:, 2]) or np.any(
            self.boxes[:, 1] >= self.boxes[:, 3]
        ):
            raise ValidationError("speaker boxes must satisfy top < bottom on both axes")

    def __eq__(self, other):
        return (
            isinstance(other, FrameBoxes)
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.boxes, other.boxes)
        )


@dataclass(frozen=True, eq=False)
class VenusAnnotation:
    channel_id: str
    video_id: str
    duration: float
    fps: float
    segment_id: str
    conversation: tuple
    facial_expression: dict
    body_language: dict
    speaker_bbox: FrameBoxes
    harmful_utterance_id: tuple = ()

    def __eq__(self, other):
        if not isinstance(other, VenusAnnotation):
            return NotImplemented
        return (
            self.channel_id == other.channel_id
            and self.video_id == other.video_id
            and self.duration == other.duration
            and self.fps == other.fps
            and self.segment_id == other.segment_id
            and self.conversation == other.conversation
            and self.facial_expression == other.facial_expression
            and self.body_language == other.body_language
            and self.speaker_bbox == other.speaker_bbox
            and self.harmful_utterance_id == other.harmful_utterance_id
        )

    def utterance(self, uid: str) -> Utterance:
        for u in self.conversation:
            if u.utterance_id == uid:
                return u
        raise InvalidArgument(f"unknown utterance id {uid!r}")


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing key {key!r}")
    return obj[key]


def parse_annotation(data) -> VenusAnnotation:
    """bytes / str / parsed dict -> validated VenusAnnotation."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as e:
            raise ValidationError(f"annotation is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError("annotation root must be a JSON object")
    for key in _TOP_KEYS:
        _req(data, key, "annotation")

    duration = float(data["duration"])
    fps = float(data["fps"])
    if duration <= 0 or fps <= 0:
        raise ValidationError(f"duration and fps must be positive, got {duration}, {fps}")

    conversation = []
    seen_ids = set()
    for i, u in enumerate(data["conversation"]):
        where = f"conversation[{i}]"
        uid = str(_req(u, "utterance_id", where))
        if uid in seen_ids:
            raise ValidationError(f"{where}: duplicate utterance id {uid!r}")
        seen_ids.add(uid)
        ts, te = float(_req(u, "t_start", where)), float(_req(u, "t_end", where))
        if te < ts:
            raise ValidationError(f"{where}: t_end {te} < t_start {ts}")
        words = []
        for j, w in enumerate(u.get("words", [])):
            ww = f"{where}.words[{j}]"
            span = WordSpan(
                str(_req(w, "word", ww)),
                float(_req(w, "t_start", ww)),
                float(_req(w, "t_end", ww)),
            )
            if span.t_end < span.t_start:
                raise ValidationError(f"{ww}: t_end < t_start")
            if span.t_start < ts or span.t_end > te:
                raise ValidationError(
                    f"{ww}: word times [{span.t_start}, {span.t_end}] outside "
                    f"utterance [{ts}, {te}]"
                )
            words.append(span)
        conversation.append(
            Utterance(uid, str(u.get("speaker", "")), str(u.get("text", "")), ts, te, tuple(words))
        )

    harmful = tuple(str(h) for h in data["harmful_utterance_id"])
    overlap = sorted(set(harmful) & seen_ids)
    if overlap:
        raise ValidationError(f"harmful ids present in conversation: {overlap}")

    def feat_table(key, widths):
        table = {}
        for uid, rec in data[key].items():
            ff = FrameFeatures(_req(rec, "frames", key), _req(rec, "features", key))
            if ff.features.shape[0] and ff.features.shape[1] not in widths:
                raise ValidationError(
                    f"{key}[{uid}]: width {ff.features.shape[1]} not in {widths}"
                )
            table[str(uid)] = ff
        return table

    facial = feat_table("facial_expression", FACE_RAW_WIDTHS)
    bodyl = feat_table("body_language", (BODY_RAW_WIDTH,))
    bbox = FrameBoxes(
        _req(data["speaker_bbox"], "frames", "speaker_bbox"),
        _req(data["speaker_bbox"], "boxes", "speaker_bbox"),
    )
    return VenusAnnotation(
        channel_id=str(data["channel_id"]),
        video_id=str(data["video_id"]),
        duration=duration,
        fps=fps,
        segment_id=str(data["segment_id"]),
        conversation=tuple(conversation),
        facial_expression=facial,
        body_language=bodyl,
        speaker_bbox=bbox,
        harmful_utterance_id=harmful,
    )


def serialize_annotation(ann: VenusAnnotation) -> bytes:
    obj = {
        "channel_id": ann.channel_id,
        "video_id": ann.video_id,
        "duration": ann.duration,
        "fps": ann.fps,
        "segment_id": ann.segment_id,
        "conversation": [
            {
                "utterance_id": u.utterance_id,
                "speaker": u.speaker,
                "text": u.text,
                "t_start": u.t_start,
                "t_end": u.t_end,
                "words": [
                    {"word": w.word, "t_start": w.t_start, "t_end": w.t_end} for w in u.words
                ],
            }
            for u in ann.conversation
        ],
        "facial_expression": {
            uid: {"frames": ff.frames.tolist(), "features": ff.features.tolist()}
            for uid, ff in ann.facial_expression.items()
        },
        "body_language": {
            uid: {"frames": ff.frames.tolist(), "features": ff.features.tolist()}
            for uid, ff in ann.body_language.items()
        },
        "speaker_bbox": {
            "frames": ann.speaker_bbox.frames.tolist(),
            "boxes": ann.speaker_bbox.boxes.tolist(),
        },
        "harmful_utterance_id": list(ann.harmful_utterance_id),
    }
    return json.dumps(obj, ensure_ascii=False, sort_keys=True).encode("utf-8")


def load_annotation(path: str) -> VenusAnnotation:
    with open(path, "rb") as f:
        return parse_annotation(f.read())


def fixture_annotation() -> VenusAnnotation:
    """The small bundled example annotation."""
    raw = resources.files("motiontok").joinpath("data/fixture_annotation.json").read_bytes()
    return parse_annotation(raw)


def annotation_schema() -> dict:
    raw = resources.files("motiontok").joinpath("data/venus_annotation.schema.json").read_bytes()
    return json.loads(raw)


def utterance_motion(ann: VenusAnnotation, uid: str, stream: str) -> MotionSequence:
    """Project one utterance's raw features into a MotionSequence."""
    if stream == "face":
        table, project = ann.facial_expression, face_project
    elif stream == "body":
        table, project = ann.body_language, body_project
    else:
        raise InvalidArgument(f"stream must be face or body, got {stream!r}")
    if uid not in table:
        raise InvalidArgument(f"utterance {uid!r} has no {stream} features")
    mat = project(table[uid].features)
    return MotionSequence(mat.T, fps=ann.fps)


# -- deterministic preprocessing formulas -----------------------------------------


@dataclass(frozen=True)
class UtteranceFrameSpan:
    s: int
    e: int

    def __post_init__(self):
        if not (0 <= self.s <= self.e):
            raise InvalidArgument(f"need 0 <= s <= e, got ({self.s}, {self.e})")


def utterance_frames(t_start: float, t_end: float, fps: float, last_frame: int = None) -> UtteranceFrameSpan:
    """Second offsets -> inclusive frame span via floor(t * fps)."""
    if t_end < t_start:
        raise InvalidArgument(f"t_end {t_end} < t_start {t_start}")
    if t_start < 0:
        raise InvalidArgument(f"t_start must be >= 0, got {t_start}")
    if fps <= 0:
        raise InvalidArgument(f"fps must be positive, got {fps}")
    s = math.floor(t_start * fps)
    e = math.floor(t_end * fps)
    if last_frame is not None:
        e = min(e, int(last_frame))
        s = min(s, e)
    return UtteranceFrameSpan(s, e)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = max(float(np.linalg.norm(a) * np.linalg.norm(b)), 1e-12)
    return float(a @ b) / denom


def align_speaker(crops_per_frame, embed):
    """Pick one crop per frame, tracking identity by embedding similarity.

    A frame with one candidate (or no previous selection yet) takes the
    first candidate; with a previous embedding and several candidates, the
    candidate with the greatest cosine similarity to the previous chosen
    crop wins. Frames whose embedding computation fails are skipped with a
    diagnostic, leaving the previous embedding in place.

    Returns (choices, diagnostics): choices has the selected crop per frame
    (None where skipped); diagnostics is a list of (frame_index, message).
    """
    choices = []
    diagnostics = []
    prev_emb = None
    for f_idx, candidates in enumerate(crops_per_frame):
        candidates = list(candidates)
        if not candidates:
            choices.append(None)
            diagnostics.append((f_idx, "no candidates"))
            continue
        try:
            if prev_emb is None or len(candidates) == 1:
                chosen = candidates[0]
                chosen_emb = np.asarray(embed(chosen), dtype=np.float64)
            else:
                embs = [np.asarray(embed(c), dtype=np.float64) for c in candidates]
                sims = [_cosine(e, prev_emb) for e in embs]
                best = int(np.argmax(sims))
                chosen, chosen_emb = candidates[best], embs[best]
        except Exception as e:  # embed is user-supplied; isolate its failures
            choices.append(None)
            diagnostics.append((f_idx, f"embedding failed: {e}"))
            continue
        choices.append(chosen)
        prev_emb = chosen_emb
    return choices, diagnostics


@dataclass(frozen=True)
class ResizePad:
    scale: float
    w_new: int
    h_new: int
    dx: int
    dy: int


def resize_pad(w: int, h: int, S: int) -> ResizePad:
    """Aspect-preserving resize of (w, h) into an S x S zero canvas.

    scale = S / max(w, h); new dims round half up (computed in exact integer
    arithmetic); offsets center the result using floored halves.
    """
    if w <= 0 or h <= 0 or S <= 0:
        raise InvalidArgument(f"dimensions must be positive, got w={w}, h={h}, S={S}")
    m = max(w, h)
    w_new = (2 * S * w + m) // (2 * m)
    h_new = (2 * S * h + m) // (2 * m)
    dx = (S - w_new) // 2
    dy = (S - h_new) // 2
    return ResizePad(scale=S / m, w_new=w_new, h_new=h_new, dx=dx, dy=dy)


def embed_canvas(img: np.ndarray, S: int) -> np.ndarray:
    """Place an already-resized (h', w', ...) image on the centered canvas."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h > S or w > S:
        raise InvalidArgument(f"image ({w}x{h}) larger than canvas {S}")
    dx, dy = (S - w) // 2, (S - h) // 2
    canvas = np.zeros((S, S) + img.shape[2:], dtype=img.dtype)
    canvas[dy : dy + h, dx : dx + w] = img
    return canvas


@dataclass(frozen=True)
class HarmfulDecision:
    kept_ids: tuple
    discard_video: bool
    harmful_seconds: float = 0.0


def harmful_filter(utterances) -> HarmfulDecision:
    """Drop harmful utterances; discard the whole video past 180 s of harm.

    utterances: iterable of (id, duration_seconds, harmful) triples or dicts
    with keys id/duration/harmful. Exactly 180 s keeps the video.
    """
    total_harm = 0.0
    kept = []
    for u in utterances:
        if isinstance(u, dict):
            uid, dur, harmful = u["id"], float(u["duration"]), bool(u["harmful"])
        else:
            uid, dur, harmful = u[0], float(u[1]), bool(u[2])
        if dur < 0:
            raise InvalidArgument(f"utterance {uid!r} has negative duration {dur}")
        if harmful:
            total_harm += dur
        else:
            kept.append(uid)
    if total_harm > HARMFUL_LIMIT_S:
        return HarmfulDecision(kept_ids=(), discard_video=True, harmful_seconds=total_harm)
    return HarmfulDecision(kept_ids=tuple(kept), discard_video=False, harmful_seconds=total_harm)
