"""Motion tokenization: windowed face/body parameter streams to discrete codes."""

__version__ = "0.1.0"

from .codec import (
    Codebook,
    Codec,
    CodecConfig,
    QuantizedClip,
    body_config,
    ema_update,
    face_config,
    load_checkpoint,
    nearest_codes,
    quantize,
    reseed_dead_codes,
    save_checkpoint,
)
from .errors import (
    InvalidArgument,
    InvalidState,
    MotionTokError,
    SchemaError,
    ValidationError,
)
from .ingest import (
    VenusAnnotation,
    align_speaker,
    body_project,
    face_project,
    harmful_filter,
    load_annotation,
    parse_annotation,
    resize_pad,
    serialize_annotation,
    utterance_frames,
    utterance_motion,
)
from .losses import LossWeights, commitment_loss, total_loss
from .metrics import (
    MetricReport,
    VertexMap,
    diversity,
    evaluate_pair_set,
    lvd,
    read_vmap,
    token_nll_ppl,
    variance,
    vmse,
    window_vertex_l2,
    write_vmap,
)
from .motion import (
    BODY_DIM,
    DEFAULT_FPS,
    FACE_DIM,
    BodyFrame,
    FaceFrame,
    MotionSequence,
    WindowSpec,
    pad_or_truncate,
    read_mseq,
    smooth,
    velocity,
    write_mseq,
)
from .sequence import (
    FactorizationPlan,
    InterleavedSequence,
    Token,
    build_interleaved,
    chat_message,
    factorization_order,
    parse_chat,
    read_chat_jsonl,
    render_chat,
    system_prompt,
    write_chat_jsonl,
)
from .synth import SynthConfig, synth_corpus, synth_sequence
from .trainer import TrainConfig, Trainer, TrainResult, fit, lr_at, validation_recon

__all__ = [
    "MotionTokError",
    "InvalidArgument",
    "InvalidState",
    "SchemaError",
    "ValidationError",
    "FaceFrame",
    "BodyFrame",
    "MotionSequence",
    "WindowSpec",
    "FACE_DIM",
    "BODY_DIM",
    "DEFAULT_FPS",
    "smooth",
    "velocity",
    "pad_or_truncate",
    "read_mseq",
    "write_mseq",
    "CodecConfig",
    "Codebook",
    "Codec",
    "QuantizedClip",
    "face_config",
    "body_config",
    "nearest_codes",
    "quantize",
    "ema_update",
    "reseed_dead_codes",
    "save_checkpoint",
    "load_checkpoint",
    "LossWeights",
    "commitment_loss",
    "total_loss",
    "TrainConfig",
    "Trainer",
    "TrainResult",
    "fit",
    "lr_at",
    "validation_recon",
    "VertexMap",
    "MetricReport",
    "vmse",
    "lvd",
    "window_vertex_l2",
    "diversity",
    "variance",
    "token_nll_ppl",
    "evaluate_pair_set",
    "read_vmap",
    "write_vmap",
    "Token",
    "InterleavedSequence",
    "FactorizationPlan",
    "build_interleaved",
    "render_chat",
    "parse_chat",
    "chat_message",
    "system_prompt",
    "factorization_order",
    "read_chat_jsonl",
    "write_chat_jsonl",
    "VenusAnnotation",
    "parse_annotation",
    "serialize_annotation",
    "load_annotation",
    "face_project",
    "body_project",
    "utterance_motion",
    "utterance_frames",
    "align_speaker",
    "resize_pad",
    "harmful_filter",
    "SynthConfig",
    "synth_sequence",
    "synth_corpus",
]
