import json
from fractions import Fraction

import numpy as np
import pytest

from motiontok import (
    InvalidArgument,
    SchemaError,
    ValidationError,
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
from motiontok.ingest import (
    FrameBoxes,
    FrameFeatures,
    annotation_schema,
    embed_canvas,
    fixture_annotation,
)


class TestProjections:
    def test_face_153_selects_expression_and_jaw(self):
        raw = np.arange(153, dtype=np.float32)[None, :]
        out = face_project(raw)
        assert out.shape == (1, 53)
        assert np.array_equal(out[0, :50], np.arange(100, 150))
        assert np.array_equal(out[0, 50:], np.arange(150, 153))

    def test_face_156_same_slices(self):
        raw = np.arange(156, dtype=np.float32)[None, :]
        out = face_project(raw)
        assert np.array_equal(out[0, :50], np.arange(100, 150))
        assert np.array_equal(out[0, 50:], np.arange(150, 153))

    def test_face_other_width_rejected(self):
        with pytest.raises(ValidationError):
            face_project(np.zeros((2, 154), dtype=np.float32))

    def test_body_joint_selection(self):
        raw = np.arange(179, dtype=np.float32)[None, :]
        out = body_project(raw)
        assert out.shape == (1, 117)
        # upper body: 9 joints out of the 21-joint pose block starting at 3
        expected_ubody = []
        for j in (3, 9, 12, 16, 17, 18, 19, 20, 21):
            base = 3 + 3 * (j - 1)
            expected_ubody.extend(range(base, base + 3))
        assert np.array_equal(out[0, :27], np.asarray(expected_ubody, dtype=np.float32))
        # right hand before left hand
        assert np.array_equal(out[0, 27:72], np.arange(111, 156))
        assert np.array_equal(out[0, 72:], np.arange(66, 111))

    def test_body_width_rejected(self):
        with pytest.raises(ValidationError):
            body_project(np.zeros((3, 156), dtype=np.float32))

    def test_row_count_preserved(self):
        rng = np.random.default_rng(0)
        assert face_project(rng.normal(size=(7, 153))).shape == (7, 53)
        assert body_project(rng.normal(size=(7, 179))).shape == (7, 117)


class TestFrameTables:
    def test_features_row_mismatch(self):
        with pytest.raises(ValidationError):
            FrameFeatures([0, 1, 2], np.zeros((2, 5)))

    def test_boxes_shape_checked(self):
        with pytest.raises(ValidationError):
            FrameBoxes([0], np.zeros((1, 3)))

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValidationError):
            FrameBoxes([0], [[10.0, 10.0, 10.0, 20.0]])

    def test_inverted_box_rejected(self):
        with pytest.raises(ValidationError):
            FrameBoxes([0], [[10.0, 30.0, 20.0, 20.0]])


class TestAnnotation:
    def test_fixture_parses(self):
        ann = fixture_annotation()
        assert ann.video_id == "vid0001"
        assert ann.fps == 25.0
        assert len(ann.conversation) == 2
        assert set(ann.facial_expression) == {"vid0001_000_1", "vid0001_000_2"}

    def test_missing_top_key_is_schema_error(self):
        ann = fixture_annotation()
        obj = json.loads(serialize_annotation(ann))
        del obj["segment_id"]
        with pytest.raises(SchemaError):
            parse_annotation(obj)

    def test_round_trip_equality(self):
        ann = fixture_annotation()
        again = parse_annotation(serialize_annotation(ann))
        assert again == ann

    def test_load_from_path(self, tmp_path):
        ann = fixture_annotation()
        p = tmp_path / "a.json"
        p.write_bytes(serialize_annotation(ann))
        assert load_annotation(str(p)) == ann

    def test_harmful_id_in_conversation_rejected(self):
        obj = json.loads(serialize_annotation(fixture_annotation()))
        obj["harmful_utterance_id"] = ["vid0001_000_1"]
        with pytest.raises(ValidationError):
            parse_annotation(obj)

    def test_duplicate_utterance_id_rejected(self):
        obj = json.loads(serialize_annotation(fixture_annotation()))
        obj["conversation"].append(dict(obj["conversation"][0]))
        with pytest.raises(ValidationError):
            parse_annotation(obj)

    def test_word_outside_utterance_rejected(self):
        obj = json.loads(serialize_annotation(fixture_annotation()))
        obj["conversation"][0]["words"][0]["t_end"] = 99.0
        with pytest.raises(ValidationError):
            parse_annotation(obj)

    def test_bad_json_rejected(self):
        with pytest.raises(ValidationError):
            parse_annotation(b"{not json")

    def test_empty_conversation_allowed(self):
        obj = json.loads(serialize_annotation(fixture_annotation()))
        obj["conversation"] = []
        obj["facial_expression"] = {}
        obj["body_language"] = {}
        ann = parse_annotation(obj)
        assert ann.conversation == ()

    def test_unknown_utterance_lookup(self):
        with pytest.raises(InvalidArgument):
            fixture_annotation().utterance("missing")

    def test_schema_document_loads(self):
        schema = annotation_schema()
        assert schema["type"] == "object"
        assert "conversation" in schema["properties"]


class TestUtteranceMotion:
    def test_face_stream_shape(self):
        ann = fixture_annotation()
        seq = utterance_motion(ann, "vid0001_000_1", "face")
        assert seq.data.shape == (53, 41)
        assert seq.fps == ann.fps

    def test_body_stream_shape(self):
        ann = fixture_annotation()
        seq = utterance_motion(ann, "vid0001_000_2", "body")
        assert seq.data.shape == (117, 41)

    def test_unknown_stream(self):
        with pytest.raises(InvalidArgument):
            utterance_motion(fixture_annotation(), "vid0001_000_1", "hands")

    def test_unknown_utterance(self):
        with pytest.raises(InvalidArgument):
            utterance_motion(fixture_annotation(), "nope", "face")


class TestUtteranceFrames:
    def test_worked_examples(self):
        span = utterance_frames(2.0, 3.0, fps=25.0)
        assert (span.s, span.e) == (50, 75)
        span = utterance_frames(0.04, 0.08, fps=25.0)
        assert (span.s, span.e) == (1, 2)

    def test_floor_semantics(self):
        span = utterance_frames(0.99, 1.01, fps=25.0)
        assert (span.s, span.e) == (24, 25)

    def test_last_frame_clamps_both_ends(self):
        span = utterance_frames(2.0, 3.0, fps=25.0, last_frame=60)
        assert (span.s, span.e) == (50, 60)
        span = utterance_frames(2.0, 3.0, fps=25.0, last_frame=40)
        assert (span.s, span.e) == (40, 40)

    def test_reversed_times_rejected(self):
        with pytest.raises(InvalidArgument):
            utterance_frames(3.0, 2.0, fps=25.0)

    def test_negative_start_rejected(self):
        with pytest.raises(InvalidArgument):
            utterance_frames(-0.1, 2.0, fps=25.0)

    def test_monotone_in_times(self):
        rng = np.random.default_rng(1)
        prev_e = -1
        for t in np.sort(rng.uniform(0, 10, size=50)):
            e = utterance_frames(0.0, float(t), fps=30.0).e
            assert e >= prev_e
            prev_e = e


class TestAlignSpeaker:
    def test_single_candidate_chain(self):
        frames = [["a"], ["b"], ["c"]]
        choices, diags = align_speaker(frames, embed=lambda c: np.ones(4))
        assert choices == ["a", "b", "c"]
        assert diags == []

    def test_first_frame_takes_first_candidate(self):
        frames = [["x", "y"]]
        choices, _ = align_speaker(frames, embed=lambda c: np.ones(2))
        assert choices == ["x"]

    def test_cosine_tracking_example(self):
        # previous embedding (0.9, 0.1): candidate e1=(1,0) beats e2=(0,1)
        embeds = {"prev": np.array([0.9, 0.1]), "c1": np.array([1.0, 0.0]), "c2": np.array([0.0, 1.0])}
        frames = [["prev"], ["c2", "c1"]]
        choices, _ = align_speaker(frames, embed=lambda c: embeds[c])
        assert choices == ["prev", "c1"]

    def test_many_candidates_max_similarity(self):
        def emb(c):
            return np.array([np.cos(c), np.sin(c)])

        frames = [[0.0], [1.5, 0.3, -0.2, 0.9]]
        choices, _ = align_speaker(frames, embed=emb)
        assert choices == [0.0, -0.2]

    def test_embed_failure_skips_with_diagnostic(self):
        def emb(c):
            if c == "bad":
                raise RuntimeError("boom")
            return np.ones(3)

        frames = [["a"], ["bad"], ["c", "d"]]
        choices, diags = align_speaker(frames, embed=emb)
        assert choices == ["a", None, "c"]
        assert len(diags) == 1 and diags[0][0] == 1 and "boom" in diags[0][1]

    def test_empty_frame_skipped(self):
        choices, diags = align_speaker([[], ["a"]], embed=lambda c: np.ones(2))
        assert choices == [None, "a"]
        assert diags[0][0] == 0

    def test_constant_embedding_degenerates_to_first(self):
        frames = [["a", "b"], ["b", "a"], ["c", "d"]]
        choices, _ = align_speaker(frames, embed=lambda c: np.ones(5))
        assert choices == ["a", "b", "c"]


def _oracle_resize(w, h, S):
    """Exact rational round-half-up of S*dim/max(w, h)."""
    m = max(w, h)

    def half_up(x: Fraction) -> int:
        return int((x + Fraction(1, 2)).__floor__())

    return half_up(Fraction(S * w, m)), half_up(Fraction(S * h, m))


class TestResizePad:
    def test_landscape_example(self):
        r = resize_pad(200, 100, S=224)
        assert (r.w_new, r.h_new) == (224, 112)
        assert (r.dx, r.dy) == (0, 56)
        assert r.scale == pytest.approx(1.12)

    def test_identity_square(self):
        r = resize_pad(256, 256, S=256)
        assert (r.w_new, r.h_new, r.dx, r.dy) == (256, 256, 0, 0)
        assert r.scale == 1.0

    def test_downscale_example(self):
        r = resize_pad(300, 150, S=100)
        assert (r.w_new, r.h_new) == (100, 50)
        assert (r.dx, r.dy) == (0, 25)

    def test_non_positive_rejected(self):
        for bad in [(0, 10, 64), (10, -1, 64), (10, 10, 0)]:
            with pytest.raises(InvalidArgument):
                resize_pad(*bad)

    def test_matches_rational_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            w = int(rng.integers(1, 2000))
            h = int(rng.integers(1, 2000))
            S = int(rng.integers(1, 600))
            r = resize_pad(w, h, S)
            assert (r.w_new, r.h_new) == _oracle_resize(w, h, S)

    def test_long_side_hits_canvas(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            w = int(rng.integers(1, 1000))
            h = int(rng.integers(1, 1000))
            S = int(rng.integers(1, 512))
            r = resize_pad(w, h, S)
            assert max(r.w_new, r.h_new) == S
            assert 0 <= r.dx and 0 <= r.dy
            assert r.w_new + 2 * r.dx <= S and r.h_new + 2 * r.dy <= S

    def test_aspect_ratio_error_bounded_by_rounding(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            w = int(rng.integers(2, 1000))
            h = int(rng.integers(2, 1000))
            S = int(rng.integers(16, 512))
            r = resize_pad(w, h, S)
            if r.w_new == 0 or r.h_new == 0:
                continue
            got = r.w_new / r.h_new
            want = w / h
            assert abs(got - want) <= max(1.0 / r.h_new, want / r.h_new)

    def test_embed_canvas_centers(self):
        img = np.ones((2, 4), dtype=np.float32)
        canvas = embed_canvas(img, S=8)
        assert canvas.shape == (8, 8)
        assert canvas.sum() == 8
        assert np.array_equal(canvas[3:5, 2:6], img)

    def test_embed_canvas_too_large(self):
        with pytest.raises(InvalidArgument):
            embed_canvas(np.ones((10, 3)), S=8)


class TestHarmfulFilter:
    def test_discard_past_limit(self):
        d = harmful_filter([("u1", 200.0, True), ("u2", 5.0, False)])
        assert d.discard_video and d.kept_ids == ()
        assert d.harmful_seconds == 200.0

    def test_exactly_180_keeps_video(self):
        d = harmful_filter([("u1", 180.0, True), ("u2", 5.0, False)])
        assert not d.discard_video
        assert d.kept_ids == ("u2",)

    def test_barely_over_discards(self):
        d = harmful_filter([("u1", 180.0000001, True)])
        assert d.discard_video

    def test_no_harm_keeps_everything(self):
        d = harmful_filter([("a", 10.0, False), ("b", 20.0, False)])
        assert d.kept_ids == ("a", "b")
        assert d.harmful_seconds == 0.0

    def test_short_harm_drops_only_offender(self):
        d = harmful_filter([("a", 10.0, False), ("bad", 60.0, True), ("c", 5.0, False)])
        assert d.kept_ids == ("a", "c")
        assert d.harmful_seconds == 60.0

    def test_harm_accumulates_across_utterances(self):
        d = harmful_filter([("a", 90.0, True), ("b", 90.5, True)])
        assert d.discard_video

    def test_dict_rows_accepted(self):
        d = harmful_filter([{"id": "x", "duration": 3.0, "harmful": False}])
        assert d.kept_ids == ("x",)

    def test_negative_duration_rejected(self):
        with pytest.raises(InvalidArgument):
            harmful_filter([("u", -1.0, False)])
