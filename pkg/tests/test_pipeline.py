import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmdiar.corpus import Diarization, Segment, Turn, emit_rttm
from mmdiar.errors import EvidenceWithoutModality
from mmdiar.metrics import compute_der
from mmdiar.pipeline import (
    PipelineConfig,
    diarize,
    diarize_with_info,
    merge_adjacent,
    resolve_overlaps,
    subsegment,
)
from mmdiar.synth import SynthSpec, gen_conversation

AUDIO = PipelineConfig(modalities=frozenset({"audio"}))


def spans(segs):
    return [(s.start, s.end) for s in segs]


def union_length(intervals):
    total, end = 0.0, -np.inf
    for s, e in sorted(intervals):
        if s > end:
            total += e - s
            end = e
        elif e > end:
            total += e - end
            end = e
    return total


# ---------------------------------------------------------------- subsegment


def test_subsegment_tiling():
    assert spans(subsegment([Segment("r", 0, 3.0)])) == [(0, 1.5), (0.75, 2.25), (1.5, 3.0)]


def test_subsegment_passthrough():
    assert spans(subsegment([Segment("r", 0, 1.0)])) == [(0, 1.0)]


def test_subsegment_right_aligned():
    out = spans(subsegment([Segment("r", 0, 1.6)]))
    assert out[0] == (0, 1.5)
    assert out[1] == pytest.approx((0.1, 1.6))


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(window=1.0, shift=1.5)
    with pytest.raises(ValueError):
        PipelineConfig(modalities=frozenset({"visual"}))


# ---------------------------------------------------------------- merging


def test_merge_same_speaker():
    d = Diarization("r", (Turn("A", 0, 1), Turn("A", 1.1, 2)))
    assert merge_adjacent(d, 0.25) == Diarization("r", (Turn("A", 0, 2),))


def test_merge_different_speakers_unchanged():
    d = Diarization("r", (Turn("A", 0, 1), Turn("B", 1.1, 2)))
    assert merge_adjacent(d, 0.25) == d


@st.composite
def timelines(draw):
    t, entries = 0.0, []
    for _ in range(draw(st.integers(1, 15))):
        t += draw(st.integers(0, 600)) / 1000
        length = draw(st.integers(1, 3000)) / 1000
        entries.append(Turn(draw(st.sampled_from("AB")), t, t + length))
        t += length
    return Diarization("r", tuple(entries))


@given(timelines(), st.sampled_from([0.0, 0.25, 0.5]))
def test_merge_idempotent_and_never_shrinks(d, gap):
    once = merge_adjacent(d, gap)
    assert merge_adjacent(once, gap) == once
    assert once.total_duration() >= d.total_duration() - 1e-9


def test_resolve_overlaps_cuts_midway():
    out = resolve_overlaps([("A", 0.0, 1.5), ("B", 0.75, 2.25)])
    assert out[0][0] == "A" and out[-1][0] == "B"
    cut = [b for spk, a, b in out if spk == "A"][-1]
    assert cut == pytest.approx(1.125)


@given(st.lists(st.tuples(st.sampled_from("ABC"), st.integers(0, 50), st.integers(1, 20)),
                min_size=1, max_size=12))
def test_resolve_overlaps_preserves_support(raw):
    sp = [(s, a / 10, (a + n) / 10) for s, a, n in raw]
    out = resolve_overlaps(sp)
    assert union_length([(a, b) for _, a, b in out]) == pytest.approx(union_length([(a, b) for _, a, b in sp]))
    assert sum(b - a for _, a, b in out) == pytest.approx(union_length([(a, b) for _, a, b in sp]))


# ---------------------------------------------------------------- diarize


def two_block_input():
    segs = [Segment("r", 1.5 * i, 1.5 * (i + 1)) for i in range(6)]
    v = np.array([1.0, 0.0, 0.0])
    emb = np.array([v, v, v, -v, -v, -v])
    return segs, emb


def test_audio_two_blocks():
    segs, emb = two_block_input()
    d = diarize(segs, emb, cfg=AUDIO)
    assert d == Diarization("r", (Turn("spk0", 0, 4.5), Turn("spk1", 4.5, 9.0)))


def test_single_segment():
    d = diarize([Segment("r", 2, 3)], np.array([[0.0, 1.0]]))
    assert emit_rttm(d) == "SPEAKER r 1 2.000 1.000 <NA> <NA> spk0 <NA> <NA>\n"


def test_visual_evidence_recovers_hard_acoustics():
    conv = gen_conversation(SynthSpec(seed=3))
    audio = diarize(conv.segments, conv.embeddings, cfg=AUDIO)
    fused = diarize(conv.segments, conv.embeddings, conv.visual, None,
                    PipelineConfig(modalities=frozenset({"audio", "visual"})))
    assert compute_der(conv.truth, audio).der > 0.05
    assert compute_der(conv.truth, fused).der == 0.0


def test_disabled_modality_equals_no_evidence():
    conv = gen_conversation(SynthSpec(seed=4))
    with pytest.warns(EvidenceWithoutModality):
        ignored = diarize(conv.segments, conv.embeddings, conv.visual, conv.textual, AUDIO)
    assert ignored == diarize(conv.segments, conv.embeddings, cfg=AUDIO)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert diarize(conv.segments, conv.embeddings, [], [], AUDIO) == ignored


def test_info_and_determinism():
    conv = gen_conversation(SynthSpec(seed=5))
    d1, info = diarize_with_info(conv.segments, conv.embeddings, conv.visual, conv.textual)
    d2, _ = diarize_with_info(conv.segments, conv.embeddings, conv.visual, conv.textual)
    assert emit_rttm(d1) == emit_rttm(d2)
    assert info["k"] == 3 and info["segments"] == len(conv.segments)
    assert info["must_link"] > 0 and info["cannot_link"] > 0
    assert info["eigenvalues"][0] == pytest.approx(0.0, abs=1e-9)
    assert d1.speakers == ["spk0", "spk1", "spk2"]


def test_output_covers_input_speech():
    conv = gen_conversation(SynthSpec(seed=6))
    d = diarize(conv.segments, conv.embeddings, cfg=AUDIO)
    want = union_length([(s.start, s.end) for s in conv.segments])
    assert d.total_duration() == pytest.approx(want)
