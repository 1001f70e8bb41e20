"""Data model and file formats: RTTM, JSON-Lines embeddings/evidence/transcripts,
and whitespace trial lists.

Times are kept as float seconds; equality of diarizations is judged on a 1 ms
grid, which is also the RTTM print precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadLabel,
    DimensionMismatch,
    DuplicateSegment,
    EmptyInput,
    EmptyWords,
    MalformedLine,
    NegativeDuration,
    NegativeTime,
    UnknownKindField,
    ZeroVector,
)

TEXT_KINDS = ("turn_change", "dialogue_on", "dialogue_off")


def to_ms(t: float) -> int:
    return int(round(t * 1000.0))


@dataclass(frozen=True)
class Segment:
    recording_id: str
    start: float
    end: float
    speaker: str | None = None

    def __post_init__(self):
        if not self.recording_id:
            raise ValueError("recording_id must be non-empty")
        if self.start < 0:
            raise ValueError(f"negative start {self.start}")
        if not self.end > self.start:
            raise ValueError(f"segment end {self.end} <= start {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start


def sort_segments(segs: Iterable[Segment]) -> list[Segment]:
    """Stable sort by (start, end); rejects exact duplicates."""
    out = sorted(segs, key=lambda s: (s.start, s.end))
    seen = set()
    for s in out:
        key = (s.start, s.end, s.speaker)
        if key in seen:
            raise DuplicateSegment(f"duplicate segment {s.start}-{s.end} ({s.speaker})")
        seen.add(key)
    return out


@dataclass(frozen=True)
class Turn:
    speaker: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class Diarization:
    """Speaker-labeled time spans of one recording.

    Entries are kept sorted by (start, end, speaker). Two diarizations are equal
    when their entries agree on a 1 ms grid.
    """

    recording_id: str
    entries: tuple[Turn, ...] = ()

    def __post_init__(self):
        entries = tuple(
            t if isinstance(t, Turn) else Turn(*t) for t in self.entries
        )
        for t in entries:
            if not t.end > t.start:
                raise ValueError(f"entry end {t.end} <= start {t.start}")
        entries = tuple(sorted(entries, key=lambda t: (t.start, t.end, t.speaker)))
        object.__setattr__(self, "entries", entries)

    def quantized(self):
        return (
            self.recording_id,
            tuple((t.speaker, to_ms(t.start), to_ms(t.end)) for t in self.entries),
        )

    def __eq__(self, other):
        if not isinstance(other, Diarization):
            return NotImplemented
        return self.quantized() == other.quantized()

    def __hash__(self):
        return hash(self.quantized())

    def __len__(self):
        return len(self.entries)

    @property
    def speakers(self) -> list[str]:
        """Speaker labels in order of first appearance."""
        seen = {}
        for t in self.entries:
            seen.setdefault(t.speaker, None)
        return list(seen)

    def total_duration(self) -> float:
        return sum(t.duration for t in self.entries)


@dataclass(frozen=True)
class VisualRecord:
    start: float
    end: float
    face_cluster: str
    confidence: float = 1.0


@dataclass(frozen=True)
class TextRecord:
    time: float
    kind: str
    confidence: float = 1.0


@dataclass(frozen=True)
class TrialScore:
    enroll_id: str
    test_id: str
    score: float
    is_target: bool


# --------------------------------------------------------------------------- RTTM


def parse_rttm(text: str) -> list[Diarization]:
    """Parse RTTM text into one `Diarization` per recording.

    Only ``SPEAKER`` lines are read; recordings come out in order of first
    appearance. Zero-length entries carry no speech and are dropped.
    """
    by_rec: dict[str, list[Turn]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0] != "SPEAKER":
            continue
        if len(fields) < 9:
            raise MalformedLine(f"expected >= 9 fields, got {len(fields)}", line_no)
        try:
            start = float(fields[3])
            dur = float(fields[4])
        except ValueError:
            raise MalformedLine("non-numeric start/duration", line_no) from None
        if not (math.isfinite(start) and math.isfinite(dur)):
            raise MalformedLine("non-finite start/duration", line_no)
        if dur < 0:
            raise NegativeDuration(f"duration {dur}", line_no)
        if start < 0:
            raise NegativeTime(f"start {start}", line_no)
        turns = by_rec.setdefault(fields[1], [])
        if dur > 0:
            turns.append(Turn(fields[7], start, start + dur))
    return [Diarization(rec, tuple(turns)) for rec, turns in by_rec.items()]


def emit_rttm(d: Diarization) -> str:
    lines = []
    for t in d.entries:
        s_ms, e_ms = to_ms(t.start), to_ms(t.end)
        lines.append(
            f"SPEAKER {d.recording_id} 1 {s_ms / 1000:.3f} {(e_ms - s_ms) / 1000:.3f} "
            f"<NA> <NA> {t.speaker} <NA> <NA>"
        )
    return "".join(line + "\n" for line in lines)


def normalize_rttm(text: str) -> str:
    """Canonical form of RTTM text: what `emit_rttm` writes for its content."""
    return "".join(emit_rttm(d) for d in parse_rttm(text))


# --------------------------------------------------------------------- JSON-Lines


def _json_lines(text: str):
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(f"invalid JSON ({e.msg})", line_no) from None
        if not isinstance(obj, dict):
            raise MalformedLine("expected a JSON object", line_no)
        yield line_no, obj


def _number(obj, key, line_no, default=None):
    if key not in obj:
        if default is not None:
            return default
        raise MalformedLine(f"missing field {key!r}", line_no)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise MalformedLine(f"field {key!r} must be a finite number", line_no)
    return float(val)


def _confidence(obj, line_no):
    conf = _number(obj, "confidence", line_no, default=1.0)
    if not 0.0 <= conf <= 1.0:
        raise MalformedLine(f"confidence {conf} outside [0, 1]", line_no)
    return conf


def load_embedding_records(text: str) -> tuple[list[Segment], np.ndarray]:
    """Read per-segment embeddings.

    Each line is ``{"recording", "start", "end", "vector"[, "speaker"]}``.
    Returns the sorted segment list and the matching (N, D) matrix of
    L2-normalized rows.
    """
    segs, rows = [], []
    rec = dim = None
    for line_no, obj in _json_lines(text):
        vec = obj.get("vector")
        if not isinstance(vec, list):
            raise MalformedLine("missing or non-list 'vector'", line_no)
        try:
            v = np.asarray(vec, dtype=float)
        except (TypeError, ValueError):
            raise MalformedLine("non-numeric vector entry", line_no) from None
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise MalformedLine("vector must be a flat list of finite numbers", line_no)
        if dim is None:
            dim = v.size
            if dim < 2:
                raise DimensionMismatch(f"embedding dimension {dim} < 2", line_no)
        elif v.size != dim:
            raise DimensionMismatch(f"dimension {v.size} != {dim}", line_no)
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise ZeroVector("vector norm below 1e-12", line_no)
        r = obj.get("recording")
        if not isinstance(r, str) or not r:
            raise MalformedLine("missing 'recording'", line_no)
        if rec is None:
            rec = r
        elif r != rec:
            raise MalformedLine(f"recording {r!r} differs from {rec!r}", line_no)
        start = _number(obj, "start", line_no)
        end = _number(obj, "end", line_no)
        if start < 0:
            raise NegativeTime(f"start {start}", line_no)
        if not end > start:
            raise NegativeDuration(f"end {end} <= start {start}", line_no)
        spk = obj.get("speaker")
        segs.append(Segment(r, start, end, None if spk is None else str(spk)))
        rows.append(v / norm)
    if not segs:
        raise EmptyInput("no embedding records")
    order = sorted(range(len(segs)), key=lambda i: (segs[i].start, segs[i].end))
    segs = sort_segments(segs[i] for i in order)
    return segs, np.vstack([rows[i] for i in order])


def dump_embedding_records(segs: Sequence[Segment], emb: np.ndarray) -> str:
    lines = []
    for s, row in zip(segs, emb):
        obj = {"recording": s.recording_id, "start": s.start, "end": s.end}
        if s.speaker is not None:
            obj["speaker"] = s.speaker
        obj["vector"] = [float(x) for x in row]
        lines.append(json.dumps(obj))
    return "".join(line + "\n" for line in lines)


def load_embedding_table(text: str) -> dict[str, np.ndarray]:
    """Utterance-level embeddings keyed by ``id`` (falling back to ``recording``)."""
    table = {}
    for line_no, obj in _json_lines(text):
        key = obj.get("id", obj.get("recording"))
        if not isinstance(key, str) or not key:
            raise MalformedLine("missing 'id'/'recording'", line_no)
        vec = obj.get("vector")
        if not isinstance(vec, list):
            raise MalformedLine("missing or non-list 'vector'", line_no)
        v = np.asarray(vec, dtype=float)
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise ZeroVector("vector norm below 1e-12", line_no)
        if table and v.size != next(iter(table.values())).size:
            raise DimensionMismatch("inconsistent embedding dimension", line_no)
        if key in table:
            raise MalformedLine(f"duplicate id {key!r}", line_no)
        table[key] = v / norm
    return table


def load_evidence_stream(text: str, kind: str):
    """Parse a visual or textual evidence stream, sorted by time."""
    if kind not in ("visual", "textual"):
        raise ValueError(f"unknown evidence kind {kind!r}")
    out = []
    for line_no, obj in _json_lines(text):
        conf = _confidence(obj, line_no)
        if kind == "visual":
            if "face_cluster" not in obj:
                raise UnknownKindField("missing 'face_cluster'", line_no)
            start = _number(obj, "start", line_no)
            end = _number(obj, "end", line_no)
            if start < 0 or end < 0:
                raise NegativeTime(f"negative time {min(start, end)}", line_no)
            if not end > start:
                raise NegativeDuration(f"end {end} <= start {start}", line_no)
            out.append(VisualRecord(start, end, str(obj["face_cluster"]), conf))
        else:
            k = obj.get("kind")
            if k not in TEXT_KINDS:
                raise UnknownKindField(f"kind {k!r} not in {TEXT_KINDS}", line_no)
            t = _number(obj, "time", line_no)
            if t < 0:
                raise NegativeTime(f"time {t}", line_no)
            out.append(TextRecord(t, k, conf))
    if kind == "visual":
        out.sort(key=lambda r: (r.start, r.end))
    else:
        out.sort(key=lambda r: r.time)
    return out


def dump_evidence_stream(records) -> str:
    lines = []
    for r in records:
        if isinstance(r, VisualRecord):
            obj = {"start": r.start, "end": r.end, "face_cluster": r.face_cluster,
                   "confidence": r.confidence}
        else:
            obj = {"time": r.time, "kind": r.kind, "confidence": r.confidence}
        lines.append(json.dumps(obj))
    return "".join(line + "\n" for line in lines)


# ------------------------------------------------------------------ trials / text


def load_trial_list(text: str) -> list[tuple[str, str, bool]]:
    trials = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 3:
            raise MalformedLine(f"expected 3 fields, got {len(fields)}", line_no)
        if fields[2] not in ("target", "nontarget"):
            raise BadLabel(f"label {fields[2]!r}", line_no)
        trials.append((fields[0], fields[1], fields[2] == "target"))
    return trials


def load_transcript_set(text: str) -> dict[str, dict[str, list[str]]]:
    """recording -> speaker -> concatenated word list (file order)."""
    out: dict[str, dict[str, list[str]]] = {}
    for line_no, obj in _json_lines(text):
        rec, spk, words = obj.get("recording"), obj.get("speaker"), obj.get("words")
        if not isinstance(rec, str) or not rec or spk is None:
            raise MalformedLine("missing 'recording' or 'speaker'", line_no)
        if not isinstance(words, list):
            raise MalformedLine("'words' must be a list", line_no)
        if not words:
            raise EmptyWords("empty word list", line_no)
        if not all(isinstance(w, str) and w for w in words):
            raise EmptyWords("words must be non-empty strings", line_no)
        out.setdefault(rec, {}).setdefault(str(spk), []).extend(words)
    return out


def dump_transcript_set(ts: dict[str, dict[str, list[str]]]) -> str:
    lines = []
    for rec, speakers in ts.items():
        for spk, words in speakers.items():
            if words:
                lines.append(json.dumps({"recording": rec, "speaker": spk, "words": words}))
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------- matrix dumps


def dump_matrix(m: np.ndarray) -> str:
    """Rows of decimal text, one matrix row per line."""
    return "".join(" ".join(f"{x:.12g}" for x in row) + "\n" for row in np.atleast_2d(m))


def load_matrix(text: str) -> np.ndarray:
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(x) for x in line.split()])
        except ValueError:
            raise MalformedLine("non-numeric matrix entry", line_no) from None
        if len(rows[-1]) != len(rows[0]):
            raise DimensionMismatch("ragged matrix row", line_no)
    if not rows:
        raise EmptyInput("empty matrix")
    m = np.asarray(rows)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix is {m.shape[0]}x{m.shape[1]}, expected square")
    return m
