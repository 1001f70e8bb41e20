"""Diarization metrics: DER with optimal speaker mapping, JER, cpWER.

DER is computed on exact intervals, never on frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import Diarization
from .errors import EmptyReference


@dataclass(frozen=True)
class MetricsConfig:
    collar: float = 0.25

    def __post_init__(self):
        if self.collar < 0:
            raise ValueError("collar must be >= 0")


@dataclass(frozen=True)
class DerBreakdown:
    missed: float
    false_alarm: float
    confusion: float
    scored: float

    @property
    def der(self) -> float:
        return (self.missed + self.false_alarm + self.confusion) / self.scored

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(self.missed + other.missed, self.false_alarm + other.false_alarm,
                            self.confusion + other.confusion, self.scored + other.scored)


def _union(intervals):
    out = []
    for s, e in sorted(intervals):
        if out and s <= out[-1][1]:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [tuple(x) for x in out]


def speaker_support(d: Diarization) -> dict[str, list[tuple[float, float]]]:
    """Per-speaker union of speaking intervals, speakers in first-appearance order."""
    raw: dict[str, list] = {}
    for t in d.entries:
        raw.setdefault(t.speaker, []).append((t.start, t.end))
    return {spk: _union(iv) for spk, iv in raw.items()}


def _intersection_length(a, b):
    total, i, j = 0.0, 0, 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def _length(iv):
    return sum(e - s for s, e in iv)


def overlap_matrix(ref: Diarization, hyp: Diarization):
    rs, hs = speaker_support(ref), speaker_support(hyp)
    m = np.array([[_intersection_length(rs[r], hs[h]) for h in hs] for r in rs])
    return list(rs), list(hs), m.reshape(len(rs), len(hs))


def optimal_speaker_mapping(ref: Diarization, hyp: Diarization) -> dict[str, str]:
    """hyp speaker -> ref speaker maximizing total overlapped duration.

    Pairs with zero overlap are left out, so the mapping can be partial.
    """
    ref_spk, hyp_spk, m = overlap_matrix(ref, hyp)
    if m.size == 0:
        return {}
    rows, cols = linear_sum_assignment(m, maximize=True)
    return {hyp_spk[c]: ref_spk[r] for r, c in zip(rows, cols) if m[r, c] > 0}


def _activity(support, names, mids):
    act = np.zeros((mids.size, len(names)), dtype=bool)
    for j, name in enumerate(names):
        for s, e in support[name]:
            act[:, j] |= (mids >= s) & (mids < e)
    return act


def compute_der(ref: Diarization, hyp: Diarization, cfg: MetricsConfig = MetricsConfig()) -> DerBreakdown:
    """Missed, false-alarm and confusion time over scored reference speech.

    A collar of +/- ``cfg.collar`` around every reference boundary is not
    scored. Overlapped reference speech is scored: a region with r reference
    speakers needs r correctly mapped hypothesis speakers.
    """
    if not ref.entries:
        raise EmptyReference("reference diarization is empty")
    rs, hs = speaker_support(ref), speaker_support(hyp)
    ref_names, hyp_names = list(rs), list(hs)
    mapping = optimal_speaker_mapping(ref, hyp)

    # collars sit on every reference entry edge, even where same-speaker entries abut
    ref_bounds = np.array([b for t in ref.entries for b in (t.start, t.end)])
    points = [ref_bounds, [b for iv in hs.values() for seg in iv for b in seg]]
    if cfg.collar > 0:
        points += [ref_bounds - cfg.collar, ref_bounds + cfg.collar]
    bounds = np.unique(np.concatenate([np.asarray(p, dtype=float) for p in points]))
    lo, hi = bounds[:-1], bounds[1:]
    mids, dur = 0.5 * (lo + hi), hi - lo

    scored = np.ones(mids.size, dtype=bool)
    if cfg.collar > 0:
        for b in ref_bounds:
            scored &= ~((mids > b - cfg.collar) & (mids < b + cfg.collar))

    ref_act = _activity(rs, ref_names, mids)
    hyp_act = _activity(hs, hyp_names, mids)
    n_ref = ref_act.sum(axis=1)
    n_hyp = hyp_act.sum(axis=1)
    n_correct = np.zeros(mids.size, dtype=int)
    for h, r in mapping.items():
        n_correct += ref_act[:, ref_names.index(r)] & hyp_act[:, hyp_names.index(h)]

    w = dur * scored
    total = float(np.sum(w * n_ref))
    if total <= 0:
        raise EmptyReference("no scorable reference speech outside the collars")
    return DerBreakdown(
        missed=float(np.sum(w * np.maximum(n_ref - n_hyp, 0))),
        false_alarm=float(np.sum(w * np.maximum(n_hyp - n_ref, 0))),
        confusion=float(np.sum(w * (np.minimum(n_ref, n_hyp) - n_correct))),
        scored=total,
    )


def jer_per_speaker(ref: Diarization, hyp: Diarization) -> dict[str, float]:
    if not ref.entries:
        raise EmptyReference("reference diarization is empty")
    rs, hs = speaker_support(ref), speaker_support(hyp)
    inverse = {r: h for h, r in optimal_speaker_mapping(ref, hyp).items()}
    out = {}
    for r, r_iv in rs.items():
        h = inverse.get(r)
        if h is None:
            out[r] = 1.0
            continue
        inter = _intersection_length(r_iv, hs[h])
        union = _length(r_iv) + _length(hs[h]) - inter
        out[r] = 1.0 - inter / union
    return out


def compute_jer(ref: Diarization, hyp: Diarization) -> float:
    """Mean over reference speakers of 1 - IoU with the mapped hyp speaker."""
    per = jer_per_speaker(ref, hyp)
    return float(np.mean(list(per.values())))


def edit_distance(ref: list, hyp: list) -> int:
    """Levenshtein distance between token sequences (unit costs)."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def compute_cpwer(ref: dict[str, list[str]], hyp: dict[str, list[str]]):
    """Concatenated minimum-permutation WER for one recording.

    Returns ``(cpwer, pairs)`` where ``pairs`` maps each assigned
    ``(ref_speaker, hyp_speaker)`` to its edit count; ``None`` stands for a
    padding speaker with no words.
    """
    ref_spk = [s for s in ref if ref[s]]
    n_words = sum(len(ref[s]) for s in ref_spk)
    if n_words == 0:
        raise EmptyReference("reference transcript has no words")
    hyp_spk = list(hyp)
    size = max(len(ref_spk), len(hyp_spk))
    rows = ref_spk + [None] * (size - len(ref_spk))
    cols = hyp_spk + [None] * (size - len(hyp_spk))
    cost = np.zeros((size, size), dtype=int)
    for i, r in enumerate(rows):
        for j, h in enumerate(cols):
            cost[i, j] = edit_distance(ref.get(r, []) if r else [], hyp.get(h, []) if h else [])
    ri, ci = linear_sum_assignment(cost)
    pairs = {(rows[i], cols[j]): int(cost[i, j]) for i, j in zip(ri, ci)}
    return sum(pairs.values()) / n_words, pairs


def adjusted_rand_index(a, b) -> float:
    """ARI between two labelings of the same items."""
    a = np.unique(np.asarray(a), return_inverse=True)[1]
    b = np.unique(np.asarray(b), return_inverse=True)[1]
    n = a.size
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)

    def pairs(x):
        return float(np.sum(x * (x - 1) / 2))

    index = pairs(table)
    sa, sb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sa * sb / total if total else 0.0
    max_index = 0.5 * (sa + sb)
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)
