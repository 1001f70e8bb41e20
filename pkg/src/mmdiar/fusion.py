"""Pairwise constraints from visual and textual evidence, E2CP propagation,
and constraint-adjusted affinities.

Constraint matrices hold +v for must-link with confidence v, -v for
cannot-link, 0 for unknown.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .cluster import normalized_adjacency
from .corpus import Segment, TextRecord, VisualRecord
from .errors import DimensionMismatch, SingularSystem

TOUCH_TOL = 0.25  # change-point slack around a shared boundary, seconds
WEAK_MUST_LINK = 0.5  # adjacent segments with no detected change


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.25
    visual_overlap_min: float = 0.5
    text_gap_max: float = 1.0
    dialogue_gating: bool = True

    def __post_init__(self):
        # alpha = 0 is accepted as the no-propagation edge case
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0.0 < self.visual_overlap_min <= 1.0:
            raise ValueError("visual_overlap_min must lie in (0, 1]")
        if self.text_gap_max < 0:
            raise ValueError("text_gap_max must be >= 0")


def _union_length(intervals):
    total, cur_s, cur_e = 0.0, None, None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def attach_faces(visual: Sequence[VisualRecord], segs: Sequence[Segment],
                 cfg: FusionConfig = FusionConfig()):
    """Face cluster and confidence per segment, or ``None`` if unattached.

    A cluster attaches when its records cover at least ``visual_overlap_min``
    of the segment; the best-covered cluster wins (name order breaks ties).
    Confidence is the overlap-weighted mean of the covering records.
    """
    out = []
    for seg in segs:
        clipped: dict[str, list] = {}
        for r in visual:
            s, e = max(r.start, seg.start), min(r.end, seg.end)
            if e > s:
                clipped.setdefault(r.face_cluster, []).append((s, e, r.confidence))
        best = None
        for face in sorted(clipped):
            parts = clipped[face]
            cover = _union_length([(s, e) for s, e, _ in parts]) / seg.duration
            if cover + 1e-9 < cfg.visual_overlap_min:
                continue
            if best is None or cover > best[1] + 1e-12:
                weight = sum(e - s for s, e, _ in parts)
                conf = sum((e - s) * c for s, e, c in parts) / weight
                best = (face, cover, conf)
        out.append(None if best is None else (best[0], best[2]))
    return out


def visual_constraints(visual: Sequence[VisualRecord], segs: Sequence[Segment],
                       cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    n = len(segs)
    z = np.zeros((n, n))
    att = attach_faces(visual, segs, cfg)
    idx = [i for i, a in enumerate(att) if a is not None]
    for a, i in enumerate(idx):
        fi, ci = att[i]
        for j in idx[a + 1:]:
            fj, cj = att[j]
            v = min(ci, cj)
            z[i, j] = z[j, i] = v if fi == fj else -v
    return z


def dialogue_spans(textual: Sequence[TextRecord]):
    """[on, off] spans; an unterminated ``dialogue_on`` runs to infinity."""
    spans, opened = [], None
    for r in sorted(textual, key=lambda r: r.time):
        if r.kind == "dialogue_on" and opened is None:
            opened = r.time
        elif r.kind == "dialogue_off" and opened is not None:
            spans.append((opened, r.time))
            opened = None
    if opened is not None:
        spans.append((opened, np.inf))
    return spans


def _boundary_window(a: Segment, b: Segment):
    lo, hi = min(a.end, b.start), max(a.end, b.start)
    if hi - lo < 1e-6:  # segments touch
        lo, hi = lo - TOUCH_TOL, hi + TOUCH_TOL
    return lo, hi


def textual_constraints(textual: Sequence[TextRecord], segs: Sequence[Segment],
                        cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """Constraints between temporally adjacent segments.

    A turn change inside the boundary window of a pair (gap, overlap, or
    +/- 0.25 s around a shared boundary) gives a cannot-link weighted by its
    confidence; no change gives a weak must-link of 0.5. With dialogue gating
    only pairs whose boundary lies inside a dialogue span are constrained.
    """
    n = len(segs)
    z = np.zeros((n, n))
    changes = [r for r in textual if r.kind == "turn_change"]
    spans = dialogue_spans(textual)
    for i in range(n - 1):
        a, b = segs[i], segs[i + 1]
        if b.start - a.end > cfg.text_gap_max:
            continue
        lo, hi = _boundary_window(a, b)
        if cfg.dialogue_gating:
            mid = 0.5 * (a.end + b.start)
            if not any(s <= mid <= e for s, e in spans):
                continue
        hits = [r.confidence for r in changes if lo <= r.time <= hi]
        v = -max(hits) if hits else WEAK_MUST_LINK
        z[i, i + 1] = z[i + 1, i] = v
    return z


def merge_constraints(zv: np.ndarray, zt: np.ndarray) -> np.ndarray:
    """Combine two constraint matrices; opposite-signed entries abstain (0)."""
    zv = np.asarray(zv, dtype=float)
    zt = np.asarray(zt, dtype=float)
    if zv.shape != zt.shape:
        raise DimensionMismatch(f"{zv.shape} vs {zt.shape}")
    out = np.where(np.abs(zt) > np.abs(zv), zt, zv)
    out[(zv * zt) < 0] = 0.0
    np.fill_diagonal(out, 0.0)
    return np.clip(out, -1.0, 1.0)


def e2cp_propagate(w: np.ndarray, z: np.ndarray, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """Exhaustive and efficient constraint propagation, closed form.

    F = (1 - a)^2 (I - a S)^-1 Z (I - a S)^-1 with S = D^-1/2 W D^-1/2,
    then clamped to [-1, 1] with a zero diagonal.
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if w.shape != z.shape:
        raise DimensionMismatch(f"{w.shape} vs {z.shape}")
    alpha = cfg.alpha
    s = normalized_adjacency(w)
    a = np.eye(w.shape[0]) - alpha * s
    try:
        factor = scipy.linalg.cho_factor(a)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(str(e)) from None
    x = scipy.linalg.cho_solve(factor, z)
    if z.size and np.max(np.abs(a @ x - z)) > 1e-8:
        raise SingularSystem("residual of (I - aS) X = Z above 1e-8")
    # a is symmetric, so Z A^-1 = (A^-1 Z^T)^T
    f = (1.0 - alpha) ** 2 * scipy.linalg.cho_solve(factor, x.T).T
    f = 0.5 * (f + f.T)
    np.fill_diagonal(f, 0.0)
    return np.clip(f, -1.0, 1.0)


def adjust_affinity(w: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Pull affinities toward 1 on must-links and toward 0 on cannot-links."""
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    if w.shape != f.shape:
        raise DimensionMismatch(f"{w.shape} vs {f.shape}")
    # W + F(1 - W) is 1 - (1 - F)(1 - W) written so F = 0 leaves W bit-exact
    out = np.where(f >= 0, w + f * (1.0 - w), (1.0 + f) * w)
    out = np.clip(0.5 * (out + out.T), 0.0, 1.0)
    np.fill_diagonal(out, 1.0)
    return out
