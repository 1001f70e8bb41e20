"""End-to-end diarization: embeddings (+ optional visual/textual evidence)
to a speaker-labeled `Diarization`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster import ClusterConfig, build_affinity, spectral_cluster_info
from .corpus import Diarization, Segment, TextRecord, Turn, VisualRecord, sort_segments
from .errors import DimensionMismatch, EvidenceWithoutModality
from .fusion import (
    FusionConfig,
    adjust_affinity,
    e2cp_propagate,
    merge_constraints,
    textual_constraints,
    visual_constraints,
)

MODALITIES = ("audio", "visual", "textual")


@dataclass(frozen=True)
class PipelineConfig:
    window: float = 1.5
    shift: float = 0.75
    merge_gap: float = 0.25
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    modalities: frozenset = frozenset(MODALITIES)

    def __post_init__(self):
        mods = frozenset(self.modalities)
        object.__setattr__(self, "modalities", mods)
        if not 0 < self.shift <= self.window:
            raise ValueError("need 0 < shift <= window")
        if self.merge_gap < 0:
            raise ValueError("merge_gap must be >= 0")
        if "audio" not in mods:
            raise ValueError("audio must be among the modalities")
        if not mods <= set(MODALITIES):
            raise ValueError(f"unknown modalities {sorted(mods - set(MODALITIES))}")


def subsegment(segs: Sequence[Segment], cfg: PipelineConfig = PipelineConfig()) -> list[Segment]:
    """Tile each segment with ``window``-long windows every ``shift`` seconds.

    The last window is right-aligned to the segment end; segments no longer
    than a window pass through.
    """
    out = []
    for seg in segs:
        if seg.duration <= cfg.window + 1e-9:
            out.append(seg)
            continue
        start = seg.start
        while True:
            if start + cfg.window >= seg.end - 1e-9:
                out.append(Segment(seg.recording_id, seg.end - cfg.window, seg.end, seg.speaker))
                break
            out.append(Segment(seg.recording_id, start, start + cfg.window, seg.speaker))
            start += cfg.shift
    return sort_segments(out)


def merge_adjacent(d: Diarization, gap: float) -> Diarization:
    """Join consecutive same-speaker entries separated by at most ``gap``."""
    merged: list[list] = []
    for t in d.entries:
        last = merged[-1] if merged else None
        if last is not None and last[0] == t.speaker and t.start - last[2] <= gap + 1e-9:
            last[2] = max(last[2], t.end)
        else:
            merged.append([t.speaker, t.start, t.end])
    return Diarization(d.recording_id, tuple(Turn(*m) for m in merged))


def resolve_overlaps(spans):
    """Give every instant to the covering span whose centre is nearest.

    ``spans`` are ``(speaker, start, end)``; the result covers the same time
    support without overlaps. For two equal windows the cut falls at the
    middle of their overlap.
    """
    if not spans:
        return []
    starts = np.array([s[1] for s in spans])
    ends = np.array([s[2] for s in spans])
    centers = 0.5 * (starts + ends)
    # bisectors between overlapping spans are where ownership can switch
    order = np.argsort(starts, kind="stable")
    cuts = []
    for a, i in enumerate(order):
        for j in order[a + 1:]:
            if starts[j] >= ends[i]:
                break
            cuts.append(0.5 * (centers[i] + centers[j]))
    bounds = np.unique(np.concatenate([starts, ends, cuts]))
    lo, hi = bounds[:-1], bounds[1:]
    mid = 0.5 * (lo + hi)
    cover = (starts[None, :] <= mid[:, None]) & (mid[:, None] < ends[None, :])
    dist = np.where(cover, np.abs(centers[None, :] - mid[:, None]), np.inf)
    owner = np.argmin(dist, axis=1)
    covered = cover.any(axis=1)
    return [(spans[o][0], float(a), float(b))
            for a, b, o, c in zip(lo, hi, owner.tolist(), covered) if c]


def constraint_matrix(segs, visual, textual, cfg: PipelineConfig):
    """Merged constraints for the enabled modalities (None if nothing applies)."""
    zs = []
    if visual is not None:
        if "visual" in cfg.modalities:
            zs.append(visual_constraints(visual, segs, cfg.fusion))
        elif len(visual):
            warnings.warn(EvidenceWithoutModality("visual evidence ignored"), stacklevel=3)
    if textual is not None:
        if "textual" in cfg.modalities:
            zs.append(textual_constraints(textual, segs, cfg.fusion))
        elif len(textual):
            warnings.warn(EvidenceWithoutModality("textual evidence ignored"), stacklevel=3)
    if not zs:
        return None
    return zs[0] if len(zs) == 1 else merge_constraints(zs[0], zs[1])


def diarize_with_info(segs: Sequence[Segment], emb: np.ndarray,
                      visual: Sequence[VisualRecord] | None = None,
                      textual: Sequence[TextRecord] | None = None,
                      cfg: PipelineConfig = PipelineConfig(),
                      num_speakers: int | None = None):
    """Run the pipeline; returns ``(diarization, info)``.

    ``info`` carries the speaker count, the Laplacian spectrum of the
    clustered graph, and must-/cannot-link counts of the merged constraints.
    """
    segs = list(segs)
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    if len(segs) != emb.shape[0]:
        raise DimensionMismatch(f"{len(segs)} segments vs {emb.shape[0]} embeddings")
    if not segs:
        raise ValueError("no segments")
    order = sorted(range(len(segs)), key=lambda i: (segs[i].start, segs[i].end))
    segs = [segs[i] for i in order]
    emb = emb[order]
    rec = segs[0].recording_id

    w = build_affinity(emb, cfg.cluster)
    z = constraint_matrix(segs, visual, textual, cfg)
    info = {"recording": rec, "segments": len(segs), "must_link": 0, "cannot_link": 0}
    if z is not None and np.any(z):
        iu = np.triu_indices(len(segs), 1)
        info["must_link"] = int(np.sum(z[iu] > 0))
        info["cannot_link"] = int(np.sum(z[iu] < 0))
        w = adjust_affinity(w, e2cp_propagate(w, z, cfg.fusion))

    labels, k, eigenvalues = spectral_cluster_info(w, num_speakers, cfg.cluster)
    names = {}
    spans = []
    for seg, lab in zip(segs, labels.tolist()):
        spk = names.setdefault(lab, f"spk{len(names)}")
        spans.append((spk, seg.start, seg.end))
    spans = resolve_overlaps(spans)
    d = merge_adjacent(Diarization(rec, tuple(Turn(*s) for s in spans)), cfg.merge_gap)
    info["k"] = int(len(names))
    info["eigenvalues"] = [float(v) for v in eigenvalues[: min(len(eigenvalues), 20)]]
    return d, info


def diarize(segs, emb, visual=None, textual=None, cfg: PipelineConfig = PipelineConfig(),
            num_speakers=None) -> Diarization:
    return diarize_with_info(segs, emb, visual, textual, cfg, num_speakers)[0]
