"""Synthetic conversations with all three modalities, and the modality
ablation harness (SC vs SC+E2CP over audio/visual/textual combinations).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Diarization, Segment, TextRecord, Turn, VisualRecord
from .errors import InfeasibleSeparation
from .metrics import DerBreakdown, MetricsConfig, compute_cpwer, compute_der, jer_per_speaker
from .pipeline import PipelineConfig, diarize, subsegment

CORRUPTIONS = ("mixed", "drop", "flip")


@dataclass(frozen=True)
class SynthSpec:
    """Generator knobs.

    ``sep`` is the exact pairwise angle between speaker centroids (radians)
    and ``noise`` the std of the Gaussian rotation angle applied to a
    centroid to draw one embedding.
    Evidence noise is the per-record corruption probability; ``corruption``
    picks drop, flip (wrong label / misplaced change point) or a 50/50 mix.
    """

    speakers: int = 3
    dim: int = 64
    sep: float = 0.3
    noise: float = 0.4
    duration: float = 90.0
    turn_mean: float = 6.0
    evidence_noise_visual: float = 0.0
    evidence_noise_textual: float = 0.0
    seed: int = 7
    min_turn: float = 1.0
    window: float = 1.5
    shift: float = 0.75
    corruption: str = "mixed"

    def __post_init__(self):
        if self.speakers < 2:
            raise ValueError("speakers must be >= 2")
        if self.dim < self.speakers:
            raise ValueError("dim must be >= speakers")
        if self.sep < 0 or self.noise < 0:
            raise ValueError("sep and noise must be >= 0")
        if not self.turn_mean > self.min_turn > 0:
            raise ValueError("need turn_mean > min_turn > 0")
        if self.duration < self.speakers * self.min_turn:
            raise ValueError("duration too short for one turn per speaker")
        for p in (self.evidence_noise_visual, self.evidence_noise_textual):
            if not 0.0 <= p <= 1.0:
                raise ValueError("evidence noise must lie in [0, 1]")
        if self.corruption not in CORRUPTIONS:
            raise ValueError(f"corruption must be one of {CORRUPTIONS}")


@dataclass
class Conversation:
    segments: list[Segment]
    embeddings: np.ndarray
    truth: Diarization
    visual: list[VisualRecord]
    textual: list[TextRecord]
    labels: np.ndarray  # true speaker index per segment


def speaker_centroids(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors with pairwise angle exactly ``sep``."""
    k = spec.speakers
    if spec.sep * (k - 1) > math.pi:
        raise InfeasibleSeparation(f"sep={spec.sep} too large for {k} speakers")
    c = math.cos(spec.sep)
    gram = np.full((k, k), c)
    np.fill_diagonal(gram, 1.0)
    vals, vecs = np.linalg.eigh(gram)
    coords = vecs * np.sqrt(np.clip(vals, 0.0, None))
    basis, _ = np.linalg.qr(rng.standard_normal((spec.dim, k)))
    cent = coords @ basis.T
    return cent / np.linalg.norm(cent, axis=1, keepdims=True)


def perturb(centroid: np.ndarray, noise: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rotate ``centroid`` by a N(0, noise^2) angle toward a random tangent direction."""
    g = rng.standard_normal((n, centroid.size))
    g -= np.outer(g @ centroid, centroid)
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    theta = noise * rng.standard_normal((n, 1))
    out = np.cos(theta) * centroid + np.sin(theta) * u
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def gen_embeddings(spec: SynthSpec, per_speaker: int = 20):
    """Balanced labeled embedding set: ``per_speaker`` rows per speaker."""
    rng = np.random.default_rng(spec.seed)
    cent = speaker_centroids(spec, rng)
    emb = np.vstack([perturb(cent[s], spec.noise, per_speaker, rng) for s in range(spec.speakers)])
    labels = np.repeat(np.arange(spec.speakers), per_speaker)
    return emb, labels


def _turn_sequence(spec: SynthSpec, rng: np.random.Generator):
    scale = spec.turn_mean - spec.min_turn
    for _ in range(1000):
        order = list(rng.permutation(spec.speakers))
        bounds = [0.0]
        speakers = []
        while bounds[-1] < spec.duration:
            if len(speakers) < len(order):
                spk = int(order[len(speakers)])
            else:
                spk = int(rng.choice([s for s in range(spec.speakers) if s != speakers[-1]]))
            speakers.append(spk)
            bounds.append(round(bounds[-1] + spec.min_turn + rng.exponential(scale), 3))
        bounds[-1] = round(spec.duration, 3)
        if bounds[-1] - bounds[-2] < spec.min_turn and len(speakers) > 1:
            speakers.pop()
            bounds.pop(-2)
        if len(set(speakers)) == spec.speakers:
            return speakers, bounds
    raise ValueError("could not place a turn for every speaker; increase duration")


def gen_conversation(spec: SynthSpec, recording_id: str | None = None) -> Conversation:
    """A synthetic recording: turns, subsegment embeddings, truth, evidence.

    Turns alternate between speakers with lengths ``min_turn`` plus an
    exponential (mean ``turn_mean`` overall) and tile ``[0, duration]``.
    """
    rng = np.random.default_rng(spec.seed)
    rec = recording_id or f"synth{spec.seed}"
    cent = speaker_centroids(spec, rng)
    speakers, bounds = _turn_sequence(spec, rng)
    turns = [Turn(f"S{s}", bounds[i], bounds[i + 1]) for i, s in enumerate(speakers)]
    truth = Diarization(rec, tuple(turns))

    cfg = PipelineConfig(window=spec.window, shift=spec.shift)
    labeled = [Segment(rec, t.start, t.end, t.speaker) for t in turns]
    subs = subsegment(labeled, cfg)
    labels = np.array([int(s.speaker[1:]) for s in subs])
    emb = np.empty((len(subs), spec.dim))
    for i, lab in enumerate(labels):
        emb[i] = perturb(cent[lab], spec.noise, 1, rng)[0]
    segments = [Segment(rec, s.start, s.end) for s in subs]

    visual = []
    for t, s in zip(turns, speakers):
        face = s
        if rng.random() < spec.evidence_noise_visual:
            mode = _corruption(spec, rng)
            if mode == "drop":
                continue
            face = int(rng.choice([o for o in range(spec.speakers) if o != s]))
        visual.append(VisualRecord(t.start, t.end, f"face{face}", 1.0))

    textual = [TextRecord(0.0, "dialogue_on", 1.0)]
    for b in bounds[1:-1]:
        time = b
        if rng.random() < spec.evidence_noise_textual:
            mode = _corruption(spec, rng)
            if mode == "drop":
                continue
            t = turns[int(rng.integers(len(turns)))]
            time = round(float(rng.uniform(t.start + 0.25 * t.duration, t.end - 0.25 * t.duration)), 3)
        textual.append(TextRecord(time, "turn_change", 1.0))
    textual.append(TextRecord(round(spec.duration, 3), "dialogue_off", 1.0))
    textual.sort(key=lambda r: r.time)
    return Conversation(segments, emb, truth, visual, textual, labels)


def _corruption(spec, rng):
    if spec.corruption == "mixed":
        return "drop" if rng.random() < 0.5 else "flip"
    return spec.corruption


def transcripts_from_diarization(d: Diarization, duration: float) -> dict[str, list[str]]:
    """One token per second of audio, attributed to whoever speaks at its midpoint."""
    words: dict[str, list[str]] = {}
    for n in range(int(math.floor(duration))):
        t = n + 0.5
        for turn in d.entries:
            if turn.start <= t < turn.end:
                words.setdefault(turn.speaker, []).append(f"w{n}")
                break
    return words


ABLATION_ROWS = (
    ("SC", "Audio", frozenset({"audio"})),
    ("SC+E2CP", "Audio+Visual", frozenset({"audio", "visual"})),
    ("SC+E2CP", "Audio+Textual", frozenset({"audio", "textual"})),
    ("SC+E2CP", "Audio+Visual+Textual", frozenset({"audio", "visual", "textual"})),
)


@dataclass
class AblationReport:
    rows: tuple = ABLATION_ROWS
    # per row: list (one per recording) of dicts with der/jer/cpwer pieces
    results: dict = field(default_factory=dict)

    def recording_der(self, modality: str) -> list[float]:
        return [r["der"].der for r in self.results[modality]]

    def summary(self) -> list[dict]:
        out = []
        for method, modality, _ in self.rows:
            res = self.results[modality]
            der = sum((r["der"] for r in res), DerBreakdown(0.0, 0.0, 0.0, 0.0))
            jers = [j for r in res for j in r["jer"]]
            row = {"method": method, "modality": modality, "der": der.der,
                   "mean_recording_der": float(np.mean([r["der"].der for r in res])),
                   "jer": float(np.mean(jers))}
            if all("cp_edits" in r for r in res):
                row["cpwer"] = sum(r["cp_edits"] for r in res) / sum(r["cp_words"] for r in res)
            out.append(row)
        return out

    def to_table(self) -> str:
        lines = [f"{'Methods':<9}{'Modality':<22}{'DER(%)':>8}{'JER(%)':>8}{'cpWER(%)':>10}"]
        for row in self.summary():
            cp = f"{100 * row['cpwer']:10.2f}" if "cpwer" in row else f"{'-':>10}"
            lines.append(f"{row['method']:<9}{row['modality']:<22}"
                         f"{100 * row['der']:8.2f}{100 * row['jer']:8.2f}{cp}")
        return "\n".join(lines) + "\n"


def evaluate_recording(spec: SynthSpec, cfg: PipelineConfig, metrics: MetricsConfig,
                       transcripts: bool = True) -> dict:
    conv = gen_conversation(spec)
    ref_words = transcripts_from_diarization(conv.truth, spec.duration) if transcripts else None
    out = {}
    for _, modality, mods in ABLATION_ROWS:
        run_cfg = replace(cfg, modalities=mods)
        hyp = diarize(conv.segments, conv.embeddings,
                      conv.visual if "visual" in mods else None,
                      conv.textual if "textual" in mods else None, run_cfg)
        res = {"der": compute_der(conv.truth, hyp, metrics),
               "jer": list(jer_per_speaker(conv.truth, hyp).values())}
        if ref_words is not None:
            hyp_words = transcripts_from_diarization(hyp, spec.duration)
            _, pairs = compute_cpwer(ref_words, hyp_words)
            res["cp_edits"] = sum(pairs.values())
            res["cp_words"] = sum(len(w) for w in ref_words.values())
        out[modality] = res
    return out


def _evaluate_args(args):
    return evaluate_recording(*args)


def run_ablation(spec: SynthSpec, n_recordings: int, cfg: PipelineConfig = PipelineConfig(),
                 metrics: MetricsConfig = MetricsConfig(), transcripts: bool = True,
                 jobs: int = 1) -> AblationReport:
    """Diarize ``n_recordings`` synthetic conversations under every modality row.

    Recording ``i`` is generated with seed ``spec.seed + i``; results keep
    recording order for any ``jobs``.
    """
    if n_recordings < 1:
        raise ValueError("n_recordings must be >= 1")
    args = [(replace(spec, seed=spec.seed + i), cfg, metrics, transcripts)
            for i in range(n_recordings)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rec = list(pool.map(_evaluate_args, args))
    else:
        per_rec = [_evaluate_args(a) for a in args]
    report = AblationReport()
    for _, modality, _ in ABLATION_ROWS:
        report.results[modality] = [r[modality] for r in per_rec]
    return report
