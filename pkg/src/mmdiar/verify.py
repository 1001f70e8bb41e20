"""Cosine trial scoring, adaptive s-norm, EER and minDCF."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TrialScore
from .errors import DegenerateCohort, DimensionMismatch, MissingClass


@dataclass(frozen=True)
class VerificationConfig:
    p_target: float = 0.01
    c_miss: float = 1.0
    c_fa: float = 1.0
    asnorm_top_k: int = 300

    def __post_init__(self):
        if not 0.0 < self.p_target < 1.0:
            raise ValueError("p_target must lie in (0, 1)")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise ValueError("costs must be positive")
        if self.asnorm_top_k < 1:
            raise ValueError("asnorm_top_k must be positive")


def cosine_score(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def asnorm_score(raw: float, enroll_cohort, test_cohort, top_k: int) -> float:
    """Adaptive symmetric score normalization.

    Each side is standardized against the mean and (population) std of its
    ``top_k`` highest cohort scores; the two z-scores are averaged.
    """
    z = []
    for cohort in (enroll_cohort, test_cohort):
        c = np.asarray(cohort, dtype=float)
        if c.size == 0:
            raise DegenerateCohort("empty cohort")
        k = min(top_k, c.size)
        top = np.sort(c)[::-1][:k]
        std = top.std()
        if std < 1e-12:
            raise DegenerateCohort(f"cohort std {std:.3g} below 1e-12")
        z.append((raw - top.mean()) / std)
    return 0.5 * (z[0] + z[1])


def split_scores(trials: Sequence[TrialScore]):
    scores = np.array([t.score for t in trials], dtype=float)
    labels = np.array([t.is_target for t in trials], dtype=bool)
    tar, non = scores[labels], scores[~labels]
    if tar.size == 0 or non.size == 0:
        raise MissingClass("need at least one target and one nontarget trial")
    return tar, non


def operating_points(tar, non):
    """Miss and false-accept rates at every distinct score threshold.

    Accept iff ``score >= threshold``. A final ``+inf`` threshold (reject all)
    closes the curve at (Pmiss, Pfa) = (1, 0).
    """
    tar = np.sort(np.asarray(tar, dtype=float))
    non = np.sort(np.asarray(non, dtype=float))
    thr = np.append(np.unique(np.concatenate([tar, non])), np.inf)
    p_miss = np.searchsorted(tar, thr, side="left") / tar.size
    p_fa = (non.size - np.searchsorted(non, thr, side="left")) / non.size
    return thr, p_miss, p_fa


def compute_eer(trials: Sequence[TrialScore]) -> tuple[float, float]:
    """Equal error rate and the threshold where it is reached.

    Between the last operating point with Pmiss < Pfa and the first with
    Pmiss >= Pfa the ROC step is interpolated linearly. The threshold is
    interpolated the same way (the lower one if the upper is ``+inf``).
    """
    tar, non = split_scores(trials)
    return eer_from_scores(tar, non)


def eer_from_scores(tar, non):
    thr, p_miss, p_fa = operating_points(tar, non)
    i = int(np.argmax(p_miss >= p_fa))  # always exists: last point is (1, 0)
    if p_miss[i] == p_fa[i] or i == 0:
        return float(p_miss[i]), float(thr[i])
    m0, f0, m1, f1 = p_miss[i - 1], p_fa[i - 1], p_miss[i], p_fa[i]
    lam = (f0 - m0) / ((m1 - m0) - (f1 - f0))
    eer = m0 + lam * (m1 - m0)
    t0, t1 = thr[i - 1], thr[i]
    threshold = t0 if not np.isfinite(t1) else t0 + lam * (t1 - t0)
    return float(eer), float(threshold)


def compute_min_dcf(trials: Sequence[TrialScore], cfg: VerificationConfig = VerificationConfig()):
    """Minimum normalized detection cost and its threshold.

    Thresholds run over all distinct scores plus ``+inf``; the lowest score
    already accepts everything, so it stands in for ``-inf``.
    """
    tar, non = split_scores(trials)
    return min_dcf_from_scores(tar, non, cfg)


def dcf_curve(tar, non, cfg: VerificationConfig):
    thr, p_miss, p_fa = operating_points(tar, non)
    p = cfg.p_target
    norm = min(p * cfg.c_miss, (1 - p) * cfg.c_fa)
    return thr, (p * cfg.c_miss * p_miss + (1 - p) * cfg.c_fa * p_fa) / norm


def min_dcf_from_scores(tar, non, cfg):
    thr, dcf = dcf_curve(tar, non, cfg)
    i = int(np.argmin(dcf))
    return float(dcf[i]), float(thr[i])


def normalized_dcf_at(trials: Sequence[TrialScore], threshold: float,
                      cfg: VerificationConfig = VerificationConfig()) -> float:
    tar, non = split_scores(trials)
    p = cfg.p_target
    norm = min(p * cfg.c_miss, (1 - p) * cfg.c_fa)
    p_miss = np.mean(tar < threshold)
    p_fa = np.mean(non >= threshold)
    return float((p * cfg.c_miss * p_miss + (1 - p) * cfg.c_fa * p_fa) / norm)
