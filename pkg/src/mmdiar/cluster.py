"""Affinity graphs and clustering: normalized-Laplacian spectral clustering
with eigengap speaker counting, seeded k-means++, and average-linkage AHC.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IsolatedNode

# relative slack when comparing eigengaps, so float noise does not break ties
GAP_TIE_TOL = 1e-10


@dataclass(frozen=True)
class ClusterConfig:
    max_speakers: int = 15
    eigengap_min_k: int = 2
    kmeans_restarts: int = 10
    kmeans_seed: int = 7
    ahc_threshold: float = 0.7
    prune_percentile: float | None = None

    def __post_init__(self):
        if self.max_speakers < 1:
            raise ValueError("max_speakers must be >= 1")
        if self.eigengap_min_k < 1:
            raise ValueError("eigengap_min_k must be >= 1")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")
        if self.prune_percentile is not None and not 0 < self.prune_percentile < 100:
            raise ValueError("prune_percentile must lie in (0, 100)")


def relabel_by_first_appearance(labels) -> np.ndarray:
    labels = np.asarray(labels)
    mapping = {}
    out = np.empty(labels.shape, dtype=int)
    for i, lab in enumerate(labels.tolist()):
        out[i] = mapping.setdefault(lab, len(mapping))
    return out


def build_affinity(emb: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> np.ndarray:
    """Cosine affinity rescaled to [0, 1]: W = (1 + cos) / 2, unit diagonal."""
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    cos = np.clip(emb @ emb.T, -1.0, 1.0)
    w = 0.5 * (1.0 + cos)
    w = 0.5 * (w + w.T)
    n = w.shape[0]
    if cfg.prune_percentile is not None and n > 1:
        off = ~np.eye(n, dtype=bool)
        cut = np.percentile(w[off], cfg.prune_percentile)
        w = np.where(off & (w < cut), 0.0, w)
        w = np.maximum(w, w.T)
    np.fill_diagonal(w, 1.0)
    return w


def normalized_adjacency(w: np.ndarray) -> np.ndarray:
    """D^-1/2 W D^-1/2 on the symmetrized matrix."""
    w = 0.5 * (w + w.T)
    deg = w.sum(axis=1)
    if np.any(deg < 1e-12):
        raise IsolatedNode(f"node {int(np.argmin(deg))} has zero degree")
    d = 1.0 / np.sqrt(deg)
    a = d[:, None] * w * d[None, :]
    return 0.5 * (a + a.T)


def laplacian_spectrum(w: np.ndarray):
    """Ascending eigenpairs of L = I - D^-1/2 W D^-1/2."""
    lap = np.eye(w.shape[0]) - normalized_adjacency(w)
    return scipy.linalg.eigh(lap)


def spectral_embed(w: np.ndarray, k: int):
    """First ``k`` Laplacian eigenvectors, rows scaled to unit norm.

    Returns ``(rows, eigenvalues)`` with the full ascending spectrum.
    """
    n = w.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    vals, vecs = laplacian_spectrum(w)
    return _unit_rows(vecs[:, :k]), vals


def _unit_rows(v):
    rows = v.copy()
    norms = np.linalg.norm(rows, axis=1)
    nz = norms > 1e-12
    rows[nz] /= norms[nz, None]
    return rows


def estimate_k(eigenvalues, cfg: ClusterConfig = ClusterConfig()) -> int:
    """Largest eigengap among k in [eigengap_min_k, min(max_speakers, N-1)].

    Gaps within a relative 1e-10 of the maximum count as ties; the smallest
    k wins.
    """
    ev = np.asarray(eigenvalues, dtype=float)
    n = ev.size
    if n < 2:
        raise ValueError("need at least two eigenvalues")
    hi = min(cfg.max_speakers, n - 1)
    lo = min(cfg.eigengap_min_k, hi)
    ks = np.arange(lo, hi + 1)
    gaps = ev[ks] - ev[ks - 1]
    best = gaps.max()
    tol = GAP_TIE_TOL * max(1.0, abs(best))
    return int(ks[np.flatnonzero(gaps >= best - tol)[0]])


def _kmeanspp_init(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _sq_dists(x, centers):
    return np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)


def _lloyd(x, centers, max_iter=300, tol=1e-8):
    k = centers.shape[0]
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        new = centers.copy()
        point_cost = d[np.arange(x.shape[0]), labels]
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(point_cost))
                new[c] = x[far]
                point_cost[far] = -1.0
        shift = np.max(np.sqrt(np.sum((new - centers) ** 2, axis=1)))
        centers = new
        if shift < tol:
            break
    d = _sq_dists(x, centers)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(x.shape[0]), labels].sum())
    return labels, inertia


def kmeans(rows: np.ndarray, k: int, cfg: ClusterConfig = ClusterConfig()) -> np.ndarray:
    """Best-of-restarts k-means++ / Lloyd clustering.

    Restart ``r`` is seeded with ``kmeans_seed + r``; the lowest inertia wins,
    earliest restart on ties. Labels are renumbered by first appearance, so
    fewer than ``k`` ids appear when the data has fewer distinct points.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if k == 1:
        return np.zeros(n, dtype=int)
    best_labels, best_inertia = None, np.inf
    for r in range(cfg.kmeans_restarts):
        rng = np.random.default_rng(cfg.kmeans_seed + r)
        labels, inertia = _lloyd(x, _kmeanspp_init(x, k, rng))
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return relabel_by_first_appearance(best_labels)


def spectral_cluster(w: np.ndarray, k: int | None = None,
                     cfg: ClusterConfig = ClusterConfig()) -> np.ndarray:
    labels, _, _ = spectral_cluster_info(w, k, cfg)
    return labels


def spectral_cluster_info(w, k=None, cfg=ClusterConfig()):
    """Like `spectral_cluster` but also returns ``(k, eigenvalues)``."""
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if n == 1:
        normalized_adjacency(w)
        return np.zeros(1, dtype=int), 1, np.zeros(1)
    vals, vecs = laplacian_spectrum(w)
    if k is None:
        k = estimate_k(vals, cfg)
    k = min(k, n)
    return kmeans(_unit_rows(vecs[:, :k]), k, cfg), k, vals


def ahc_cluster(emb: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> np.ndarray:
    """Average-linkage agglomeration on cosine distance.

    The closest pair of clusters is merged while its distance is at most
    ``ahc_threshold``. Clusters are identified by their smallest member index
    and ties go to the lexicographically smallest pair.
    """
    x = np.atleast_2d(np.asarray(emb, dtype=float))
    n = x.shape[0]
    dist = 1.0 - np.clip(x @ x.T, -1.0, 1.0)
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    owner = np.arange(n)
    lower = np.tril(np.ones((n, n), dtype=bool))
    for _ in range(n - 1):
        d = np.where(active[:, None] & active[None, :] & ~lower, dist, np.inf)
        # argmin returns the first (row-major) minimum: smallest (i, j) on ties
        i, j = divmod(int(np.argmin(d)), n)
        if not d[i, j] <= cfg.ahc_threshold:
            break
        # Lance-Williams update for average linkage
        merged = (sizes[i] * dist[i] + sizes[j] * dist[j]) / (sizes[i] + sizes[j])
        dist[i, :] = merged
        dist[:, i] = merged
        dist[i, i] = np.inf
        sizes[i] += sizes[j]
        active[j] = False
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        owner[owner == j] = i
    return relabel_by_first_appearance(owner)
