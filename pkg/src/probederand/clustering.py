"""Two-stage burst clustering.

Stage one runs DBSCAN over min-max-normalized IE fingerprints to pool
bursts with matching capabilities; stage two splits each pool with
cosine k-means over the padded channel vectors, choosing k by an elbow
rule over the distortion curve whose crossing threshold adapts to the
pool's internal cosine similarity.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import Burst, normalize_ie_matrix, pad_matrix
from .pcap import mac_to_str
from .randomness import DEFAULT_SEED, STREAM_KMEANS, substream

NOISE = -1

DISTORTION_SQUARED = "squared"
DISTORTION_LINEAR = "linear"


@dataclass(frozen=True)
class DbscanConfig:
    """Coarse-stage neighborhood radius and density threshold."""

    eps: float = 0.05
    min_pts: int = 10

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be at least 1")


@dataclass(frozen=True)
class KmeansConfig:
    """Fine-stage k-means and elbow-rule tunables.

    ``distortion`` selects the per-point penalty: squared cosine
    distance (default) or plain cosine distance.
    """

    k_max: int = 5
    max_iterations: int = 100
    restarts: int = 8
    seed: int = DEFAULT_SEED
    threshold_base: float = 0.4
    threshold_span: float = 0.6
    distortion: str = DISTORTION_SQUARED

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("iterations and restarts must be positive")
        if self.threshold_base + self.threshold_span > 1.0 + 1e-9:
            raise ValueError("threshold_base + threshold_span must not exceed 1")
        if self.distortion not in (DISTORTION_SQUARED, DISTORTION_LINEAR):
            raise ValueError(f"unknown distortion rule {self.distortion!r}")


@dataclass(frozen=True)
class ClusterLabeling:
    """Assignment of burst ids to contiguous cluster labels (NOISE = -1)."""

    assignments: dict[int, int]
    n_clusters: int

    def labels_for(self, burst_ids: Sequence[int]) -> list[int]:
        return [self.assignments[b] for b in burst_ids]


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """dot(a, b) / (|a||b|), guarding against zero vectors."""
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError("vectors must have the same length")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based labels over Euclidean distance.

    A point is core iff at least ``min_pts`` points (itself included)
    lie within ``eps``. Clusters are grown breadth-first from core
    points in ascending scan order, so border points attach to the
    first cluster that reaches them.
    """
    data = np.asarray(points, dtype=float)
    n = data.shape[0]
    if n <= 1024:
        diff = data[:, None, :] - data[None, :, :]
        squared = (diff * diff).sum(axis=2)
    else:
        # avoid the n x n x dims intermediate on large captures
        sq = (data * data).sum(axis=1)
        squared = sq[:, None] + sq[None, :] - 2.0 * (data @ data.T)
        np.maximum(squared, 0.0, out=squared)
    within = squared <= eps * eps
    core = within.sum(axis=1) >= min_pts

    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = cluster
        frontier = deque([seed])
        while frontier:
            point = frontier.popleft()
            if not core[point]:
                continue
            for neighbor in np.flatnonzero(within[point]):
                if labels[neighbor] == NOISE:
                    labels[neighbor] = cluster
                    frontier.append(neighbor)
        cluster += 1
    return labels


def dbscan(
    points: np.ndarray,
    config: DbscanConfig,
    ids: Optional[Sequence[int]] = None,
) -> ClusterLabeling:
    """DBSCAN over normalized feature rows, keyed by ``ids`` (row index
    by default; callers pass burst ids in ascending order)."""
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("expected a non-empty point matrix")
    labels = dbscan_labels(data, config.eps, config.min_pts)
    keys = list(ids) if ids is not None else list(range(len(labels)))
    if len(keys) != len(labels):
        raise ValueError("ids must parallel point rows")
    n_clusters = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
    return ClusterLabeling({k: int(l) for k, l in zip(keys, labels)}, n_clusters)


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0):
        raise ValueError("rows must be nonzero to cluster by direction")
    return rows / norms[:, None]


def _seed_centers(unit: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted (D²) seeding over cosine distance."""
    n = unit.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = np.clip(1.0 - unit @ unit[chosen[0]], 0.0, None)
    for _ in range(1, k):
        weights = nearest * nearest
        total = float(weights.sum())
        if total <= 1e-12:
            pick = int(rng.integers(n))
        else:
            pick = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
            pick = min(pick, n - 1)
        chosen.append(pick)
        nearest = np.minimum(nearest, np.clip(1.0 - unit @ unit[pick], 0.0, None))
    return unit[chosen].copy()


def _distortion(own_similarity: np.ndarray, rule: str) -> float:
    gap = 1.0 - np.clip(own_similarity, -1.0, 1.0)
    if rule == DISTORTION_SQUARED:
        return float((gap * gap).sum())
    return float(gap.sum())


def _fix_empty_clusters(sims: np.ndarray, labels: np.ndarray, k: int) -> None:
    """Reseed each empty cluster with the row worst-fitted to its center."""
    taken: set[int] = set()
    for j in range(k):
        if np.any(labels == j):
            continue
        own = sims[np.arange(len(labels)), labels].copy()
        if taken:
            own[list(taken)] = np.inf
        worst = int(own.argmin())
        labels[worst] = j
        taken.add(worst)


def _update_centers(unit: np.ndarray, labels: np.ndarray, k: int, old: np.ndarray) -> np.ndarray:
    updated = old.copy()
    for j in range(k):
        members = unit[labels == j]
        if len(members):
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                updated[j] = mean / norm
    return updated


def _kmeans_single(
    unit: np.ndarray,
    k: int,
    config: KmeansConfig,
    rng: np.random.Generator,
    trace: Optional[list[float]],
) -> tuple[np.ndarray, np.ndarray, float]:
    n = unit.shape[0]
    centers = _seed_centers(unit, k, rng)
    best: Optional[tuple[np.ndarray, np.ndarray, float]] = None
    for _ in range(config.max_iterations):
        sims = unit @ centers.T
        labels = sims.argmax(axis=1)
        _fix_empty_clusters(sims, labels, k)
        distortion = _distortion(sims[np.arange(n), labels], config.distortion)
        # The spherical update optimizes the plain cosine gap; under the
        # squared metric it can overshoot, so keep the better iterate.
        if best is not None and distortion > best[2] + 1e-12:
            return best
        if trace is not None:
            trace.append(distortion)
        if best is not None and np.array_equal(labels, best[0]):
            return labels, centers, distortion
        best = (labels, centers, distortion)
        centers = _update_centers(unit, labels, k, centers)
    return best if best is not None else (np.zeros(n, dtype=int), centers, 0.0)


def spherical_kmeans(
    rows: np.ndarray,
    k: int,
    config: KmeansConfig,
    rng: Optional[np.random.Generator] = None,
    history: Optional[list[list[float]]] = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """k-means on the unit sphere, maximizing cosine similarity.

    Runs ``config.restarts`` seeded restarts and keeps the lowest
    distortion (earlier run wins ties). ``history``, when given,
    receives one per-iteration distortion trace per restart.
    """
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("expected a non-empty row matrix")
    if not 1 <= k <= data.shape[0]:
        raise ValueError(f"k={k} outside [1, {data.shape[0]}]")
    unit = _unit_rows(data)
    if rng is None:
        rng = substream(config.seed, STREAM_KMEANS)
    best: Optional[tuple[np.ndarray, np.ndarray, float]] = None
    for _ in range(config.restarts):
        trace: Optional[list[float]] = [] if history is not None else None
        result = _kmeans_single(unit, k, config, rng, trace)
        if history is not None:
            history.append(trace or [])
        if best is None or result[2] < best[2]:
            best = result
    assert best is not None
    return best


def dynamic_threshold(
    avg_similarity: float, base: float = 0.4, span: float = 0.6
) -> float:
    """Elbow crossing threshold adapted to a cluster's cohesion."""
    return base + span * (1.0 - max(0.0, avg_similarity))


# Total distortion drop below this is indistinguishable from the
# floating-point dust a curve over identical rows produces.
FLAT_CURVE_TOLERANCE = 1e-9


def elbow_select_k(distortions: Sequence[float], threshold: float) -> int:
    """Pick k from the distortion curve D(1..k_max).

    The curve is made non-increasing by running minima; the drops are
    normalized to sum to one and accumulated, and the smallest k >= 2
    whose cumulative drop reaches ``threshold`` wins. A flat curve, or
    a threshold no cumulative drop reaches, selects k = 1.
    """
    if len(distortions) == 0:
        raise ValueError("need at least one distortion value")
    floor = []
    running = float("inf")
    for value in distortions:
        running = min(running, float(value))
        floor.append(running)
    drops = [floor[i - 1] - floor[i] for i in range(1, len(floor))]
    total = sum(drops)
    if total <= FLAT_CURVE_TOLERANCE:
        return 1
    cumulative = 0.0
    for i, drop in enumerate(drops):
        cumulative += drop / total
        if cumulative >= threshold - 1e-12:
            return i + 2
    return 1


def average_pairwise_similarity(rows: np.ndarray) -> float:
    """Mean cosine similarity over unordered row pairs (1.0 for one row)."""
    data = np.asarray(rows, dtype=float)
    if data.shape[0] == 1:
        return 1.0
    unit = _unit_rows(data)
    gram = np.clip(unit @ unit.T, -1.0, 1.0)
    upper = np.triu_indices(data.shape[0], k=1)
    return float(gram[upper].mean())


def _refine_labels(
    rows: np.ndarray, config: KmeansConfig, seed_key: tuple[int, ...]
) -> np.ndarray:
    n = rows.shape[0]
    if n == 1:
        return np.zeros(1, dtype=int)
    threshold = dynamic_threshold(
        average_pairwise_similarity(rows), config.threshold_base, config.threshold_span
    )
    k_max = min(config.k_max, n)
    labelings = []
    distortions = []
    for k in range(1, k_max + 1):
        rng = substream(config.seed, STREAM_KMEANS, *seed_key, k)
        labels, _, distortion = spherical_kmeans(rows, k, config, rng=rng)
        labelings.append(labels)
        distortions.append(distortion)
    return labelings[elbow_select_k(distortions, threshold) - 1]


def refine_cluster(
    rows: np.ndarray,
    config: KmeansConfig,
    ids: Optional[Sequence[int]] = None,
    seed_key: tuple[int, ...] = (),
) -> ClusterLabeling:
    """Split one coarse cluster into sub-clusters by probing pattern."""
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("expected a non-empty row matrix")
    labels = _refine_labels(data, config, seed_key)
    keys = list(ids) if ids is not None else list(range(len(labels)))
    if len(keys) != len(labels):
        raise ValueError("ids must parallel rows")
    return ClusterLabeling(
        {key: int(label) for key, label in zip(keys, labels)},
        int(labels.max()) + 1,
    )


def _sorted_bursts(bursts: Sequence[Burst]) -> list[Burst]:
    if len(bursts) == 0:
        raise ValueError("need at least one burst")
    ordered = sorted(bursts, key=lambda b: b.burst_id)
    if len({b.burst_id for b in ordered}) != len(ordered):
        raise ValueError("burst ids must be unique")
    return ordered


def ie_only_cluster(bursts: Sequence[Burst], dbscan_cfg: DbscanConfig) -> ClusterLabeling:
    """Coarse stage alone: DBSCAN over normalized IE fingerprints."""
    ordered = _sorted_bursts(bursts)
    points = normalize_ie_matrix([b.ie_features for b in ordered])
    return dbscan(points, dbscan_cfg, ids=[b.burst_id for b in ordered])


def two_stage_labelings(
    bursts: Sequence[Burst],
    dbscan_cfg: DbscanConfig,
    kmeans_cfg: KmeansConfig,
) -> tuple[ClusterLabeling, ClusterLabeling]:
    """(coarse, final) labelings of the full two-stage pipeline.

    Each coarse cluster is refined independently; final labels are the
    disjoint union of all sub-clusters, renumbered contiguously. Noise
    bursts stay noise and are excluded from the cluster count.
    """
    ordered = _sorted_bursts(bursts)
    ids = [b.burst_id for b in ordered]
    points = normalize_ie_matrix([b.ie_features for b in ordered])
    coarse = dbscan_labels(points, dbscan_cfg.eps, dbscan_cfg.min_pts)
    padded = pad_matrix([b.channel_vector for b in ordered])

    final = np.full(len(ordered), NOISE, dtype=int)
    next_label = 0
    n_coarse = int(coarse.max()) + 1 if coarse.size and coarse.max() >= 0 else 0
    for c in range(n_coarse):
        members = np.flatnonzero(coarse == c)
        sub = _refine_labels(padded[members], kmeans_cfg, seed_key=(c,))
        for s in range(int(sub.max()) + 1):
            final[members[sub == s]] = next_label
            next_label += 1

    coarse_labeling = ClusterLabeling(
        {i: int(l) for i, l in zip(ids, coarse)}, n_coarse
    )
    final_labeling = ClusterLabeling(
        {i: int(l) for i, l in zip(ids, final)}, next_label
    )
    return coarse_labeling, final_labeling


def two_stage_cluster(
    bursts: Sequence[Burst],
    dbscan_cfg: DbscanConfig,
    kmeans_cfg: KmeansConfig,
) -> ClusterLabeling:
    """Final labeling of the two-stage pipeline."""
    return two_stage_labelings(bursts, dbscan_cfg, kmeans_cfg)[1]


LABELING_FIELDS = ("burst_id", "source_mac", "truth_device", "coarse_label", "final_label")


def write_labeling_file(
    bursts: Sequence[Burst],
    coarse: ClusterLabeling,
    final: ClusterLabeling,
    path,
    header_comment: str | None = None,
) -> None:
    """CSV of per-burst coarse and final labels (noise rendered as -1)."""
    ordered = _sorted_bursts(bursts)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(LABELING_FIELDS)
        for burst in ordered:
            writer.writerow(
                [
                    burst.burst_id,
                    mac_to_str(burst.source_mac),
                    burst.truth_device or "",
                    coarse.assignments[burst.burst_id],
                    final.assignments[burst.burst_id],
                ]
            )
