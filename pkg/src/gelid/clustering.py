"""Context and issue clustering: keyframe distance, blended distance, and
three non-parametric clusterers (DBSCAN, OPTICS, Mean Shift) from scratch.

The context measure is 1 minus the average pairwise histogram intersection
between two segments' keyframes. It is not a metric (average pairwise
self-similarity can fall below 1) so d(X, X) is pinned to 0 and the density
methods consume it as a plain dissimilarity. The issue measure blends
cosine distance on tf-idf text with the context measure.

Determinism: every tie (border points, mode merge order, cluster numbering)
breaks on item id, so results are independent of input order.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

NOISE = -1
_CHANNELS = 3


@dataclass
class DistanceMatrix:
    ids: tuple[str, ...]
    values: np.ndarray  # (n, n) symmetric, zero diagonal, entries in [0, 1]

    def validate(self) -> None:
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise DataError(f"distance matrix shape {self.values.shape} does "
                            f"not match {n} ids")
        if not np.all(np.isfinite(self.values)):
            raise DataError("distance matrix has non-finite entries")
        if np.any(self.values < -1e-12) or np.any(self.values > 1 + 1e-12):
            raise DataError("distances must lie in [0, 1]")
        if not np.allclose(self.values, self.values.T, atol=1e-12, rtol=0):
            raise DataError("distance matrix must be symmetric")
        if np.any(np.abs(np.diag(self.values)) > 1e-12):
            raise DataError("distance matrix diagonal must be 0")


@dataclass
class ClusterAssignment:
    ids: tuple[str, ...]
    labels: dict[str, int]  # NOISE (-1) or contiguous cluster id from 0
    algorithm: str
    params: dict = field(default_factory=dict)
    medoids: dict[int, str] = field(default_factory=dict)

    def clusters(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for item in self.ids:
            label = self.labels[item]
            if label != NOISE:
                out.setdefault(label, []).append(item)
        return {k: sorted(v) for k, v in sorted(out.items())}

    def noise(self) -> list[str]:
        return sorted(i for i in self.ids if self.labels[i] == NOISE)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "algorithm": self.algorithm,
            "params": self.params,
            "clusters": [
                {"id": cid, "member_segment_ids": members,
                 "medoid": self.medoids.get(cid)}
                for cid, members in self.clusters().items()
            ],
            "noise": self.noise(),
        }


def histogram_intersection(a: np.ndarray, b: np.ndarray) -> float:
    """Similarity of two 3-block normalized histograms, in [0, 1]."""
    return float(np.minimum(a, b).sum() / _CHANNELS)


def context_distance(keyframes_a: np.ndarray,
                     keyframes_b: np.ndarray) -> float:
    """1 minus the mean pairwise keyframe similarity between two segments."""
    a = np.atleast_2d(keyframes_a)
    b = np.atleast_2d(keyframes_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DataError("context distance needs at least one keyframe per "
                        "segment")
    sims = np.minimum(a[:, None, :], b[None, :, :]).sum(axis=2) / _CHANNELS
    return float(np.clip(1.0 - sims.mean(), 0.0, 1.0))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity; a zero vector is maximally distant (1.0)."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    if np.array_equal(a, b):
        return 0.0
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 1.0))


def issue_distance(text_a: np.ndarray, keyframes_a: np.ndarray,
                   text_b: np.ndarray, keyframes_b: np.ndarray,
                   alpha: float = 0.5) -> float:
    """alpha * cosine text distance + (1 - alpha) * context distance."""
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha {alpha} outside [0, 1]")
    text_term = cosine_distance(text_a, text_b) if alpha > 0 else 0.0
    visual_term = (context_distance(keyframes_a, keyframes_b)
                   if alpha < 1 else 0.0)
    return alpha * text_term + (1.0 - alpha) * visual_term


def build_context_matrix(ids, keyframes: dict[str, np.ndarray]
                         ) -> DistanceMatrix:
    """Pairwise context distances; d(X, X) = 0 by convention."""
    ids = tuple(ids)
    n = len(ids)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = context_distance(keyframes[ids[i]], keyframes[ids[j]])
            values[i, j] = values[j, i] = d
    matrix = DistanceMatrix(ids=ids, values=values)
    matrix.validate()
    return matrix


def build_issue_matrix(ids, texts: dict[str, np.ndarray],
                       keyframes: dict[str, np.ndarray],
                       alpha: float = 0.5) -> DistanceMatrix:
    ids = tuple(ids)
    n = len(ids)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = issue_distance(texts[ids[i]], keyframes[ids[i]],
                               texts[ids[j]], keyframes[ids[j]], alpha)
            values[i, j] = values[j, i] = d
    matrix = DistanceMatrix(ids=ids, values=values)
    matrix.validate()
    return matrix


def _renumber(ids, raw_labels: dict[str, int]) -> dict[str, int]:
    """Contiguous cluster ids from 0, ordered by smallest member id."""
    members: dict[int, list[str]] = {}
    for item, label in raw_labels.items():
        if label != NOISE:
            members.setdefault(label, []).append(item)
    order = sorted(members, key=lambda lbl: min(members[lbl]))
    remap = {old: new for new, old in enumerate(order)}
    return {item: (remap[lbl] if lbl != NOISE else NOISE)
            for item, lbl in raw_labels.items()}


def dbscan(matrix: DistanceMatrix, eps: float, min_pts: int
           ) -> ClusterAssignment:
    """Density clustering on a precomputed dissimilarity matrix.

    A point's eps-neighborhood includes itself. Core points within eps of
    each other share a cluster; border points attach to the core neighbor
    with the lowest id; the rest is noise.
    """
    if eps <= 0:
        raise DataError("eps must be > 0")
    if min_pts < 1:
        raise DataError("min_pts must be >= 1")
    matrix.validate()
    ids = matrix.ids
    n = len(ids)
    d = matrix.values
    within = d <= eps
    core = within.sum(axis=1) >= min_pts
    # connected components over core points, explored in id order
    raw: dict[str, int] = {item: NOISE for item in ids}
    id_order = sorted(range(n), key=lambda i: ids[i])
    component = 0
    seen = np.zeros(n, dtype=bool)
    for start in id_order:
        if not core[start] or seen[start]:
            continue
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            raw[ids[i]] = component
            for j in np.flatnonzero(within[i] & core & ~seen):
                seen[j] = True
                stack.append(int(j))
        component += 1
    for i in range(n):
        if core[i]:
            continue
        core_neighbors = [j for j in np.flatnonzero(within[i]) if core[j]]
        if core_neighbors:
            anchor = min(core_neighbors, key=lambda j: ids[j])
            raw[ids[i]] = raw[ids[anchor]]
    return ClusterAssignment(ids=ids, labels=_renumber(ids, raw),
                             algorithm="dbscan",
                             params={"eps": eps, "min_pts": min_pts})


def optics(matrix: DistanceMatrix, min_pts: int, eps_max: float,
           eps_cut: float) -> ClusterAssignment:
    """OPTICS ordering with reachability capped at eps_max, then a flat
    extraction at eps_cut (DBSCAN-equivalent up to border ties)."""
    if not 0 < eps_cut <= eps_max:
        raise DataError("require 0 < eps_cut <= eps_max")
    if min_pts < 1:
        raise DataError("min_pts must be >= 1")
    matrix.validate()
    ids = matrix.ids
    n = len(ids)
    d = matrix.values
    core_dist = np.full(n, np.inf)
    for i in range(n):
        row = np.sort(d[i])  # includes self at distance 0
        if row.size >= min_pts and row[min_pts - 1] <= eps_max:
            core_dist[i] = row[min_pts - 1]

    processed = np.zeros(n, dtype=bool)
    reach = np.full(n, np.inf)
    order: list[int] = []
    id_rank = sorted(range(n), key=lambda i: ids[i])

    def update_seeds(center: int, heap: list):
        if not np.isfinite(core_dist[center]):
            return
        for j in range(n):
            if processed[j] or d[center, j] > eps_max:
                continue
            new_reach = max(core_dist[center], d[center, j])
            if new_reach < reach[j]:
                reach[j] = new_reach
                heapq.heappush(heap, (new_reach, ids[j], j))

    for start in id_rank:
        if processed[start]:
            continue
        processed[start] = True
        order.append(start)
        heap: list = []
        update_seeds(start, heap)
        while heap:
            _, _, j = heapq.heappop(heap)
            if processed[j]:
                continue
            processed[j] = True
            order.append(j)
            update_seeds(j, heap)

    raw: dict[str, int] = {}
    current = None
    next_label = 0
    for i in order:
        if reach[i] > eps_cut:
            if core_dist[i] <= eps_cut:
                current = next_label
                next_label += 1
                raw[ids[i]] = current
            else:
                raw[ids[i]] = NOISE
                current = None
        else:
            raw[ids[i]] = current if current is not None else NOISE
    return ClusterAssignment(
        ids=ids, labels=_renumber(ids, raw), algorithm="optics",
        params={"min_pts": min_pts, "eps_max": eps_max, "eps_cut": eps_cut})


def mean_shift(ids, points: np.ndarray, bandwidth: float, tol: float = 1e-3,
               max_iter: int = 300) -> ClusterAssignment:
    """Flat-kernel mean shift on dense vectors; every point gets a cluster.

    Each point iterates to the mean of the original points within bandwidth
    until it moves less than tol; converged modes closer than bandwidth / 2
    merge. No noise: modes always exist.
    """
    if bandwidth <= 0:
        raise DataError("bandwidth must be > 0")
    if tol <= 0 or max_iter < 1:
        raise DataError("tol must be > 0 and max_iter >= 1")
    ids = tuple(ids)
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] != len(ids):
        raise DataError("points must be (n, d) matching ids")
    n = points.shape[0]
    modes = np.empty_like(points)
    for i in range(n):
        x = points[i].copy()
        for _ in range(max_iter):
            mask = np.linalg.norm(points - x, axis=1) <= bandwidth
            new = points[mask].mean(axis=0)
            shift = float(np.linalg.norm(new - x))
            x = new
            if shift < tol:
                break
        modes[i] = x
    raw: dict[str, int] = {}
    centers: list[np.ndarray] = []
    for i in sorted(range(n), key=lambda k: ids[k]):
        for ci, center in enumerate(centers):
            if np.linalg.norm(modes[i] - center) <= bandwidth / 2:
                raw[ids[i]] = ci
                break
        else:
            raw[ids[i]] = len(centers)
            centers.append(modes[i])
    return ClusterAssignment(
        ids=ids, labels=_renumber(ids, raw), algorithm="mean_shift",
        params={"bandwidth": bandwidth, "tol": tol, "max_iter": max_iter})


def segment_embedding(keyframes: np.ndarray) -> np.ndarray:
    """Mean keyframe histogram: the vector-space stand-in mean shift needs."""
    kf = np.atleast_2d(keyframes)
    if kf.shape[0] == 0:
        raise DataError("cannot embed a segment with no keyframes")
    return kf.mean(axis=0)


DEFAULT_CONTEXT_PARAMS = {
    "dbscan": {"eps": 0.3, "min_pts": 3},
    "optics": {"min_pts": 3, "eps_max": 1.0, "eps_cut": 0.3},
    "mean_shift": {"bandwidth": 0.25, "tol": 1e-4, "max_iter": 300},
}


def group_by_context(segment_ids, keyframes: dict[str, np.ndarray],
                     algorithm: str = "dbscan",
                     params: dict | None = None) -> ClusterAssignment:
    """Cluster informative segments by visual context.

    Density methods run on the pairwise keyframe measure; mean shift runs
    on mean-keyframe-histogram embeddings. Noise becomes singleton contexts
    downstream.
    """
    segment_ids = tuple(segment_ids)
    if algorithm not in DEFAULT_CONTEXT_PARAMS:
        raise DataError(f"unknown clustering algorithm {algorithm!r}")
    if not segment_ids:
        log.warning("no informative segments; nothing to group")
        return ClusterAssignment(ids=(), labels={}, algorithm=algorithm,
                                 params=params or {})
    merged = dict(DEFAULT_CONTEXT_PARAMS[algorithm])
    merged.update(params or {})
    if algorithm == "mean_shift":
        points = np.stack([segment_embedding(keyframes[s])
                           for s in segment_ids])
        return mean_shift(segment_ids, points, **merged)
    matrix = build_context_matrix(segment_ids, keyframes)
    if algorithm == "dbscan":
        return dbscan(matrix, **merged)
    return optics(matrix, **merged)


def _medoids(assignment: ClusterAssignment,
             matrix: DistanceMatrix) -> dict[int, str]:
    """Per-cluster member minimizing summed distance; ties -> lowest id."""
    pos = {item: i for i, item in enumerate(matrix.ids)}
    out: dict[int, str] = {}
    for cid, members in assignment.clusters().items():
        rows = [pos[m] for m in members]
        sub = matrix.values[np.ix_(rows, rows)]
        sums = sub.sum(axis=1)
        best = min(range(len(members)),
                   key=lambda k: (sums[k], members[k]))
        out[cid] = members[best]
    return out


def cluster_issues(segment_ids, texts: dict[str, np.ndarray],
                   keyframes: dict[str, np.ndarray], alpha: float = 0.5,
                   algorithm: str = "dbscan",
                   params: dict | None = None) -> ClusterAssignment:
    """Cluster same-context, same-category segments by specific issue.

    For mean shift, segments embed as the concatenation of the
    sqrt(alpha)-scaled unit text vector and the sqrt(1-alpha)-scaled mean
    keyframe histogram, so squared Euclidean gaps track the blended
    distance; density methods use the blended measure itself.
    """
    segment_ids = tuple(segment_ids)
    if algorithm not in DEFAULT_CONTEXT_PARAMS:
        raise DataError(f"unknown clustering algorithm {algorithm!r}")
    if not segment_ids:
        return ClusterAssignment(ids=(), labels={}, algorithm=algorithm,
                                 params=params or {})
    merged = dict(DEFAULT_CONTEXT_PARAMS[algorithm])
    merged.update(params or {})
    matrix = build_issue_matrix(segment_ids, texts, keyframes, alpha)
    if algorithm == "mean_shift":
        embeds = []
        for s in segment_ids:
            text = texts[s]
            norm = np.linalg.norm(text)
            unit = text / norm if norm > 0 else text
            embeds.append(np.concatenate([
                math.sqrt(alpha) * unit,
                math.sqrt(1.0 - alpha) * segment_embedding(keyframes[s])]))
        assignment = mean_shift(segment_ids, np.stack(embeds), **merged)
    elif algorithm == "dbscan":
        assignment = dbscan(matrix, **merged)
    else:
        assignment = optics(matrix, **merged)
    assignment.medoids = _medoids(assignment, matrix)
    assignment.params["alpha"] = alpha
    return assignment


def assignment_to_json(assignment: ClusterAssignment) -> str:
    return json.dumps(assignment.to_dict(), sort_keys=True)
