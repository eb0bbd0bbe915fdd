"""K-Means with k-means++ seeding and elbow-based choice of k."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from lemmaloop.embedding import EmbeddingProvider, embed


class InvalidK(ValueError):
    pass


@dataclass
class ClusteringResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    iterations: int = 0


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            remaining = [i for i in range(n) if i not in chosen]
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def _inertia(points: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    diff = points - centroids[assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans(points: Sequence[Sequence[float]] | np.ndarray, k: int, seed: int, max_iter: int = 100) -> ClusteringResult:
    """Lloyd's algorithm until the assignment is a fixpoint or `max_iter` rounds.

    Empty clusters are reseeded to the point farthest from its centroid.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidK("points must be a non-empty 2-d array")
    n = len(pts)
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(pts, k, rng)
    assignments = np.argmin(_sq_dists(pts, centroids), axis=1)
    history = [_inertia(pts, centroids, assignments)]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centroids = _update(pts, centroids, assignments, k)
        new_assignments = np.argmin(_sq_dists(pts, centroids), axis=1)
        inertia = _inertia(pts, centroids, new_assignments)
        assert inertia <= history[-1] + 1e-9 * max(1.0, history[-1]), "inertia increased"
        history.append(inertia)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    centroids = _update(pts, centroids, assignments, k)
    return ClusteringResult(
        k=k,
        assignments=assignments,
        centroids=centroids,
        inertia=_inertia(pts, centroids, assignments),
        inertia_history=history,
        iterations=iterations,
    )


def _update(pts: np.ndarray, centroids: np.ndarray, assignments: np.ndarray, k: int) -> np.ndarray:
    new = centroids.copy()
    counts = np.bincount(assignments, minlength=k)
    for c in range(k):
        if counts[c]:
            new[c] = pts[assignments == c].mean(axis=0)
    empty = [c for c in range(k) if counts[c] == 0]
    if empty:
        dist = np.einsum("ij,ij->i", pts - new[assignments], pts - new[assignments])
        taken: set[int] = set()
        for c in empty:
            order = [int(i) for i in np.argsort(-dist, kind="stable") if int(i) not in taken]
            taken.add(order[0])
            new[c] = pts[order[0]]
    return new


def inertia_curve(points: np.ndarray, k_max: int, seed: int) -> list[float]:
    return [kmeans(points, k, seed).inertia for k in range(1, k_max + 1)]


def knee(inertias: Sequence[float]) -> int:
    """1-based k whose point lies farthest below the chord joining the endpoints.

    Ties go to the smaller k; a curve with no point strictly below the chord
    (flat or already zero) yields 1.
    """
    ks = range(1, len(inertias) + 1)
    x1, y1, x2, y2 = 1.0, float(inertias[0]), float(len(inertias)), float(inertias[-1])
    length = math.hypot(x2 - x1, y2 - y1)
    if length == 0:
        return 1
    best_k, best_d = 1, 0.0
    scale = 1e-12 * max(1.0, abs(y1))
    for k, y in zip(ks, inertias):
        # positive when the point lies below the chord
        d = ((x2 - x1) * (y1 - y) - (x1 - k) * (y2 - y1)) / length
        if d > best_d + scale:
            best_k, best_d = k, d
    return best_k


def choose_k_elbow(points: Sequence[Sequence[float]] | np.ndarray, k_max: int, seed: int) -> int:
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 2 or not 2 <= k_max <= n:
        raise InvalidK(f"need 2 <= k_max <= n with n >= 2 (n={n}, k_max={k_max})")
    inertias = inertia_curve(pts, k_max, seed)
    if inertias[0] <= 0:
        return 1
    return knee(inertias)


def cluster_cap(n: int) -> int:
    return min(10, math.ceil(n / 3), n)


def cluster_points(vectors: np.ndarray, seed: int) -> np.ndarray:
    """Assignments for `vectors` with k picked by the elbow rule under `cluster_cap`.

    The sweep runs one step past the cap (when there are enough points) so the
    cap itself can be a knee; the chosen k is then clamped to the cap.
    """
    n = len(vectors)
    cap = cluster_cap(n)
    if cap <= 1:
        return np.zeros(n, dtype=int)
    k = min(choose_k_elbow(vectors, min(cap + 1, n), seed), cap)
    return kmeans(vectors, k, seed).assignments


def cluster_annotations(
    annotations: Sequence[tuple[Hashable, str]],
    provider: EmbeddingProvider,
    seed: int,
    vectors: np.ndarray | None = None,
) -> list[list[Hashable]]:
    """Partition theorem ids by the semantic similarity of their descriptions.

    Clusters are ordered by their first member's position in the input and
    members keep input order.
    """
    if not annotations:
        raise ValueError("no annotations to cluster")
    if vectors is None:
        vectors = embed([text for _, text in annotations], provider)
    assignments = cluster_points(vectors, seed)
    groups: dict[int, list[Hashable]] = {}
    for (theorem_id, _), c in zip(annotations, assignments):
        groups.setdefault(int(c), []).append(theorem_id)
    return list(groups.values())
