"""Centroids in the partition space: k-means, coloration and nearest queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNCOLORED = -1


class ColorationError(RuntimeError):
    """A class that needs a centroid could not be given one."""


@dataclass(frozen=True)
class Centroid:
    index: int
    position: np.ndarray
    color: int = UNCOLORED
    member_count: int = 0

    @property
    def colored(self) -> bool:
        return self.color != UNCOLORED


@dataclass
class CentroidSet:
    """K centroids stored as arrays; ``colors`` uses -1 for uncolored."""

    positions: np.ndarray
    colors: np.ndarray
    member_counts: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=np.float64, ndmin=2)
        k = self.positions.shape[0]
        self.colors = np.asarray(self.colors, dtype=np.int64).reshape(k)
        self.member_counts = np.asarray(self.member_counts, dtype=np.int64).reshape(k)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("centroid positions must be finite")
        if k < self.num_classes:
            raise ValueError(f"need at least as many centroids as classes ({k} < {self.num_classes})")
        bad = (self.colors != UNCOLORED) & ((self.colors < 0) | (self.colors >= self.num_classes))
        if np.any(bad):
            raise ValueError(f"centroid colors out of range for {self.num_classes} classes")

    @property
    def k(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def centroids(self) -> list[Centroid]:
        return [self[i] for i in range(self.k)]

    def __len__(self) -> int:
        return self.k

    def __getitem__(self, i: int) -> Centroid:
        return Centroid(int(i), self.positions[i].copy(), int(self.colors[i]), int(self.member_counts[i]))

    def with_colors(self, colors) -> "CentroidSet":
        return CentroidSet(self.positions.copy(), np.asarray(colors).copy(), self.member_counts.copy(), self.num_classes)

    def owned_classes(self) -> set[int]:
        return {int(c) for c in self.colors if c != UNCOLORED}


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # exact differences rather than the |x|^2 - 2xy + |y|^2 expansion, so
    # coincident points give exactly zero
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points left than centers: fall back to an unused point
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centers[j:j + 1])[:, 0])
    return centers


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300, tol: float = 1e-6,
           num_classes: int = 1, trace: list | None = None) -> tuple[CentroidSet, np.ndarray]:
    """Lloyd's algorithm from a k-means++ start.

    Stops when no centroid moves more than ``tol`` (max-norm), when the
    assignment stops changing, or after ``max_iters`` rounds.  An empty
    cluster is re-seeded at the point farthest from its old position.
    Returns uncolored centroids and the per-point cluster index; each
    centroid is the mean of the points assigned to it.  If ``trace`` is a
    list, the within-cluster sum of squares is appended after every
    assignment step.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("kmeans needs a non-empty 2-D point array")
    if k < 1:
        raise ValueError("k must be at least 1")
    n_distinct = np.unique(X, axis=0).shape[0]
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the number of distinct points ({n_distinct})")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, k, rng)
    assign = None
    for _ in range(max(1, max_iters)):
        d = _sq_dists(X, centers)
        new_assign = np.argmin(d, axis=1)
        if trace is not None:
            trace.append(float(d[np.arange(len(X)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, assign, X)
        nonempty = counts > 0
        new_centers[nonempty] /= counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(_sq_dists(X, centers[j:j + 1])[:, 0]))
            new_centers[j] = X[far]
        shift = np.max(np.abs(new_centers - centers))
        centers = new_centers
        if shift < tol and nonempty.all():
            break

    # keep positions equal to member means for the assignment we return
    counts = np.bincount(assign, minlength=k)
    for j in np.flatnonzero(counts > 0):
        centers[j] = X[assign == j].mean(axis=0)
    cs = CentroidSet(centers, np.full(k, UNCOLORED), counts, min(num_classes, k))
    return cs, assign


def color_centroids(cset: CentroidSet, assignment, labels, points=None,
                    num_classes: int | None = None) -> CentroidSet:
    """Majority-vote coloring with orphan-class repair.

    Ties go to the smallest class index; clusters with no members stay
    uncolored.  A class that has samples but wins no centroid takes over the
    centroid nearest its mean mapped point, chosen among uncolored centroids
    and centroids whose class owns more than one.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if assignment.shape != labels.shape:
        raise ValueError("assignment and labels must have equal length")
    n_classes = num_classes if num_classes is not None else cset.num_classes
    if assignment.size and (assignment.min() < 0 or assignment.max() >= cset.k):
        raise ValueError("assignment index out of range")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")

    votes = np.zeros((cset.k, n_classes), dtype=np.int64)
    np.add.at(votes, (assignment, labels), 1)
    colors = np.where(votes.sum(axis=1) > 0, np.argmax(votes, axis=1), UNCOLORED)

    present = np.unique(labels)
    orphans = [int(c) for c in present if not np.any(colors == c)]
    if orphans:
        if points is None:
            raise ColorationError(f"classes {orphans} own no centroid and no points were given for repair")
        P = np.asarray(points, dtype=np.float64)
        for c in orphans:
            owned = np.bincount(colors[colors >= 0], minlength=n_classes)
            candidates = [j for j in range(cset.k) if colors[j] == UNCOLORED or owned[colors[j]] > 1]
            if not candidates:
                raise ColorationError(f"no centroid can be given to class {c} without orphaning another")
            mean = P[labels == c].mean(axis=0)
            d = _sq_dists(mean[None, :], cset.positions[candidates])[0]
            colors[candidates[int(np.argmin(d))]] = c
    return CentroidSet(cset.positions.copy(), colors, cset.member_counts.copy(), n_classes)


def _argmin_where(point, cset: CentroidSet, mask: np.ndarray) -> int:
    idx = np.flatnonzero(mask)
    diff = cset.positions[idx] - point
    return int(idx[np.argmin(np.einsum("ij,ij->i", diff, diff))])


def _as_point(point, cset: CentroidSet) -> np.ndarray:
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (cset.dimension,):
        raise ValueError(f"point has shape {p.shape}, centroids live in {cset.dimension} dimensions")
    return p


def nearest_self_index(point, cset: CentroidSet, label: int) -> int:
    p = _as_point(point, cset)
    mask = cset.colors == label
    if not mask.any():
        raise ColorationError(f"no centroid is colored {label}")
    return _argmin_where(p, cset, mask)


def nearest_noself_index(point, cset: CentroidSet, label: int) -> int:
    p = _as_point(point, cset)
    mask = (cset.colors != label) & (cset.colors != UNCOLORED)
    if not mask.any():
        raise ColorationError(f"every colored centroid has class {label}")
    return _argmin_where(p, cset, mask)


def nearest_any_index(point, cset: CentroidSet) -> int:
    p = _as_point(point, cset)
    mask = cset.colors != UNCOLORED
    if not mask.any():
        raise ColorationError("centroid set has no colored centroids")
    return _argmin_where(p, cset, mask)


def nearest_self(point, cset: CentroidSet, label: int) -> Centroid:
    return cset[nearest_self_index(point, cset, label)]


def nearest_noself(point, cset: CentroidSet, label: int) -> Centroid:
    return cset[nearest_noself_index(point, cset, label)]


def nearest_any(point, cset: CentroidSet) -> Centroid:
    return cset[nearest_any_index(point, cset)]


def nearest_any_batch(points, cset: CentroidSet) -> np.ndarray:
    """Index of the nearest colored centroid for every row of ``points``."""
    P = np.asarray(points, dtype=np.float64)
    idx = np.flatnonzero(cset.colors != UNCOLORED)
    if idx.size == 0:
        raise ColorationError("centroid set has no colored centroids")
    return idx[np.argmin(_sq_dists(P, cset.positions[idx]), axis=1)]
