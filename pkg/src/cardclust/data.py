"""Core domain types: dataset geometry, cardinalities, assignments, pairwise
constraints and the must-link shrinking structure.

All types are immutable after construction (arrays are marked read-only) and
can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "Dataset",
    "GramMatrix",
    "DistanceMatrix",
    "CardinalitySpec",
    "AssignmentMatrix",
    "PairwiseConstraints",
    "ShrinkMap",
    "InfeasibleConstraintsError",
    "gram_from_points",
    "edm_from_gram",
    "mssc_objective",
    "shrink_from_mustlinks",
    "load_points_csv",
    "parse_cards",
]

PSD_REL_TOL = 1e-8


class InfeasibleConstraintsError(ValueError):
    """A must-link chain connects the two endpoints of a cannot-link pair."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """n points in d-dimensional Euclidean space, one per row."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a nonempty 2-d array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        object.__setattr__(self, "points", _freeze(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric positive semidefinite matrix of pairwise inner products."""

    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("W must be square")
        if not np.all(np.isfinite(W)):
            raise ValueError("W contains non-finite entries")
        if not np.allclose(W, W.T, atol=1e-10 * (1.0 + np.abs(W).max())):
            raise ValueError("W must be symmetric")
        W = 0.5 * (W + W.T)
        scale = np.linalg.norm(W, "fro")
        lo = np.linalg.eigvalsh(W)[0]
        if lo < -PSD_REL_TOL * max(1.0, scale):
            raise ValueError(f"W is not positive semidefinite (lambda_min={lo:.3e})")
        object.__setattr__(self, "W", _freeze(W))

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class DistanceMatrix:
    """Matrix of squared Euclidean distances."""

    D: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("D must be square")
        if not np.allclose(D, D.T, atol=1e-10 * (1.0 + np.abs(D).max())):
            raise ValueError("D must be symmetric")
        if np.abs(np.diag(D)).max(initial=0.0) > 1e-10 * (1.0 + np.abs(D).max()):
            raise ValueError("D must have zero diagonal")
        if D.min() < -1e-10 * (1.0 + np.abs(D).max()):
            raise ValueError("D must be elementwise nonnegative")
        object.__setattr__(self, "D", _freeze(0.5 * (D + D.T)))


@dataclass(frozen=True)
class CardinalitySpec:
    """Prescribed cluster sizes c_1..c_k with sum n."""

    cards: tuple[int, ...]

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cards)
        if len(cards) < 1 or any(c < 1 for c in cards):
            raise ValueError("every cluster size must be a positive integer")
        object.__setattr__(self, "cards", cards)

    @property
    def k(self) -> int:
        return len(self.cards)

    @property
    def n(self) -> int:
        return sum(self.cards)

    @property
    def as_array(self) -> np.ndarray:
        return np.array(self.cards, dtype=float)

    def check_total(self, n: int) -> None:
        if self.n != n:
            raise ValueError(f"cluster sizes sum to {self.n}, expected {n}")


@dataclass(frozen=True)
class AssignmentMatrix:
    """Hard n-by-k 0/1 assignment with exact column sums."""

    X: np.ndarray
    cards: CardinalitySpec

    def __post_init__(self):
        X = np.asarray(self.X)
        if X.ndim != 2 or X.shape[1] != self.cards.k:
            raise ValueError("X has the wrong shape")
        Xi = np.rint(X).astype(np.int64)
        if np.abs(X - Xi).max() > 1e-9 or not np.isin(Xi, (0, 1)).all():
            raise ValueError("X must be a 0/1 matrix")
        if not (Xi.sum(axis=1) == 1).all():
            raise ValueError("every row of X must sum to 1")
        if not (Xi.sum(axis=0) == np.array(self.cards.cards)).all():
            raise ValueError("column sums of X must equal the prescribed sizes")
        object.__setattr__(self, "X", _freeze(Xi.astype(float)))

    @property
    def labels(self) -> np.ndarray:
        return self.X.argmax(axis=1)


def _canon_pairs(pairs: Iterable[tuple[int, int]], n: int, what: str) -> frozenset[tuple[int, int]]:
    out = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"{what} pair ({i},{j}) has identical endpoints")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"{what} pair ({i},{j}) out of range for n={n}")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


@dataclass(frozen=True)
class PairwiseConstraints:
    """Must-link / cannot-link pairs on point indices, canonically ordered.

    Satisfiability (no must-link component containing a cannot-link pair) is
    checked at construction time.
    """

    n: int
    must_links: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    cannot_links: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        ml = _canon_pairs(self.must_links, self.n, "must-link")
        cl = _canon_pairs(self.cannot_links, self.n, "cannot-link")
        object.__setattr__(self, "must_links", ml)
        object.__setattr__(self, "cannot_links", cl)
        uf = _UnionFind(self.n)
        for i, j in sorted(ml):
            uf.union(i, j)
        for i, j in sorted(cl):
            if uf.find(i) == uf.find(j):
                raise InfeasibleConstraintsError(
                    f"cannot-link pair ({i},{j}) joined by a must-link chain"
                )

    @property
    def empty(self) -> bool:
        return not self.must_links and not self.cannot_links


@dataclass(frozen=True)
class ShrinkMap:
    """Partition of the n points into m super points.

    ``labels[i]`` is the super point of point i; ``e[s]`` its size. Super
    points are numbered by their smallest member, so the identity map has
    ``labels == arange(n)``.
    """

    labels: np.ndarray
    n: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.shape != (self.n,):
            raise ValueError("labels must have one entry per point")
        m = lab.max() + 1
        if sorted(set(lab.tolist())) != list(range(m)):
            raise ValueError("super point labels must be 0..m-1 without gaps")
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def m(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def e(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.m).astype(float)

    @property
    def T(self) -> np.ndarray:
        T = np.zeros((self.m, self.n))
        T[self.labels, np.arange(self.n)] = 1.0
        return T

    def members(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.labels == s)

    def representatives(self) -> np.ndarray:
        """Smallest original index in each super point."""
        reps = np.full(self.m, self.n, dtype=np.int64)
        for i, s in enumerate(self.labels):
            reps[s] = min(reps[s], i)
        return reps

    def shrink_matrix(self, M: np.ndarray) -> np.ndarray:
        """T M T^t for an n-by-n matrix M."""
        T = self.T
        return T @ M @ T.T

    def expand_rows(self, R: np.ndarray) -> np.ndarray:
        """Replicate super point rows back to all n points."""
        return np.asarray(R)[self.labels]

    @staticmethod
    def identity(n: int) -> "ShrinkMap":
        return ShrinkMap(np.arange(n), n)


def gram_from_points(dataset: Dataset) -> GramMatrix:
    """Matrix of pairwise inner products of the data points."""
    P = dataset.points
    return GramMatrix(P @ P.T)


def edm_from_gram(gram: GramMatrix) -> DistanceMatrix:
    """Squared-distance matrix from the Gram matrix."""
    w = np.diag(gram.W)
    D = w[:, None] + w[None, :] - 2.0 * gram.W
    np.fill_diagonal(D, 0.0)
    return DistanceMatrix(np.maximum(D, 0.0))


def mssc_objective(gram: GramMatrix, assignment: AssignmentMatrix, cards: CardinalitySpec) -> float:
    """Within-cluster sum of squares: tr(W) - <W, X C^-1 X^t>."""
    cards.check_total(gram.n)
    X = assignment.X
    if X.shape[0] != gram.n:
        raise ValueError("assignment and Gram matrix disagree on n")
    Xc = X / cards.as_array
    return float(np.trace(gram.W) - np.sum(gram.W * (Xc @ X.T)))


def shrink_from_mustlinks(
    n: int, constraints: PairwiseConstraints
) -> tuple[ShrinkMap, frozenset[tuple[int, int]]]:
    """Contract must-link components into super points.

    Returns the shrink map and the cannot-link set rewritten on super point
    indices (duplicates merged). Raises ``InfeasibleConstraintsError`` when a
    cannot-link pair collapses onto a single super point.
    """
    if constraints.n != n:
        raise ValueError("constraint set built for a different n")
    uf = _UnionFind(n)
    for i, j in sorted(constraints.must_links):
        uf.union(i, j)
    roots = [uf.find(i) for i in range(n)]
    order: dict[int, int] = {}
    for r in roots:
        if r not in order:
            order[r] = len(order)
    labels = np.array([order[r] for r in roots], dtype=np.int64)
    shrink = ShrinkMap(labels, n)
    reduced = set()
    for i, j in constraints.cannot_links:
        si, sj = int(labels[i]), int(labels[j])
        if si == sj:
            raise InfeasibleConstraintsError(
                f"cannot-link pair ({i},{j}) lies inside one super point"
            )
        reduced.add((min(si, sj), max(si, sj)))
    return shrink, frozenset(reduced)


def load_points_csv(path) -> Dataset:
    """Read one data point per row of comma-separated floats; a header row is
    skipped if its first field is not numeric."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    start = 0
    try:
        float(lines[0].split(",")[0])
    except ValueError:
        start = 1
    width = None
    for ln_no, ln in enumerate(lines[start:], start=start + 1):
        fields = [s.strip() for s in ln.split(",")]
        try:
            row = [float(s) for s in fields]
        except ValueError as exc:
            raise ValueError(f"{path}:{ln_no}: malformed row: {ln!r}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(f"{path}:{ln_no}: expected {width} fields, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(rows))


def parse_cards(text: str) -> CardinalitySpec:
    """Parse a comma-separated list of positive integers."""
    try:
        cards = tuple(int(s.strip()) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ValueError(f"bad cardinality list: {text!r}") from exc
    if not cards:
        raise ValueError("empty cardinality list")
    return CardinalitySpec(cards)
