"""Hierarchical random partitioning of the search domain.

The domain is recursively split by axis-aligned cuts.  Leaves are chosen for
splitting with probability proportional to ``length * excess``, where
``length`` is the sum of the leaf's side lengths and ``excess`` is the number
of its data points beyond ``min_leaf``; within the chosen leaf the cut
dimension is drawn proportionally to side length and the cut location
uniformly along that side.  Splitting stops once the requested number of
leaves exists or no leaf holds more than ``min_leaf`` points.

Points sitting exactly on a cut belong to the upper side, so with
``eps == 0`` every point of the root box lands in exactly one leaf;
``eps > 0`` grows every leaf box by ``eps`` on each face, letting nearby
points be shared by neighbouring leaves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Box, ValidationError

__all__ = ["PartitionSet", "mondrian_partition", "assign"]


@dataclass(frozen=True)
class PartitionSet:
    """Root box plus the leaf boxes that tile it."""

    root: Box
    boxes: tuple[Box, ...]

    def __post_init__(self):
        if not self.boxes:
            raise ValidationError("a partition set needs at least one box")
        for b in self.boxes:
            if b.ndim != self.root.ndim:
                raise ValidationError(
                    f"leaf has {b.ndim} dimensions, root has {self.root.ndim}"
                )

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    @property
    def ndim(self) -> int:
        return self.root.ndim

    @property
    def volumes(self) -> np.ndarray:
        return np.array([b.volume for b in self.boxes])

    @property
    def volume_fractions(self) -> np.ndarray:
        return self.volumes / self.root.volume

    def assign(self, X: np.ndarray, eps: float = 0.0) -> list[np.ndarray]:
        return assign(self, X, eps=eps)

    def to_json(self) -> str:
        payload = {
            "root": {"lower": self.root.lower.tolist(), "upper": self.root.upper.tolist()},
            "boxes": [
                {"lower": b.lower.tolist(), "upper": b.upper.tolist()} for b in self.boxes
            ],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "PartitionSet":
        payload = json.loads(text)
        root = Box(payload["root"]["lower"], payload["root"]["upper"])
        boxes = tuple(Box(b["lower"], b["upper"]) for b in payload["boxes"])
        return cls(root, boxes)


def _categorical(rng: np.random.Generator, weights: np.ndarray) -> int:
    total = weights.sum()
    cdf = np.cumsum(weights)
    return int(np.searchsorted(cdf, rng.random() * total, side="right").clip(0, len(cdf) - 1))


def _split_membership(xs: np.ndarray, at: float) -> np.ndarray:
    """Boolean mask of points on the upper side of a cut (ties go up)."""
    return xs >= at


def mondrian_partition(
    box: Box,
    X: np.ndarray,
    n_partitions: int,
    min_leaf: int,
    rng: np.random.Generator,
) -> PartitionSet:
    """Randomly split ``box`` into at most ``n_partitions`` leaves.

    Parameters
    ----------
    box:
        Domain to partition.
    X:
        Observed points, shape ``(n, d)``;  leaf data counts control which
        leaves may be split.
    n_partitions:
        Target number of leaves (at least 1).
    min_leaf:
        A leaf holding ``min_leaf`` or fewer points is never split.
    rng:
        Source of randomness.
    """
    if n_partitions < 1:
        raise ValidationError("n_partitions must be at least 1")
    if min_leaf < 1:
        raise ValidationError("min_leaf must be at least 1")
    pts = np.asarray(X, dtype=np.float64)
    if pts.ndim != 2 or (pts.size and pts.shape[1] != box.ndim):
        raise ValidationError(
            f"X must be (n, {box.ndim}), got shape {pts.shape}"
        )

    def score(b: Box, idx: np.ndarray) -> float:
        return b.length * max(0, idx.size - min_leaf)

    leaves: list[tuple[Box, np.ndarray]] = [(box, np.arange(pts.shape[0]))]
    scores = [score(box, leaves[0][1])]
    while len(leaves) < n_partitions:
        weights = np.array(scores)
        if weights.sum() <= 0.0:
            break
        j = _categorical(rng, weights)
        leaf, idx = leaves[j]
        d = _categorical(rng, leaf.sides)
        lo, hi = float(leaf.lower[d]), float(leaf.upper[d])
        at = rng.uniform(lo, hi)
        while not (lo < at < hi):
            at = rng.uniform(lo, hi)
        lower_box, upper_box = leaf.split(d, at)
        up = _split_membership(pts[idx, d], at)
        lower_idx, upper_idx = idx[~up], idx[up]
        leaves[j] = (lower_box, lower_idx)
        scores[j] = score(lower_box, lower_idx)
        leaves.append((upper_box, upper_idx))
        scores.append(score(upper_box, upper_idx))
    return PartitionSet(box, tuple(b for b, _ in leaves))


def assign(pset: PartitionSet, X: np.ndarray, eps: float = 0.0) -> list[np.ndarray]:
    """Row indices of ``X`` belonging to each leaf of ``pset``.

    With ``eps == 0`` membership uses half-open boxes (closed at the root
    boundary), so each in-domain point belongs to exactly one leaf and a
    point exactly on a cut goes to the upper side.  With ``eps > 0`` each
    leaf is expanded by ``eps`` on every face and membership is closed, so
    points near a cut appear in every adjacent leaf.
    """
    if eps < 0:
        raise ValidationError("eps must be non-negative")
    pts = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if pts.size and pts.shape[1] != pset.ndim:
        raise ValidationError(f"X must be (n, {pset.ndim}), got shape {pts.shape}")
    out: list[np.ndarray] = []
    root_hi = pset.root.upper
    for b in pset.boxes:
        if eps > 0:
            inside = np.all(pts >= b.lower - eps, axis=1) & np.all(
                pts <= b.upper + eps, axis=1
            )
        else:
            below_top = (pts < b.upper) | ((b.upper == root_hi) & (pts <= b.upper))
            inside = np.all(pts >= b.lower, axis=1) & np.all(below_top, axis=1)
        out.append(np.flatnonzero(inside))
    return out
