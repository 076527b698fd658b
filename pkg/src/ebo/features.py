"""Tile layouts, feature encoding, and the feature-column registry.

A *tiling* stacks ``n_layers`` layouts over a box; each layout cuts every
dimension into bins (either an evenly spaced grid with a random offset, or
independently drawn cut locations).  Together with a decomposition of the
dimensions into additive groups, a tiling defines one sparse feature per
(group, layer): the cell of that layer's grid, restricted to the group's
dimensions, that the point falls into.  Every active feature has value
``1 / sqrt(n_layers * n_groups)``, so the implied kernel is the fraction of
(group, layer) blocks in which two points share a cell — a number in
``[0, 1]`` that is exactly 1 at zero distance.

Cells are identified by uint64 hash labels (:mod:`ebo._hashing`).  Equality
of labels is all the model needs; the :class:`FeatureSpace` registry
additionally maps labels to dense column indices for feature-space solves and
guards against hash collisions with a second, independently salted hash.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from ._backend import cross_match
from ._hashing import chain, seed_state
from .core import (
    MONDRIAN_GRID,
    TILE_CODING,
    Box,
    Decomposition,
    TileParams,
    ValidationError,
)

__all__ = [
    "Tiling",
    "SparseFeatures",
    "FeatureSpace",
    "sample_tiling",
    "cell_index",
    "bin_matrix",
    "block_labels",
    "encode",
    "kernel",
    "kernel_matrix",
    "feature_value",
]


def feature_value(n_layers: int, n_groups: int) -> float:
    """Value shared by all active features: ``1/sqrt(n_layers * n_groups)``."""
    return 1.0 / np.sqrt(n_layers * n_groups)


@dataclass(frozen=True, eq=False)
class Tiling:
    """Cut locations of a stacked tile layout over a box.

    ``cut_locations[d][l]`` is the sorted array of cut coordinates along
    dimension ``d`` in layer ``l`` (possibly empty).
    """

    box: Box
    kind: str
    cut_locations: tuple[tuple[np.ndarray, ...], ...]

    def __init__(self, box: Box, kind: str, cut_locations):
        if kind not in (TILE_CODING, MONDRIAN_GRID):
            raise ValidationError(f"unknown tiling kind {kind!r}")
        rows = []
        for d, per_dim in enumerate(cut_locations):
            layers = []
            for cuts in per_dim:
                arr = np.asarray(cuts, dtype=np.float64).reshape(-1).copy()
                if arr.size and (arr.min() < box.lower[d] or arr.max() > box.upper[d]):
                    raise ValidationError(
                        f"cut outside the box along dimension {d}"
                    )
                if np.any(np.diff(arr) < 0):
                    arr = np.sort(arr)
                arr.setflags(write=False)
                layers.append(arr)
            rows.append(tuple(layers))
        if len(rows) != box.ndim:
            raise ValidationError(
                f"cut_locations covers {len(rows)} dimensions, box has {box.ndim}"
            )
        n_layers = {len(r) for r in rows}
        if len(n_layers) != 1:
            raise ValidationError("all dimensions must have the same layer count")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "cut_locations", tuple(rows))

    @property
    def ndim(self) -> int:
        return self.box.ndim

    @property
    def n_layers(self) -> int:
        return len(self.cut_locations[0])

    @property
    def cut_counts(self) -> np.ndarray:
        """Integer array ``(ndim, n_layers)`` of cut counts."""
        return np.array(
            [[c.size for c in per_dim] for per_dim in self.cut_locations],
            dtype=np.int64,
        )

    def replace_cuts(self, dim: int, layer: int, cuts) -> "Tiling":
        """New tiling with one (dimension, layer) slot's cuts replaced."""
        rows = [list(per_dim) for per_dim in self.cut_locations]
        rows[dim][layer] = np.asarray(cuts, dtype=np.float64)
        return Tiling(self.box, self.kind, rows)

    def to_json(self) -> str:
        payload = {
            "box": {"lower": self.box.lower.tolist(), "upper": self.box.upper.tolist()},
            "kind": self.kind,
            "cuts": [[c.tolist() for c in per_dim] for per_dim in self.cut_locations],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Tiling":
        payload = json.loads(text)
        box = Box(payload["box"]["lower"], payload["box"]["upper"])
        return cls(box, payload["kind"], payload["cuts"])


def sample_tiling(params: TileParams, box: Box, rng: np.random.Generator) -> Tiling:
    """Draw cut locations for every (dimension, layer) slot of ``params``.

    Tile layouts draw one offset uniform per slot; independently drawn
    layouts draw one uniform per cut.  Slots are visited dimension-major so
    the stream consumption is well defined.
    """
    if params.ndim != box.ndim:
        raise ValidationError(
            f"params cover {params.ndim} dimensions, box has {box.ndim}"
        )
    kind = _kernels_py.KIND_TILE if params.feature_kind == TILE_CODING else _kernels_py.KIND_MONDRIAN
    rows = []
    for d in range(box.ndim):
        lo, hi = float(box.lower[d]), float(box.upper[d])
        layers = []
        for layer in range(params.n_layers):
            c = int(params.cut_counts[d, layer])
            if c == 0:
                layers.append(np.empty(0))
                continue
            u = rng.random(c if kind == _kernels_py.KIND_MONDRIAN else 1)
            layers.append(_kernels_py.derive_cuts(kind, lo, hi, c, u))
        rows.append(layers)
    return Tiling(box, params.feature_kind, rows)


def cell_index(tiling: Tiling, dim: int, layer: int, x: float) -> int:
    """Bin index of coordinate ``x`` along one (dimension, layer) slot.

    Points exactly on a cut belong to the upper bin.
    """
    cuts = tiling.cut_locations[dim][layer]
    return int(np.searchsorted(cuts, x, side="right"))


def bin_matrix(tiling: Tiling, X: np.ndarray) -> np.ndarray:
    """Bin indices for a batch: shape ``(ndim, n_layers, n)`` int64."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    out = np.empty((tiling.ndim, tiling.n_layers, n), dtype=np.int64)
    for d in range(tiling.ndim):
        col = X[:, d]
        for layer in range(tiling.n_layers):
            out[d, layer] = np.searchsorted(
                tiling.cut_locations[d][layer], col, side="right"
            )
    return out


def block_labels(
    tiling: Tiling,
    decomp: Decomposition,
    X: np.ndarray,
    salt: int = 0,
    variant: int = 0,
    bins: np.ndarray | None = None,
) -> np.ndarray:
    """Cell labels per (group, layer) block: shape ``(blocks, n)`` uint64.

    Blocks iterate non-empty groups in ascending id, layers innermost, so
    block ``g * n_layers + l`` belongs to the g-th non-empty group.  Labels
    fold the group's per-dimension bins in ascending dimension order into a
    salted hash state; ``variant`` selects an independent hash family (used
    for collision checks).
    """
    if bins is None:
        bins = bin_matrix(tiling, X)
    n = bins.shape[2]
    groups = decomp.groups
    ids = decomp.group_ids
    L = tiling.n_layers
    out = np.empty((len(groups) * L, n), dtype=np.uint64)
    for g, (gid, dims) in enumerate(zip(ids, groups)):
        for layer in range(L):
            state = seed_state(salt, variant, gid, layer)
            out[g * L + layer] = chain(state, [bins[d, layer] for d in dims])
    return out


@dataclass(frozen=True, eq=False)
class SparseFeatures:
    """Feature vector of a single point: one active cell per block.

    ``keys[b]`` identifies the active cell in block ``b``; every active
    feature has the same ``value``.
    """

    keys: np.ndarray
    value: float

    @property
    def n_blocks(self) -> int:
        return self.keys.size

    def dot(self, other: "SparseFeatures") -> float:
        """Inner product: value^2 times the number of shared cells."""
        if self.keys.size != other.keys.size:
            raise ValidationError("feature vectors come from different layouts")
        matches = int(np.count_nonzero(self.keys == other.keys))
        return self.value * other.value * matches

    def norm_sq(self) -> float:
        return self.value * self.value * self.n_blocks


def encode(
    tiling: Tiling, decomp: Decomposition, x: np.ndarray, salt: int = 0
) -> SparseFeatures:
    """Sparse features of one point under a tiling and decomposition."""
    labels = block_labels(tiling, decomp, np.atleast_2d(x), salt=salt)
    return SparseFeatures(labels[:, 0].copy(), feature_value(tiling.n_layers, decomp.n_groups))


def kernel(
    tiling: Tiling, decomp: Decomposition, x1: np.ndarray, x2: np.ndarray, salt: int = 0
) -> float:
    """Kernel value between two points: shared blocks over total blocks."""
    return encode(tiling, decomp, x1, salt).dot(encode(tiling, decomp, x2, salt))


def kernel_matrix(
    tiling: Tiling,
    decomp: Decomposition,
    X1: np.ndarray,
    X2: np.ndarray | None = None,
    salt: int = 0,
) -> np.ndarray:
    """Gram matrix of the tile kernel between two batches."""
    lab1 = block_labels(tiling, decomp, X1, salt=salt)
    lab2 = lab1 if X2 is None else block_labels(tiling, decomp, X2, salt=salt)
    return cross_match(lab1, lab2) / lab1.shape[0]


class FeatureSpace:
    """Registry mapping cell labels to dense feature columns.

    Built over a training set; every (block, label) pair seen during the
    build gets a column.  Collisions of the 64-bit labels are detected with a
    second, independently salted hash and resolved by rebuilding the whole
    registry under a new salt, so distinct cells never share a column.
    """

    def __init__(self, tiling: Tiling, decomp: Decomposition, salt: int, columns: dict):
        self.tiling = tiling
        self.decomp = decomp
        self.salt = salt
        self._columns = columns
        self.n_columns = len(columns)
        self.value = feature_value(tiling.n_layers, decomp.n_groups)

    @property
    def n_blocks(self) -> int:
        return len(self.decomp.groups) * self.tiling.n_layers

    @classmethod
    def build(
        cls,
        tiling: Tiling,
        decomp: Decomposition,
        X: np.ndarray,
        salt: int = 0,
        max_rebuilds: int = 8,
    ) -> "FeatureSpace":
        """Register every cell occupied by ``X``; re-salt on hash collision."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        for attempt in range(max_rebuilds):
            cur = salt + attempt
            labels = block_labels(tiling, decomp, X, salt=cur, variant=0)
            checks = block_labels(tiling, decomp, X, salt=cur, variant=1)
            if _has_collision(labels, checks):
                continue
            columns: dict[tuple[int, int], int] = {}
            for b in range(labels.shape[0]):
                for lab in labels[b]:
                    key = (b, int(lab))
                    if key not in columns:
                        columns[key] = len(columns)
            return cls(tiling, decomp, cur, columns)
        raise ValidationError("could not build a collision-free feature registry")

    def encode_rows(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Dense column indices per row and block.

        Returns ``(cols, unseen)``: ``cols`` has shape ``(n, blocks)`` with
        the column index of each active feature or ``-1`` when the cell was
        never seen during the build; ``unseen`` counts the ``-1`` entries per
        row.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        labels = block_labels(self.tiling, self.decomp, X, salt=self.salt)
        n = X.shape[0]
        blocks = labels.shape[0]
        cols = np.empty((n, blocks), dtype=np.int64)
        get = self._columns.get
        for b in range(blocks):
            cols[:, b] = [get((b, int(lab)), -1) for lab in labels[b]]
        unseen = np.count_nonzero(cols < 0, axis=1).astype(np.int64)
        return cols, unseen

    def feature_matrix(self, X: np.ndarray):
        """Sparse CSR feature matrix ``(n, n_columns)`` plus per-row unseen
        feature mass (sum of squared values of unregistered features)."""
        from scipy.sparse import csr_matrix

        cols, unseen = self.encode_rows(X)
        n, blocks = cols.shape
        mask = cols >= 0
        rows = np.repeat(np.arange(n), blocks).reshape(n, blocks)
        data = np.full(mask.sum(), self.value)
        mat = csr_matrix(
            (data, (rows[mask], cols[mask])), shape=(n, self.n_columns)
        )
        return mat, unseen * self.value**2


def _has_collision(labels: np.ndarray, checks: np.ndarray) -> bool:
    """True if any two distinct cells share a primary label within a block."""
    for b in range(labels.shape[0]):
        pairs = np.stack([labels[b], checks[b]], axis=1)
        if np.unique(pairs, axis=0).shape[0] != np.unique(labels[b]).shape[0]:
            return True
    return False
