"""Core value types shared across the optimizer.

Everything here is a small, immutable container: axis-aligned boxes, observed
datasets, additive decompositions of the input dimensions, the structural
parameters of the additive tile model, and a deterministic RNG stream tree.
Arrays held by these containers are defensively copied and marked read-only.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Box",
    "Dataset",
    "Decomposition",
    "TileParams",
    "RngStream",
    "ValidationError",
    "TILE_CODING",
    "MONDRIAN_GRID",
    "FEATURE_KINDS",
    "validate_dataset",
]

TILE_CODING = "tile"
MONDRIAN_GRID = "mondrian"
FEATURE_KINDS = (TILE_CODING, MONDRIAN_GRID)


class ValidationError(ValueError):
    """Raised when inputs violate a structural precondition."""


def _frozen_array(values, dtype=np.float64, ndim=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned hyperrectangle ``[lower, upper]``.

    Parameters
    ----------
    lower, upper:
        Arrays of equal length with ``lower <= upper`` elementwise (equal
        entries describe a degenerate side and are rejected).
    """

    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo = _frozen_array(lower, ndim=1)
        hi = _frozen_array(upper, ndim=1)
        if lo.shape != hi.shape:
            raise ValidationError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if lo.size == 0:
            raise ValidationError("a box needs at least one dimension")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValidationError("box bounds must be finite")
        if not np.all(lo < hi):
            bad = int(np.argmin(hi - lo))
            raise ValidationError(
                f"lower bound must be strictly below upper in every dimension; "
                f"dimension {bad} has [{lo[bad]}, {hi[bad]}]"
            )
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def ndim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        """Side lengths ``upper - lower``."""
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def length(self) -> float:
        """Sum of side lengths (the linear rate used by hierarchical splits)."""
        return float(self.sides.sum())

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def expand(self, eps: float) -> "Box":
        """Box grown by ``eps`` on every face."""
        if eps < 0:
            raise ValidationError("eps must be non-negative")
        return Box(self.lower - eps, self.upper + eps)

    def contains(self, x: np.ndarray, eps: float = 0.0) -> np.ndarray | bool:
        """Closed-box membership, optionally expanded by ``eps``.

        Accepts a single point ``(d,)`` or a batch ``(n, d)``; returns a bool
        or a boolean vector accordingly.
        """
        pts = np.asarray(x, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        ok = np.all(
            (pts >= self.lower - eps) & (pts <= self.upper + eps), axis=1
        )
        return bool(ok[0]) if single else ok

    def clip(self, x: np.ndarray) -> np.ndarray:
        """Project points onto the box."""
        return np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)

    def split(self, dim: int, at: float) -> tuple["Box", "Box"]:
        """Cut along ``dim`` at ``at`` (strictly interior) into two boxes."""
        if not (self.lower[dim] < at < self.upper[dim]):
            raise ValidationError(
                f"split location {at} outside the open side "
                f"({self.lower[dim]}, {self.upper[dim]}) of dimension {dim}"
            )
        lo, hi = self.lower.copy(), self.upper.copy()
        hi[dim] = at
        left = Box(lo, hi)
        lo2, hi2 = self.lower.copy(), self.upper.copy()
        lo2[dim] = at
        right = Box(lo2, hi2)
        return left, right

    def uniform(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform sample(s) from the box: shape ``(d,)`` or ``(n, d)``."""
        shape = (self.ndim,) if n is None else (n, self.ndim)
        return self.lower + rng.random(shape) * self.sides

    def __repr__(self) -> str:
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable set of observations ``(X, y)``.

    ``X`` has shape ``(n, d)`` and ``y`` shape ``(n,)``; ``n`` may be zero.
    """

    X: np.ndarray
    y: np.ndarray

    def __init__(self, X, y):
        Xa = np.asarray(X, dtype=np.float64)
        if Xa.ndim != 2:
            raise ValidationError(f"X must be 2-d, got shape {Xa.shape}")
        ya = np.asarray(y, dtype=np.float64).reshape(-1)
        if ya.shape[0] != Xa.shape[0]:
            raise ValidationError(
                f"X has {Xa.shape[0]} rows but y has {ya.shape[0]} entries"
            )
        Xa = _frozen_array(Xa, ndim=2)
        ya = _frozen_array(ya, ndim=1)
        object.__setattr__(self, "X", Xa)
        object.__setattr__(self, "y", ya)

    @classmethod
    def empty(cls, ndim: int) -> "Dataset":
        return cls(np.empty((0, ndim)), np.empty((0,)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def ndim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx])

    def append(self, X_new, y_new) -> "Dataset":
        """New dataset with extra rows appended (originals untouched)."""
        other = Dataset(np.atleast_2d(np.asarray(X_new, dtype=np.float64)), y_new)
        if other.ndim != self.ndim and self.n > 0:
            raise ValidationError(
                f"appended rows have {other.ndim} columns, expected {self.ndim}"
            )
        return Dataset(np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]))

    def best(self) -> tuple[np.ndarray, float]:
        """Point and value of the largest observation."""
        if self.n == 0:
            raise ValidationError("dataset is empty")
        i = int(np.argmax(self.y))
        return self.X[i], float(self.y[i])

    def to_csv(self, path) -> None:
        """Write rows as CSV with header ``x0,...,x{d-1},y``."""
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{d}" for d in range(self.ndim)] + ["y"])
            for row, val in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(val))])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Read a dataset written by :meth:`to_csv`."""
        import csv

        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValidationError(f"{path} is empty")
        header = rows[0]
        if not header or header[-1] != "y":
            raise ValidationError(f"{path} must end with a 'y' column")
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
        if data.size == 0:
            return cls.empty(len(header) - 1)
        return cls(data[:, :-1], data[:, -1])


def validate_dataset(dataset: Dataset, box: Box, eps: float = 0.0) -> None:
    """Check that every row of ``dataset`` lies in ``box`` (within ``eps``)
    and that all values are finite.

    Raises
    ------
    ValidationError
        Naming the first offending row.
    """
    if dataset.n == 0:
        return
    if dataset.ndim != box.ndim:
        raise ValidationError(
            f"dataset has {dataset.ndim} columns but box has {box.ndim} dimensions"
        )
    inside = box.contains(dataset.X, eps=eps)
    if not np.all(inside):
        i = int(np.argmin(inside))
        raise ValidationError(f"row {i} = {dataset.X[i].tolist()} lies outside the box")
    finite = np.isfinite(dataset.y)
    if not np.all(finite):
        i = int(np.argmin(finite))
        raise ValidationError(f"observation {i} has non-finite value {dataset.y[i]}")


@dataclass(frozen=True)
class Decomposition:
    """Assignment of input dimensions to additive groups.

    ``assignment[d]`` is the group index of dimension ``d``; indices range
    over ``[0, max_groups)``.  Groups with no dimensions are allowed (they
    contribute nothing to the model) and ``groups`` lists only the non-empty
    ones, each as a sorted tuple, ordered by group index.
    """

    assignment: tuple[int, ...]
    max_groups: int

    def __init__(self, assignment: Iterable[int], max_groups: int | None = None):
        asg = tuple(int(a) for a in assignment)
        if not asg:
            raise ValidationError("assignment must cover at least one dimension")
        if min(asg) < 0:
            raise ValidationError("group indices must be non-negative")
        cap = len(asg) if max_groups is None else int(max_groups)
        if max(asg) >= cap:
            raise ValidationError(
                f"group index {max(asg)} exceeds the maximum of {cap} groups"
            )
        object.__setattr__(self, "assignment", asg)
        object.__setattr__(self, "max_groups", cap)

    @property
    def ndim(self) -> int:
        return len(self.assignment)

    @property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        """Non-empty groups as sorted dimension tuples, by group index."""
        out: dict[int, list[int]] = {}
        for d, m in enumerate(self.assignment):
            out.setdefault(m, []).append(d)
        return tuple(tuple(out[m]) for m in sorted(out))

    @property
    def group_ids(self) -> tuple[int, ...]:
        """Indices of the non-empty groups, ascending."""
        return tuple(sorted(set(self.assignment)))

    @property
    def n_groups(self) -> int:
        return len(set(self.assignment))

    def group_of(self, dim: int) -> int:
        return self.assignment[dim]

    def members(self, group: int) -> tuple[int, ...]:
        return tuple(d for d, m in enumerate(self.assignment) if m == group)

    def replace(self, dim: int, group: int) -> "Decomposition":
        asg = list(self.assignment)
        asg[dim] = group
        return Decomposition(asg, self.max_groups)


@dataclass(frozen=True, eq=False)
class TileParams:
    """Structural and prior parameters of the additive tile model.

    Attributes
    ----------
    decomposition:
        Which dimensions share a group.
    cut_counts:
        Integer array of shape ``(ndim, n_layers)``; entry ``[d, l]`` is the
        number of cuts along dimension ``d`` in layer ``l``.
    n_layers:
        Number of stacked layouts.
    noise:
        Observation noise standard deviation.
    group_concentration:
        Dirichlet concentration per group, shape ``(max_groups,)``.
    cut_prior_shape, cut_prior_rate:
        Gamma prior on the per-dimension cut rate: shape and rate.
    feature_kind:
        ``"tile"`` (uniform grid with a random offset) or ``"mondrian"``
        (independently drawn cut locations).
    """

    decomposition: Decomposition
    cut_counts: np.ndarray
    n_layers: int
    noise: float
    group_concentration: np.ndarray
    cut_prior_shape: float
    cut_prior_rate: float
    feature_kind: str

    def __init__(
        self,
        decomposition: Decomposition,
        cut_counts,
        noise: float = 0.01,
        group_concentration=1.0,
        cut_prior_shape: float = 1.0,
        cut_prior_rate: float = 1.0,
        feature_kind: str = TILE_CODING,
    ):
        counts = _frozen_array(cut_counts, dtype=np.int64, ndim=2)
        if counts.shape[0] != decomposition.ndim:
            raise ValidationError(
                f"cut_counts covers {counts.shape[0]} dimensions, expected "
                f"{decomposition.ndim}"
            )
        if counts.shape[1] < 1:
            raise ValidationError("at least one layer is required")
        if np.any(counts < 0):
            raise ValidationError("cut counts must be non-negative")
        if noise <= 0:
            raise ValidationError("noise must be positive")
        conc = np.broadcast_to(
            np.asarray(group_concentration, dtype=np.float64),
            (decomposition.max_groups,),
        ).copy()
        if np.any(conc <= 0):
            raise ValidationError("group concentrations must be positive")
        conc.setflags(write=False)
        if cut_prior_shape <= 0 or cut_prior_rate <= 0:
            raise ValidationError("cut prior shape and rate must be positive")
        if feature_kind not in FEATURE_KINDS:
            raise ValidationError(
                f"feature_kind must be one of {FEATURE_KINDS}, got {feature_kind!r}"
            )
        object.__setattr__(self, "decomposition", decomposition)
        object.__setattr__(self, "cut_counts", counts)
        object.__setattr__(self, "n_layers", int(counts.shape[1]))
        object.__setattr__(self, "noise", float(noise))
        object.__setattr__(self, "group_concentration", conc)
        object.__setattr__(self, "cut_prior_shape", float(cut_prior_shape))
        object.__setattr__(self, "cut_prior_rate", float(cut_prior_rate))
        object.__setattr__(self, "feature_kind", str(feature_kind))

    @property
    def ndim(self) -> int:
        return self.decomposition.ndim

    def with_cut_counts(self, cut_counts) -> "TileParams":
        return TileParams(
            self.decomposition,
            cut_counts,
            noise=self.noise,
            group_concentration=self.group_concentration,
            cut_prior_shape=self.cut_prior_shape,
            cut_prior_rate=self.cut_prior_rate,
            feature_kind=self.feature_kind,
        )

    def with_decomposition(self, decomposition: Decomposition) -> "TileParams":
        return TileParams(
            decomposition,
            self.cut_counts,
            noise=self.noise,
            group_concentration=self.group_concentration,
            cut_prior_shape=self.cut_prior_shape,
            cut_prior_rate=self.cut_prior_rate,
            feature_kind=self.feature_kind,
        )


def _stream_token(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise ValidationError(f"stream ids must be ints or strings, got {type(part)!r}")


@dataclass(frozen=True)
class RngStream:
    """Named, forkable random stream.

    A stream is identified by a root seed plus a tuple of ids.  Identical
    ``(seed, ids)`` always produce identical generators, and sibling streams
    are statistically independent, so work scheduled across any number of
    workers draws the same randomness as a serial run.
    """

    seed: int
    ids: tuple[int, ...] = field(default_factory=tuple)

    def child(self, *parts) -> "RngStream":
        """Substream addressed by extra ids (ints or short strings)."""
        return RngStream(self.seed, self.ids + tuple(_stream_token(p) for p in parts))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.ids)
        return np.random.Generator(np.random.PCG64(seq))
