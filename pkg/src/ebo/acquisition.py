"""Candidate generation inside one partition.

The acquisition score used throughout is ``eta(x) = (fstar - mu(x)) / sigma(x)``
with ``fstar`` an upper bound on the optimum; lower is better, and points the
model already explains (tiny sigma) score ``+inf`` so they are never chosen.

:func:`block_optimize` minimises ``eta`` one additive group at a time: for
each group, in shuffled order, it scores a cloud of uniform samples over the
group's coordinates, locally refines the best with a bounded quasi-Newton
step, and commits the move only when it does not worsen the working point.
:func:`partition_batch` turns one such pass into a fixed-size candidate list
(best scored points first, uniform fill after), and :func:`allocate_budget`
splits the global candidate budget across partitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import Box, Decomposition, ValidationError
from .partition import PartitionSet

__all__ = [
    "Candidate",
    "eta_values",
    "eta",
    "default_fstar",
    "block_optimize",
    "partition_batch",
    "allocate_budget",
]

SIGMA_FLOOR = 1e-9
_BIG = 1e300


@dataclass(frozen=True)
class Candidate:
    """A proposed evaluation point with its acquisition value."""

    x: np.ndarray
    eta: float
    partition: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "partition", int(self.partition))


def eta_values(mu: np.ndarray, sigma: np.ndarray, fstar: float) -> np.ndarray:
    """Vectorised acquisition ``(fstar - mu) / sigma`` with the sigma floor."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    out = np.full(mu.shape, np.inf)
    ok = sigma >= SIGMA_FLOOR
    np.divide(fstar - mu, sigma, out=out, where=ok)
    return out


def eta(post, fstar: float, x) -> float:
    """Acquisition value of a single point under ``post``."""
    mu, var = post.predict(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return float(eta_values(mu, np.sqrt(var), fstar)[0])


def default_fstar(y) -> float:
    """Fallback upper bound when the problem does not provide one:
    largest observation plus three sample standard deviations."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise ValidationError("cannot infer an optimum bound from no data")
    spread = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
    return float(y.max() + 3.0 * spread)


class _FullSlice:
    """Group-restricted view of a posterior that only offers full predict."""

    def __init__(self, post, dims, base):
        self.post = post
        self.dims = list(dims)
        self.base = np.asarray(base, dtype=np.float64)

    def full_points(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        Xq = np.tile(self.base, (values.shape[0], 1))
        Xq[:, self.dims] = values
        return Xq

    def predict(self, values: np.ndarray):
        return self.post.predict(self.full_points(values))


def _slice_for(post, z: Decomposition, group_pos: int, base: np.ndarray):
    decomp = getattr(post, "decomp", None)
    if (
        hasattr(post, "slice")
        and decomp is not None
        and decomp.groups == z.groups
    ):
        return post.slice(base, group_pos)
    return _FullSlice(post, z.groups[group_pos], base)


def _slice_eta(sl, fstar: float):
    def fn(values: np.ndarray) -> np.ndarray:
        mu, var = sl.predict(values)
        return eta_values(mu, np.sqrt(var), fstar)

    return fn

def _refine(fn, x0: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Bounded quasi-Newton descent of ``fn`` from ``x0``.

    Gradients come from central differences with an absolute step of
    1e-6 of each side length, evaluated in one batched call.
    """
    k = x0.size
    steps = 1e-6 * (hi - lo)

    def value(v):
        return float(min(fn(v[None, :])[0], _BIG))

    def grad(v):
        pts = np.repeat(v[None, :], 2 * k, axis=0)
        for i in range(k):
            pts[2 * i, i] = min(v[i] + steps[i], hi[i])
            pts[2 * i + 1, i] = max(v[i] - steps[i], lo[i])
        es = np.minimum(fn(pts), _BIG)
        g = np.zeros(k)
        for i in range(k):
            span = pts[2 * i, i] - pts[2 * i + 1, i]
            if span > 0:
                g[i] = (es[2 * i] - es[2 * i + 1]) / span
        return g

    res = minimize(
        value,
        x0,
        jac=grad,
        method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
        options={"maxiter": 50, "ftol": 1e-8, "gtol": 1e-8},
    )
    xr = np.clip(res.x, lo, hi)
    return xr, float(fn(xr[None, :])[0])


def block_optimize(
    post,
    fstar: float,
    rect: Box,
    z: Decomposition,
    rng: np.random.Generator,
    base: np.ndarray | None = None,
    n_samples: int = 1000,
    pool: list | None = None,
    pool_size: int = 100,
) -> np.ndarray:
    """One pass of block-coordinate acquisition descent over ``rect``.

    Groups are visited in a uniformly shuffled order; each group move is
    accepted only if it does not increase ``eta`` of the working point, so
    the returned point never scores worse than ``base``.  When ``pool`` is
    given, the best ``pool_size`` scored points of every group (plus each
    refined point and the final working point) are appended to it as
    ``(points, etas)`` pairs for reuse by :func:`partition_batch`.
    """
    if base is None:
        base = rect.center
    base = np.asarray(base, dtype=np.float64).reshape(-1)
    if base.size != rect.ndim:
        raise ValidationError(f"base has {base.size} coordinates, expected {rect.ndim}")
    if not rect.contains(base):
        raise ValidationError("base point must lie inside the rectangle")
    groups = z.groups
    w = base.copy()
    eta_w = eta(post, fstar, w)
    for gpos in rng.permutation(len(groups)):
        dims = list(groups[gpos])
        lo, hi = rect.lower[dims], rect.upper[dims]
        sl = _slice_for(post, z, int(gpos), w)
        fn = _slice_eta(sl, fstar)
        samples = lo + rng.random((n_samples, len(dims))) * (hi - lo)
        etas = fn(samples)
        i = int(np.argmin(etas))
        x0, e0 = samples[i], float(etas[i])
        xr, er = _refine(fn, x0, lo, hi)
        if er <= e0:
            x_best, e_best = xr, er
        else:
            x_best, e_best = x0, e0
        if pool is not None:
            keep = min(pool_size, n_samples)
            top = np.argpartition(etas, keep - 1)[:keep] if keep < n_samples else np.arange(n_samples)
            full = np.tile(w, (keep + 1, 1))
            full[:keep, dims] = samples[top]
            full[keep, dims] = x_best
            pool.append((full, np.append(etas[top], e_best)))
        if e_best <= eta_w:
            w[dims] = x_best
            eta_w = e_best
    if pool is not None:
        pool.append((w[None, :].copy(), np.array([eta_w])))
    return w


def partition_batch(
    post,
    fstar: float,
    rect: Box,
    z: Decomposition,
    budget: int,
    topn: int,
    rng: np.random.Generator,
    partition_id: int = 0,
    base: np.ndarray | None = None,
    n_samples: int = 1000,
) -> list[Candidate]:
    """Produce exactly ``budget`` scored candidates inside ``rect``.

    The first ``min(topn, budget)`` are the best distinct points seen during
    one :func:`block_optimize` pass started at ``base`` (the partition's best
    observed point; rectangle center when absent); the remainder are uniform
    draws over ``rect``, all tagged with their acquisition values.
    """
    if budget < 1:
        raise ValidationError("budget must be at least 1")
    pool: list = []
    block_optimize(
        post,
        fstar,
        rect,
        z,
        rng,
        base=base,
        n_samples=n_samples,
        pool=pool,
        pool_size=max(1, min(topn, budget)),
    )
    pts = np.vstack([pool[-1][0]] + [p for p, _ in pool[:-1]])
    vals = np.concatenate([pool[-1][1]] + [e for _, e in pool[:-1]])
    order = np.argsort(vals, kind="stable")
    chosen: list[Candidate] = []
    seen: set[bytes] = set()
    want = min(topn, budget)
    for i in order:
        key = pts[i].tobytes()
        if key in seen:
            continue
        seen.add(key)
        chosen.append(Candidate(pts[i], float(vals[i]), partition_id))
        if len(chosen) >= want:
            break
    n_fill = budget - len(chosen)
    if n_fill > 0:
        Xr = rect.uniform(rng, n_fill)
        mu, var = post.predict(Xr)
        es = eta_values(mu, np.sqrt(var), fstar)
        chosen.extend(
            Candidate(Xr[i], float(es[i]), partition_id) for i in range(n_fill)
        )
    return chosen


def allocate_budget(pset: PartitionSet, bests, B: int) -> np.ndarray:
    """Split ``max(2B, J)`` candidate slots across the ``J`` partitions.

    Each partition's score is its volume fraction plus its best observed
    value (zero when it holds no data); when any best is negative all best
    terms are shifted up by the minimum so scores stay nonnegative.  Slots
    are apportioned by largest remainder and every partition keeps at least
    one slot.
    """
    if B < 1:
        raise ValidationError("B must be at least 1")
    J = len(pset)
    best_arr = np.array(
        [0.0 if b is None or not np.isfinite(b) else float(b) for b in bests]
    )
    if best_arr.shape[0] != J:
        raise ValidationError(f"expected {J} best values, got {best_arr.shape[0]}")
    low = best_arr.min() if J else 0.0
    if low < 0:
        best_arr = best_arr - low
    scores = pset.volume_fractions + best_arr
    total = max(2 * B, J)
    quotas = total * scores / scores.sum()
    budgets = np.floor(quotas).astype(np.int64)
    rem = quotas - budgets
    left = int(total - budgets.sum())
    if left > 0:
        order = np.argsort(-rem, kind="stable")
        budgets[order[:left]] += 1
    while np.any(budgets == 0):
        donor = int(np.argmax(budgets))
        taker = int(np.argmin(budgets))
        budgets[donor] -= 1
        budgets[taker] += 1
    return budgets
