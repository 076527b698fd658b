"""Batch selection and cross-partition consensus.

After every partition proposes candidates, :func:`greedy_filter` keeps the
``B`` points that greedily maximise ``log det K + sum of (-eta)`` — a
diversity term (posterior log-volume under the synchronized global kernel)
plus the per-candidate acquisition quality.  :func:`sync_k` and
:func:`sync_z` then merge the per-partition structural parameters into a
single consensus: cut counts by rounded mean, dimension grouping by greedy
pivot correlation clustering on pairwise agreement.
"""

from __future__ import annotations

import numpy as np

from .core import Decomposition, ValidationError
from .acquisition import Candidate

__all__ = ["greedy_filter", "sync_k", "sync_z", "JITTER"]

JITTER = 1e-10


def greedy_filter(cands: list[Candidate], B: int, kernel_fn, eta_fn=None) -> list[Candidate]:
    """Greedily pick ``B`` candidates by marginal gain.

    The gain of adding ``x`` to the already-selected set ``S`` is
    ``log(k(x,x) - k_Sx^T K_S^{-1} k_Sx + JITTER) - eta(x)``: the log of the
    posterior variance of ``x`` given ``S`` under ``kernel_fn`` (so duplicates
    collapse to ``log JITTER`` and are effectively never re-picked) minus the
    candidate's acquisition value (``eta_fn`` defaults to the value each
    candidate already carries from its source partition).

    Fewer candidates than ``B`` returns them all, in greedy order.
    """
    if B < 1:
        raise ValidationError("B must be at least 1")
    if not cands:
        return []
    n = len(cands)
    X = np.vstack([c.x for c in cands])
    etas = (
        np.array([c.eta for c in cands])
        if eta_fn is None
        else np.array([float(eta_fn(c.x)) for c in cands])
    )
    K = np.asarray(kernel_fn(X, X), dtype=np.float64)
    take = min(B, n)
    selected: list[int] = []
    # proj[j, i]: j-th back-substituted coordinate of candidate i against the
    # Cholesky factor of K[selected][:, selected] + JITTER*I, built row by row;
    # resid[i] is then the posterior variance of i given the selected set.
    proj = np.zeros((take, n))
    resid = K.diagonal().copy() + JITTER
    out: list[Candidate] = []
    for step in range(take):
        gains = np.where(resid > 0, np.log(np.maximum(resid, 1e-300)), -np.inf) - etas
        gains[selected] = -np.inf
        pick = int(np.argmax(gains))
        selected.append(pick)
        out.append(cands[pick])
        if step + 1 < take:
            piv = float(np.sqrt(max(resid[pick], 1e-300)))
            row = (K[pick] - proj[:step].T @ proj[:step, pick]) / piv
            proj[step] = row
            resid = resid - row * row
    return out


def sync_k(ks) -> np.ndarray:
    """Entrywise mean of the per-partition cut-count matrices, rounded
    half-up to integers."""
    mats = [np.asarray(k, dtype=np.float64) for k in ks]
    if not mats:
        raise ValidationError("need at least one cut-count matrix")
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise ValidationError(f"cut-count shapes differ: {m.shape} vs {shape}")
    mean = np.mean(mats, axis=0)
    return np.floor(mean + 0.5).astype(np.int64)


def _assignment_array(z) -> np.ndarray:
    if isinstance(z, Decomposition):
        return np.asarray(z.assignment, dtype=np.int64)
    return np.asarray(z, dtype=np.int64).reshape(-1)


def sync_z(zs, rng: np.random.Generator, max_groups: int | None = None) -> Decomposition:
    """Consensus dimension grouping via pivot correlation clustering.

    For every dimension pair the vote weight is (#partitions grouping them
    together) − (#partitions separating them).  A uniformly random pivot
    absorbs every remaining dimension with positive weight to it; the rest
    recurse.  Clusters are relabeled in order of their smallest member, so
    the result is invariant to how the inputs label their groups.
    """
    arrays = [_assignment_array(z) for z in zs]
    if not arrays:
        raise ValidationError("need at least one assignment")
    D = arrays[0].size
    for a in arrays:
        if a.size != D:
            raise ValidationError("assignments must cover the same dimensions")
    votes = np.zeros((D, D))
    for a in arrays:
        same = a[:, None] == a[None, :]
        votes += np.where(same, 1.0, -1.0)
    remaining = list(range(D))
    clusters: list[list[int]] = []
    while remaining:
        pivot = remaining[int(rng.integers(len(remaining)))]
        cluster = [pivot] + [e for e in remaining if e != pivot and votes[pivot, e] > 0]
        clusters.append(sorted(cluster))
        taken = set(cluster)
        remaining = [e for e in remaining if e not in taken]
    clusters.sort(key=min)
    assignment = np.empty(D, dtype=np.int64)
    for label, members in enumerate(clusters):
        assignment[members] = label
    if max_groups is None:
        caps = [z.max_groups for z in zs if isinstance(z, Decomposition)]
        max_groups = max(caps) if caps else D
    return Decomposition(assignment.tolist(), max_groups)
