"""NumPy implementations of the hot numerical kernels.

This module is the fallback backend selected when the compiled extension is
unavailable (see :mod:`ebo._backend`).  The compiled extension implements the
same contract; both are exercised by the backend-equivalence tests.

Conventions shared by both backends
-----------------------------------
* ``U`` is the *unnormalised* Gram matrix: for every (group, layer) block it
  accumulates 1 where two points share a cell, so all entries are exact small
  integers stored as float64.  The model covariance is ``U * scale`` with
  ``scale = 1 / (n_layers * n_nonempty_groups)``.
* Labels are uint64 cell hashes; two points share a cell within a block iff
  their labels are equal.
* All log-densities are natural-log Gaussian log-likelihoods of ``y`` under
  ``N(0, U*scale + sigma2*I)``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from ._hashing import mix

NAME = "python"

_LOG_2PI = np.log(2.0 * np.pi)

KIND_TILE = 0
KIND_MONDRIAN = 1


def add_equality(U: np.ndarray, labels: np.ndarray, coeff: float) -> None:
    """In place: ``U[i, j] += coeff`` wherever ``labels[i] == labels[j]``."""
    eq = labels[:, None] == labels[None, :]
    U += coeff * eq


def chol_loglik(C: np.ndarray, y: np.ndarray) -> float:
    """Log-density of ``y`` under ``N(0, C)``; ``-inf`` if ``C`` is not PD."""
    n = y.shape[0]
    if n == 0:
        return 0.0
    try:
        L = cholesky(C, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return -np.inf
    except Exception:
        return -np.inf
    x = solve_triangular(L, y, lower=True, check_finite=False)
    return float(
        -0.5 * np.dot(x, x) - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI
    )


def gram_loglik(U: np.ndarray, scale: float, sigma2: float, y: np.ndarray) -> float:
    """Log-likelihood of ``y`` under covariance ``U*scale + sigma2*I``."""
    n = y.shape[0]
    if n == 0:
        return 0.0
    C = U * scale
    C[np.diag_indices(n)] += sigma2
    return chol_loglik(C, y)


def loglik_delta(
    U: np.ndarray,
    scale: float,
    sigma2: float,
    y: np.ndarray,
    minus: np.ndarray,
    plus: np.ndarray,
) -> float:
    """Log-likelihood after swapping equality blocks.

    ``minus`` and ``plus`` are arrays of label rows, shape ``(*, n)``; each
    ``minus`` row removes one block from ``U`` and each ``plus`` row adds one,
    all under the (possibly new) ``scale``.
    """
    n = y.shape[0]
    if n == 0:
        return 0.0
    C = U * scale
    for row in minus:
        C -= scale * (row[:, None] == row[None, :])
    for row in plus:
        C += scale * (row[:, None] == row[None, :])
    C[np.diag_indices(n)] += sigma2
    return chol_loglik(C, y)


def derive_cuts(kind: int, lo: float, hi: float, c: int, u_row: np.ndarray) -> np.ndarray:
    """Cut locations for a candidate layer with ``c`` cuts.

    Tile layouts place ``c`` evenly spaced cuts shifted by a random offset in
    ``[0, side/c)``; independently drawn layouts sort ``c`` uniform locations.
    The arithmetic here is mirrored exactly by the compiled backend so both
    derive bit-identical cut locations from the same uniforms.
    """
    if c == 0:
        return np.empty(0, dtype=np.float64)
    if kind == KIND_TILE:
        w = (hi - lo) / c
        delta = u_row[0] * w
        return (lo + delta) + np.arange(c, dtype=np.float64) * w
    return np.sort(lo + u_row[:c] * (hi - lo))


def bin_of(cuts: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bin index per coordinate: the number of cuts at or below it.

    A point exactly on a cut belongs to the upper bin.
    """
    return np.searchsorted(cuts, xs, side="right").astype(np.int64)


def cut_scan(
    U_base: np.ndarray,
    scale: float,
    sigma2: float,
    y: np.ndarray,
    xs: np.ndarray,
    other_hash: np.ndarray,
    kind: int,
    lo: float,
    hi: float,
    uniforms: np.ndarray,
    cur_k: int,
    cur_loglik: float,
    cur_labels: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Score every candidate cut count for one (dimension, layer) slot.

    ``U_base`` must already exclude the slot's current block.  Candidate
    ``c != cur_k`` draws a fresh layout from ``uniforms[c]`` and is scored by
    the Gaussian log-likelihood with its block swapped in; the current count
    keeps its existing layout and cached log-likelihood (its ``uniforms`` row
    is ignored).

    Returns
    -------
    logliks : (n_candidates,) float64
    labels : (n_candidates, n) uint64
        Cell labels per candidate; row ``cur_k`` is the current labels.
    """
    n = xs.shape[0]
    n_cand = uniforms.shape[0]
    logliks = np.empty(n_cand, dtype=np.float64)
    labels = np.empty((n_cand, n), dtype=np.uint64)
    for c in range(n_cand):
        if c == cur_k:
            logliks[c] = cur_loglik
            labels[c] = cur_labels
            continue
        cuts = derive_cuts(kind, lo, hi, c, uniforms[c])
        bins = bin_of(cuts, xs)
        lab = mix(other_hash, bins)
        labels[c] = lab
        if n == 0:
            logliks[c] = 0.0
            continue
        C = U_base * scale
        C += scale * (lab[:, None] == lab[None, :])
        C[np.diag_indices(n)] += sigma2
        logliks[c] = chol_loglik(C, y)
    return logliks, labels


def cross_match(q_labels: np.ndarray, t_labels: np.ndarray) -> np.ndarray:
    """Count label agreements between query and training points.

    ``q_labels`` has shape ``(blocks, nq)`` and ``t_labels`` ``(blocks, nt)``;
    the result ``(nq, nt)`` counts blocks where the labels coincide.
    """
    nq = q_labels.shape[1]
    nt = t_labels.shape[1]
    out = np.zeros((nq, nt), dtype=np.float64)
    for b in range(q_labels.shape[0]):
        out += q_labels[b][:, None] == t_labels[b][None, :]
    return out
