"""Gaussian-process posteriors: exact kernel oracles and feature-space forms.

Two families live here:

* :func:`exact_gp_posterior` / :func:`exact_log_likelihood` — textbook
  kernel-space computations, used as oracles and for small problems.
* :class:`FeaturePosterior` — the finite-feature model ``y = Phi w + e`` with
  standard-normal weights.  Fitting routes between a feature-space solve
  (when there are fewer columns than rows) and a data-space solve (otherwise);
  by the matrix-inversion and determinant lemmas the two give identical
  predictions and likelihoods.
* :class:`TilePosterior` — the same model specialised to tile features, where
  Gram entries are integer cell-match counts and the self-kernel is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from ._backend import cross_match
from ._hashing import chain, seed_state
from .core import Box, Decomposition, ValidationError
from .features import FeatureSpace, Tiling, bin_matrix, block_labels

__all__ = [
    "FeaturePosterior",
    "TilePosterior",
    "fit_features",
    "predict_features",
    "feature_log_likelihood",
    "exact_gp_posterior",
    "exact_log_likelihood",
]

_LOG_2PI = np.log(2.0 * np.pi)

ROUTE_FEATURE = "feature"
ROUTE_DATA = "data"


def _dense(M) -> np.ndarray:
    if hasattr(M, "toarray"):
        return M.toarray()
    return np.asarray(M, dtype=np.float64)


def _row_norms_sq(Phi) -> np.ndarray:
    if hasattr(Phi, "multiply"):
        return np.asarray(Phi.multiply(Phi).sum(axis=1)).reshape(-1)
    Phi = np.asarray(Phi)
    return np.einsum("ij,ij->i", Phi, Phi)


@dataclass(frozen=True, eq=False)
class FeaturePosterior:
    """Fitted finite-feature GP; see :func:`fit_features`."""

    route: str
    noise: float
    n: int
    n_features: int
    chol: np.ndarray | None
    weights: np.ndarray | None
    train_features: object | None
    alpha: np.ndarray | None


def fit_features(Phi, y, noise: float, route: str | None = None) -> FeaturePosterior:
    """Fit the weight-space GP ``y = Phi w + e``, ``w ~ N(0, I)``.

    Parameters
    ----------
    Phi:
        Feature matrix ``(n, f)``; NumPy array or SciPy sparse.
    y:
        Observations ``(n,)``.
    noise:
        Observation noise standard deviation (positive).
    route:
        Force ``"feature"`` or ``"data"``; by default the feature-space solve
        is used when ``f < n`` and the data-space solve otherwise.

    Both routes produce mathematically identical posteriors.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, f = Phi.shape
    if y.shape[0] != n:
        raise ValidationError(f"Phi has {n} rows but y has {y.shape[0]} entries")
    if noise <= 0:
        raise ValidationError("noise must be positive")
    if route is None:
        route = ROUTE_FEATURE if f < n else ROUTE_DATA
    if route not in (ROUTE_FEATURE, ROUTE_DATA):
        raise ValidationError(f"unknown route {route!r}")
    s2 = noise * noise
    if n == 0:
        return FeaturePosterior(route, noise, 0, f, None, None, Phi, None)
    if route == ROUTE_FEATURE:
        A = _dense(Phi.T @ Phi) / s2
        A[np.diag_indices(f)] += 1.0
        L = cholesky(A, lower=True, check_finite=False)
        b = np.asarray(Phi.T @ y).reshape(-1) / s2
        z = solve_triangular(L, b, lower=True, check_finite=False)
        w = solve_triangular(L.T, z, lower=False, check_finite=False)
        return FeaturePosterior(route, noise, n, f, L, w, None, None)
    K = _dense(Phi @ Phi.T)
    K[np.diag_indices(n)] += s2
    L = cholesky(K, lower=True, check_finite=False)
    z = solve_triangular(L, y, lower=True, check_finite=False)
    alpha = solve_triangular(L.T, z, lower=False, check_finite=False)
    return FeaturePosterior(route, noise, n, f, L, None, Phi, alpha)


def predict_features(
    post: FeaturePosterior,
    Phi_q,
    extra_var: np.ndarray | float = 0.0,
    self_kernel: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query features.

    ``extra_var`` adds prior-weight variance for features outside the fitted
    columns (each unseen feature contributes its squared value); it is ignored
    on the data route, where ``self_kernel`` — the full prior self-kernel
    ``k(x, x)`` including any unseen mass — is used instead (default: row
    norms of ``Phi_q`` plus ``extra_var``).
    """
    nq = Phi_q.shape[0]
    extra = np.broadcast_to(np.asarray(extra_var, dtype=np.float64), (nq,))
    if self_kernel is None:
        self_kernel = _row_norms_sq(Phi_q) + extra
    if post.n == 0:
        return np.zeros(nq), np.asarray(self_kernel, dtype=np.float64).copy()
    if post.route == ROUTE_FEATURE:
        mu = np.asarray(Phi_q @ post.weights).reshape(-1)
        V = solve_triangular(
            post.chol, _dense(Phi_q).T, lower=True, check_finite=False
        )
        var = np.einsum("ij,ij->j", V, V) + extra
        return mu, var
    Kq = _dense(Phi_q @ post.train_features.T)
    mu = Kq @ post.alpha
    V = solve_triangular(post.chol, Kq.T, lower=True, check_finite=False)
    var = np.asarray(self_kernel, dtype=np.float64) - np.einsum("ij,ij->j", V, V)
    return mu, np.maximum(var, 0.0)


def feature_log_likelihood(Phi, y, noise: float, route: str | None = None) -> float:
    """Marginal log-likelihood of ``y`` under the finite-feature model.

    The feature route uses the determinant lemma
    ``log|Phi Phi^T + s2 I| = n log s2 + log|I + Phi^T Phi / s2|`` and the
    matrix-inversion lemma for the quadratic form, so both routes agree to
    numerical precision.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, f = Phi.shape
    if n == 0:
        return 0.0
    if route is None:
        route = ROUTE_FEATURE if f < n else ROUTE_DATA
    s2 = noise * noise
    if route == ROUTE_FEATURE:
        A = _dense(Phi.T @ Phi) / s2
        A[np.diag_indices(f)] += 1.0
        L = cholesky(A, lower=True, check_finite=False)
        b = np.asarray(Phi.T @ y).reshape(-1) / s2
        z = solve_triangular(L, b, lower=True, check_finite=False)
        quad = (y @ y) / s2 - float(z @ z)
        logdet = n * np.log(s2) + 2.0 * np.log(np.diag(L)).sum()
        return float(-0.5 * quad - 0.5 * logdet - 0.5 * n * _LOG_2PI)
    K = _dense(Phi @ Phi.T)
    K[np.diag_indices(n)] += s2
    L = cholesky(K, lower=True, check_finite=False)
    z = solve_triangular(L, y, lower=True, check_finite=False)
    return float(-0.5 * (z @ z) - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI)


def exact_gp_posterior(
    kernel_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    noise: float,
    Xq: np.ndarray,
    jitter: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """Textbook GP posterior under an explicit kernel (oracle path).

    ``jitter`` is added to the training Gram diagonal for numerical safety;
    the reported variance is clamped at zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    kqq = np.diag(kernel_fn(Xq, Xq)).copy()
    if n == 0:
        return np.zeros(Xq.shape[0]), kqq
    K = kernel_fn(X, X) + (jitter + noise * noise) * np.eye(n)
    L = cholesky(K, lower=True, check_finite=False)
    Kq = kernel_fn(Xq, X)
    z = solve_triangular(L, y, lower=True, check_finite=False)
    alpha = solve_triangular(L.T, z, lower=False, check_finite=False)
    mu = Kq @ alpha
    V = solve_triangular(L, Kq.T, lower=True, check_finite=False)
    var = kqq - np.einsum("ij,ij->j", V, V)
    return mu, np.maximum(var, 0.0)


def exact_log_likelihood(
    kernel_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    noise: float,
    jitter: float = 0.0,
) -> float:
    """Gaussian marginal log-likelihood under an explicit kernel (oracle)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    if n == 0:
        return 0.0
    K = kernel_fn(X, X) + (jitter + noise * noise) * np.eye(n)
    L = cholesky(K, lower=True, check_finite=False)
    z = solve_triangular(L, y, lower=True, check_finite=False)
    return float(-0.5 * (z @ z) - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI)


class TilePosterior:
    """Posterior of the additive tile model over one dataset.

    Fitting routes like :func:`fit_features`: when the number of occupied
    feature columns is below the number of points a feature-space registry
    solve is used, otherwise the data-space solve on the integer match-count
    Gram.  Predictions are identical either way.
    """

    def __init__(self, tiling, decomp, noise, salt, route, n, payload):
        self.tiling = tiling
        self.decomp = decomp
        self.noise = noise
        self.salt = salt
        self.route = route
        self.n = n
        self._payload = payload

    @classmethod
    def fit(
        cls,
        tiling: Tiling,
        decomp: Decomposition,
        X: np.ndarray,
        y: np.ndarray,
        noise: float,
        U: np.ndarray | None = None,
        salt: int = 0,
    ) -> "TilePosterior":
        """Fit to data; ``U`` may supply a precomputed unnormalised Gram."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        n = y.shape[0]
        if n == 0:
            return cls(tiling, decomp, noise, salt, "empty", 0, None)
        labels = block_labels(tiling, decomp, X, salt=salt)
        nb = labels.shape[0]
        n_columns = sum(np.unique(labels[b]).size for b in range(nb))
        if n_columns < n:
            space = FeatureSpace.build(tiling, decomp, X, salt=salt)
            Phi, _ = space.feature_matrix(X)
            post = fit_features(Phi, y, noise, route=ROUTE_FEATURE)
            return cls(tiling, decomp, noise, salt, ROUTE_FEATURE, n, (space, post))
        if U is None:
            U = cross_match(labels, labels)
        C = U / nb
        C[np.diag_indices(n)] += noise * noise
        L = cholesky(C, lower=True, check_finite=False)
        z = solve_triangular(L, y, lower=True, check_finite=False)
        alpha = solve_triangular(L.T, z, lower=False, check_finite=False)
        return cls(
            tiling, decomp, noise, salt, ROUTE_DATA, n, (labels, L, alpha)
        )

    def predict(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at query points ``(nq, d)``."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        nq = Xq.shape[0]
        if self.route == "empty":
            return np.zeros(nq), np.ones(nq)
        if self.route == ROUTE_FEATURE:
            space, post = self._payload
            Phi_q, extra = space.feature_matrix(Xq)
            return predict_features(
                post, Phi_q, extra_var=extra, self_kernel=np.ones(nq)
            )
        labels, L, alpha = self._payload
        qlab = block_labels(self.tiling, self.decomp, Xq, salt=self.salt)
        counts = cross_match(qlab, labels)
        return self._finish(counts, np.ones(nq))

    def _finish(self, counts: np.ndarray, self_kernel: np.ndarray):
        labels, L, alpha = self._payload
        Kq = counts / labels.shape[0]
        mu = Kq @ alpha
        V = solve_triangular(L, Kq.T, lower=True, check_finite=False)
        var = self_kernel - np.einsum("ij,ij->j", V, V)
        return mu, np.maximum(var, 0.0)

    def slice(self, base: np.ndarray, group_pos: int) -> "TileSlice":
        """Fast predictor for points that differ from ``base`` only on the
        dimensions of one additive group (by position in ``decomp.groups``)."""
        base = np.asarray(base, dtype=np.float64).reshape(-1)
        dims = self.decomp.groups[group_pos]
        if self.route != ROUTE_DATA:
            return TileSlice(self, dims, None, None, base)
        labels, L, alpha = self._payload
        nlayers = self.tiling.n_layers
        lo = group_pos * nlayers
        block_idx = np.arange(lo, lo + nlayers)
        other_idx = np.setdiff1d(np.arange(labels.shape[0]), block_idx)
        base_lab = block_labels(self.tiling, self.decomp, base[None, :], salt=self.salt)
        if other_idx.size:
            fixed = cross_match(base_lab[other_idx], labels[other_idx])[0]
        else:
            fixed = np.zeros(labels.shape[1])
        return TileSlice(self, dims, block_idx, fixed, base)


class TileSlice:
    """Predictions along one additive group with everything else held fixed."""

    def __init__(self, post: TilePosterior, dims, block_idx, fixed, base):
        self.post = post
        self.dims = dims
        self._block_idx = block_idx
        self._fixed = fixed
        self.base = base

    def full_points(self, values: np.ndarray) -> np.ndarray:
        """Candidate group values embedded into copies of the base point."""
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        Xq = np.tile(self.base, (values.shape[0], 1))
        Xq[:, list(self.dims)] = values
        return Xq

    def predict(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior at ``base`` with the group's coordinates replaced by the
        rows of ``values`` (shape ``(nq, len(dims))``)."""
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        post = self.post
        if post.route != ROUTE_DATA:
            return post.predict(self.full_points(values))
        labels, L, alpha = post._payload
        tiling = post.tiling
        gid = post.decomp.group_ids[self._block_idx[0] // tiling.n_layers]
        nq = values.shape[0]
        qlab = np.empty((self._block_idx.size, nq), dtype=np.uint64)
        for j, layer in enumerate(range(tiling.n_layers)):
            cols = []
            for pos, d in enumerate(self.dims):
                cuts = tiling.cut_locations[d][layer]
                cols.append(
                    np.searchsorted(cuts, values[:, pos], side="right").astype(np.int64)
                )
            state = seed_state(post.salt, 0, gid, layer)
            qlab[j] = chain(state, cols)
        counts = cross_match(qlab, labels[self._block_idx]) + self._fixed[None, :]
        return post._finish(counts, np.ones(nq))
