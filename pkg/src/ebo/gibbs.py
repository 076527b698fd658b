"""Gibbs sampler over the additive tile model's structure.

The sampled state is the pair (group assignment per dimension, cut count per
dimension and layer) together with the concrete cut locations of every layer.
Moves are:

* ``resample_assignment(d)`` — a Gibbs draw of dimension ``d``'s group from
  its conditional: candidate weights multiply the marginal data likelihood
  (cut layouts held fixed) by ``|group without d| + concentration``.
* ``resample_cut_count(d, layer)`` — a Gibbs draw of one slot's cut count.
  Every candidate count other than the current one draws a fresh layout for
  the slot; the current count keeps its existing layout and cached
  likelihood.  (Refreshing the current candidate too would bias the chain —
  keeping it is what makes the auxiliary-layout construction a valid move,
  so the stationary distribution over counts marginalises the layouts
  exactly.)  Candidate weights multiply the data likelihood by the
  closed-form count prior ``Gamma(shape + total_d) / ((rate + L)^c * c!)``
  with ``total_d`` the dimension's cut total over all layers.

The sampler maintains the unnormalised integer Gram ``U`` (cell-match counts
over all (group, layer) blocks), the per-block label vectors backing it, and
the cached Gaussian log-likelihood of the data; all three are updated
incrementally and stay exact because every accepted move replaces the cache
with a freshly factorised value.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from . import _backend, _kernels_py
from ._hashing import chain, seed_state
from .core import (
    MONDRIAN_GRID,
    TILE_CODING,
    Box,
    Decomposition,
    TileParams,
    ValidationError,
)
from .features import Tiling, bin_matrix, sample_tiling
from .gp import TilePosterior

__all__ = ["GibbsState", "default_cut_cap"]


def default_cut_cap(params: TileParams, box: Box) -> np.ndarray:
    """Per-dimension cap on candidate cut counts.

    Four times the prior mean cut rate times the side length, plus headroom;
    counts above the cap have negligible prior mass in the regimes used here.
    """
    mean_rate = params.cut_prior_shape / params.cut_prior_rate
    return np.ceil(4.0 * mean_rate * box.sides).astype(np.int64) + 10


def _draw_categorical(logw: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn proportionally to ``exp(logw)``; ``-1`` if all impossible."""
    m = np.max(logw)
    if not np.isfinite(m):
        return -1
    w = np.exp(logw - m)
    total = w.sum()
    u = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
    return min(idx, len(w) - 1)


class GibbsState:
    """Mutable sampler state for one dataset over one box.

    Use :meth:`from_params` to build; then call :meth:`sweep` (or the
    individual move methods) and read off :meth:`params`, :meth:`tiling`
    or :meth:`posterior`.
    """

    def __init__(
        self,
        box: Box,
        X: np.ndarray,
        y: np.ndarray,
        params: TileParams,
        tiling: Tiling,
        rng: np.random.Generator,
        cut_cap: np.ndarray,
        salt: int,
    ):
        self.box = box
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.Xf = np.asfortranarray(self.X)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.n = self.y.shape[0]
        self.noise = params.noise
        self._s2 = params.noise**2
        self.alpha = np.asarray(params.group_concentration, dtype=np.float64)
        self.max_groups = self.alpha.shape[0]
        self.beta_shape = params.cut_prior_shape
        self.beta_rate = params.cut_prior_rate
        self.kind_name = params.feature_kind
        self.kind = (
            _kernels_py.KIND_TILE
            if params.feature_kind == TILE_CODING
            else _kernels_py.KIND_MONDRIAN
        )
        self.n_layers = params.n_layers
        self.salt = salt
        self.rng = rng
        self.cut_cap = np.asarray(cut_cap, dtype=np.int64)
        self.z = np.array(params.decomposition.assignment, dtype=np.int64)
        self.k = np.array(params.cut_counts, dtype=np.int64)
        self.ndim = self.z.shape[0]
        if np.any(self.k > self.cut_cap[:, None]):
            raise ValidationError("initial cut counts exceed the candidate cap")
        self.cuts = [
            [np.asarray(tiling.cut_locations[d][l], dtype=np.float64) for l in range(self.n_layers)]
            for d in range(self.ndim)
        ]
        self.bins = bin_matrix(tiling, self.X)
        self.labels: dict[int, np.ndarray] = {}
        for m in self._occupied():
            self.labels[m] = self._group_label_rows(m, self._members(m))
        self.U = np.zeros((self.n, self.n), dtype=np.float64)
        for rows in self.labels.values():
            for l in range(self.n_layers):
                _backend.add_equality(self.U, rows[l], 1.0)
        self.loglik = self.loglik_from_scratch()
        self.n_sweeps = 0

    # ------------------------------------------------------------------
    # construction and snapshots
    # ------------------------------------------------------------------

    @classmethod
    def from_params(
        cls,
        params: TileParams,
        box: Box,
        X: np.ndarray,
        y: np.ndarray,
        rng: np.random.Generator,
        cut_cap: np.ndarray | None = None,
        salt: int = 0,
    ) -> "GibbsState":
        """Initialise from explicit parameters, drawing the initial layouts."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValidationError("X and y disagree on the number of points")
        if X.shape[0] and X.shape[1] != box.ndim:
            raise ValidationError("X and box disagree on dimensionality")
        if cut_cap is None:
            cut_cap = default_cut_cap(params, box)
        tiling = sample_tiling(params, box, rng)
        return cls(box, X, y, params, tiling, rng, cut_cap, salt)

    def _members(self, m: int) -> tuple[int, ...]:
        return tuple(int(d) for d in np.flatnonzero(self.z == m))

    def _occupied(self) -> list[int]:
        return sorted(int(m) for m in np.unique(self.z))

    @property
    def n_groups(self) -> int:
        return len(np.unique(self.z))

    @property
    def scale(self) -> float:
        return 1.0 / (self.n_layers * self.n_groups)

    def tiling(self) -> Tiling:
        return Tiling(self.box, self.kind_name, self.cuts)

    def decomposition(self) -> Decomposition:
        return Decomposition(self.z.tolist(), self.max_groups)

    def params(self) -> TileParams:
        """Snapshot of the current structure as immutable parameters."""
        return TileParams(
            self.decomposition(),
            self.k.copy(),
            noise=self.noise,
            group_concentration=self.alpha,
            cut_prior_shape=self.beta_shape,
            cut_prior_rate=self.beta_rate,
            feature_kind=self.kind_name,
        )

    def posterior(self) -> TilePosterior:
        """Posterior under the current structure (reuses the cached Gram)."""
        return TilePosterior.fit(
            self.tiling(),
            self.decomposition(),
            self.X,
            self.y,
            self.noise,
            U=self.U,
            salt=self.salt,
        )

    # ------------------------------------------------------------------
    # label helpers
    # ------------------------------------------------------------------

    def _fold(self, state, dims: tuple[int, ...], layer: int) -> np.ndarray:
        cols = [self.bins[d, layer] for d in dims]
        if not cols:
            return np.full(self.n, np.uint64(state), dtype=np.uint64)
        return chain(state, cols)

    def _group_label_rows(self, m: int, dims: tuple[int, ...]) -> np.ndarray:
        """Canonical labels of group ``m`` with members ``dims``: (L, n)."""
        rows = np.empty((self.n_layers, self.n), dtype=np.uint64)
        for l in range(self.n_layers):
            rows[l] = self._fold(seed_state(self.salt, 0, m, l), tuple(sorted(dims)), l)
        return rows

    def loglik_from_scratch(self) -> float:
        """Recompute the cached data log-likelihood from ``U``."""
        if self.n == 0:
            return 0.0
        return _backend.gram_loglik(self.U, self.scale, self._s2, self.y)

    # ------------------------------------------------------------------
    # moves
    # ------------------------------------------------------------------

    def resample_assignment(self, d: int) -> bool:
        """Gibbs update of dimension ``d``'s group; True if it moved."""
        m_old = int(self.z[d])
        sizes = np.bincount(self.z, minlength=self.max_groups)
        size_old = int(sizes[m_old])
        old_rest = tuple(e for e in self._members(m_old) if e != d)
        y = self.y

        logw = np.full(self.max_groups, -np.inf)
        empty_loglik: float | None = None
        cand_logliks: dict[int, float] = {}
        for m in range(self.max_groups):
            if m == m_old:
                loglik = self.loglik
            elif sizes[m] > 0:
                minus = [self.labels[m_old], self.labels[m]]
                plus = []
                if old_rest:
                    plus.append(self._group_label_rows(m_old, old_rest))
                plus.append(self._group_label_rows(m, self._members(m) + (d,)))
                n_groups_new = self.n_groups - (1 if size_old == 1 else 0)
                loglik = _backend.loglik_delta(
                    self.U,
                    1.0 / (self.n_layers * n_groups_new),
                    self._s2,
                    y,
                    np.vstack(minus).astype(np.uint64),
                    np.vstack(plus).astype(np.uint64),
                )
            else:
                if empty_loglik is None:
                    if size_old == 1:
                        # A singleton moving to an empty slot relabels the
                        # same structure: the likelihood is unchanged.
                        empty_loglik = self.loglik
                    else:
                        plus = [
                            self._group_label_rows(m_old, old_rest),
                            self._group_label_rows(m, (d,)),
                        ]
                        empty_loglik = _backend.loglik_delta(
                            self.U,
                            1.0 / (self.n_layers * (self.n_groups + 1)),
                            self._s2,
                            y,
                            self.labels[m_old].astype(np.uint64),
                            np.vstack(plus).astype(np.uint64),
                        )
                loglik = empty_loglik
            cand_logliks[m] = loglik
            size_excl = int(sizes[m]) - (1 if m == m_old else 0)
            logw[m] = loglik + np.log(size_excl + self.alpha[m])

        choice = _draw_categorical(logw, self.rng)
        if choice < 0 or choice == m_old:
            return False
        self._apply_assignment(d, m_old, choice, cand_logliks[choice])
        return True

    def _apply_assignment(self, d: int, m_old: int, m_new: int, new_loglik: float):
        old_rest = tuple(e for e in self._members(m_old) if e != d)
        new_members = self._members(m_new) + (d,)
        rename = not old_rest and int(np.count_nonzero(self.z == m_new)) == 0
        if rename:
            # Pure relabel: the Gram is unchanged; refresh labels for hygiene.
            self.z[d] = m_new
            del self.labels[m_old]
            self.labels[m_new] = self._group_label_rows(m_new, (d,))
            self.loglik = new_loglik
            return
        for l in range(self.n_layers):
            _backend.add_equality(self.U, self.labels[m_old][l], -1.0)
        if m_new in self.labels:
            for l in range(self.n_layers):
                _backend.add_equality(self.U, self.labels[m_new][l], -1.0)
        if old_rest:
            rows = self._group_label_rows(m_old, old_rest)
            for l in range(self.n_layers):
                _backend.add_equality(self.U, rows[l], 1.0)
            self.labels[m_old] = rows
        else:
            del self.labels[m_old]
        self.z[d] = m_new
        rows = self._group_label_rows(m_new, new_members)
        for l in range(self.n_layers):
            _backend.add_equality(self.U, rows[l], 1.0)
        self.labels[m_new] = rows
        self.loglik = new_loglik

    def resample_cut_count(self, d: int, layer: int) -> bool:
        """Gibbs update of one (dimension, layer) cut count; True if changed."""
        m = int(self.z[d])
        dims = self._members(m)
        lo = float(self.box.lower[d])
        hi = float(self.box.upper[d])
        cap = int(self.cut_cap[d])
        n_cand = cap + 1
        cur = int(self.k[d, layer])
        uniforms = self.rng.random((n_cand, max(1, cap)))

        other = self._fold(
            seed_state(self.salt, 0, m, layer),
            tuple(e for e in sorted(dims) if e != d),
            layer,
        )
        cur_row = np.ascontiguousarray(self.labels[m][layer])
        U_base = self.U.copy()
        _backend.add_equality(U_base, cur_row, -1.0)
        logliks, label_rows = _backend.cut_scan(
            U_base,
            self.scale,
            self._s2,
            self.y,
            np.ascontiguousarray(self.Xf[:, d]),
            other,
            self.kind,
            lo,
            hi,
            uniforms,
            cur,
            self.loglik,
            cur_row,
        )
        counts = np.arange(n_cand, dtype=np.float64)
        total_other = float(self.k[d].sum() - cur)
        logprior = (
            gammaln(self.beta_shape + total_other + counts)
            - counts * np.log(self.beta_rate + self.n_layers)
            - gammaln(counts + 1.0)
        )
        choice = _draw_categorical(np.asarray(logliks) + logprior, self.rng)
        if choice < 0 or choice == cur:
            return False
        new_cuts = _kernels_py.derive_cuts(self.kind, lo, hi, choice, uniforms[choice])
        new_row = np.ascontiguousarray(label_rows[choice])
        _backend.add_equality(self.U, cur_row, -1.0)
        _backend.add_equality(self.U, new_row, 1.0)
        self.labels[m][layer] = new_row
        self.cuts[d][layer] = new_cuts
        self.bins[d, layer] = _kernels_py.bin_of(new_cuts, self.Xf[:, d])
        self.k[d, layer] = choice
        self.loglik = float(logliks[choice])
        return True

    def sweep(self) -> float:
        """One full sweep: all assignments, then all cut counts, each in a
        freshly shuffled order.  Returns the post-sweep log-likelihood."""
        for d in self.rng.permutation(self.ndim):
            self.resample_assignment(int(d))
        slots = [(d, l) for d in range(self.ndim) for l in range(self.n_layers)]
        for idx in self.rng.permutation(len(slots)):
            d, l = slots[int(idx)]
            self.resample_cut_count(d, l)
        self.n_sweeps += 1
        return self.loglik

    def run(self, n_sweeps: int) -> float:
        for _ in range(n_sweeps):
            self.sweep()
        return self.loglik

    # ------------------------------------------------------------------
    # diagnostics
    # ------------------------------------------------------------------

    def check_consistency(self, atol: float = 1e-8) -> None:
        """Verify that the incremental caches match a from-scratch rebuild."""
        bins = bin_matrix(self.tiling(), self.X)
        if not np.array_equal(bins, self.bins):
            raise AssertionError("cached bins diverge from the cut locations")
        U = np.zeros_like(self.U)
        for m in self._occupied():
            rows = self.labels[m]
            for l in range(self.n_layers):
                _backend.add_equality(U, rows[l], 1.0)
        if not np.array_equal(U, self.U):
            raise AssertionError("cached Gram diverges from the stored labels")
        for m in self._occupied():
            rows = self.labels[m]
            canon = self._group_label_rows(m, self._members(m))
            for l in range(self.n_layers):
                a = rows[l][:, None] == rows[l][None, :]
                b = canon[l][:, None] == canon[l][None, :]
                if not np.array_equal(a, b):
                    raise AssertionError("stored labels disagree with bins")
        fresh = self.loglik_from_scratch()
        if not np.isclose(fresh, self.loglik, rtol=0, atol=atol):
            raise AssertionError(
                f"cached log-likelihood {self.loglik} != recomputed {fresh}"
            )
