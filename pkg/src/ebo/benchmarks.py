"""Benchmark objectives and reference baselines.

Objectives are pure callables ``f(x) -> float`` over a box domain, carrying
metadata attributes: ``box`` (their natural domain), ``fstar`` (a known
maximum or upper bound, usable both for regret curves and as the acquisition
bound) and, when known exactly, ``argmax``.

* :class:`SyntheticGPObjective` — an exact sample of a degenerate additive
  Laplace-kernel GP: each additive group gets its own anchor set and a
  weight vector drawn with covariance ``K_anchors^{-1}``, so ``f`` is both
  deterministic and exactly additive across groups, and its maximum is the
  sum of per-group maxima (each certified by dense grid search plus local
  refinement).
* :class:`RoverObjective` — 60 inputs read as 30 control points of a cubic
  B-spline trajectory; cost is the mean per-sample collision penalty along
  the curve plus endpoint-mismatch penalties plus a constant offset.
* :class:`TileSampleObjective` — a two-dimensional sample of the additive
  tile model itself (piecewise-constant additive), whose global maximum is
  computed exactly by enumerating cell midpoints.
* :func:`cem_optimize` — the cross-entropy-method baseline.
* :func:`variance_demo` — side-by-side posterior of a random-Fourier-feature
  model and the exact GP on a 1-D task, for studying variance starvation.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import minimize

from .core import Box, Dataset, Decomposition, RngStream, ValidationError
from .driver import ConfigError, IterationRecord, RunConfig, RunRecord, _evaluate_batch
from .gp import exact_gp_posterior, fit_features, predict_features

__all__ = [
    "SyntheticGPObjective",
    "RoverObjective",
    "TileSampleObjective",
    "ConstantObjective",
    "sample_synthetic",
    "random_decomposition",
    "additive_laplace_kernel",
    "rover_map_path",
    "load_rover_map",
    "cem_optimize",
    "variance_demo",
    "VARIANCE_COLUMNS",
    "rand_index",
    "get_objective",
]

_DATA_DIR = pathlib.Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# additive Laplace synthetic objectives
# ---------------------------------------------------------------------------


def additive_laplace_kernel(
    X1: np.ndarray, X2: np.ndarray, decomp: Decomposition, lengthscale: float
) -> np.ndarray:
    """Additive Laplace kernel ``(1/M) * sum_m exp(-|d_m|_1 / lengthscale)``,
    normalised so the self-kernel is exactly 1."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=np.float64))
    X2 = np.atleast_2d(np.asarray(X2, dtype=np.float64))
    groups = decomp.groups
    out = np.zeros((X1.shape[0], X2.shape[0]))
    for dims in groups:
        d = np.zeros((X1.shape[0], X2.shape[0]))
        for dim in dims:
            d += np.abs(X1[:, dim, None] - X2[None, :, dim])
        out += np.exp(-d / lengthscale)
    return out / len(groups)


def _group_kernel(A: np.ndarray, Bm: np.ndarray, lengthscale: float, n_groups: int):
    """Laplace kernel between group-subspace points, carrying the 1/M scale."""
    d = np.zeros((A.shape[0], Bm.shape[0]))
    for j in range(A.shape[1]):
        d += np.abs(A[:, j, None] - Bm[None, :, j])
    return np.exp(-d / lengthscale) / n_groups


def random_decomposition(D: int, rng: np.random.Generator, max_size: int = 3) -> Decomposition:
    """Shuffle the dimensions and chunk them into groups of 1..max_size."""
    order = rng.permutation(D)
    assignment = np.empty(D, dtype=np.int64)
    g = 0
    i = 0
    while i < D:
        size = int(rng.integers(1, max_size + 1))
        for d in order[i : i + size]:
            assignment[d] = g
        i += size
        g += 1
    return Decomposition(assignment.tolist(), D)


@dataclass(frozen=True, eq=False)
class _GroupSample:
    dims: tuple[int, ...]
    anchors: np.ndarray
    weights: np.ndarray
    best_value: float
    best_point: np.ndarray


class SyntheticGPObjective:
    """Deterministic, exactly additive sample of the anchor-basis GP."""

    def __init__(self, box: Box, decomp: Decomposition, lengthscale: float, groups):
        self.box = box
        self.decomposition = decomp
        self.lengthscale = lengthscale
        self._groups: tuple[_GroupSample, ...] = tuple(groups)
        self.fstar = float(sum(g.best_value for g in self._groups))
        argmax = np.empty(box.ndim)
        for g in self._groups:
            argmax[list(g.dims)] = g.best_point
        self.argmax = argmax

    def group_value(self, pos: int, values: np.ndarray) -> np.ndarray:
        g = self._groups[pos]
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        return _group_kernel(
            values, g.anchors, self.lengthscale, len(self._groups)
        ) @ g.weights

    def batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros(X.shape[0])
        for pos, g in enumerate(self._groups):
            total += self.group_value(pos, X[:, list(g.dims)])
        return total

    def __call__(self, x) -> float:
        value = float(self.batch(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])
        if value > self.fstar + 1e-9:
            raise AssertionError(
                f"evaluated value {value} exceeds the recorded maximum {self.fstar}"
            )
        return value


def _grid_points(lo: np.ndarray, hi: np.ndarray, per_dim: int) -> np.ndarray:
    axes = [np.linspace(lo[j], hi[j], per_dim) for j in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _maximize_group(value_fn, lo: np.ndarray, hi: np.ndarray) -> tuple[float, np.ndarray]:
    """Dense grid scan plus local refinement of the best grid points."""
    k = lo.size
    per_dim = {1: 4001, 2: 101, 3: 41}.get(k, 17)
    grid = _grid_points(lo, hi, per_dim)
    vals = value_fn(grid)
    top = np.argsort(vals)[-10:]
    best_v = float(vals[top[-1]])
    best_x = grid[top[-1]].copy()
    bounds = list(zip(lo, hi))
    for i in top:
        res = minimize(
            lambda v: -float(value_fn(v[None, :])[0]),
            grid[i],
            method="L-BFGS-B",
            bounds=bounds,
        )
        if -res.fun > best_v:
            best_v = float(-res.fun)
            best_x = np.clip(res.x, lo, hi)
    return best_v, best_x


def sample_synthetic(
    D: int,
    decomp: Decomposition,
    lengthscale: float,
    n_anchors: int,
    rng: np.random.Generator,
    box: Box | None = None,
) -> SyntheticGPObjective:
    """Draw one objective: per-group anchors plus correlated weights.

    Weights have covariance ``K_anchors^{-1}``, making ``f_m(x) =
    k(x, anchors) @ w`` an exact sample of the degenerate GP spanned by the
    anchor basis; the per-group maxima (hence ``fstar``) are located by
    dense grid search with local refinement and recorded.
    """
    if lengthscale <= 0:
        raise ValidationError("lengthscale must be positive")
    if box is None:
        box = Box(np.zeros(D), np.ones(D))
    if decomp.ndim != D:
        raise ValidationError(f"decomposition covers {decomp.ndim} dims, expected {D}")
    M = decomp.n_groups
    groups = []
    for dims in decomp.groups:
        lo = box.lower[list(dims)]
        hi = box.upper[list(dims)]
        anchors = lo + rng.random((n_anchors, len(dims))) * (hi - lo)
        K = _group_kernel(anchors, anchors, lengthscale, M)
        K[np.diag_indices(n_anchors)] += 1e-10
        L = np.linalg.cholesky(K)
        # w = L^{-T} xi has covariance (L L^T)^{-1} = K^{-1}.
        from scipy.linalg import solve_triangular

        weights = solve_triangular(
            L.T, rng.standard_normal(n_anchors), lower=False, check_finite=False
        )

        def value_fn(V, _a=anchors, _w=weights):
            return _group_kernel(V, _a, lengthscale, M) @ _w

        best_v, best_x = _maximize_group(value_fn, lo, hi)
        groups.append(_GroupSample(dims, anchors, weights, best_v, best_x))
    return SyntheticGPObjective(box, decomp, lengthscale, groups)


# ---------------------------------------------------------------------------
# rover trajectory objective
# ---------------------------------------------------------------------------


def rover_map_path() -> pathlib.Path:
    return _DATA_DIR / "rover_map.json"


def load_rover_map(path=None) -> dict:
    with open(path or rover_map_path()) as fh:
        payload = json.load(fh)
    for key in ("rects", "start", "goal"):
        if key not in payload:
            raise ValidationError(f"rover map must define {key!r}")
    return payload


class RoverObjective:
    """Trajectory quality of a 30-control-point cubic B-spline in the unit
    square: mean collision cost along the curve, endpoint penalties, plus a
    constant offset.  Values never exceed the offset (every term is
    nonpositive)."""

    N_CONTROL = 30
    DEGREE = 3

    def __init__(
        self,
        rects,
        start,
        goal,
        collision_cost: float = -20.0,
        endpoint_weight: float = -10.0,
        offset: float = 5.0,
        resolution: int = 1000,
    ):
        self.rects = np.atleast_2d(np.asarray(rects, dtype=np.float64))
        if self.rects.size and self.rects.shape[1] != 4:
            raise ValidationError("each obstacle is [x0, y0, x1, y1]")
        self.start = np.asarray(start, dtype=np.float64).reshape(2)
        self.goal = np.asarray(goal, dtype=np.float64).reshape(2)
        self.collision_cost = float(collision_cost)
        self.endpoint_weight = float(endpoint_weight)
        self.offset = float(offset)
        self.resolution = int(resolution)
        n, k = self.N_CONTROL, self.DEGREE
        interior = np.linspace(0.0, 1.0, n - k + 1)[1:-1]
        self._knots = np.concatenate([np.zeros(k + 1), interior, np.ones(k + 1)])
        self._ts = np.linspace(0.0, 1.0, self.resolution)
        self.box = Box(np.zeros(2 * n), np.ones(2 * n))
        self.fstar = self.offset

    @classmethod
    def from_map(cls, payload: dict, **kwargs) -> "RoverObjective":
        return cls(payload["rects"], payload["start"], payload["goal"], **kwargs)

    def trajectory(self, x) -> np.ndarray:
        """Curve samples ``(resolution, 2)`` for one flat input vector."""
        ctrl = np.asarray(x, dtype=np.float64).reshape(self.N_CONTROL, 2)
        spline = BSpline(self._knots, ctrl, self.DEGREE, extrapolate=False)
        return spline(self._ts)

    def collision_fraction(self, pts: np.ndarray) -> float:
        if self.rects.size == 0:
            return 0.0
        hit = np.zeros(pts.shape[0], dtype=bool)
        for x0, y0, x1, y1 in self.rects:
            hit |= (
                (pts[:, 0] >= x0)
                & (pts[:, 0] <= x1)
                & (pts[:, 1] >= y0)
                & (pts[:, 1] <= y1)
            )
        return float(hit.mean())

    def __call__(self, x) -> float:
        ctrl = np.asarray(x, dtype=np.float64).reshape(self.N_CONTROL, 2)
        pts = self.trajectory(x)
        cost = self.collision_cost * self.collision_fraction(pts)
        endpoints = float(
            np.abs(ctrl[0] - self.start).sum() + np.abs(ctrl[-1] - self.goal).sum()
        )
        return cost + self.endpoint_weight * endpoints + self.offset


# ---------------------------------------------------------------------------
# two-dimensional tile-model sample (the quickstart demo objective)
# ---------------------------------------------------------------------------


class TileSampleObjective:
    """Additive piecewise-constant sample of the tile model on [0,1]^2.

    One weight per (dimension, layer, cell) drawn standard normal; the value
    at ``x`` sums, over layers, the weight of the active cell, scaled by the
    feature value.  Because the function is additive and piecewise constant,
    its exact global maximum is found by enumerating the midpoints of the
    refinement of each dimension's layer grids, and is recorded.
    """

    def __init__(self, seed: int = 7, cuts_per_layer: int = 10, n_layers: int = 10):
        self.box = Box([0.0, 0.0], [1.0, 1.0])
        self.seed = int(seed)
        self.n_layers = int(n_layers)
        self.cuts_per_layer = int(cuts_per_layer)
        rng = RngStream(self.seed).child("tile-sample").generator()
        value = 1.0 / np.sqrt(self.n_layers * 2)
        self._cuts = []  # [dim][layer] -> sorted cut array
        self._weights = []  # [dim][layer] -> per-cell weights
        for _d in range(2):
            per_dim_cuts = []
            per_dim_w = []
            for _l in range(self.n_layers):
                width = 1.0 / (self.cuts_per_layer + 1)
                offset = rng.random() * width
                cuts = offset + np.arange(self.cuts_per_layer) * width
                per_dim_cuts.append(cuts)
                per_dim_w.append(rng.standard_normal(self.cuts_per_layer + 1) * value)
            self._cuts.append(per_dim_cuts)
            self._weights.append(per_dim_w)
        best = []
        for d in range(2):
            edges = np.unique(np.concatenate([[0.0, 1.0]] + self._cuts[d]))
            mids = 0.5 * (edges[:-1] + edges[1:])
            vals = self._dim_value(d, mids)
            i = int(np.argmax(vals))
            best.append((float(mids[i]), float(vals[i])))
        self.argmax = np.array([best[0][0], best[1][0]])
        self.fstar = best[0][1] + best[1][1]

    def _dim_value(self, d: int, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        total = np.zeros(xs.shape[0])
        for cuts, w in zip(self._cuts[d], self._weights[d]):
            total += w[np.searchsorted(cuts, xs, side="right")]
        return total

    def batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._dim_value(0, X[:, 0]) + self._dim_value(1, X[:, 1])

    def __call__(self, x) -> float:
        return float(self.batch(np.asarray(x).reshape(1, 2))[0])


class ConstantObjective:
    """Returns the same value everywhere (driver edge-case testing)."""

    def __init__(self, value: float = 0.0, ndim: int = 1):
        self.value = float(value)
        self.box = Box(np.zeros(ndim), np.ones(ndim))
        self.fstar = self.value

    def __call__(self, x) -> float:
        return self.value


# ---------------------------------------------------------------------------
# cross-entropy-method baseline
# ---------------------------------------------------------------------------


def cem_optimize(
    f,
    domain: Box,
    B: int,
    T: int,
    elite_frac: float = 0.30,
    init: Dataset | None = None,
    rng: np.random.Generator | None = None,
    config: RunConfig | None = None,
) -> RunRecord:
    """Diagonal-Gaussian cross-entropy method over ``domain``.

    Each iteration samples ``B`` points from the current Gaussian (clipped
    to the domain), evaluates them, and refits mean and variance on the top
    ``elite_frac`` of the new observations; variances are floored at 1e-6.
    The initial Gaussian comes from the top ``elite_frac`` of ``init``.
    """
    if not (0.0 < elite_frac < 1.0):
        raise ValidationError("elite_frac must be in (0, 1)")
    if rng is None:
        rng = np.random.default_rng(0)
    if init is None:
        init = Dataset.empty(domain.ndim)
    if config is None:
        config = RunConfig(
            domain=domain,
            objective="custom",
            n_iterations=T,
            batch_size=B,
            method="cem",
            n_init=init.n,
        )
    fmax = getattr(f, "fstar", None)
    var_floor = 1e-6

    def refit(X: np.ndarray, y: np.ndarray):
        n_el = max(1, int(round(elite_frac * y.shape[0])))
        elite = X[np.argsort(y)[-n_el:]]
        mean = elite.mean(axis=0)
        var = np.maximum(elite.var(axis=0), var_floor)
        return mean, var

    if init.n:
        mean, var = refit(init.X, init.y)
    else:
        mean = domain.center
        var = np.maximum(domain.sides**2 / 12.0, var_floor)

    rec = RunRecord(config, init.X, init.y)
    best_so_far = float(init.y.max()) if init.n else -np.inf
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=1) as pool:
        for t in range(1, T + 1):
            Xb = domain.clip(mean + np.sqrt(var) * rng.standard_normal((B, domain.ndim)))
            yb, err = _evaluate_batch(f, Xb, pool)
            finite = yb[np.isfinite(yb)]
            batch_best = float(finite.max()) if finite.size else None
            if batch_best is not None:
                best_so_far = max(best_so_far, batch_best)
            rec.iterations.append(
                IterationRecord(
                    t=t,
                    X=Xb,
                    y=yb,
                    eta=np.full(yb.shape, np.nan),
                    z=None,
                    k=None,
                    immediate_regret=(
                        float(fmax) - batch_best
                        if fmax is not None and batch_best is not None
                        else None
                    ),
                    best_so_far=best_so_far,
                )
            )
            if err is not None:
                rec.aborted, rec.error = True, err
                return rec
            mean, var = refit(Xb, yb)
    return rec


def cem_from_config(cfg: RunConfig, f=None, workers: int | None = None) -> RunRecord:
    """Run the CEM baseline from a :class:`RunConfig`, mirroring the other
    methods' initial design (same rng substream, same size)."""
    from concurrent.futures import ThreadPoolExecutor

    from .driver import _resolve_objective

    f = _resolve_objective(cfg, f)
    root = RngStream(cfg.seed)
    n0 = cfg.initial_design_size()
    init_X = (
        cfg.domain.uniform(root.child("init").generator(), n0)
        if n0
        else np.empty((0, cfg.domain.ndim))
    )
    with ThreadPoolExecutor(max_workers=cfg.effective_workers(workers)) as pool:
        init_y, err = _evaluate_batch(f, init_X, pool)
    rec = RunRecord(cfg, init_X, init_y)
    if err is not None:
        rec.aborted, rec.error = True, err
        return rec
    return cem_optimize(
        f,
        cfg.domain,
        cfg.batch_size,
        cfg.n_iterations,
        init=Dataset(init_X, init_y),
        rng=root.child("cem").generator(),
        config=cfg,
    )


# ---------------------------------------------------------------------------
# variance starvation demonstration
# ---------------------------------------------------------------------------

VARIANCE_COLUMNS = ("x", "mu_rff", "sigma_rff", "mu_exact", "sigma_exact", "f")


def _se_kernel(X1, X2, lengthscale: float = 1.0):
    X1 = np.asarray(X1, dtype=np.float64).reshape(-1, 1)
    X2 = np.asarray(X2, dtype=np.float64).reshape(-1, 1)
    d = X1 - X2.T
    return np.exp(-0.5 * (d / lengthscale) ** 2)


def variance_demo(
    n_obs: int,
    n_features: int,
    rng: np.random.Generator,
    grid_size: int = 401,
    lengthscale: float = 1.0,
    noise: float = 0.01,
    obs_upper: float = 0.5,
) -> np.ndarray:
    """Compare the random-Fourier-feature posterior against the exact GP.

    A function is sampled from a 1-D squared-exponential GP on [-10, 10];
    ``n_obs`` noisy observations are drawn at uniformly random locations at
    or below ``obs_upper`` (values linearly interpolated from the grid draw,
    an error far below the observation noise).  The target function is not
    representable by finitely many features, so once observations outnumber
    features the residual misfit drives the feature weights large along
    weakly determined directions: away from the data the feature-posterior
    mean swings far outside its own confidence band while the exact GP stays
    calibrated.  Both models are fit to the same data and evaluated on the
    full grid.  Returns rows ``(x, mu_rff, sigma_rff, mu_exact, sigma_exact,
    f)``.
    """
    grid = np.linspace(-10.0, 10.0, grid_size)
    K = _se_kernel(grid, grid, lengthscale)
    vals, vecs = np.linalg.eigh(K)
    vals = np.clip(vals, 0.0, None)
    f = vecs @ (np.sqrt(vals) * rng.standard_normal(grid_size))

    if n_obs > 0:
        X_obs = rng.uniform(grid[0], obs_upper, n_obs)
        y_obs = np.interp(X_obs, grid, f) + noise * rng.standard_normal(n_obs)
    else:
        X_obs = np.empty(0)
        y_obs = np.empty(0)

    omega = rng.standard_normal(n_features) / lengthscale
    phase = rng.uniform(0.0, 2.0 * np.pi, n_features)

    def rff(xs: np.ndarray) -> np.ndarray:
        return np.sqrt(2.0 / n_features) * np.cos(
            xs[:, None] * omega[None, :] + phase[None, :]
        )

    post = fit_features(rff(X_obs), y_obs, noise, route="feature")
    mu_r, var_r = predict_features(post, rff(grid))
    mu_e, var_e = exact_gp_posterior(
        lambda a, b: _se_kernel(a, b, lengthscale), X_obs.reshape(-1, 1), y_obs,
        noise, grid.reshape(-1, 1), jitter=1e-10,
    )
    return np.column_stack(
        [grid, mu_r, np.sqrt(np.maximum(var_r, 0.0)), mu_e, np.sqrt(var_e), f]
    )


def write_variance_csv(rows: np.ndarray, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VARIANCE_COLUMNS)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# clustering agreement
# ---------------------------------------------------------------------------


def rand_index(a, b) -> float:
    """Fraction of element pairs on which two clusterings agree."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError("clusterings must label the same elements")
    n = a.shape[0]
    if n < 2:
        return 1.0
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    iu = np.triu_indices(n, k=1)
    return float(np.mean(same_a[iu] == same_b[iu]))


# ---------------------------------------------------------------------------
# objective registry
# ---------------------------------------------------------------------------


def _build_synthetic(params: dict, domain: Box | None):
    D = int(params.get("D", domain.ndim if domain is not None else 10))
    lengthscale = float(params.get("lengthscale", 0.1))
    n_anchors = int(params.get("n_anchors", 64))
    seed = int(params.get("seed", 0))
    gen = RngStream(seed).child("synthetic").generator()
    if "z" in params and params["z"] is not None:
        decomp = Decomposition([int(v) for v in params["z"]], D)
    else:
        decomp = random_decomposition(D, gen)
    box = domain if domain is not None else Box(np.zeros(D), np.ones(D))
    return sample_synthetic(D, decomp, lengthscale, n_anchors, gen, box=box)


def _build_rover(params: dict, domain: Box | None):
    payload = load_rover_map(params.get("map"))
    return RoverObjective.from_map(
        payload, resolution=int(params.get("resolution", 1000))
    )


def _build_tile_sample(params: dict, domain: Box | None):
    return TileSampleObjective(
        seed=int(params.get("seed", 7)),
        cuts_per_layer=int(params.get("cuts", 10)),
        n_layers=int(params.get("layers", 10)),
    )


def _build_constant(params: dict, domain: Box | None):
    ndim = domain.ndim if domain is not None else int(params.get("ndim", 1))
    return ConstantObjective(float(params.get("value", 0.0)), ndim=ndim)


_REGISTRY = {
    "synthetic": _build_synthetic,
    "rover": _build_rover,
    "demo2d": _build_tile_sample,
    "constant": _build_constant,
}


def get_objective(name: str, params: dict | None = None, domain: Box | None = None):
    """Build a registered objective; checks its domain against the config's."""
    if name not in _REGISTRY:
        raise ConfigError(
            "objective", f"unknown objective {name!r}; known: {sorted(_REGISTRY)}"
        )
    obj = _REGISTRY[name](dict(params or {}), domain)
    obj_box = getattr(obj, "box", None)
    if domain is not None and obj_box is not None and obj_box.ndim != domain.ndim:
        raise ConfigError(
            "domain",
            f"objective {name!r} expects {obj_box.ndim} dimensions, config has {domain.ndim}",
        )
    return obj
