"""The outer optimization loop and its run lifecycle.

Each iteration is bulk-synchronous: partition the domain, hand every
partition to the worker pool (structure sampling, posterior fit, candidate
generation under an allocated budget), merge at a barrier, synchronize the
structural parameters, filter the pooled candidates down to a batch of ``B``
points, evaluate them in parallel, and append to the dataset.

Determinism contract: every source of randomness is a named substream keyed
by ``(seed, iteration, partition)``, workers never share mutable state, and
merges are by partition index — so records are identical no matter how many
workers execute the phases.  Wall-clock timings are kept out of the record
payload for the same reason.
"""

from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .acquisition import allocate_budget, default_fstar, partition_batch
from .core import (
    FEATURE_KINDS,
    TILE_CODING,
    Box,
    Dataset,
    Decomposition,
    RngStream,
    TileParams,
    ValidationError,
)
from .features import kernel_matrix, sample_tiling
from .gibbs import GibbsState
from .partition import PartitionSet, assign, mondrian_partition
from .selection import greedy_filter, sync_k, sync_z

__all__ = [
    "ConfigError",
    "RunConfig",
    "IterationRecord",
    "RunRecord",
    "run",
    "run_pbo",
    "run_random",
]


class ConfigError(ValidationError):
    """Configuration problem; ``field`` names the offending JSON field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


def _require(cond: bool, fieldname: str, message: str) -> None:
    if not cond:
        raise ConfigError(fieldname, message)


# JSON key -> (attribute, default); keys without defaults are required.
_REQUIRED_KEYS = ("domain", "objective", "T", "B")
_OPTIONAL_KEYS = {
    "objective_params": {},
    "N_p": None,
    "S": 1,
    "eps": 0.0,
    "L": 10,
    "sigma": 0.01,
    "alpha": 1.0,
    "beta0": 1.0,
    "beta1": 1.0,
    "feature_kind": TILE_CODING,
    "gibbs_sweeps": 10,
    "topn": 5,
    "fstar": None,
    "seed": 0,
    "workers": None,
    "method": "ebo",
    "n_init": None,
    "init_z": None,
    "init_k": 5,
}

METHODS = ("ebo", "pbo", "random", "cem")


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated run settings.

    Attribute names are descriptive; the JSON schema uses the short keys
    ``B`` (batch size), ``T`` (iterations), ``N_p`` (partition count),
    ``S`` (minimum points before a leaf may split), ``eps`` (data-sharing
    margin), ``L`` (layers), ``sigma`` (noise), ``alpha`` (group
    concentration), ``beta0``/``beta1`` (cut-rate prior rate/shape).
    """

    domain: Box
    objective: str
    n_iterations: int
    batch_size: int
    objective_params: dict = field(default_factory=dict)
    n_partitions: int | None = None
    min_leaf: int = 1
    share_eps: float = 0.0
    n_layers: int = 10
    noise: float = 0.01
    group_concentration: float = 1.0
    cut_prior_rate: float = 1.0
    cut_prior_shape: float = 1.0
    feature_kind: str = TILE_CODING
    gibbs_sweeps: int = 10
    topn: int = 5
    fstar: float | None = None
    seed: int = 0
    workers: int | None = None
    method: str = "ebo"
    n_init: int | None = None
    init_assignment: tuple[int, ...] | None = None
    init_cut_count: int = 5

    def __post_init__(self):
        _require(self.n_iterations >= 1, "T", "must be at least 1")
        _require(self.batch_size >= 1, "B", "must be at least 1")
        _require(
            self.n_partitions is None or self.n_partitions >= 1,
            "N_p",
            "must be at least 1",
        )
        _require(self.min_leaf >= 1, "S", "must be at least 1")
        _require(self.share_eps >= 0, "eps", "must be non-negative")
        _require(self.n_layers >= 1, "L", "must be at least 1")
        _require(self.noise > 0, "sigma", "must be positive")
        _require(self.group_concentration > 0, "alpha", "must be positive")
        _require(self.cut_prior_rate > 0, "beta0", "must be positive")
        _require(self.cut_prior_shape > 0, "beta1", "must be positive")
        _require(
            self.feature_kind in FEATURE_KINDS,
            "feature_kind",
            f"must be one of {list(FEATURE_KINDS)}",
        )
        _require(self.gibbs_sweeps >= 0, "gibbs_sweeps", "must be non-negative")
        _require(self.topn >= 0, "topn", "must be non-negative")
        _require(self.method in METHODS, "method", f"must be one of {list(METHODS)}")
        _require(
            self.n_init is None or self.n_init >= 0, "n_init", "must be non-negative"
        )
        _require(self.init_cut_count >= 0, "init_k", "must be non-negative")
        if self.init_assignment is not None:
            asg = tuple(int(a) for a in self.init_assignment)
            _require(
                len(asg) == self.domain.ndim,
                "init_z",
                f"must assign all {self.domain.ndim} dimensions",
            )
            _require(
                all(0 <= a < self.domain.ndim for a in asg),
                "init_z",
                "group indices must lie in [0, ndim)",
            )
            object.__setattr__(self, "init_assignment", asg)
        if not isinstance(self.objective_params, dict):
            raise ConfigError("objective_params", "must be an object")

    # -- serialization ---------------------------------------------------

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        if not isinstance(payload, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
        for key in payload:
            if key not in known:
                raise ConfigError(key, "unknown field")
        for key in _REQUIRED_KEYS:
            if key not in payload:
                raise ConfigError(key, "missing required field")
        dom = payload["domain"]
        if (
            not isinstance(dom, dict)
            or "lower" not in dom
            or "upper" not in dom
        ):
            raise ConfigError("domain", "must be an object with lower and upper")
        try:
            box = Box(dom["lower"], dom["upper"])
        except ValidationError as e:
            raise ConfigError("domain", str(e)) from e
        vals = {k: payload.get(k, d) for k, d in _OPTIONAL_KEYS.items()}

        def _num(key, kind=float, optional=False):
            v = payload.get(key) if key in payload else _OPTIONAL_KEYS.get(key)
            if v is None and optional:
                return None
            try:
                return kind(v)
            except (TypeError, ValueError):
                raise ConfigError(key, f"must be a {kind.__name__}") from None

        try:
            return cls(
                domain=box,
                objective=str(payload["objective"]),
                n_iterations=_num("T", int),
                batch_size=_num("B", int),
                objective_params=vals["objective_params"],
                n_partitions=_num("N_p", int, optional=True),
                min_leaf=_num("S", int),
                share_eps=_num("eps", float),
                n_layers=_num("L", int),
                noise=_num("sigma", float),
                group_concentration=_num("alpha", float),
                cut_prior_rate=_num("beta0", float),
                cut_prior_shape=_num("beta1", float),
                feature_kind=str(vals["feature_kind"]),
                gibbs_sweeps=_num("gibbs_sweeps", int),
                topn=_num("topn", int),
                fstar=_num("fstar", float, optional=True),
                seed=_num("seed", int),
                workers=_num("workers", int, optional=True),
                method=str(vals["method"]),
                n_init=_num("n_init", int, optional=True),
                init_assignment=(
                    tuple(vals["init_z"]) if vals["init_z"] is not None else None
                ),
                init_cut_count=_num("init_k", int),
            )
        except ConfigError:
            raise
        except ValidationError as e:
            raise ConfigError("<config>", str(e)) from e

    def to_dict(self) -> dict:
        return {
            "domain": {
                "lower": self.domain.lower.tolist(),
                "upper": self.domain.upper.tolist(),
            },
            "objective": self.objective,
            "objective_params": self.objective_params,
            "T": self.n_iterations,
            "B": self.batch_size,
            "N_p": self.n_partitions,
            "S": self.min_leaf,
            "eps": self.share_eps,
            "L": self.n_layers,
            "sigma": self.noise,
            "alpha": self.group_concentration,
            "beta0": self.cut_prior_rate,
            "beta1": self.cut_prior_shape,
            "feature_kind": self.feature_kind,
            "gibbs_sweeps": self.gibbs_sweeps,
            "topn": self.topn,
            "fstar": self.fstar,
            "seed": self.seed,
            "workers": self.workers,
            "method": self.method,
            "n_init": self.n_init,
            "init_z": list(self.init_assignment)
            if self.init_assignment is not None
            else None,
            "init_k": self.init_cut_count,
        }

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<root>", f"invalid JSON: {e}") from e
        return cls.from_dict(payload)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()

    # -- derived settings -------------------------------------------------

    def effective_workers(self, override: int | None = None) -> int:
        if override is not None:
            return max(1, int(override))
        if self.workers is not None:
            return max(1, int(self.workers))
        return max(1, os.cpu_count() or 1)

    def effective_partitions(self) -> int:
        # The partition count must not depend on the runtime pool size, so
        # the fallback chain stops at the configured values.
        if self.n_partitions is not None:
            return self.n_partitions
        return self.effective_workers(None)

    def initial_design_size(self) -> int:
        return self.batch_size if self.n_init is None else self.n_init

    def initial_assignment(self) -> Decomposition:
        D = self.domain.ndim
        asg = (
            list(range(D))
            if self.init_assignment is None
            else list(self.init_assignment)
        )
        return Decomposition(asg, D)

    def initial_cut_counts(self) -> np.ndarray:
        return np.full((self.domain.ndim, self.n_layers), self.init_cut_count, np.int64)

    def tile_params(self, decomp: Decomposition, cut_counts: np.ndarray) -> TileParams:
        return TileParams(
            decomp,
            cut_counts,
            noise=self.noise,
            group_concentration=self.group_concentration,
            cut_prior_shape=self.cut_prior_shape,
            cut_prior_rate=self.cut_prior_rate,
            feature_kind=self.feature_kind,
        )


def _clean(value):
    """JSON-safe scalars: non-finite floats become null."""
    if value is None:
        return None
    v = float(value)
    return v if np.isfinite(v) else None


@dataclass
class IterationRecord:
    """Everything one iteration contributed to the run."""

    t: int
    X: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    z: tuple[int, ...] | None
    k: np.ndarray | None
    immediate_regret: float | None
    best_so_far: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "X": [[float(v) for v in row] for row in self.X],
            "y": [_clean(v) for v in self.y],
            "eta": [_clean(v) for v in self.eta],
            "z": list(self.z) if self.z is not None else None,
            "k": [[int(v) for v in row] for row in self.k]
            if self.k is not None
            else None,
            "immediate_regret": _clean(self.immediate_regret),
            "best_so_far": _clean(self.best_so_far),
        }


@dataclass
class RunRecord:
    """Full trace of a run; serializable to JSON and a regret-curve CSV.

    ``timings`` (wall-clock seconds per phase) is intentionally excluded
    from :meth:`to_json` so records stay byte-identical across machines and
    worker counts.
    """

    config: RunConfig
    init_X: np.ndarray
    init_y: np.ndarray
    iterations: list[IterationRecord] = field(default_factory=list)
    aborted: bool = False
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def best(self) -> tuple[np.ndarray | None, float | None]:
        X, y = self.all_data()
        ok = np.isfinite(y)
        if not ok.any():
            return None, None
        i = int(np.flatnonzero(ok)[np.argmax(y[ok])])
        return X[i], float(y[i])

    def all_data(self) -> tuple[np.ndarray, np.ndarray]:
        xs = [self.init_X] + [it.X for it in self.iterations]
        ys = [self.init_y] + [it.y for it in self.iterations]
        return np.vstack([x for x in xs if x.size]) if any(
            x.size for x in xs
        ) else np.empty((0, self.config.domain.ndim)), np.concatenate(ys)

    def regret_curve(self) -> list[float | None]:
        """Running minimum of the immediate regrets, one entry per iteration."""
        out: list[float | None] = []
        cur: float | None = None
        for it in self.iterations:
            r = it.immediate_regret
            if r is not None:
                cur = r if cur is None else min(cur, r)
            out.append(cur)
        return out

    def to_dict(self) -> dict:
        best_x, best_y = self.best
        return {
            "config": self.config.to_dict(),
            "init": {
                "X": [[float(v) for v in row] for row in self.init_X],
                "y": [_clean(v) for v in self.init_y],
            },
            "iterations": [it.to_dict() for it in self.iterations],
            "best_x": [float(v) for v in best_x] if best_x is not None else None,
            "best_y": _clean(best_y),
            "aborted": self.aborted,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(
            self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False
        )

    def write_csv(self, path) -> None:
        """Per-iteration regret curve with a mandatory header row."""
        import csv

        curve = self.regret_curve()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["iteration", "batch_best", "best_so_far", "immediate_regret", "regret"]
            )
            for it, r in zip(self.iterations, curve):
                finite = it.y[np.isfinite(it.y)]
                w.writerow(
                    [
                        it.t,
                        repr(float(finite.max())) if finite.size else "",
                        repr(float(it.best_so_far)) if np.isfinite(it.best_so_far) else "",
                        "" if it.immediate_regret is None else repr(float(it.immediate_regret)),
                        "" if r is None else repr(float(r)),
                    ]
                )


def _resolve_objective(cfg: RunConfig, f: Callable | None):
    if f is not None:
        return f
    from .benchmarks import get_objective

    return get_objective(cfg.objective, cfg.objective_params, domain=cfg.domain)


def _evaluate_batch(f, X: np.ndarray, pool: ThreadPoolExecutor):
    """Evaluate rows of ``X``; one retry per failing point.

    Returns ``(values, error)`` where ``error`` is a message naming the first
    point whose evaluation failed twice (values then contain NaNs).
    """

    def one(x):
        for attempt in range(2):
            try:
                v = float(f(x))
            except Exception:
                v = float("nan")
            if np.isfinite(v):
                return v
        return v

    if X.shape[0] == 0:
        return np.empty(0), None
    ys = np.fromiter(pool.map(one, X), dtype=np.float64, count=X.shape[0])
    bad = ~np.isfinite(ys)
    if bad.any():
        i = int(np.argmax(bad))
        return ys, f"objective failed twice at point {X[i].tolist()}"
    return ys, None


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _partition_work(cfg, domain, boxes, j, sub: Dataset, z, k, fstar, budget, stream):
    """Per-partition phase: structure sampling, posterior, candidates."""
    params = cfg.tile_params(z, k)
    state = GibbsState.from_params(
        params, domain, sub.X, sub.y, stream.child("gibbs").generator()
    )
    state.run(cfg.gibbs_sweeps)
    post = state.posterior()
    rect = boxes[j]
    if sub.n:
        base = rect.clip(sub.best()[0])
    else:
        base = rect.center
    cands = partition_batch(
        post,
        fstar,
        rect,
        state.decomposition(),
        budget,
        cfg.topn,
        stream.child("acq").generator(),
        partition_id=j,
        base=base,
    )
    return cands, state.decomposition(), state.k.copy()


def _outer_loop(cfg: RunConfig, f, workers: int | None, fixed_partition: bool) -> RunRecord:
    f = _resolve_objective(cfg, f)
    fmax = getattr(f, "fstar", None)
    nw = cfg.effective_workers(workers)
    root = RngStream(cfg.seed)
    domain = cfg.domain
    D = domain.ndim
    timings: dict[str, float] = {}

    def clock(phase: str, t0: float) -> float:
        t1 = time.perf_counter()
        timings[phase] = timings.get(phase, 0.0) + (t1 - t0)
        return t1

    with ThreadPoolExecutor(max_workers=nw) as pool:
        t0 = time.perf_counter()
        n0 = cfg.initial_design_size()
        init_X = (
            domain.uniform(root.child("init").generator(), n0)
            if n0
            else np.empty((0, D))
        )
        init_y, err = _evaluate_batch(f, init_X, pool)
        t0 = clock("evaluate", t0)
        rec = RunRecord(cfg, init_X, init_y, timings=timings)
        if err is not None:
            rec.aborted, rec.error = True, err
            return rec
        data = Dataset(init_X, init_y)
        z = cfg.initial_assignment()
        k = cfg.initial_cut_counts()
        pset: PartitionSet | None = None
        best_so_far = float(data.y.max()) if data.n else -np.inf
        for t in range(1, cfg.n_iterations + 1):
            stream_t = root.child("iter", t)
            t0 = time.perf_counter()
            if pset is None or not fixed_partition:
                pset = mondrian_partition(
                    domain,
                    data.X,
                    cfg.effective_partitions(),
                    cfg.min_leaf,
                    stream_t.child("partition").generator(),
                )
            idx = assign(pset, data.X, cfg.share_eps)
            bests = [float(data.y[i].max()) if i.size else None for i in idx]
            budgets = allocate_budget(pset, bests, cfg.batch_size)
            if cfg.fstar is not None:
                fstar = cfg.fstar
            elif data.n:
                fstar = default_fstar(data.y)
            else:
                fstar = 0.0
            t0 = clock("partition", t0)
            jobs = [
                pool.submit(
                    _partition_work,
                    cfg,
                    domain,
                    pset.boxes,
                    j,
                    data.subset(idx[j]),
                    z,
                    k,
                    fstar,
                    int(budgets[j]),
                    stream_t.child("part", j),
                )
                for j in range(len(pset))
            ]
            results = [job.result() for job in jobs]
            t0 = clock("model", t0)
            all_cands = [c for cands, _, _ in results for c in cands]
            z = sync_z(
                [zj for _, zj, _ in results],
                stream_t.child("sync").generator(),
                max_groups=D,
            )
            k = sync_k([kj for _, _, kj in results])
            t0 = clock("sync", t0)
            filter_tiling = sample_tiling(
                cfg.tile_params(z, k), domain, stream_t.child("filter").generator()
            )
            chosen = greedy_filter(
                all_cands,
                cfg.batch_size,
                lambda A, Bm: kernel_matrix(filter_tiling, z, A, Bm),
            )
            Xb = np.vstack([c.x for c in chosen])
            etas = np.array([c.eta for c in chosen])
            t0 = clock("filter", t0)
            yb, err = _evaluate_batch(f, Xb, pool)
            t0 = clock("evaluate", t0)
            finite = yb[np.isfinite(yb)]
            batch_best = float(finite.max()) if finite.size else None
            if batch_best is not None:
                best_so_far = max(best_so_far, batch_best)
            rec.iterations.append(
                IterationRecord(
                    t=t,
                    X=Xb,
                    y=yb,
                    eta=etas,
                    z=z.assignment,
                    k=k.copy(),
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
            data = data.append(Xb, yb)
            _progress(
                f"[{cfg.method}] iteration {t}/{cfg.n_iterations} "
                f"batch_best={batch_best:.6g} best={best_so_far:.6g}"
            )
    return rec


def run(cfg: RunConfig, f: Callable | None = None, workers: int | None = None) -> RunRecord:
    """Full optimizer: fresh domain partition every iteration."""
    return _outer_loop(cfg, f, workers, fixed_partition=False)


def execute(cfg: RunConfig, f: Callable | None = None, workers: int | None = None) -> RunRecord:
    """Dispatch on ``cfg.method`` (ebo, pbo, random, or cem)."""
    if cfg.method == "ebo":
        return run(cfg, f, workers)
    if cfg.method == "pbo":
        return run_pbo(cfg, f, workers)
    if cfg.method == "random":
        return run_random(cfg, f, workers)
    if cfg.method == "cem":
        from .benchmarks import cem_from_config

        return cem_from_config(cfg, f, workers)
    raise ConfigError("method", f"must be one of {list(METHODS)}")


def run_pbo(cfg: RunConfig, f: Callable | None = None, workers: int | None = None) -> RunRecord:
    """Ablation: the partition is sampled once and reused every iteration."""
    return _outer_loop(cfg, f, workers, fixed_partition=True)


def run_random(cfg: RunConfig, f: Callable | None = None, workers: int | None = None) -> RunRecord:
    """Baseline: the same evaluation budget spent on uniform random points."""
    f = _resolve_objective(cfg, f)
    fmax = getattr(f, "fstar", None)
    nw = cfg.effective_workers(workers)
    root = RngStream(cfg.seed)
    domain = cfg.domain
    timings: dict[str, float] = {}
    with ThreadPoolExecutor(max_workers=nw) as pool:
        start = time.perf_counter()
        n0 = cfg.initial_design_size()
        init_X = (
            domain.uniform(root.child("init").generator(), n0)
            if n0
            else np.empty((0, domain.ndim))
        )
        init_y, err = _evaluate_batch(f, init_X, pool)
        rec = RunRecord(cfg, init_X, init_y, timings=timings)
        if err is not None:
            rec.aborted, rec.error = True, err
            return rec
        best_so_far = float(init_y.max()) if init_y.size else -np.inf
        for t in range(1, cfg.n_iterations + 1):
            Xb = domain.uniform(root.child("iter", t).child("rand").generator(), cfg.batch_size)
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
        timings["evaluate"] = time.perf_counter() - start
    return rec
