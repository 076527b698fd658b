"""Reproducible benchmark suites behind the ``bench`` CLI subcommand.

Each suite runs a fixed protocol, writes tidy CSV files into an output
directory, and returns a summary dict::

    {"suite": name, "passed": bool,
     "checks": [{"name", "passed", "value", "threshold"}, ...],
     "files": [...], ...}

``passed`` reflects the same thresholds the acceptance tests use; the CLI
prints one line per check.
"""

from __future__ import annotations

import csv
import pathlib
import sys

import numpy as np

from .benchmarks import get_objective, rand_index, sample_synthetic
from .core import Box, Decomposition, RngStream
from .driver import RunConfig, execute
from .features import kernel_matrix, sample_tiling
from .gibbs import GibbsState

__all__ = [
    "SUITES",
    "run_suite",
    "synthetic_regret",
    "rover_trajectories",
    "gibbs_recovery",
    "kernel_convergence",
]


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _check(name: str, passed: bool, value, threshold) -> dict:
    return {
        "name": name,
        "passed": bool(passed),
        "value": value,
        "threshold": threshold,
    }


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _quartiles(a: np.ndarray) -> tuple[float, float, float]:
    return (
        float(np.median(a)),
        float(np.percentile(a, 25)),
        float(np.percentile(a, 75)),
    )


# ---------------------------------------------------------------------------
# batched-optimizer regret on synthetic additive functions
# ---------------------------------------------------------------------------


def synthetic_regret(
    out_dir,
    seeds: int = 10,
    n_functions: int = 4,
    methods: tuple[str, ...] = ("ebo", "pbo", "cem", "random"),
    D: int = 10,
    T: int = 30,
    B: int = 10,
    n_partitions: int = 20,
    min_leaf: int = 20,
    n_layers: int = 3,
    gibbs_sweeps: int = 0,
    init_cut_count: int = 10,
    share_eps: float = 0.1,
    lengthscale: float = 0.1,
    workers: int | None = None,
) -> dict:
    """Median simple-regret curves on sampled additive functions.

    Every method sees the same functions and the same run seeds; regret at
    iteration ``t`` is the gap between the recorded function maximum and the
    best point seen so far (initial design included).  The headline check is
    that the full optimizer beats its fixed-partition ablation, which beats
    random search, on median final regret.

    Structure resampling is off by default here: at this scale each
    partition holds a few dozen points in ten dimensions, too few for the
    decomposition posterior to beat a fixed all-singletons model (the
    ``gibbs-recovery`` suite exercises structure learning at the sample
    sizes where it does work).  Data sharing between neighbouring
    partitions and a fine cut grid carry the ensemble instead.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    domain = Box(np.zeros(D), np.ones(D))
    # curves[method] -> list over (function, seed) of per-iteration regret
    curves: dict[str, list[np.ndarray]] = {m: [] for m in methods}
    for fi in range(n_functions):
        f = get_objective(
            "synthetic", {"D": D, "lengthscale": lengthscale, "seed": 1000 + fi},
            domain=domain,
        )
        for s in range(seeds):
            for method in methods:
                cfg = RunConfig(
                    domain=domain,
                    objective="synthetic",
                    n_iterations=T,
                    batch_size=B,
                    objective_params={"D": D, "seed": 1000 + fi},
                    n_partitions=n_partitions,
                    min_leaf=min_leaf,
                    n_layers=n_layers,
                    gibbs_sweeps=gibbs_sweeps,
                    init_cut_count=init_cut_count,
                    share_eps=share_eps,
                    seed=s,
                    method=method,
                )
                rec = execute(cfg, f=f, workers=workers)
                regret = np.array(
                    [f.fstar - it.best_so_far for it in rec.iterations]
                )
                curves[method].append(regret)
                _progress(
                    f"[synthetic-regret] fn={fi} seed={s} method={method} "
                    f"final={regret[-1]:.4g}"
                )
    rows = []
    finals: dict[str, float] = {}
    for method in methods:
        mat = np.vstack(curves[method])
        finals[method] = float(np.median(mat[:, -1]))
        for t in range(mat.shape[1]):
            med, q25, q75 = _quartiles(mat[:, t])
            rows.append([method, t + 1, repr(med), repr(q25), repr(q75)])
    _write_csv(
        out_dir / "synthetic_regret.csv",
        ["method", "iteration", "median", "q25", "q75"],
        rows,
    )
    checks = []
    if "ebo" in finals and "pbo" in finals:
        checks.append(
            _check(
                "median final regret: ebo <= pbo",
                finals["ebo"] <= finals["pbo"] + 1e-12,
                finals["ebo"],
                finals["pbo"],
            )
        )
    if "pbo" in finals and "random" in finals:
        checks.append(
            _check(
                "median final regret: pbo <= random",
                finals["pbo"] <= finals["random"] + 1e-12,
                finals["pbo"],
                finals["random"],
            )
        )
    return {
        "suite": "synthetic-regret",
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "final_regret": finals,
        "files": ["synthetic_regret.csv"],
    }


# ---------------------------------------------------------------------------
# rover trajectory optimization
# ---------------------------------------------------------------------------


def rover_trajectories(
    out_dir,
    seeds: int = 3,
    T: int = 10,
    B: int = 10,
    n_partitions: int = 8,
    min_leaf: int = 20,
    n_layers: int = 2,
    gibbs_sweeps: int = 2,
    share_eps: float = 0.05,
    workers: int | None = None,
) -> dict:
    """Best-value curves on the 60-dimensional trajectory task.

    Checks that runs complete, that no value ever exceeds the analytic
    upper bound, and that the optimizer improves on its initial design.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    f = get_objective("rover", {})
    rows = []
    improvements = []
    bound_ok = True
    for s in range(seeds):
        cfg = RunConfig(
            domain=f.box,
            objective="rover",
            n_iterations=T,
            batch_size=B,
            n_partitions=n_partitions,
            min_leaf=min_leaf,
            n_layers=n_layers,
            gibbs_sweeps=gibbs_sweeps,
            share_eps=share_eps,
            seed=s,
            method="ebo",
        )
        rec = execute(cfg, f=f, workers=workers)
        if rec.aborted:
            return {
                "suite": "rover",
                "passed": False,
                "checks": [_check("runs complete", False, rec.error, None)],
                "files": [],
            }
        init_best = float(rec.init_y.max())
        for it in rec.iterations:
            rows.append([s, it.t, repr(float(np.max(it.y))), repr(it.best_so_far)])
            if np.max(it.y) > f.fstar + 1e-9:
                bound_ok = False
        improvements.append(rec.iterations[-1].best_so_far - init_best)
        _progress(
            f"[rover] seed={s} init_best={init_best:.4g} "
            f"final_best={rec.iterations[-1].best_so_far:.4g}"
        )
    _write_csv(
        out_dir / "rover_best.csv",
        ["seed", "iteration", "batch_best", "best_so_far"],
        rows,
    )
    med_impr = float(np.median(improvements))
    checks = [
        _check("all values within the analytic bound", bound_ok, None, f.fstar),
        _check("median improvement over init > 0", med_impr > 0.0, med_impr, 0.0),
    ]
    return {
        "suite": "rover",
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "files": ["rover_best.csv"],
    }


# ---------------------------------------------------------------------------
# additive-structure recovery by Gibbs sampling
# ---------------------------------------------------------------------------


def gibbs_recovery(
    out_dir,
    seeds: int = 10,
    D: int = 6,
    group_size: int = 2,
    n: int = 300,
    sweeps: int = 50,
    n_layers: int = 1,
    noise: float = 0.3,
    data_noise: float = 0.01,
    cut_prior_shape: float = 5.0,
    cut_prior_rate: float = 1.0,
    feature_kind: str = "mondrian",
    lengthscale: float = 0.1,
    workers: int | None = None,
) -> dict:
    """Recover a planted decomposition from function observations.

    Data come from an exactly additive synthetic function whose true groups
    partition the dimensions consecutively (e.g. three 2-D groups for D=6);
    the sampler starts from all-singletons and the agreement between the
    final assignment and the truth is scored by the Rand index.

    The model noise is deliberately larger than the observation noise: the
    single-layer piecewise-constant kernel cannot represent the smooth
    signal exactly, and giving that approximation error an honest noise
    channel is what lets the likelihood rank decompositions by structure
    rather than by their capacity to soak up residuals.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    box = Box(np.zeros(D), np.ones(D))
    truth = [d // group_size for d in range(D)]
    rows = []
    scores = []
    for s in range(seeds):
        stream = RngStream(s).child("structure-recovery")
        f = sample_synthetic(
            D,
            Decomposition(truth, D),
            lengthscale,
            64,
            stream.child("objective").generator(),
            box=box,
        )
        data_rng = stream.child("data").generator()
        X = box.uniform(data_rng, n)
        y = f.batch(X) + data_noise * data_rng.standard_normal(n)
        from .core import TileParams

        params = TileParams(
            Decomposition(list(range(D)), D),
            np.full((D, n_layers), 5, dtype=np.int64),
            noise=noise,
            group_concentration=1.0,
            cut_prior_shape=cut_prior_shape,
            cut_prior_rate=cut_prior_rate,
            feature_kind=feature_kind,
        )
        state = GibbsState.from_params(
            params, box, X, y, stream.child("gibbs").generator()
        )
        state.run(sweeps)
        ri = rand_index(truth, state.z)
        scores.append(ri)
        rows.append([s, repr(ri), state.n_groups])
        _progress(f"[gibbs-recovery] seed={s} rand_index={ri:.4f} groups={state.n_groups}")
    _write_csv(out_dir / "gibbs_recovery.csv", ["seed", "rand_index", "n_groups"], rows)
    med = float(np.median(scores))
    checks = [_check("median Rand index >= 0.9", med >= 0.9, med, 0.9)]
    return {
        "suite": "gibbs-recovery",
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "files": ["gibbs_recovery.csv"],
    }


# ---------------------------------------------------------------------------
# grid-feature kernel convergence to its Laplace limit
# ---------------------------------------------------------------------------


def kernel_convergence(
    out_dir,
    seeds: int = 20,
    layer_counts: tuple[int, ...] = (50, 200, 2000),
    rate: float = 5.0,
    n_pairs: int = 50,
    workers: int | None = None,
) -> dict:
    """Random-grid features approach the exponential kernel as layers grow.

    For each layer count, cut counts are drawn Poisson(rate * side) per
    dimension and layer; the empirical kernel on random point pairs is
    compared against ``mean_d exp(-rate * |x_d - x'_d|)`` and the max
    absolute error per seed is aggregated by median.
    """
    from .core import TileParams

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    D = 2
    box = Box(np.zeros(D), np.ones(D))
    decomp = Decomposition([0, 1], D)
    medians = {}
    rows = []
    for L in layer_counts:
        errs = []
        for s in range(seeds):
            rng = RngStream(s).child("kernel-convergence", L).generator()
            A = box.uniform(rng, n_pairs)
            Bm = box.uniform(rng, n_pairs)
            counts = rng.poisson(rate, size=(D, L)).astype(np.int64)
            params = TileParams(
                decomp,
                counts,
                noise=0.01,
                feature_kind="mondrian",
            )
            tiling = sample_tiling(params, box, rng)
            approx = np.diag(kernel_matrix(tiling, decomp, A, Bm))
            target = np.exp(-rate * np.abs(A - Bm)).mean(axis=1)
            errs.append(float(np.max(np.abs(approx - target))))
        med, q25, q75 = _quartiles(np.array(errs))
        medians[L] = med
        rows.append([L, repr(med), repr(q25), repr(q75)])
        _progress(f"[kernel-convergence] layers={L} median_max_err={med:.4f}")
    _write_csv(
        out_dir / "kernel_convergence.csv",
        ["layers", "median_max_err", "q25", "q75"],
        rows,
    )
    ordered = [medians[L] for L in layer_counts]
    checks = [
        _check(
            f"median max error at layers={layer_counts[-1]} <= 0.05",
            ordered[-1] <= 0.05,
            ordered[-1],
            0.05,
        ),
        _check(
            "median max error decreases with layer count",
            all(a > b for a, b in zip(ordered, ordered[1:])),
            ordered,
            None,
        ),
    ]
    return {
        "suite": "kernel-convergence",
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "files": ["kernel_convergence.csv"],
    }


SUITES = {
    "synthetic-regret": synthetic_regret,
    "rover": rover_trajectories,
    "gibbs-recovery": gibbs_recovery,
    "kernel-convergence": kernel_convergence,
}


def run_suite(name: str, out_dir, seeds: int | None = None, workers: int | None = None) -> dict:
    if name not in SUITES:
        raise KeyError(name)
    kwargs = {}
    if seeds is not None:
        kwargs["seeds"] = seeds
    if workers is not None:
        kwargs["workers"] = workers
    pathlib.Path(out_dir).mkdir(parents=True, exist_ok=True)
    return SUITES[name](out_dir, **kwargs)
