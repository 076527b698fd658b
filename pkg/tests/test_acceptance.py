"""Acceptance checks for the library's headline behaviors.

Each test prints one ``[PASS]``/``[FAIL]`` line (visible even under pytest's
capture) and enforces a wall-clock budget alongside its quality threshold.
"""

from __future__ import annotations

import itertools
import json
import sys
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import gammaln, logsumexp

from ebo.acquisition import Candidate
from ebo.benchmarks import get_objective, variance_demo
from ebo.cli import main as cli_main
from ebo.core import Box, Decomposition, RngStream, TileParams
from ebo.driver import RunConfig, execute, run
from ebo.features import FeatureSpace, sample_tiling
from ebo.gibbs import GibbsState
from ebo.gp import feature_log_likelihood, fit_features, predict_features
from ebo.partition import mondrian_partition
from ebo.selection import greedy_filter
from ebo.suites import run_suite


def _report(num: int, name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:02d} {name}: {detail}"
    print(line, file=sys.__stdout__, flush=True)
    assert passed, line


def _fmt(value) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _suite_detail(summary: dict, elapsed: float) -> str:
    checks = "; ".join(f"{c['name']}={_fmt(c['value'])}" for c in summary["checks"])
    return f"{checks} in {elapsed:.1f}s"


def test_c01_posterior_route_equivalence():
    budget = 10.0
    t0 = time.time()
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(200):
        D = int(rng.integers(1, 6))
        n = int(rng.integers(1, 21))
        L = int(rng.integers(1, 11))
        params = TileParams(
            Decomposition(rng.integers(0, D, size=D).tolist(), D),
            rng.integers(0, 5, size=(D, L)),
            noise=float(10 ** rng.uniform(-2, 0)),
        )
        box = Box(np.zeros(D), np.ones(D))
        tiling = sample_tiling(params, box, rng)
        X = rng.random((n, D))
        space = FeatureSpace.build(tiling, params.decomposition, X)
        Phi, _ = space.feature_matrix(X)
        y = rng.standard_normal(n)
        Phiq, extra = space.feature_matrix(rng.random((10, D)))
        post = {r: fit_features(Phi, y, params.noise, route=r) for r in ("feature", "data")}
        mf, vf = predict_features(post["feature"], Phiq, extra_var=extra)
        md, vd = predict_features(post["data"], Phiq, extra_var=extra)
        lf = feature_log_likelihood(Phi, y, params.noise, route="feature")
        ld = feature_log_likelihood(Phi, y, params.noise, route="data")
        worst = max(
            worst,
            np.max(np.abs(mf - md) / np.maximum(np.maximum(np.abs(mf), np.abs(md)), 1e-9)),
            np.max(np.abs(vf - vd) / np.maximum(np.maximum(vf, vd), 1e-9)),
            abs(lf - ld) / max(abs(lf), 1.0),
        )
    elapsed = time.time() - t0
    _report(
        1,
        "feature- and data-space posterior solves agree",
        worst <= 1e-8 and elapsed < budget,
        f"worst relative deviation {worst:.2e} (tol 1e-8) over 200 models in {elapsed:.1f}s",
    )


def test_c02_layered_kernel_converges_to_limit(tmp_path):
    budget = 60.0
    t0 = time.time()
    summary = run_suite("kernel-convergence", tmp_path)
    elapsed = time.time() - t0
    _report(
        2,
        "layered-grid kernel approaches its continuum limit",
        summary["passed"] and elapsed < budget,
        _suite_detail(summary, elapsed),
    )


# -- criterion 3: the structure sampler against exact enumeration ------------

_C3_X = np.array([[0.12, 0.71], [0.47, 0.18], [0.58, 0.92], [0.83, 0.35]])
_C3_Y = np.array([0.6, -0.4, 0.9, -0.2])
_C3 = {"sigma": 0.5, "alpha": 1.0, "shape": 1.0, "rate": 1.0, "cap": 3}


def _c3_loglik(z: tuple, bins: list) -> float:
    groups: dict[int, list[int]] = {}
    for d, m in enumerate(z):
        groups.setdefault(m, []).append(d)
    U = np.zeros((4, 4))
    for dims in groups.values():
        lab = np.stack([bins[d] for d in dims], axis=1)
        U += (lab[:, None, :] == lab[None, :, :]).all(axis=2)
    K = U / len(groups) + _C3["sigma"] ** 2 * np.eye(4)
    L = np.linalg.cholesky(K)
    v = np.linalg.solve(L, _C3_Y)
    return -0.5 * v @ v - np.log(np.diag(L)).sum() - 2.0 * np.log(2.0 * np.pi)


def _c3_segments(xs: np.ndarray, c: int) -> list:
    """Midpoint/weight pairs of the offset intervals on which bins are constant."""
    if c == 0:
        return [(0.0, 1.0)]
    w = 1.0 / c
    edges = np.concatenate([[0.0], np.unique(np.mod(xs, w)), [w]])
    return [
        (0.5 * (a + b), (b - a) / w)
        for a, b in zip(edges[:-1], edges[1:])
        if b - a > 1e-14
    ]


def _c3_bins(xs: np.ndarray, c: int, delta: float) -> np.ndarray:
    if c == 0:
        return np.zeros(xs.shape, dtype=int)
    cuts = delta + np.arange(c) / c
    return np.searchsorted(cuts, xs, side="right")


def _c3_oracle() -> dict:
    """Exact posterior over (z0, z1, k0, k1) by enumeration.

    The offset prior is integrated out in closed form: the likelihood is
    piecewise constant in each offset, with breakpoints where a cut crosses a
    data coordinate, so a weighted sum over segment midpoints is exact.
    """
    table = {}
    for z in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        log_pz = sum(
            gammaln(_C3["alpha"] + sum(1 for v in z if v == m)) - gammaln(_C3["alpha"])
            for m in (0, 1)
        )
        for k0 in range(_C3["cap"] + 1):
            for k1 in range(_C3["cap"] + 1):
                log_pk = sum(
                    gammaln(_C3["shape"] + c)
                    - c * np.log(_C3["rate"] + 1.0)
                    - gammaln(c + 1.0)
                    for c in (k0, k1)
                )
                terms, wts = [], []
                for d0, f0 in _c3_segments(_C3_X[:, 0], k0):
                    b0 = _c3_bins(_C3_X[:, 0], k0, d0)
                    for d1, f1 in _c3_segments(_C3_X[:, 1], k1):
                        b1 = _c3_bins(_C3_X[:, 1], k1, d1)
                        terms.append(_c3_loglik(z, [b0, b1]))
                        wts.append(f0 * f1)
                table[(z[0], z[1], k0, k1)] = log_pz + log_pk + logsumexp(
                    terms, b=np.array(wts)
                )
    keys = sorted(table)
    logp = np.array([table[k] for k in keys])
    logp -= logsumexp(logp)
    return dict(zip(keys, np.exp(logp)))


def test_c03_structure_sampler_matches_enumeration():
    budget = 120.0
    t0 = time.time()
    pmf = _c3_oracle()
    assert abs(sum(pmf.values()) - 1.0) < 1e-12
    params = TileParams(
        Decomposition([0, 1], 2),
        np.array([[1], [1]]),
        noise=_C3["sigma"],
        group_concentration=_C3["alpha"],
        cut_prior_shape=_C3["shape"],
        cut_prior_rate=_C3["rate"],
    )
    state = GibbsState.from_params(
        params,
        Box([0.0, 0.0], [1.0, 1.0]),
        _C3_X,
        _C3_Y,
        np.random.default_rng(42),
        cut_cap=np.array([3, 3]),
    )
    for _ in range(500):
        state.sweep()
    n_samples = 100_000
    counts: Counter = Counter()
    for _ in range(n_samples):
        state.sweep()
        counts[
            (int(state.z[0]), int(state.z[1]), int(state.k[0, 0]), int(state.k[1, 0]))
        ] += 1
    unknown = sum(c for k, c in counts.items() if k not in pmf)
    tv = 0.5 * (
        sum(abs(counts.get(k, 0) / n_samples - p) for k, p in pmf.items())
        + unknown / n_samples
    )
    elapsed = time.time() - t0
    _report(
        3,
        "structure sampler reproduces the enumerated posterior",
        tv <= 0.05 and unknown == 0 and elapsed < budget,
        f"total variation {tv:.4f} (tol 0.05) over 64 states, "
        f"{n_samples} sweeps in {elapsed:.1f}s",
    )


def test_c04_structure_recovery_on_synthetic_data(tmp_path):
    budget = 300.0
    t0 = time.time()
    summary = run_suite("gibbs-recovery", tmp_path)
    elapsed = time.time() - t0
    _report(
        4,
        "sampler recovers planted decompositions",
        summary["passed"] and elapsed < budget,
        _suite_detail(summary, elapsed),
    )


def test_c05_finite_feature_miscalibration_demo():
    budget = 120.0
    t0 = time.time()
    small = variance_demo(100, 1000, RngStream(0).child("variance-demo", 100).generator())
    x, _, sig_r, _, _, _ = small.T
    rel_gap = float(np.mean(np.abs(small[:, 2] - small[:, 4]) / small[:, 4]))
    un = x > 0.5
    t_small = float(
        np.max(np.abs(small[un, 1] - small[un, 5]) / small[un, 2])
    )
    big = variance_demo(5000, 1000, RngStream(0).child("variance-demo", 5000).generator())
    xb = big[:, 0]
    unb = xb > 0.5
    t_feat = float(np.max(np.abs(big[unb, 1] - big[unb, 5]) / big[unb, 2]))
    t_exact = float(np.max(np.abs(big[unb, 3] - big[unb, 5]) / big[unb, 4]))
    elapsed = time.time() - t0
    healthy = rel_gap < 0.15 and t_small < 4.0
    starved = t_feat > 5.0 and t_exact < 4.0
    _report(
        5,
        "feature posterior turns miscalibrated once data outnumber features",
        healthy and starved and elapsed < budget,
        f"100 obs: sigma gap {rel_gap:.3f} (<0.15), worst standardized error "
        f"{t_small:.2f} (<4); 5000 obs: feature {t_feat:.2f} (>5) vs exact "
        f"{t_exact:.2f} (<4) in {elapsed:.1f}s",
    )


def test_c06_batch_filter_near_optimal():
    budget = 10.0
    t0 = time.time()
    rng = np.random.default_rng(7)
    kernel = lambda A, B: np.asarray(A) @ np.asarray(B).T  # noqa: E731
    jitter = 1e-10

    def objective(xs: np.ndarray, etas: np.ndarray, idx: tuple) -> float:
        K = kernel(xs[list(idx)], xs[list(idx)]) + jitter * np.eye(len(idx))
        return float(np.linalg.slogdet(K)[1] - etas[list(idx)].sum())

    ratios = []
    exact_singles = 0
    for _ in range(100):
        n, B = 6, 3
        xs = rng.standard_normal((n, 4))
        xs /= np.linalg.norm(xs, axis=1, keepdims=True)
        etas = rng.standard_normal(n)
        cands = [Candidate(x=xs[i], eta=etas[i], partition=0) for i in range(n)]
        picked = greedy_filter(cands, B, kernel)
        ids = [id(c) for c in cands]
        got = objective(xs, etas, tuple(ids.index(id(c)) for c in picked))
        values = [objective(xs, etas, s) for s in itertools.combinations(range(n), B)]
        best, worst = max(values), min(values)
        if best - worst > 1e-9:
            ratios.append((got - worst) / (best - worst))
        single = greedy_filter(cands, 1, kernel)
        exact_singles += ids.index(id(single[0])) == int(np.argmin(etas))
    mean_ratio = float(np.mean(ratios))
    elapsed = time.time() - t0
    _report(
        6,
        "greedy batch filter is near-optimal against brute force",
        mean_ratio >= 0.9 and exact_singles == 100 and elapsed < budget,
        f"mean shifted ratio {mean_ratio:.3f} (>=0.9) over {len(ratios)} instances, "
        f"B=1 exact {exact_singles}/100, in {elapsed:.1f}s",
    )


def test_c07_full_loop_beats_baselines(tmp_path):
    budget = 1800.0
    t0 = time.time()
    summary = run_suite("synthetic-regret", tmp_path)
    elapsed = time.time() - t0
    _report(
        7,
        "full loop outperforms baselines on sampled objectives",
        summary["passed"] and elapsed < budget,
        _suite_detail(summary, elapsed),
    )


def test_c08_quickstart_preset_finds_the_optimum():
    budget = 300.0
    t0 = time.time()
    payload = json.loads(open("configs/demo2d.json").read())
    obj = get_objective(
        payload["objective"],
        payload.get("objective_params"),
        domain=Box(payload["domain"]["lower"], payload["domain"]["upper"]),
    )
    hits = 0
    for seed in range(10):
        cfg = RunConfig.from_dict({**payload, "seed": seed})
        rec = execute(cfg)
        best_x, _ = rec.best
        hits += float(np.max(np.abs(best_x - obj.argmax))) <= 0.15
    elapsed = time.time() - t0
    _report(
        8,
        "quickstart preset locates the optimum cell",
        hits >= 8 and elapsed < budget,
        f"{hits}/10 seeds within 0.15 of the optimum in {elapsed:.1f}s",
    )


def test_c09_records_are_deterministic(tmp_path):
    budget = 120.0
    t0 = time.time()
    payload = {
        "domain": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "objective": "demo2d",
        "T": 4,
        "B": 8,
        "N_p": 6,
        "S": 10,
        "L": 16,
        "gibbs_sweeps": 2,
        "topn": 2,
        "seed": 11,
    }
    cfg = RunConfig.from_dict(payload)
    records = [run(cfg, workers=1), run(cfg, workers=8), run(cfg, workers=1)]
    library_ok = (
        records[0].to_json() == records[1].to_json() == records[2].to_json()
    )
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(payload))
    blobs = []
    for label, workers in (("w1", "1"), ("w4", "4")):
        out = tmp_path / label
        rc = cli_main(
            ["run", "--config", str(cfg_path), "--out", str(out), "--workers", workers]
        )
        assert rc == 0
        blobs.append((out / "record.json").read_bytes())
    cli_ok = blobs[0] == blobs[1]
    elapsed = time.time() - t0
    _report(
        9,
        "identical records for any seed-matched rerun and worker count",
        library_ok and cli_ok and elapsed < budget,
        f"library reruns identical: {library_ok}, files identical: {cli_ok}, "
        f"in {elapsed:.1f}s",
    )


def _contained(leaf: Box, root: Box, x: np.ndarray) -> bool:
    above = x >= leaf.lower
    below = (x < leaf.upper) | ((x == leaf.upper) & (leaf.upper == root.upper))
    return bool(np.all(above & below))


def test_c10_partition_invariants_and_split_frequencies():
    budget = 30.0
    t0 = time.time()
    bad = 0
    for trial in range(1000):
        rng = np.random.default_rng(trial)
        d = int(rng.integers(1, 4))
        lo = rng.uniform(-2, 0, size=d)
        hi = lo + rng.uniform(0.5, 3.0, size=d)
        box = Box(lo, hi)
        n = int(rng.integers(0, 81))
        X = lo + rng.random((n, d)) * (hi - lo)
        n_partitions = int(rng.integers(1, 13))
        min_leaf = int(rng.integers(1, 11))
        pset = mondrian_partition(box, X, n_partitions, min_leaf, rng)
        volume = sum(
            np.prod([Fraction(b.upper[j]) - Fraction(b.lower[j]) for j in range(d)])
            for b in pset.boxes
        )
        total = np.prod([Fraction(hi[j]) - Fraction(lo[j]) for j in range(d)])
        ok = volume == total and len(pset.boxes) <= n_partitions
        counts = [
            sum(_contained(b, box, x) for b in pset.boxes) for x in X
        ]
        ok = ok and all(c == 1 for c in counts)
        if len(pset.boxes) < n_partitions:
            per_leaf = [
                sum(_contained(b, box, x) for x in X) for b in pset.boxes
            ]
            ok = ok and all(c <= min_leaf for c in per_leaf)
        bad += not ok
    freq_box = Box([0.0, 0.0], [1.0, 3.0])
    X30 = np.random.default_rng(5).random((30, 2)) * [1.0, 3.0]
    trials = 100_000
    hits = 0
    for s in range(trials):
        pset = mondrian_partition(freq_box, X30, 2, 1, np.random.default_rng(s))
        b = pset.boxes[0]
        hits += b.lower[1] != 0.0 or b.upper[1] != 3.0
    freq = hits / trials
    elapsed = time.time() - t0
    _report(
        10,
        "partitions conserve volume/data and split sides proportionally",
        bad == 0 and abs(freq - 0.75) <= 0.01 and elapsed < budget,
        f"{bad}/1000 invariant violations, long-side split frequency "
        f"{freq:.4f} (0.75 +/- 0.01) in {elapsed:.1f}s",
    )
