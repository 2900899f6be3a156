"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``CRITERION <n> PASS|FAIL: ...`` line before
asserting, so ``pytest -v`` output doubles as the acceptance report.
"""

import math
import time

import numpy as np
import pytest

from bumphunt.bench import ExperimentDesign, gain_profile, population_bump_box, run_experiment
from bumphunt.bench import timing_harness
from bumphunt.boxes import AxisBox
from bumphunt.datagen import Dataset
from bumphunt.fastprim import FastPrimConfig, beta_total, central_box_empirical, fastprim_pca
from bumphunt.numkernel import sym_eigen
from bumphunt.prim import PrimConfig, cover, peel_step

from conftest import gaussian_data
from oracles import brute_force_peel


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_criterion_01_beta_total(report):
    value = beta_total(0.05, 20)
    ok = abs(value - (1 - 0.95 ** 20)) <= 1e-9 and abs(value - 0.641514) <= 1e-6
    assert report(1, ok, f"beta_total(0.05, 20) = {value:.9f}")


def test_criterion_02_fastprim_support(report):
    # PC coordinates are uncorrelated, which is where the product-of-marginals
    # mass equals beta_T; input-space values are printed for reference only.
    start = time.perf_counter()
    lines, ok = [], True
    for t in (1, 10, 20):
        bt = beta_total(0.05, t)
        pc, raw = [], []
        for r in range(32):
            data = gaussian_data(2, seed=(2, r))
            pc.append(fastprim_pca(data, FastPrimConfig(coverage=t)).stats.support)
            raw.append(central_box_empirical(data, FastPrimConfig(coverage=t))[1].support)
        dev = abs(np.mean(pc) - bt)
        ok &= dev <= 0.03
        lines.append(f"t={t}: beta_T={bt:.4f} PC={np.mean(pc):.4f} (|dev| {dev:.4f}) "
                     f"input={np.mean(raw):.4f}")
    seconds = time.perf_counter() - start
    ok &= seconds < 10
    assert report(2, ok, "; ".join(lines) + f"; {seconds:.1f}s")


def test_criterion_03_prim_peel_count(report):
    start = time.perf_counter()
    worst_peels, violations, rounds = 0, 0, 0
    for r in range(32):
        trace = cover(gaussian_data(2, seed=(3, r)), PrimConfig(0.05, 0.05, 20))
        for rnd in trace.rounds:
            rounds += 1
            worst_peels = max(worst_peels, rnd.peels)
            s = rnd.stats.support
            if not (0.05 - 1 / rnd.n_active <= s <= 0.05 + 0.05) or rnd.peels > 59:
                violations += 1
    seconds = time.perf_counter() - start
    ok = violations == 0 and seconds < 30
    assert report(3, ok, f"{rounds} rounds, max peels {worst_peels} (<= 59), "
                         f"{violations} support violations, {seconds:.1f}s")


def test_criterion_04_peel_oracle(report):
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    mismatches, ties = 0, 0
    for i in range(200):
        n = int(rng.integers(2, 31))
        d = int(rng.integers(1, 3))
        grid = (3, 6, 1000)[i % 3]  # coarse grids give tied coordinates
        pts = rng.integers(0, grid + 1, size=(n, d)).astype(float)
        z = rng.integers(-2, 3, size=n).astype(float)  # small range gives tied masses
        if i % 10 == 0:
            z[:] = 1.0
        alpha = (0.05, 0.1, 0.2)[i % 3]
        res = peel_step(Dataset(pts, z), None, AxisBox.whole(d), alpha)
        ref = brute_force_peel(pts.tolist(), z.tolist(), alpha)
        got = None if res is None else (res[0].dimension, res[0].side, res[0].threshold)
        mismatches += got != ref
        ties += len(np.unique(pts)) < pts.size
    seconds = time.perf_counter() - start
    ok = mismatches == 0 and seconds < 5
    assert report(4, ok, f"200 instances ({ties} with tied coordinates), "
                         f"{mismatches} mismatches, {seconds:.2f}s")


def test_criterion_05_box_output_mean(report):
    start = time.perf_counter()
    lines, ok = [], True
    for t, tol in ((20, 0.05), (1, 0.1)):
        means = np.array([central_box_empirical(gaussian_data(2, seed=(5, r)),
                                                FastPrimConfig(coverage=t))[1].output_mean
                          for r in range(32)])
        worst = np.abs(means - 1).max()
        ok &= abs(means.mean() - 1) <= tol and worst <= tol
        lines.append(f"t={t}: mean {means.mean():.4f}, worst replicate |dev| {worst:.4f} (tol {tol})")
    seconds = time.perf_counter() - start
    ok &= seconds < 10
    assert report(5, ok, "; ".join(lines) + f"; {seconds:.1f}s")


@pytest.mark.slow
def test_criterion_06_vam_direction(report):
    start = time.perf_counter()
    design = ExperimentDesign(algorithms=("prim", "fastprim"), spaces=("pc",), p_values=(10, 20),
                              coverages=tuple(range(1, 11)), replicates=64, master_seed=6)
    records = run_experiment(design)
    by = {(r.algorithm, r.p, r.coverage, r.replicate): r for r in records}
    worst, ok = 1.0, not any(r.error for r in records)
    for p in design.p_values:
        for t in design.coverages:
            wins = np.mean([by["fastprim", p, t, r].log_vam > by["prim", p, t, r].log_vam
                            for r in range(design.replicates)])
            worst = min(worst, wins)
            ok &= wins >= 0.70
    seconds = time.perf_counter() - start
    ok &= seconds < 300
    assert report(6, ok, f"fastPRIM VAM > PRIM VAM in PC space: lowest share over "
                         f"p in (10, 20), t <= 10 is {worst:.3f} (>= 0.70), {seconds:.0f}s")


@pytest.mark.slow
def test_criterion_07_pc_gain(report):
    # t = 20 is the design coverage; the other coverages are printed for reference
    start = time.perf_counter()
    design = ExperimentDesign(algorithms=("prim", "fastprim"), spaces=("input", "pc"),
                              p_values=(10, 50), coverages=(1, 10, 20), replicates=32,
                              master_seed=7)
    rows = gain_profile(run_experiment(design))
    cell = {(g["algorithm"], g["p"], g["coverage"]): g for g in rows}
    ok = all(g["status"] == "ok" and g["pairs"] == 32 for g in rows)
    parts = []
    for alg in design.algorithms:
        lo, hi = cell[alg, 10, 20], cell[alg, 50, 20]
        ok &= lo["frac_gain"] >= 0.9 and hi["frac_gain"] >= 0.9
        ok &= hi["log_ratio"] > lo["log_ratio"]
        parts.append(f"{alg}: share>1 {lo['frac_gain']:.2f}/{hi['frac_gain']:.2f}, "
                     f"log ratio {lo['log_ratio']:.2f} -> {hi['log_ratio']:.2f}")
    profile = ", ".join(f"{a[0]}{p}t{t}={cell[a, p, t]['frac_gain']:.2f}"
                        for a in design.algorithms for p in design.p_values for t in (1, 10))
    seconds = time.perf_counter() - start
    ok &= seconds < 600
    assert report(7, ok, f"at t=20 (p=10/p=50) {'; '.join(parts)}; "
                         f"share>1 at t<20: {profile}; {seconds:.0f}s")


def test_criterion_08_unbiased_centers(report):
    start = time.perf_counter()
    lines, ok = [], True
    for t in (1, 20):
        centers = np.array([central_box_empirical(gaussian_data(2, seed=(8, r)),
                                                  FastPrimConfig(coverage=t))[0].center
                            for r in range(128)])
        mean = centers.mean(axis=0)
        se = centers.std(axis=0, ddof=1) / math.sqrt(len(centers))
        z = np.abs(mean) / se
        ok &= bool(np.all(z <= 3))
        lines.append(f"t={t}: |mean|/SE = {np.array2string(z, precision=2)}")
    seconds = time.perf_counter() - start
    ok &= seconds < 60
    assert report(8, ok, "; ".join(lines) + f" (<= 3), {seconds:.1f}s")


def test_criterion_09_timing(report):
    data = gaussian_data(2, seed=9)
    prim_mean, prim_se = timing_harness(lambda: cover(data, PrimConfig(0.05, 0.05, 20)), 8)
    fast_mean, fast_se = timing_harness(
        lambda: central_box_empirical(data, FastPrimConfig(0.05, 20)), 8)
    pc_mean, _ = timing_harness(lambda: fastprim_pca(data, FastPrimConfig(0.05, 20)), 8)
    ok = fast_mean < prim_mean and pc_mean < prim_mean
    assert report(9, ok, f"PRIM {prim_mean * 1e3:.1f}±{prim_se * 1e3:.1f} ms, "
                         f"fastPRIM {fast_mean * 1e3:.3f}±{fast_se * 1e3:.3f} ms, "
                         f"fastPRIM+PCA {pc_mean * 1e3:.3f} ms (8 timed runs after warm-up)")


def test_criterion_10_nestedness(report):
    rng = np.random.default_rng(10)
    start = time.perf_counter()
    failures = 0
    for i in range(100):
        n = int(rng.integers(60, 600))
        p = int(rng.integers(1, 6))
        kind = i % 4
        if kind == 0:
            X = rng.standard_normal((n, p))
        elif kind == 1:
            X = rng.random((n, p))
        elif kind == 2:
            X = rng.integers(0, 7, size=(n, p)).astype(float)  # heavy ties
        else:
            X = rng.standard_t(2, size=(n, p)) * rng.uniform(0.1, 10, p)
        boxes = [central_box_empirical(X, FastPrimConfig(0.05, t))[0] for t in range(1, 21)]
        failures += not all(b.includes(a) for a, b in zip(boxes, boxes[1:]))
    seconds = time.perf_counter() - start
    ok = failures == 0 and seconds < 5
    assert report(10, ok, f"100 datasets x t=1..20, {failures} nesting failures, {seconds:.2f}s")


def test_criterion_11_population_oracle(report):
    bump, box = population_bump_box(np.eye(2), 0.95)
    ratio = math.exp(bump.log_box_volume - bump.log_volume)
    ok = (np.all(np.abs(box.upper - 2.4477) <= 1e-3) and np.all(np.abs(box.lower + 2.4477) <= 1e-3)
          and abs(ratio - 4 / math.pi) <= 1e-6)
    assert report(11, ok, f"half-widths {np.array2string(box.upper, precision=5)}, "
                          f"box/ellipsoid volume {ratio:.9f} vs 4/pi {4 / math.pi:.9f}")


def test_criterion_12_eigen_numerics(report):
    rng = np.random.default_rng(12)
    start = time.perf_counter()
    worst_recon, worst_orth, sizes = 0.0, 0.0, []
    for i in range(500):
        p = int(round(math.exp(rng.uniform(0, math.log(200)))))
        if i < 5:
            p = 200
        a = rng.standard_normal((p, p)) * 10.0 ** rng.uniform(-3, 3)
        m = (a + a.T) / 2
        if i % 50 == 1:  # repeated eigenvalues
            q, _ = np.linalg.qr(rng.standard_normal((p, p)))
            m = q @ np.diag(np.repeat([2.0, -1.0], [p // 2, p - p // 2])) @ q.T
            m = (m + m.T) / 2
        values, vectors = sym_eigen(m)
        recon = np.linalg.norm(vectors @ np.diag(values) @ vectors.T - m) / np.linalg.norm(m)
        orth = np.abs(vectors.T @ vectors - np.eye(p)).max()
        worst_recon, worst_orth = max(worst_recon, recon), max(worst_orth, orth)
        sizes.append(p)
    seconds = time.perf_counter() - start
    ok = worst_recon <= 1e-8 and worst_orth <= 1e-10 and seconds < 60
    assert report(12, ok, f"500 matrices (p from {min(sizes)} to {max(sizes)}): worst "
                          f"reconstruction {worst_recon:.2e}, orthogonality {worst_orth:.2e}, "
                          f"{seconds:.1f}s")
