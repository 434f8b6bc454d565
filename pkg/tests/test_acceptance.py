"""Acceptance criteria 1-10, each at its stated scale and tolerance.

Every test prints a single ``CRITERION k: PASS|FAIL`` line (visible even under
captured output) before asserting.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats

from kernel_bpm import cli, experiment, seeding
from kernel_bpm.bounds import c_bound, optimistic_bpm_bound
from kernel_bpm.classifier import coefficients, margin_scaled_votes, predictive_variances, sign
from kernel_bpm.data import load_reports, synthetic_gaussians
from kernel_bpm.experiment import DatasetConfig, ExperimentConfig, KernelConfig
from kernel_bpm.gram import factorize
from kernel_bpm.kernel import KernelSpec, gram_matrix, kernel_matrix
from kernel_bpm.orthant import bivariate_orthant, complexity_A, kl_iso_mc_check, orthant_naive_mc
from kernel_bpm.sampler import (
    batch_standard_error,
    sample_gp_orthant_gibbs,
    sample_gp_orthant_rejection,
    sample_iso_orthant,
)
from kernel_bpm.verify import halfspace_agreement, random_labels

from helpers import random_pd, random_rows

SEED = 2024
MNIST_GRID = [100, 200, 500, 1000]


@pytest.fixture
def report(capsys):
    def _report(k, passed, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return _report


def kl_instances():
    out = []
    for i in range(20):
        r = seeding.generator(SEED, 100, i)
        K = random_pd(r, 6, ridge=0.05) * math.exp(r.uniform(-1, 1))
        out.append((factorize(K), random_labels(6, r)))
    return out


# --- 1 ----------------------------------------------------------------------


def test_criterion_1_identity_kernel(report):
    t0 = time.perf_counter()
    gaps = []
    for n in (1, 4, 16, 64):
        Y = random_labels(n, seeding.generator(SEED, 1, n))
        gaps.append(abs(complexity_A(factorize(np.eye(n)), Y) - n * math.log(2)))
    est = orthant_naive_mc(factorize(np.eye(4)), [1, -1, -1, 1], 10**6, seeding.generator(SEED, 1))
    z = abs(est.py - 2.0**-4) / (est.py * est.std_error)
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= 1e-12 and z <= 3 and elapsed < 10
    report(1, ok, f"max |A - n log 2| = {max(gaps):.1e}; P_Y = {est.py:.5f} ({z:.2f} SE); {elapsed:.1f}s")
    assert ok


# --- 2 and 3 ----------------------------------------------------------------


def test_criterion_2_kl_equality(report):
    t0 = time.perf_counter()
    zs = []
    for i, (f, Y) in enumerate(kl_instances()):
        mc = kl_iso_mc_check(f, Y, 10**6, seeding.generator(SEED, 2, i))
        zs.append(abs(mc.value - complexity_A(f, Y)) / mc.std_error)
    elapsed = time.perf_counter() - t0
    hits = sum(z <= 4 for z in zs)
    ok = hits >= 19 and elapsed < 120
    report(2, ok, f"{hits}/20 within 4 SE (max {max(zs):.2f} SE); {elapsed:.1f}s")
    assert ok


def test_criterion_3_kl_inequality(report):
    margins = []
    for i, (f, Y) in enumerate(kl_instances()):
        est = orthant_naive_mc(f, Y, 10**6, seeding.generator(SEED, 3, i))
        assert not est.failed
        margins.append((complexity_A(f, Y) - (est.log_inv_py - 4 * est.std_error)))
    hits = sum(m >= 0 for m in margins)
    ok = hits == 20
    report(3, ok, f"{hits}/20 with A >= log(1/P_Y) - 4 SE (smallest margin {min(margins):.3f})")
    assert ok


# --- 4 ----------------------------------------------------------------------


def test_criterion_4_second_moment(report):
    n, m, s2 = 8, 10**6, 1.9
    Y = random_labels(n, seeding.generator(SEED, 4))
    S = sample_iso_orthant(s2, Y, m, seeding.generator(SEED, 4, 1)).samples
    worst = 0.0
    for i in range(n):
        for j in range(i, n):
            p = S[:, i] * S[:, j]
            target = s2 * (1.0 if i == j else 2 / math.pi * Y[i] * Y[j])
            worst = max(worst, abs(p.mean() - target) / (p.std(ddof=1) / math.sqrt(m)))
    ok = worst <= 4
    report(4, ok, f"all 36 moments within {worst:.2f} SE")
    assert ok


# --- 5 ----------------------------------------------------------------------


def test_criterion_5_sampler_cross_validation(report):
    worst = 0.0
    for i in range(10):
        n = 2 + i % 5
        r = seeding.generator(SEED, 5, i)
        f = factorize(random_pd(r, n, ridge=0.2))
        Y = random_labels(n, r)
        g = sample_gp_orthant_gibbs(f, Y, 10**5, 100, 10, seed=seeding.derive(SEED, 50 + i))
        rej = sample_gp_orthant_rejection(
            f, Y, 10**5, max_attempts=10**8, rng=seeding.generator(SEED, 5, 100 + i)
        )
        centre = rej.samples.mean(axis=0)
        iu = np.triu_indices(n)

        def stats_of(S):
            d = S - centre
            return np.hstack([S, (d[:, :, None] * d[:, None, :])[:, iu[0], iu[1]]])

        gm, gse = batch_standard_error(stats_of(g.samples), g.chain_index())
        R = stats_of(rej.samples)
        rm = R.mean(axis=0)
        rse = R.std(axis=0, ddof=1) / math.sqrt(R.shape[0])
        worst = max(worst, float(np.max(np.abs(gm - rm) / np.hypot(gse, rse))))

    biv = []
    for j, rho in enumerate((-0.5, 0.0, 0.5, 0.9)):
        pdf = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).pdf
        quad, _ = integrate.dblquad(lambda y, x: pdf([x, y]), 0, 12, 0, 12, epsabs=1e-12)
        assert abs(quad - bivariate_orthant(rho)) < 1e-7
        est = orthant_naive_mc(factorize(np.array([[1, rho], [rho, 1.0]])), [1, 1], 10**6, seeding.generator(SEED, 5, 200 + j))
        biv.append(abs(est.py - bivariate_orthant(rho)) / (est.py * est.std_error))
    ok = worst <= 4 and max(biv) <= 3
    report(5, ok, f"Gibbs vs rejection max {worst:.2f} SE; bivariate max {max(biv):.2f} SE")
    assert ok


# --- 6 ----------------------------------------------------------------------


def test_criterion_6_grunbaum(report):
    worst = math.inf
    for i in range(10):
        n = 3 + i % 8
        r = seeding.generator(SEED, 6, i)
        d0 = 5
        spec = KernelSpec.arccosine(d0, 3)
        X = random_rows(r, n, d0)
        f = factorize(gram_matrix(spec, X))
        Y = random_labels(n, r)
        post = sample_gp_orthant_gibbs(f, Y, 10**5, 100, 10, seed=seeding.derive(SEED, 60 + i))
        centre = post.samples.mean(axis=0)
        from_inputs = coefficients(f, kernel_matrix(spec, X, random_rows(r, 100, d0)))
        units = r.standard_normal((n, 100))
        units /= np.linalg.norm(units, axis=0)
        groups = post.chain_index()
        for v in np.hstack([from_inputs, units]).T:
            frac, se = batch_standard_error(halfspace_agreement(post.samples, v, centre), groups)
            worst = min(worst, float(frac) - (1 / math.e - 4 * float(se)))
    ok = worst >= 0
    report(6, ok, f"2000 directions; smallest margin above 1/e - 4 SE is {worst:.3f}")
    assert ok


# --- shared MNIST runs (criteria 7, 8, 10) ----------------------------------


def mnist_config(out_dir):
    return ExperimentConfig(n_grid=list(MNIST_GRID), test_count=1000, ensemble=1000, seed=SEED, out_dir=str(out_dir))


@pytest.fixture(scope="module")
def mnist_runs(tmp_path_factory):
    runs = []
    t0 = time.perf_counter()
    for k in range(2):
        out = tmp_path_factory.mktemp(f"mnist{k}")
        args = ["--seed", str(SEED), "--out-dir", str(out), "--n-grid", ",".join(map(str, MNIST_GRID))]
        assert cli.main(["bounds", *args]) == 0
        assert cli.main(["compare", *args]) == 0
        runs.append(out)
        if k == 0:
            first = time.perf_counter() - t0
    return runs, first


def inequality_checks(ev):
    g, b, p = ev.point_gibbs, ev.point_bayes, ev.point_bpm
    out = {
        "gibbs-bayes": ev.eps_bayes - 2 * ev.eps_gibbs <= 4 * ev.paired_se(b, g, 2.0),
        "gibbs-bpm": ev.eps_bpm - math.e * ev.eps_gibbs <= 4 * ev.paired_se(p, g, math.e),
        "bayes-bpm": int(p.sum()) <= int(b.sum()) + int(ev.point_delta.sum()),
    }
    if ev.eps_gibbs <= 0.5:
        out["c-bound"] = ev.eps_bayes <= c_bound(ev.eps_gibbs, ev.alpha_gibbs) + 4 * ev.se("bayes")
        out["optimistic"] = ev.eps_bpm <= optimistic_bpm_bound(ev.eps_gibbs, ev.alpha_gibbs, ev.delta_approx) + 4 * ev.se("bpm")
    return out


def test_criterion_7_classifier_inequalities(report, mnist_runs):
    runs, _ = mnist_runs
    rows = {r["n"]: r for r in load_reports(runs[0] / "compare.jsonl")}
    experiments = []
    cfg = mnist_config(runs[0])
    test, pool = experiment.load_dataset(cfg)
    for i, n in enumerate(cfg.n_grid):
        ev, _ = experiment.compare_eval(cfg, pool.subset(np.arange(n)), test, seeding.derive(SEED, i + 1))
        assert ev.eps_gibbs == rows[n]["eps_gibbs"] and ev.eps_bpm == rows[n]["eps_bpm"]
        experiments.append((f"mnist iso n={n}", ev))
    gp = replace(cfg, posterior="gp", n_grid=[100, 200], ycom_cap=0)
    for i, n in enumerate(gp.n_grid):
        ev, _ = experiment.compare_eval(gp, pool.subset(np.arange(n)), test, seeding.derive(SEED, 70 + i))
        experiments.append((f"mnist gp n={n}", ev))
    syn = ExperimentConfig(
        dataset=DatasetConfig("synthetic_gaussians", d0=10, separation=1.5),
        kernel=KernelConfig("arccosine", depth=3),
        n_grid=[200], test_count=1000, ensemble=500, ycom_cap=0, seed=SEED,
    )
    stest, spool = experiment.load_dataset(syn)
    for post in ("iso", "gp"):
        ev, _ = experiment.compare_eval(replace(syn, posterior=post), spool, stest, seeding.derive(SEED, 80))
        experiments.append((f"synthetic {post} n=200", ev))

    failures = []
    checked = 0
    for name, ev in experiments:
        for check, ok in inequality_checks(ev).items():
            checked += 1
            if not ok:
                failures.append(f"{name}:{check}")
    ok = not failures
    report(7, ok, f"{checked} inequality checks over {len(experiments)} experiments; failures: {failures or 'none'}")
    assert ok


# --- 8 ----------------------------------------------------------------------


def test_criterion_8_mnist_figure(report, mnist_runs):
    runs, elapsed = mnist_runs
    bounds = {r["n"]: r for r in load_reports(runs[0] / "bounds.jsonl")}
    comp = {r["n"]: r for r in load_reports(runs[0] / "compare.jsonl")}
    cfg = mnist_config(runs[0])
    test, pool = experiment.load_dataset(cfg)
    lines = []
    checks = []
    for i, n in enumerate(MNIST_GRID):
        b, c = bounds[n], comp[n]
        assert b["record"] == "bounds" and c["record"] == "eval"
        ev, _ = experiment.compare_eval(cfg, pool.subset(np.arange(n)), test, seeding.derive(SEED, i + 1))
        se_bayes = ev.paired_se(ev.point_gibbs, ev.point_bayes)
        se_bpm = ev.paired_se(ev.point_gibbs, ev.point_bpm)
        a = b["gibbs_bound"] < 1
        bb = (
            abs(b["bpm_bound_centroid"] - math.e * b["gibbs_bound"]) <= 1e-12 * b["bpm_bound_centroid"]
            and b["bpm_bound_centroid"] < b["rademacher_bound"]
        )
        cc = abs(c["eps_bayes"] - c["eps_bpm"]) <= 0.01
        dd = (c["eps_gibbs"] - c["eps_bayes"] > 4 * se_bayes) and (c["eps_gibbs"] - c["eps_bpm"] > 4 * se_bpm)
        checks.append(a and bb and cc and dd)
        lines.append(
            f"n={n}: gibbs bound {b['gibbs_bound']:.3f}, BPM bound {b['bpm_bound_centroid']:.3f}, "
            f"rademacher {b['rademacher_bound']:.2f}; errors gibbs {c['eps_gibbs']:.3f} "
            f"bayes {c['eps_bayes']:.3f} bpm {c['eps_bpm']:.3f} [a={a} b={bb} c={cc} d={dd}]"
        )
    ok = all(checks) and elapsed < 1800
    report(8, ok, f"first run {elapsed:.0f}s\n  " + "\n  ".join(lines))
    assert ok


# --- 9 ----------------------------------------------------------------------


def test_criterion_9_margin_concentration(report):
    ds = synthetic_gaussians(1200, 10, 2.0, seeding.derive(SEED, 9))
    test, train = ds.split(1000)
    spec = KernelSpec.arccosine(10, 3)
    f = factorize(gram_matrix(spec, train.X))
    KtX = kernel_matrix(spec, test.X, train.X)
    var, _ = predictive_variances(spec, f, train.X, test.X, KtX=KtX)
    interp = KtX @ coefficients(f, train.Y)
    bpm = sign(interp)
    grid = [1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e6]
    reps = 200
    rates, ses = [], []
    small = np.abs(interp) < np.sqrt(var)
    for j, g in enumerate(grid):
        rng = seeding.generator(SEED, 9, j)
        dis = np.mean([margin_scaled_votes(interp, var, g, rng) != bpm for _ in range(reps)], axis=0)
        rates.append(float(dis.mean()))
        ses.append(float(dis.std(ddof=1) / math.sqrt(dis.size)))
        if j == 0:
            agree_small = 1 - dis[small]
            coin_z = abs(agree_small.mean() - 0.5) / (agree_small.std(ddof=1) / math.sqrt(agree_small.size))
    mono = all(rates[k + 1] <= rates[k] + 3 * math.hypot(ses[k], ses[k + 1]) for k in range(len(grid) - 1))
    ok = rates[-1] < 1e-3 and coin_z <= 3 and mono and small.sum() >= 30
    report(
        9, ok,
        "disagreement " + ", ".join(f"{g:g}:{r:.4f}" for g, r in zip(grid, rates))
        + f"; small-interpolant points {int(small.sum())}, fair-coin deviation {coin_z:.2f} SE",
    )
    assert ok


# --- 10 ---------------------------------------------------------------------


def test_criterion_10_determinism(report, mnist_runs):
    runs, _ = mnist_runs
    same = {
        name: (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
        for name in ("bounds.csv", "compare.csv")
    }
    ok = all(same.values())
    report(10, ok, f"byte-identical: {same}")
    assert ok
