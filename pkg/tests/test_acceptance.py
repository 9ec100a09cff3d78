"""Acceptance gates for the whole package.

Each test prints one [PASS]/[FAIL] line (visible under ``pytest -s``) and
asserts the same condition, so the suite doubles as a readable checklist:

    pytest tests/test_acceptance.py -v -s

Every check is deterministic: fixed seeds, fixed worlds, fixed tolerances.
"""

import time

import numpy as np
from scipy.stats import spearmanr

from gpnowcast.cli import main as cli_main
from gpnowcast.frame import ExperimentConfig
from gpnowcast.gpr import fit, log_marginal_likelihood, predict, train
from gpnowcast.kernel import KernelHyperparams
from gpnowcast.metrics import dcca, mae, pearson, rmse
from gpnowcast.monitor import (
    baseline_single_feature,
    baseline_time_only,
    run_monitor,
    run_survey_reduction,
)
from gpnowcast.pipeline import (
    PostRecord,
    aggregate,
    kmeans_cluster,
    pca_fit,
    smooth,
)
from gpnowcast.synth import SynthSpec, generate, gp_sample, oracle_predict


def _verdict(number, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\n[{status}] criterion {number}: {name} ({detail})")
    assert ok, f"criterion {number}: {name} ({detail})"


def test_criterion_01_cholesky_matches_dense_oracle():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 9))
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        hp = KernelHyperparams(*rng.uniform(-1.5, 0.5, size=3))
        x_star = rng.normal(size=d)
        reference = oracle_predict(X, y, hp, x_star)
        candidate = predict(fit(X, y, hp), x_star)
        worst = max(
            worst,
            abs(reference.mean - candidate.mean),
            abs(reference.variance - candidate.variance),
        )
    elapsed = time.perf_counter() - started
    ok = worst < 1e-8 and elapsed < 10.0
    _verdict(
        1,
        "cholesky posterior matches the dense-inverse oracle on 100 problems",
        ok,
        f"max abs err {worst:.2e} (tol 1e-8), {elapsed:.2f}s (limit 10s)",
    )


def test_criterion_02_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(77)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 31))
        d = int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        theta = rng.uniform(-1.0, 1.0, size=3)
        grad = log_marginal_likelihood(
            X, y, KernelHyperparams.from_array(theta)
        ).grad
        fd = np.empty(3)
        for i in range(3):
            up = theta.copy()
            up[i] += h
            down = theta.copy()
            down[i] -= h
            fd[i] = (
                log_marginal_likelihood(X, y, KernelHyperparams.from_array(up)).value
                - log_marginal_likelihood(
                    X, y, KernelHyperparams.from_array(down)
                ).value
            ) / (2 * h)
        rel = float(np.linalg.norm(grad - fd) / max(1.0, np.linalg.norm(grad)))
        worst = max(worst, rel)
    ok = worst < 1e-5
    _verdict(
        2,
        "analytic likelihood gradient matches central differences on 100 draws",
        ok,
        f"max rel err {worst:.2e} (tol 1e-5)",
    )


def test_criterion_03_tiny_noise_interpolates_training_points():
    rng = np.random.default_rng(5)
    hp = KernelHyperparams.from_values(1.0, 1.0, 1e-8)
    worst_mean = 0.0
    worst_var = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 25))
        X = (np.arange(n) * 0.35 + rng.uniform(0.0, 0.1, n))[:, None]
        y = rng.normal(size=n)
        model = fit(X, y, hp)
        for i in range(n):
            p = predict(model, X[i])
            worst_mean = max(worst_mean, abs(p.mean - y[i]))
            worst_var = max(worst_var, p.variance)
    ok = worst_mean <= 1e-5 and worst_var <= 1e-4
    _verdict(
        3,
        "noise 1e-8 posterior passes through its training points",
        ok,
        f"max |mean - y| {worst_mean:.2e} (tol 1e-5), "
        f"max var {worst_var:.2e} (tol 1e-4)",
    )


def test_criterion_04_hyperparameters_recovered_from_prior_draws():
    true = KernelHyperparams.from_values(1.0, 2.0, 0.1)
    started = time.perf_counter()
    deltas = []
    for seed in range(10):
        X = np.sort(np.random.default_rng(seed).uniform(0.0, 10.0, 200))[:, None]
        y = gp_sample(X, true, seed=seed)
        learned = train(X, y, restarts=2, seed=seed)
        deltas.append(np.abs(learned.as_array() - true.as_array()))
    medians = np.median(np.array(deltas), axis=0)
    elapsed = time.perf_counter() - started
    ok = bool(np.all(medians <= 0.5)) and elapsed < 120.0
    _verdict(
        4,
        "training recovers known hyperparameters from 200-point draws",
        ok,
        f"median |dlog| = {np.round(medians, 3).tolist()} (tol 0.5 each), "
        f"{elapsed:.1f}s (limit 120s)",
    )


def test_criterion_05_window_trace_is_causal_and_sized():
    frame = generate(
        SynthSpec(length=60, n_features=2, seed=11, phi=0.7, noise_std=0.8)
    )
    cfg = ExperimentConfig(window_w=48, prediction_step_delta=1)
    result = run_monitor(frame, cfg, restarts=1)
    windows = result.windows
    checks = {
        "first prediction at 49": result.predictions[0].time_index == 49,
        "11 predictions": len(result.predictions) == 60 - 49,
        "first window covariates [1, 49)": (
            windows[0].cov_start == 1 and windows[0].cov_stop == 49
        ),
        "every covariate window 48 rows": all(
            s.cov_stop - s.cov_start == 48 for s in windows
        ),
        "every target window 48 rows": all(
            s.tgt_stop - s.tgt_start == 48 for s in windows
        ),
        "no window reads at or past its prediction step": all(
            max(s.cov_stop - 1, s.tgt_stop - 1, s.query_index) <= s.pred_index
            for s in windows
        ),
        "targets stop before the predicted point": all(
            s.tgt_stop - 1 == s.pred_index - 1 for s in windows
        ),
    }
    failed = [name for name, passed in checks.items() if not passed]
    ok = not failed
    _verdict(
        5,
        "instrumented 60-step run places every window where it belongs",
        ok,
        "all 7 trace checks hold" if ok else f"failed: {failed}",
    )


def test_criterion_06_error_grows_with_prediction_gap():
    deltas = (28, 42, 56, 70, 168)
    w, n_pred = 48, 30
    t_long = w + max(deltas) + n_pred
    started = time.perf_counter()
    per_delta = {d: [] for d in deltas}
    for seed in range(10):
        frame = generate(
            SynthSpec(
                length=t_long,
                n_features=3,
                seed=seed,
                phi=0.5,
                noise_std=0.6,
                amplitude=6.0,
                covariate_rho=0.9,
                link_drift=0.03,
            )
        )
        for d in deltas:
            tail = frame.slice(t_long - (w + d + n_pred), t_long)
            cfg = ExperimentConfig(window_w=w, prediction_step_delta=d)
            result = run_monitor(tail, cfg, restarts=1)
            truth = tail.targets[result.time_indices()]
            per_delta[d].append(rmse(result.means(), truth))
    medians = [float(np.median(per_delta[d])) for d in deltas]
    trend = float(spearmanr(deltas, medians).statistic)
    ratio = medians[-1] / medians[0]
    elapsed = time.perf_counter() - started
    ok = trend >= 0.0 and ratio <= 2.5
    _verdict(
        6,
        "10-seed median error does not improve as the prediction gap widens",
        ok,
        f"medians {np.round(medians, 3).tolist()} for gaps {list(deltas)}, "
        f"spearman {trend:.2f} (need >= 0), "
        f"longest/shortest {ratio:.2f} (cap 2.5), {elapsed:.1f}s",
    )


def test_criterion_07_thinner_survey_hurts_imputation_monotonically():
    steps = (2, 3, 4, 5)
    started = time.perf_counter()
    medians = []
    for step in steps:
        values = []
        for seed in range(5):
            frame = generate(
                SynthSpec(
                    length=250,
                    n_features=3,
                    seed=seed,
                    phi=0.95,
                    noise_std=1.0,
                    amplitude=1.0,
                    covariate_rho=0.9,
                )
            )
            cfg = ExperimentConfig(window_w=48)
            result = run_survey_reduction(
                frame, cfg, period=5, step=step, restarts=1
            )
            values.append(result.metrics_on_imputed.rmse)
        medians.append(float(np.median(values)))
    gaps = np.diff(medians)
    elapsed = time.perf_counter() - started
    ok = bool(np.all(gaps >= 0.0)) and elapsed < 300.0
    _verdict(
        7,
        "5-seed median imputation error is non-decreasing in the survey step",
        ok,
        f"medians {np.round(medians, 3).tolist()} for steps {list(steps)}, "
        f"{elapsed:.1f}s (limit 300s)",
    )


def test_criterion_08_covariates_beat_reference_models():
    started = time.perf_counter()
    full, time_only, single_noise = [], [], []
    for seed in range(5):
        frame = generate(
            SynthSpec(
                length=130,
                n_features=3,
                seed=seed,
                phi=0.15,
                noise_std=0.5,
                amplitude=8.0,
                covariate_rho=0.85,
                n_noise_features=1,
            )
        )
        cfg = ExperimentConfig(window_w=32)

        def score(result):
            return rmse(result.means(), frame.targets[result.time_indices()])

        full.append(score(run_monitor(frame, cfg, restarts=1)))
        time_only.append(score(baseline_time_only(frame, cfg, restarts=1)))
        # The last covariate column is pure noise by construction.
        single_noise.append(
            score(baseline_single_feature(frame, cfg, 2, restarts=1))
        )
    f = float(np.median(full))
    t = float(np.median(time_only))
    s = float(np.median(single_noise))
    margin_time = 1.0 - f / t
    margin_noise = 1.0 - f / s
    elapsed = time.perf_counter() - started
    ok = margin_time >= 0.10 and margin_noise >= 0.10
    _verdict(
        8,
        "full covariates beat time-only and noise-feature references by 10%",
        ok,
        f"full {f:.3f} vs time-only {t:.3f} ({100 * margin_time:.0f}%) "
        f"vs noise-feature {s:.3f} ({100 * margin_noise:.0f}%), {elapsed:.1f}s",
    )


def test_criterion_09_metric_identities():
    rng = np.random.default_rng(99)
    worst_self = 0.0
    for _ in range(50):
        a = rng.normal(size=100)
        worst_self = max(
            worst_self, abs(dcca(a, a, 8) - 1.0), abs(dcca(a, -a, 8) + 1.0)
        )
    worst_bound = 0.0
    for _ in range(1000):
        a = rng.normal(size=40)
        b = rng.normal(size=40)
        worst_bound = max(worst_bound, abs(dcca(a, b, 5)))
    rmse_mae_ok = True
    for _ in range(200):
        n = int(rng.integers(1, 60))
        p = rng.normal(size=n)
        t = rng.normal(size=n)
        if rmse(p, t) < mae(p, t) - 1e-12:
            rmse_mae_ok = False
    worst_affine = 0.0
    for _ in range(100):
        a = rng.normal(size=50)
        b = rng.normal(size=50)
        base = pearson(a, b)
        c1, c2 = rng.uniform(0.1, 5.0, size=2)
        d1, d2 = rng.uniform(-10.0, 10.0, size=2)
        worst_affine = max(
            worst_affine, abs(pearson(c1 * a + d1, c2 * b + d2) - base)
        )
    ok = (
        worst_self <= 1e-10
        and worst_bound <= 1.0 + 1e-9
        and rmse_mae_ok
        and worst_affine <= 1e-12
    )
    _verdict(
        9,
        "metric identities hold",
        ok,
        f"self-dcca err {worst_self:.1e} (tol 1e-10), "
        f"|dcca| max {worst_bound:.6f} over 1000 pairs (cap 1+1e-9), "
        f"rmse>=mae {'holds' if rmse_mae_ok else 'violated'}, "
        f"pearson affine err {worst_affine:.1e} (tol 1e-12)",
    )


def test_criterion_10_pipeline_identities():
    rng = np.random.default_rng(123)

    worst_scale = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 15))
        posts = [
            PostRecord(0, f"u{i}", rng.normal(size=4)) for i in range(n)
        ]
        scores = rng.uniform(0.1, 2.0, size=n)
        base = aggregate(posts, scores, (0, 1))
        scaled = aggregate(posts, 7.3 * scores, (0, 1))
        worst_scale = max(worst_scale, float(np.max(np.abs(base - scaled))))

    worst_linear = 0.0
    for _ in range(50):
        a = rng.normal(size=40)
        b = rng.normal(size=40)
        lhs = smooth(2.0 * a + 3.0 * b, 7)
        rhs = 2.0 * smooth(a, 7) + 3.0 * smooth(b, 7)
        worst_linear = max(worst_linear, float(np.max(np.abs(lhs - rhs))))

    # Data with exactly known variance split: columns whitened, then scaled
    # to stds (3, 1, 0.5, 0.1). Two components reach 90%, one does not.
    raw = rng.normal(size=(120, 4))
    raw = raw - raw.mean(axis=0)
    cov = np.cov(raw, rowvar=False, ddof=1)
    white = raw @ np.linalg.inv(np.linalg.cholesky(cov)).T
    X = white * np.array([3.0, 1.0, 0.5, 0.1])
    projection = pca_fit(X, 0.90)
    variances = np.array([9.0, 1.0, 0.25, 0.01])
    cumulative = np.cumsum(variances) / variances.sum()
    pca_ok = (
        projection.n_components == 2
        and cumulative[0] < 0.90 <= cumulative[1]
        and projection.explained_fraction >= 0.90
    )

    inertia_ok = True
    for seed in range(5):
        X_cluster = np.random.default_rng(seed).normal(size=(300, 4))
        result = kmeans_cluster(X_cluster, k=6, seed=seed)
        if not np.all(np.diff(result.inertia_path) <= 1e-9):
            inertia_ok = False

    ok = (
        worst_scale <= 1e-12
        and worst_linear <= 1e-10
        and pca_ok
        and inertia_ok
    )
    _verdict(
        10,
        "aggregation, smoothing, projection and clustering identities hold",
        ok,
        f"weight-scaling err {worst_scale:.1e} (tol 1e-12), "
        f"smoothing linearity err {worst_linear:.1e} (tol 1e-10), "
        f"pca keeps 2 of 4 at 90% ({'yes' if pca_ok else 'no'}), "
        f"k-means inertia monotone ({'yes' if inertia_ok else 'no'})",
    )


def test_criterion_11_manifest_rerun_is_byte_identical(tmp_path):
    world = tmp_path / "world"
    rc = cli_main(
        [
            "synth",
            "--length", "60", "--features", "2", "--phi", "0.5",
            "--noise-std", "0.5", "--seed", "3",
            "--outdir", str(world),
        ]
    )
    assert rc == 0
    first = tmp_path / "first"
    rc = cli_main(
        [
            "monitor", str(world / "frame.csv"),
            "--w", "20", "--restarts", "1",
            "--outdir", str(first),
        ]
    )
    assert rc == 0
    second = tmp_path / "second"
    rc = cli_main(["rerun", str(first / "manifest.json"), "--outdir", str(second)])
    assert rc == 0

    world2 = tmp_path / "world2"
    rc = cli_main(["rerun", str(world / "manifest.json"), "--outdir", str(world2)])
    assert rc == 0

    mismatched = []
    for before, after, names in (
        (first, second, ("predictions.csv", "metrics.json", "nowcast.png")),
        (world, world2, ("frame.csv",)),
    ):
        for name in names:
            if (before / name).read_bytes() != (after / name).read_bytes():
                mismatched.append(name)
    checked = 4
    ok = not mismatched
    _verdict(
        11,
        "rerun from a manifest reproduces every output byte for byte",
        ok,
        f"{checked} files compared" if ok else f"mismatch in {mismatched}",
    )
