//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero when any criterion fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cae_core::data::{embed_unitary, gen_hypersurface3, random_truncated_unitary, save_dataset, Dataset};
use cae_core::diagnostics::{
    median_ratio, noise_sigma, spearman, tangent_gradient_cosine, width_rule, RobustnessCell,
};
use cae_core::experiment::{encode_all, preset, run_experiment, run_sweep, ExperimentConfig, RunOutcome};
use cae_core::geometry::{
    gram_schmidt, knn, local_pca, project_to_tangent, sample_covariance, tangent_frames, NeighborhoodSpec,
};
use cae_core::gradcheck::oracle_suite;
use cae_core::training::robustness_threshold;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome) {
    println!("{} {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
}

fn run(cfg: &ExperimentConfig, root: &Path, tag: &str) -> (Option<RunOutcome>, f64) {
    let start = Instant::now();
    let out = run_experiment(cfg, &root.join(tag));
    let secs = start.elapsed().as_secs_f64();
    match out {
        Ok(o) => (Some(o), secs),
        Err(e) => {
            println!("     {tag}: run failed: {e}");
            (None, secs)
        }
    }
}

fn with_seed(name: &str, seed: u64) -> ExperimentConfig {
    let mut c = preset(name).unwrap();
    c.seed = seed;
    c
}

fn majority(passes: usize, total: usize) -> bool {
    2 * passes > total
}

fn gradient_oracle() -> Outcome {
    let r = oracle_suite(50, 50, 2024).unwrap();
    Outcome {
        id: "1",
        name: "gradient oracle",
        pass: r.passed() && r.seconds < 60.0,
        detail: format!(
            "{} models, {} gradient entries ({} failures, max abs err {:.1e}), {} Jacobian draws ({} failures), {:.1}s",
            r.models, r.gradient.entries, r.gradient.failures, r.gradient.max_abs_err, r.jacobian_draws, r.jacobian.failures, r.seconds
        ),
    }
}

/// Mean `|cos|` between the projected ambient gradients of the two active
/// latents, with PCA tangent frames of the training data.
fn projected_active_cosine(o: &RunOutcome) -> f64 {
    let frames = tangent_frames(&o.data.train, NeighborhoodSpec::KNearest { k: 10 }, 2).unwrap();
    tangent_gradient_cosine(&o.model, &o.data.train, &frames, o.report.active[0], o.report.active[1]).unwrap()
}

fn toy(root: &Path) -> (Outcome, Option<RunOutcome>) {
    let mut passes = 0;
    let mut lines = Vec::new();
    let mut first_good = None;
    for seed in 0..3 {
        let (out, secs) = run(&with_seed("toy", seed), root, &format!("toy{seed}"));
        let Some(o) = out else { continue };
        let m = &o.metrics;
        let test = m.test_frozen_error.unwrap_or(f64::NAN);
        let ok = m.train_loss.total < 1e-3
            && m.inferred_dimension == 2
            && test <= 10.0 * m.train_loss.total
            && secs < 900.0;
        lines.push(format!(
            "seed {seed}: E {:.2e}, dim {}, test {:.2e}, {:.0}s",
            m.train_loss.total, m.inferred_dimension, test, secs
        ));
        if ok {
            passes += 1;
            if first_good.is_none() {
                first_good = Some(o);
            }
        }
    }
    (
        Outcome {
            id: "2",
            name: "toy surface",
            pass: majority(passes, 3),
            detail: format!("{passes}/3 seeds [{}]", lines.join("; ")),
        },
        first_good,
    )
}

fn circle(root: &Path) -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let (out, secs) = run(&with_seed("circle", seed), root, &format!("circle{seed}"));
        let Some(o) = out else { continue };
        let m = &o.metrics;
        let dense = m.dense_max_error.unwrap_or(f64::NAN);
        let artifacts = ["dense_validation.csv", "latent_sweep.csv"].iter().all(|f| o.dir.join(f).exists());
        let ok = m.train_loss.total < 1e-3 && m.inferred_dimension == 1 && dense >= 0.1 && artifacts && secs < 300.0;
        lines.push(format!(
            "seed {seed}: E {:.2e}, dim {}, dense max {:.2}, {:.0}s",
            m.train_loss.total, m.inferred_dimension, dense, secs
        ));
        passes += ok as usize;
    }
    Outcome {
        id: "3",
        name: "circle",
        pass: majority(passes, 3),
        detail: format!("{passes}/3 seeds [{}]", lines.join("; ")),
    }
}

fn s_curve(root: &Path) -> (Outcome, Option<u64>) {
    let start = Instant::now();
    let mut good = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..5 {
        let (out, secs) = run(&with_seed("s_curve", seed), root, &format!("s_curve{seed}"));
        let Some(o) = out else { continue };
        let m = &o.metrics;
        if m.inferred_dimension == 2 && m.train_loss.total < 5e-2 {
            good.push(seed);
        }
        lines.push(format!(
            "seed {seed}: E {:.2e}, dim {}, {:.0}s",
            m.train_loss.total, m.inferred_dimension, secs
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        Outcome {
            id: "4",
            name: "S-curve",
            pass: !good.is_empty() && secs < 1800.0,
            detail: format!("{} of 5 seeds two-dimensional {:?}, {:.0}s total [{}]", good.len(), good, secs, lines.join("; ")),
        },
        good.first().copied(),
    )
}

fn invariance(root: &Path, seed: Option<u64>) -> Outcome {
    let seed = seed.unwrap_or(0);
    let (out, secs) = run(&with_seed("s_curve_invariance", seed), root, "invariance");
    let Some(o) = out else {
        return Outcome {
            id: "5",
            name: "invariance",
            pass: false,
            detail: "run failed".into(),
        };
    };
    let lat = encode_all(&o.model, &o.data.train).unwrap();
    let nu1: Vec<f64> = lat.iter().map(|v| v[0]).collect();
    let nu2: Vec<f64> = lat.iter().map(|v| v[1]).collect();
    let t = o.data.train.label_column(o.data.train.label_index("t").unwrap());
    let y = o.data.train.label_column(o.data.train.label_index("y").unwrap());
    let rt = spearman(&nu1, &t).unwrap();
    let ry = spearman(&nu2, &y).unwrap();
    Outcome {
        id: "5",
        name: "invariance",
        pass: rt.abs() > 0.95 && ry.abs() > 0.99,
        detail: format!("seed {seed}: |rho(nu1, t)| {:.4}, |rho(nu2, y)| {:.4}, {:.0}s", rt.abs(), ry.abs(), secs),
    }
}

fn posthoc(toy: Option<&RunOutcome>) -> Outcome {
    let Some(p) = toy.and_then(|o| o.metrics.posthoc.as_ref()) else {
        return Outcome {
            id: "6",
            name: "post-hoc orthogonalization",
            pass: false,
            detail: "no successful toy run with post-hoc results".into(),
        };
    };
    let degrade = p.reconstruction_after / p.reconstruction_before;
    Outcome {
        id: "6",
        name: "post-hoc orthogonalization",
        pass: p.cosine_after < p.cosine_before && p.cosine_after < 0.05 && degrade < 2.0,
        detail: format!(
            "|cos| {:.4} -> {:.4}, reconstruction {:.2e} -> {:.2e} ({:.2}x), pairs {:?}",
            p.cosine_before, p.cosine_after, p.reconstruction_before, p.reconstruction_after, degrade, p.pairs
        ),
    }
}

fn robustness(root: &Path) -> Outcome {
    // (a) formulas against hand-evaluated values
    let widths = [(3, 20), (5, 30), (10, 40), (20, 50), (40, 70), (100, 100)];
    let widths_ok = widths.iter().all(|&(n, w)| width_rule(n) == w);
    let thresholds = [
        (0.0, 10, 5e-4),
        (0.55, 100, 0.3025 * (100.0f64 / 3.0).sqrt() / 10.0),
        (0.32 * 3f64.sqrt(), 3, 0.3072 / 10.0),
        (0.01 * 3f64.sqrt(), 10, 5e-4),
    ];
    let thresholds_ok = thresholds
        .iter()
        .all(|&(s, n, want)| (robustness_threshold(s, n) - want).abs() <= 1e-15 * want.max(1.0));
    let sigma_ok = (noise_sigma(0.32) - 0.32 * 3f64.sqrt()).abs() < 1e-15;

    let mut cfg = preset("robustness").unwrap();
    let sweep = cfg.sweep.as_mut().unwrap();
    sweep.dims = vec![3, 5, 10];
    sweep.levels = vec![0.01, 0.08, 0.32];
    sweep.seeds = vec![0, 1, 2];
    let start = Instant::now();
    let cells: Vec<RobustnessCell> = run_sweep(&cfg, &root.join("robustness"), Some(1)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let failed = cells.iter().filter(|c| c.failure.is_some()).count();
    let mut low_ok = true;
    let mut drift_ok = true;
    let mut parts = Vec::new();
    for n in [3, 5, 10] {
        let low = median_ratio(&cells, n, 0.01).unwrap_or(f64::NAN);
        let mid = median_ratio(&cells, n, 0.08).unwrap_or(f64::NAN);
        let high = median_ratio(&cells, n, 0.32).unwrap_or(f64::NAN);
        low_ok &= low <= 1.5;
        drift_ok &= high >= low;
        parts.push(format!("n={n}: {low:.3}/{mid:.3}/{high:.3}"));
    }
    Outcome {
        id: "7",
        name: "robustness sweep",
        pass: widths_ok && thresholds_ok && sigma_ok && low_ok && drift_ok && secs < 7200.0 && failed == 0,
        detail: format!(
            "(a) formulas {} (b) low-noise {} (c) drift {}; median top-2/full at l=0.01/0.08/0.32 [{}]; {} cells, {} failed, {:.0}s",
            widths_ok && thresholds_ok && sigma_ok,
            low_ok,
            drift_ok,
            parts.join(", "),
            cells.len(),
            failed,
            secs
        ),
    }
}

fn ks_substitute(root: &Path) -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let data = embed_unitary(&gen_hypersurface3(2000, seed).unwrap(), 8, seed + 3).unwrap();
        let path = root.join(format!("modes{seed}.csv"));
        save_dataset(&data, &path).unwrap();
        let mut cfg = with_seed("ks", seed);
        cfg.dataset.path = Some(path);
        let (out, secs) = run(&cfg, root, &format!("ks{seed}"));
        let Some(o) = out else { continue };
        let m = &o.metrics;
        passes += (m.inferred_dimension == 3) as usize;
        lines.push(format!(
            "seed {seed}: E {:.2e}, dim {}, test {:.2e}, {:.0}s",
            m.train_loss.total,
            m.inferred_dimension,
            m.test_frozen_error.unwrap_or(f64::NAN),
            secs
        ));
    }
    Outcome {
        id: "8",
        name: "file ingestion (3-manifold in R^8)",
        pass: majority(passes, 3),
        detail: format!("{passes}/3 seeds [{}]", lines.join("; ")),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn geometry_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let mut trace_err: f64 = 0.0;
    let mut gram_err: f64 = 0.0;
    let mut idem_err: f64 = 0.0;
    let mut contraction_ok = true;
    let mut knn_ok = true;
    for trial in 0..200u64 {
        let pts: Vec<Vec<f64>> = (0..15).map(|_| uniform(5)).collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let cov = sample_covariance(&refs).unwrap();
        let tr: f64 = (0..5).map(|i| cov[i * 6]).sum();
        let sum: f64 = local_pca(&refs).unwrap().eigenvalues.iter().sum();
        trace_err = trace_err.max((sum - tr).abs() / tr.max(1.0));

        let vs: Vec<Vec<f64>> = (0..4).map(|_| uniform(4)).collect();
        let gs = gram_schmidt(&vs, true).unwrap();
        for i in 0..4 {
            for j in 0..i {
                gram_err = gram_err.max(dot(&gs[i], &gs[j]).abs());
            }
        }

        let d = 1 + (trial as usize % 5);
        let q = random_truncated_unitary(6, d, trial).unwrap();
        let basis: Vec<Vec<f64>> = (0..d).map(|j| q.iter().map(|r| r[j]).collect()).collect();
        let v = uniform(6);
        let p = project_to_tangent(&v, &basis);
        let pp = project_to_tangent(&p, &basis);
        idem_err = idem_err.max(p.iter().zip(&pp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        contraction_ok &= dot(&p, &p) <= dot(&v, &v) * (1.0 + 1e-14);
    }
    for trial in 0..10 {
        let rows: Vec<Vec<f64>> = (0..100).map(|_| uniform(3)).collect();
        let data = Dataset::from_rows(&rows).unwrap();
        for query in (0..100).step_by(7 + trial) {
            let mut order: Vec<(f64, usize)> = (0..100)
                .filter(|&i| i != query)
                .map(|i| (rows[i].iter().zip(&rows[query]).map(|(a, b)| (a - b).powi(2)).sum(), i))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = order[..5].iter().map(|p| p.1).collect();
            knn_ok &= knn(&data, query, 5).unwrap() == want;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: "9",
        name: "geometry invariants",
        pass: trace_err < 1e-10 && gram_err < 1e-10 && idem_err < 1e-12 && contraction_ok && knn_ok && secs < 60.0,
        detail: format!(
            "PCA trace err {trace_err:.1e}, Gram off-diagonal {gram_err:.1e}, idempotency {idem_err:.1e}, contraction {contraction_ok}, kNN {knn_ok}, {secs:.1}s"
        ),
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut all = Vec::new();
    let mut emit = |o: Outcome| {
        report(&o);
        all.push(o);
    };
    emit(gradient_oracle());
    emit(geometry_suite());
    let (t, toy_run) = toy(root);
    emit(t);
    if let Some(o) = &toy_run {
        let c = projected_active_cosine(o);
        println!("     toy seed {}: mean |cos| of projected active gradients {c:.3} (soft target < 0.15)", o.metrics.seed);
    }
    emit(posthoc(toy_run.as_ref()));
    emit(circle(root));
    let (s, good) = s_curve(root);
    emit(s);
    emit(invariance(root, good));
    emit(ks_substitute(root));
    emit(robustness(root));
    let failed: Vec<&str> = all.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {}/{} criteria passed", all.len() - failed.len(), all.len());
    if !failed.is_empty() {
        for o in all.iter().filter(|o| !o.pass) {
            eprintln!("failed criterion {}: {}", o.id, o.name);
        }
        std::process::exit(1);
    }
}
