//! Monte Carlo checks of the per-operation contracts: permutation-null
//! calibration, invariances of the spectral pipeline, cross-validation
//! behavior, interval scaling, and the dataset-analysis pipeline.

mod common;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use subspect::harness::config::{load_config, ResolvedScenario, Stage2};
use subspect::harness::{analyze_in_memory, generate_replicate, AnalyzeOptions};
use subspect::lcm;
use subspect::metrics::misclassification_rate;
use subspect::regress::{
    build_design, cv_lambda, debiased_lasso, default_lambda_grid, lasso_fit, lambda_max,
    nodewise_lasso, ols_fit, NodewiseLambda,
};
use subspect::rng::stream_rng;
use subspect::spectral::{select_g_parallel_analysis, spectral_cluster, truncated_svd};

fn lowdim_scenario(n: usize, copies: usize) -> ResolvedScenario {
    let mut config = load_config("lowdim").unwrap();
    config.n = n;
    config.model.copies = copies;
    config.resolve_single().unwrap()
}

#[test]
fn parallel_analysis_calibrated_on_pure_noise() {
    // i.i.d. Bernoulli(0.5) has no structure beyond what the permutation
    // null reproduces: selection should almost always be 0 or 1.
    let runs = 30;
    let mut small = 0;
    for run in 0..runs {
        let mut rng = stream_rng(500 + run, 0);
        let r = Array2::from_shape_fn((200, 200), |_| f64::from(rng.random::<f64>() < 0.5));
        let g = select_g_parallel_analysis(&r, 10, 100, 900 + run).unwrap();
        if g <= 1 {
            small += 1;
        }
    }
    assert!(small >= 29, "selected G <= 1 in only {small}/{runs} runs");
}

#[test]
fn parallel_analysis_recovers_three_classes() {
    let sc = lowdim_scenario(150, 30);
    let mut hits = 0;
    let runs = 30;
    for run in 0..runs {
        let data = generate_replicate(&sc, 1000 + run).unwrap();
        let g = select_g_parallel_analysis(&data.responses.to_f64(), 10, 100, run).unwrap();
        if g == 3 {
            hits += 1;
        }
    }
    assert!(hits >= 29, "selected G = 3 in only {hits}/{runs} runs");
}

#[test]
fn spectral_cluster_row_permutation_equivariant() {
    let sc = lowdim_scenario(60, 30);
    for rep in 0..5 {
        let data = generate_replicate(&sc, rep).unwrap();
        let r = data.responses.to_f64();
        let n = r.nrows();
        // reverse rows: a fixed permutation
        let mut permuted = Array2::zeros(r.dim());
        for i in 0..n {
            permuted.row_mut(i).assign(&r.row(n - 1 - i));
        }
        let a = spectral_cluster(&r, 3, 42).unwrap();
        let b = spectral_cluster(&permuted, 3, 42).unwrap();
        let b_unpermuted: Vec<usize> = (0..n).map(|i| b.labels[n - 1 - i]).collect();
        let alignment = misclassification_rate(&a.labels, &b_unpermuted, 3).unwrap();
        assert_eq!(alignment.rate, 0.0, "partitions differ at replicate {rep}");
    }
}

#[test]
fn spectral_cluster_invariant_to_duplicating_items() {
    let sc = lowdim_scenario(60, 30);
    for rep in 0..5 {
        let data = generate_replicate(&sc, 10 + rep).unwrap();
        let r = data.responses.to_f64();
        let j = r.ncols();
        let mut doubled = Array2::zeros((r.nrows(), 2 * j));
        doubled.slice_mut(s![.., ..j]).assign(&r);
        doubled.slice_mut(s![.., j..]).assign(&r);
        let a = spectral_cluster(&r, 3, 7).unwrap();
        let b = spectral_cluster(&doubled, 3, 7).unwrap();
        let alignment = misclassification_rate(&a.labels, &b.labels, 3).unwrap();
        assert_eq!(alignment.rate, 0.0, "partitions differ at replicate {rep}");
    }
}

#[test]
fn embedding_separates_population_centers() {
    // Minimum inter-center distance exceeds the maximum within-class spread
    // in at least 99% of replicates at J = 150.
    let sc = lowdim_scenario(150, 30);
    let runs = 100;
    let mut separated = 0;
    for rep in 0..runs {
        let data = generate_replicate(&sc, rep as u64).unwrap();
        let emb = truncated_svd(&data.responses.to_f64(), 3).unwrap();
        let labels = data.responses.labels().unwrap();
        let mut centers = vec![Array1::<f64>::zeros(3); 3];
        let mut counts = [0usize; 3];
        for (i, &z) in labels.iter().enumerate() {
            centers[z - 1] = &centers[z - 1] + &emb.projected_rows.row(i);
            counts[z - 1] += 1;
        }
        for k in 0..3 {
            centers[k].mapv_inplace(|v| v / counts[k] as f64);
        }
        let mut min_between = f64::INFINITY;
        for a in 0..3 {
            for b in (a + 1)..3 {
                let d = (&centers[a] - &centers[b]).mapv(|v| v * v).sum().sqrt();
                min_between = min_between.min(d);
            }
        }
        let mut max_within = 0.0f64;
        for (i, &z) in labels.iter().enumerate() {
            let d = (&emb.projected_rows.row(i).to_owned() - &centers[z - 1])
                .mapv(|v| v * v)
                .sum()
                .sqrt();
            max_within = max_within.max(d);
        }
        if min_between > max_within {
            separated += 1;
        }
    }
    assert!(separated >= 99, "separated in only {separated}/{runs} replicates");
}

#[test]
fn cv_on_pure_noise_selects_heavy_shrinkage() {
    // Y independent of the design: the selected penalty should sit in the
    // top quartile of the grid in at least 80% of runs.
    let runs = 20;
    let mut top_quartile = 0;
    for run in 0..runs {
        let mut rng = stream_rng(2000 + run, 0);
        let labels: Vec<usize> = (0..60).map(|_| rng.random_range(1..=3)).collect();
        let d: Vec<f64> = (0..60).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
        let x = Array2::from_shape_fn((60, 20), |_| rng.sample::<f64, _>(StandardNormal));
        let m = build_design(&labels, &d, &x, 3).unwrap();
        let y = Array1::from_shape_fn(60, |_| rng.sample::<f64, _>(StandardNormal));
        let grid = default_lambda_grid(&y, &m);
        let chosen = cv_lambda(&y, &m, &grid, 10, run).unwrap();
        // descending grid: top quartile by value = first 25 entries
        if grid[..25].iter().any(|&l| l == chosen) {
            top_quartile += 1;
        }
    }
    assert!(top_quartile >= 16, "top-quartile selections: {top_quartile}/{runs}");
}

#[test]
fn cv_with_strong_sparse_signal_recovers_support() {
    let runs = 20;
    let mut contains = 0;
    for run in 0..runs {
        let mut rng = stream_rng(3000 + run, 0);
        let n = 150;
        let p = 200;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(1..=3)).collect();
        let d: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let m = build_design(&labels, &d, &x, 3).unwrap();
        // strong sparse truth: z1, dz2, x1, x2
        let y = Array1::from_shape_fn(n, |i| {
            2.0 * m.values()[[i, 0]] - 1.5 * m.values()[[i, 4]]
                + 2.5 * x[[i, 0]]
                + 3.0 * x[[i, 1]]
                + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        let grid = default_lambda_grid(&y, &m);
        let lambda = cv_lambda(&y, &m, &grid, 10, run).unwrap();
        let gamma = lasso_fit(&y, &m, lambda).unwrap();
        let support: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j] != 0.0).collect();
        if [0usize, 4, 6, 7].iter().all(|j| support.contains(j)) {
            contains += 1;
        }
    }
    assert!(contains >= 18, "support recovered in {contains}/{runs} runs");
}

#[test]
fn nodewise_product_near_identity_on_highdim_design() {
    let mut config = load_config("highdim").unwrap();
    config.estimator = "dl".parse().unwrap();
    let sc = config.resolve_single().unwrap();
    let data = generate_replicate(&sc, 0).unwrap();
    let labels = data.responses.labels().unwrap();
    let m = build_design(labels, &data.d, &data.x, 3).unwrap();
    let omega = nodewise_lasso(&m, &NodewiseLambda::cross_validated(1)).unwrap();
    let gram = m.values().t().dot(m.values()).mapv(|v| v / m.n() as f64);
    let product = omega.dot(&gram);
    let mut worst = 0.0f64;
    for a in 0..m.n_cols() {
        for b in 0..m.n_cols() {
            let expect = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((product[[a, b]] - expect).abs());
        }
    }
    assert!(worst < 0.5, "||omega gram - I||_inf = {worst}");
}

#[test]
fn interval_width_shrinks_like_root_n() {
    // Doubling n shrinks the median OLS interval width by roughly 1/sqrt(2).
    let widths = |n: usize| -> f64 {
        let sc = lowdim_scenario(n, 30);
        let mut all = Vec::new();
        for rep in 0..100 {
            let data = generate_replicate(&sc, rep).unwrap();
            let labels = data.responses.labels().unwrap();
            let m = build_design(labels, &data.d, &data.x, 3).unwrap();
            let fit = ols_fit(&data.y, &m, 0.95).unwrap();
            for (lo, hi) in fit.intervals {
                all.push(hi - lo);
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all[all.len() / 2]
    };
    let ratio = widths(300) / widths(150);
    assert!(
        (0.65..=0.76).contains(&ratio),
        "median width ratio {ratio} outside [0.65, 0.76]"
    );
}

#[test]
fn estimators_are_label_permutation_equivariant() {
    let sc = lowdim_scenario(120, 30);
    let data = generate_replicate(&sc, 5).unwrap();
    let labels = data.responses.labels().unwrap().to_vec();
    // sigma maps g -> (g mod 3) + 1
    let sigma = [2usize, 3, 1];
    let permuted: Vec<usize> = labels.iter().map(|&z| sigma[z - 1]).collect();
    let m1 = build_design(&labels, &data.d, &data.x, 3).unwrap();
    let m2 = build_design(&permuted, &data.d, &data.x, 3).unwrap();

    let ols1 = ols_fit(&data.y, &m1, 0.95).unwrap();
    let ols2 = ols_fit(&data.y, &m2, 0.95).unwrap();
    for g in 0..3 {
        assert!(
            (ols1.mu[g] - ols2.mu[sigma[g] - 1]).abs() < 1e-8,
            "ols mu not equivariant at {g}"
        );
    }

    let lambda = 0.1 * lambda_max(&data.y, &m1);
    let l1 = lasso_fit(&data.y, &m1, lambda).unwrap();
    let l2 = lasso_fit(&data.y, &m2, lambda).unwrap();
    for g in 0..3 {
        assert!(
            (l1[3 + g] - l2[3 + sigma[g] - 1]).abs() < 1e-6,
            "lasso mu not equivariant at {g}"
        );
    }

    let rule = NodewiseLambda::Fixed(0.05);
    let om1 = nodewise_lasso(&m1, &rule).unwrap();
    let om2 = nodewise_lasso(&m2, &rule).unwrap();
    let dl1 = debiased_lasso(&data.y, &m1, &l1, &om1, 0.95, Some(lambda)).unwrap();
    let dl2 = debiased_lasso(&data.y, &m2, &l2, &om2, 0.95, Some(lambda)).unwrap();
    for g in 0..3 {
        assert!(
            (dl1.mu[g] - dl2.mu[sigma[g] - 1]).abs() < 1e-6,
            "debiased mu not equivariant at {g}"
        );
    }
}

#[test]
fn analysis_pipeline_round_trips_through_files() {
    let sc = lowdim_scenario(90, 10);
    let data = generate_replicate(&sc, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let resp_path = dir.path().join("responses.csv");
    let out_path = dir.path().join("outcome.csv");

    let mut resp = String::new();
    let j = data.responses.n_items();
    resp.push_str(
        &(1..=j)
            .map(|k| format!("item_{k}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    resp.push('\n');
    for row in data.responses.responses().rows() {
        resp.push_str(
            &row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        resp.push('\n');
    }
    std::fs::write(&resp_path, resp).unwrap();

    let mut out = String::from("Y,D");
    for k in 1..=sc.config.p {
        out.push_str(&format!(",X_{k}"));
    }
    out.push('\n');
    for i in 0..90 {
        out.push_str(&format!("{},{}", data.y[i], data.d[i]));
        for k in 0..sc.config.p {
            out.push_str(&format!(",{}", data.x[[i, k]]));
        }
        out.push('\n');
    }
    std::fs::write(&out_path, out).unwrap();

    let opts = AnalyzeOptions {
        g: Some(3),
        ..AnalyzeOptions::default()
    };
    let from_files = subspect::harness::analyze_files(&resp_path, &out_path, &opts).unwrap();
    let in_memory = analyze_in_memory(
        data.responses.responses(),
        &data.y,
        &data.d,
        &data.x,
        &opts,
    )
    .unwrap();
    assert_eq!(from_files.mu, in_memory.mu);
    assert_eq!(from_files.labels, in_memory.labels);
    assert_eq!(from_files.tau_hat, in_memory.tau_hat);
}

#[test]
fn analysis_covers_highdim_truth() {
    // Data from the high-dimensional design: reported intervals should
    // cover the true effects in at least 90% of (run, subgroup) checks.
    let mut config = load_config("highdim").unwrap();
    config.estimator = "dl".parse().unwrap();
    let sc = config.resolve_single().unwrap();
    let runs = 12;
    let mut covered = 0;
    let mut total = 0;
    for rep in 0..runs {
        let data = generate_replicate(&sc, 400 + rep).unwrap();
        let opts = AnalyzeOptions {
            g: Some(3),
            seed: rep,
            ..AnalyzeOptions::default()
        };
        let report = analyze_in_memory(
            data.responses.responses(),
            &data.y,
            &data.d,
            &data.x,
            &opts,
        )
        .unwrap();
        assert_eq!(report.method, Stage2::Dl);
        let alignment =
            misclassification_rate(data.responses.labels().unwrap(), &report.labels, 3).unwrap();
        let mu_aligned = alignment.align_per_class(&report.mu);
        let ci_aligned = alignment.align_per_class(report.intervals.as_ref().unwrap());
        for g in 0..3 {
            total += 1;
            let (lo, hi) = ci_aligned[g];
            let truth = sc.config.mu[g];
            if lo <= truth && truth <= hi {
                covered += 1;
            }
            // sanity: the point estimate should at least be near the truth
            assert!(
                (mu_aligned[g] - truth).abs() < 1.5,
                "mu {} far from {truth}",
                mu_aligned[g]
            );
        }
    }
    assert!(
        covered * 10 >= total * 9,
        "covered {covered}/{total} (run, subgroup) checks"
    );
}

#[test]
fn analyze_selects_g_by_parallel_analysis() {
    let sc = lowdim_scenario(150, 30);
    let data = generate_replicate(&sc, 9).unwrap();
    let opts = AnalyzeOptions::default();
    let report = analyze_in_memory(
        data.responses.responses(),
        &data.y,
        &data.d,
        &data.x,
        &opts,
    )
    .unwrap();
    assert!(report.g_from_parallel_analysis);
    assert_eq!(report.g, 3);
    assert_eq!(report.method, Stage2::Ols);
}

#[test]
fn design_diagnostics_on_generated_labels() {
    let sc = lowdim_scenario(150, 30);
    let data = generate_replicate(&sc, 2).unwrap();
    let report = lcm::separability(sc.params.theta(), 0.5).unwrap();
    let diag = lcm::check_design_conditions(
        &report,
        150,
        10,
        3,
        data.responses.labels(),
        Some(sc.params.theta()),
    );
    let balance = diag.balance_ratio.unwrap();
    assert!(balance > 0.5 && balance <= 1.0, "balance {balance}");
    assert!(diag.singular_ratio.unwrap() >= 1.0);
}
