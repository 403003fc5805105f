//! Monte Carlo scenario execution: replicate pipeline, aggregation, and
//! deterministic output files.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{em_lcm, hard_assign, EM_DEFAULT_MAX_ITER, EM_DEFAULT_STARTS, EM_DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::harness::config::{ResolvedScenario, Stage1, Stage2};
use crate::harness::generate::{generate_replicate, ReplicateData};
use crate::harness::summary::ScenarioSummary;
use crate::metrics;
use crate::regress::{
    build_design, cv_lambda, debiased_lasso, default_lambda_grid, lasso_fit, nodewise_lasso,
    ols_fit, DesignMatrix, NodewiseLambda, DEFAULT_CV_FOLDS,
};
use crate::rng::derive_seed;
use crate::spectral::spectral_cluster;

const TAG_KMEANS: u64 = 1;
const TAG_EM: u64 = 2;
const TAG_CV: u64 = 3;
const TAG_NODEWISE: u64 = 4;

/// One replicate's estimates, aligned to the true subgroup order.
/// `wall_time` is informational and never serialized (outputs must be
/// byte-identical across runs).
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub index: u64,
    pub misclass_rate: f64,
    pub mu_hat: Vec<f64>,
    pub intervals: Option<Vec<(f64, f64)>>,
    pub lambda: Option<f64>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub enum ReplicateRecord {
    Ok(ReplicateResult),
    Failed { index: u64, message: String },
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub records: Vec<ReplicateRecord>,
    pub summary: ScenarioSummary,
    pub mean_wall_time: Duration,
}

/// Run one replicate end to end: generate data, estimate memberships,
/// align them to the truth, regress, and report aligned subgroup effects.
pub fn run_replicate(sc: &ResolvedScenario, index: u64) -> Result<ReplicateResult> {
    let start = Instant::now();
    let data = generate_replicate(sc, index)?;
    let g = sc.g();
    let z_true = data.responses.labels().expect("simulation labels");
    let master = sc.config.master_seed;

    let (misclass_rate, design) = match sc.config.estimator.stage1() {
        Stage1::Oracle => {
            let m = build_design(z_true, &data.d, &data.x, g)?;
            (0.0, m)
        }
        Stage1::Spectral => {
            let r = data.responses.to_f64();
            let clusters = spectral_cluster(&r, g, derive_seed(master, &[index, TAG_KMEANS]))?;
            let alignment = metrics::misclassification_rate(z_true, &clusters.labels, g)?;
            let aligned = alignment.align_labels(&clusters.labels);
            let m = build_design(&aligned, &data.d, &data.x, g)?;
            (alignment.rate, m)
        }
        Stage1::EmHard | Stage1::EmSoft => {
            let r = data.responses.to_f64();
            let fit = em_lcm(
                &r,
                g,
                derive_seed(master, &[index, TAG_EM]),
                EM_DEFAULT_STARTS,
                EM_DEFAULT_TOL,
                EM_DEFAULT_MAX_ITER,
            )?;
            let labels = hard_assign(&fit);
            let alignment = metrics::misclassification_rate(z_true, &labels, g)?;
            let m = if sc.config.estimator.stage1() == Stage1::EmHard {
                let aligned = alignment.align_labels(&labels);
                build_design(&aligned, &data.d, &data.x, g)?
            } else {
                // permute posterior columns into the true subgroup order
                let mut aligned = Array2::zeros(fit.posteriors.dim());
                for (true_class, &est_class) in alignment.permutation.iter().enumerate() {
                    aligned
                        .column_mut(true_class)
                        .assign(&fit.posteriors.column(est_class - 1));
                }
                DesignMatrix::from_parts(&aligned, &data.d, &data.x, true)?
            };
            (alignment.rate, m)
        }
    };

    let (mu_hat, intervals, lambda) = run_stage2(sc, &data, &design, index)?;
    Ok(ReplicateResult {
        index,
        misclass_rate,
        mu_hat,
        intervals,
        lambda,
        wall_time: start.elapsed(),
    })
}

fn run_stage2(
    sc: &ResolvedScenario,
    data: &ReplicateData,
    design: &DesignMatrix,
    index: u64,
) -> Result<(Vec<f64>, Option<Vec<(f64, f64)>>, Option<f64>)> {
    let g = sc.g();
    let level = sc.config.level;
    let master = sc.config.master_seed;
    match sc.config.estimator.stage2() {
        Stage2::Ols => {
            let fit = ols_fit(&data.y, design, level)?;
            Ok((fit.mu.to_vec(), Some(fit.intervals), None))
        }
        Stage2::Lasso => {
            let grid = default_lambda_grid(&data.y, design);
            let lambda = cv_lambda(
                &data.y,
                design,
                &grid,
                DEFAULT_CV_FOLDS,
                derive_seed(master, &[index, TAG_CV]),
            )?;
            let gamma = lasso_fit(&data.y, design, lambda)?;
            let mu = (0..g).map(|k| gamma[g + k]).collect();
            Ok((mu, None, Some(lambda)))
        }
        Stage2::Dl => {
            let grid = default_lambda_grid(&data.y, design);
            let lambda = cv_lambda(
                &data.y,
                design,
                &grid,
                DEFAULT_CV_FOLDS,
                derive_seed(master, &[index, TAG_CV]),
            )?;
            let gamma = lasso_fit(&data.y, design, lambda)?;
            let rule = NodewiseLambda::cross_validated(derive_seed(master, &[index, TAG_NODEWISE]));
            let omega = nodewise_lasso(design, &rule)?;
            let fit = debiased_lasso(&data.y, design, &gamma, &omega, level, Some(lambda))?;
            Ok((fit.mu.to_vec(), Some(fit.intervals), Some(lambda)))
        }
    }
}

/// Run every replicate (concurrently; output identical to sequential) and
/// aggregate. Per-replicate failures are recorded, not fatal.
pub fn run_scenario(sc: &ResolvedScenario) -> ScenarioOutcome {
    let records: Vec<ReplicateRecord> = (0..sc.config.replicates as u64)
        .into_par_iter()
        .map(|index| match run_replicate(sc, index) {
            Ok(result) => ReplicateRecord::Ok(result),
            Err(err) => ReplicateRecord::Failed {
                index,
                message: err.to_string(),
            },
        })
        .collect();
    let summary = summarize(sc, &records);
    let mean_wall_time = mean_time(&records);
    ScenarioOutcome {
        records,
        summary,
        mean_wall_time,
    }
}

fn mean_time(records: &[ReplicateRecord]) -> Duration {
    let times: Vec<Duration> = records
        .iter()
        .filter_map(|r| match r {
            ReplicateRecord::Ok(res) => Some(res.wall_time),
            ReplicateRecord::Failed { .. } => None,
        })
        .collect();
    if times.is_empty() {
        Duration::ZERO
    } else {
        times.iter().sum::<Duration>() / times.len() as u32
    }
}

fn summarize(sc: &ResolvedScenario, records: &[ReplicateRecord]) -> ScenarioSummary {
    let successes: Vec<&ReplicateResult> = records
        .iter()
        .filter_map(|r| match r {
            ReplicateRecord::Ok(res) => Some(res),
            ReplicateRecord::Failed { .. } => None,
        })
        .collect();
    let failed = records.len() - successes.len();
    let g = sc.g();

    let rates: Vec<f64> = successes.iter().map(|r| r.misclass_rate).collect();
    let (misclass_mean, misclass_se) = mean_and_se(&rates);

    let mu_hats: Vec<Vec<f64>> = successes.iter().map(|r| r.mu_hat.clone()).collect();
    let (rmse_pooled, rmse_per) = match metrics::rmse(&mu_hats, &sc.config.mu) {
        Ok(s) => (s.pooled, s.per_coordinate),
        Err(_) => (f64::NAN, vec![f64::NAN; g]),
    };

    let interval_sets: Vec<Vec<(f64, f64)>> = successes
        .iter()
        .filter_map(|r| r.intervals.clone())
        .collect();
    let (coverage, coverage_se) = if interval_sets.len() == successes.len() && !interval_sets.is_empty()
    {
        match metrics::coverage(&interval_sets, &sc.config.mu) {
            Ok(c) => (Some(c.rate), Some(c.se)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };

    ScenarioSummary {
        scenario_id: sc.id.clone(),
        n: sc.config.n,
        j: sc.j(),
        j_i: sc.j_informative(),
        j_noninf: sc.j_noninf(),
        p: sc.config.p,
        g,
        method: sc.config.estimator.to_string(),
        replicates: records.len(),
        failed,
        misclass_mean,
        misclass_se,
        rmse_pooled,
        rmse_per,
        coverage,
        coverage_se,
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Write config.toml, replicates.csv, summary.csv, and manifest.txt into
/// `dir`. Output bytes depend only on (config, master seed).
pub fn write_outputs(dir: &Path, sc: &ResolvedScenario, outcome: &ScenarioOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let config_text = toml::to_string(&sc.config)
        .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
    std::fs::write(dir.join("config.toml"), &config_text)?;

    let g = sc.g();
    let mut rep = String::from("replicate,status,misclass_rate");
    for k in 1..=g {
        rep.push_str(&format!(",mu_hat_{k}"));
    }
    for k in 1..=g {
        rep.push_str(&format!(",lower_{k},upper_{k}"));
    }
    rep.push_str(",lambda\n");
    for record in &outcome.records {
        match record {
            ReplicateRecord::Ok(r) => {
                rep.push_str(&format!("{},ok,{}", r.index, r.misclass_rate));
                for k in 0..g {
                    rep.push_str(&format!(",{}", r.mu_hat[k]));
                }
                for k in 0..g {
                    match &r.intervals {
                        Some(ci) => rep.push_str(&format!(",{},{}", ci[k].0, ci[k].1)),
                        None => rep.push_str(",,"),
                    }
                }
                match r.lambda {
                    Some(l) => rep.push_str(&format!(",{l}\n")),
                    None => rep.push('\n'),
                }
            }
            ReplicateRecord::Failed { index, message } => {
                rep.push_str(&format!("{index},failed: {}", message.replace(',', ";")));
                for _ in 0..(3 * g + 1) {
                    rep.push(',');
                }
                rep.push('\n');
            }
        }
    }
    std::fs::write(dir.join("replicates.csv"), rep)?;

    outcome.summary.write_csv(&dir.join("summary.csv"))?;

    let digest = Sha256::digest(config_text.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = format!(
        "scenario_id = {}\nconfig_sha256 = {}\nmaster_seed = {}\npackage = {} {}\n",
        sc.id,
        hash,
        sc.config.master_seed,
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
    );
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}
