//! Real-data pipeline: ingest response and outcome files, select the number
//! of subgroups, cluster, pick the estimator by regime, and report subgroup
//! effects, item-parameter estimates, and heatmap data.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::harness::config::Stage2;
use crate::regress::{
    build_design, cv_lambda, debiased_lasso, default_lambda_grid, lasso_fit, nodewise_lasso,
    ols_fit, NodewiseLambda, DEFAULT_CV_FOLDS,
};
use crate::rng::derive_seed;
use crate::spectral::{select_g_parallel_analysis, spectral_cluster, DEFAULT_N_PERM};

const TAG_PARALLEL: u64 = 10;
const TAG_CLUSTER: u64 = 11;
const TAG_CV: u64 = 12;
const TAG_NODEWISE: u64 = 13;

/// Margin in the estimator auto-selection rule: OLS only when
/// n > 2G + p + REGIME_MARGIN.
pub const REGIME_MARGIN: usize = 30;

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    /// Fixed number of subgroups; None selects by parallel analysis.
    pub g: Option<usize>,
    pub max_g: usize,
    pub n_perm: usize,
    /// Stage-two estimator; None applies the regime rule.
    pub estimator: Option<Stage2>,
    pub level: f64,
    pub seed: u64,
    /// Most-variable items exported for the heatmap.
    pub top_k: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            g: None,
            max_g: 10,
            n_perm: DEFAULT_N_PERM,
            estimator: None,
            level: 0.95,
            seed: 0,
            top_k: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopItem {
    /// 0-based item column in the response matrix.
    pub item: usize,
    /// Variance of the estimated item parameter across subgroups.
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub g: usize,
    pub g_from_parallel_analysis: bool,
    pub n: usize,
    pub j: usize,
    pub p: usize,
    /// Cluster proportions.
    pub tau_hat: Vec<f64>,
    /// J×G cluster-wise item means.
    pub theta_hat: Array2<f64>,
    /// 1-based cluster label per subject.
    pub labels: Vec<usize>,
    pub mu: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub intervals: Option<Vec<(f64, f64)>>,
    pub method: Stage2,
    pub lambda: Option<f64>,
    pub top_items: Vec<TopItem>,
}

/// Strict binary response matrix: every entry must be exactly 0 or 1;
/// missing values are rejected. Errors carry 1-based data coordinates.
pub fn read_responses_csv(path: &Path) -> Result<Array2<u8>> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_header = false;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && !saw_header && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            saw_header = true;
            continue;
        }
        let row_idx = rows.len() + 1;
        let mut row = Vec::with_capacity(fields.len());
        for (c, field) in fields.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::Ingest {
                    path: name,
                    row: row_idx,
                    col: c + 1,
                    msg: "missing value (no imputation is performed)".into(),
                });
            }
            match field.parse::<f64>() {
                Ok(v) if v == 0.0 => row.push(0),
                Ok(v) if v == 1.0 => row.push(1),
                _ => {
                    return Err(Error::Ingest {
                        path: name,
                        row: row_idx,
                        col: c + 1,
                        msg: format!("response entry {field:?} is not binary"),
                    });
                }
            }
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Ingest {
                    path: name,
                    row: row_idx,
                    col: row.len(),
                    msg: format!("expected {w} columns, found {}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    let width = width.ok_or_else(|| Error::Ingest {
        path: name.clone(),
        row: 0,
        col: 0,
        msg: "empty response file".into(),
    })?;
    let flat: Vec<u8> = rows.iter().flatten().copied().collect();
    let height = rows.len();
    Array2::from_shape_vec((height, width), flat).map_err(|e| Error::Ingest {
        path: name,
        row: 0,
        col: 0,
        msg: e.to_string(),
    })
}

/// Outcome file with header columns Y, D, X_1..X_p (case-insensitive).
pub fn read_outcome_csv(path: &Path) -> Result<(Array1<f64>, Vec<f64>, Array2<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Ingest {
            path: name.clone(),
            row: 0,
            col: 0,
            msg: "empty outcome file".into(),
        })?
        .split(',')
        .map(|f| f.trim().to_lowercase())
        .collect();
    let y_col = header.iter().position(|h| h == "y").ok_or_else(|| Error::Ingest {
        path: name.clone(),
        row: 0,
        col: 0,
        msg: "missing Y column".into(),
    })?;
    let d_col = header.iter().position(|h| h == "d").ok_or_else(|| Error::Ingest {
        path: name.clone(),
        row: 0,
        col: 0,
        msg: "missing D column".into(),
    })?;
    let x_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != y_col && c != d_col)
        .collect();
    for &c in &x_cols {
        if !header[c].starts_with('x') {
            return Err(Error::Ingest {
                path: name.clone(),
                row: 0,
                col: c + 1,
                msg: format!("unexpected column {:?} (want Y, D, X_1..X_p)", header[c]),
            });
        }
    }

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(Error::Ingest {
                path: name.clone(),
                row: row_idx + 1,
                col: fields.len(),
                msg: format!("expected {} columns, found {}", header.len(), fields.len()),
            });
        }
        let parse = |c: usize| -> Result<f64> {
            let field = fields[c];
            if field.is_empty() {
                return Err(Error::Ingest {
                    path: name.clone(),
                    row: row_idx + 1,
                    col: c + 1,
                    msg: "missing value (no imputation is performed)".into(),
                });
            }
            field.parse::<f64>().map_err(|_| Error::Ingest {
                path: name.clone(),
                row: row_idx + 1,
                col: c + 1,
                msg: format!("field {field:?} is not a number"),
            })
        };
        y.push(parse(y_col)?);
        let dv = parse(d_col)?;
        if dv != 0.0 && dv != 1.0 {
            return Err(Error::Ingest {
                path: name.clone(),
                row: row_idx + 1,
                col: d_col + 1,
                msg: format!("treatment value {dv} is not binary"),
            });
        }
        d.push(dv);
        let mut row = Vec::with_capacity(x_cols.len());
        for &c in &x_cols {
            row.push(parse(c)?);
        }
        x_rows.push(row);
    }
    let p = x_cols.len();
    let n = y.len();
    let flat: Vec<f64> = x_rows.into_iter().flatten().collect();
    let x = Array2::from_shape_vec((n, p), flat).map_err(|e| Error::Ingest {
        path: name,
        row: 0,
        col: 0,
        msg: e.to_string(),
    })?;
    Ok((Array1::from_vec(y), d, x))
}

/// Full pipeline on in-memory data.
pub fn analyze_in_memory(
    responses: &Array2<u8>,
    y: &Array1<f64>,
    d: &[f64],
    x: &Array2<f64>,
    opts: &AnalyzeOptions,
) -> Result<AnalysisReport> {
    let n = responses.nrows();
    let j = responses.ncols();
    let p = x.ncols();
    if y.len() != n || d.len() != n || x.nrows() != n {
        return Err(Error::Config(format!(
            "row mismatch: responses {n}, outcome {}, treatment {}, confounders {}",
            y.len(),
            d.len(),
            x.nrows()
        )));
    }
    let r = responses.mapv(f64::from);

    let (g, g_from_pa) = match opts.g {
        Some(g) => {
            if g == 0 || g > n.min(j) {
                return Err(Error::Config(format!("g {g} outside 1..={}", n.min(j))));
            }
            (g, false)
        }
        None => {
            let cap = opts.max_g.min(n.min(j));
            let selected = select_g_parallel_analysis(
                &r,
                cap,
                opts.n_perm,
                derive_seed(opts.seed, &[TAG_PARALLEL]),
            )?;
            if selected == 0 {
                log::warn!("parallel analysis found no signal components; using G = 1");
                (1, true)
            } else {
                (selected, true)
            }
        }
    };

    let clusters = spectral_cluster(&r, g, derive_seed(opts.seed, &[TAG_CLUSTER]))?;
    let labels = clusters.labels;

    let mut counts = vec![0usize; g];
    for &z in &labels {
        counts[z - 1] += 1;
    }
    let tau_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let mut theta_hat = Array2::zeros((j, g));
    for (i, &z) in labels.iter().enumerate() {
        for item in 0..j {
            theta_hat[[item, z - 1]] += f64::from(responses[[i, item]]);
        }
    }
    for k in 0..g {
        if counts[k] > 0 {
            for item in 0..j {
                theta_hat[[item, k]] /= counts[k] as f64;
            }
        }
    }

    let method = opts
        .estimator
        .unwrap_or(if n > 2 * g + p + REGIME_MARGIN {
            Stage2::Ols
        } else {
            Stage2::Dl
        });

    let design = build_design(&labels, d, x, g)?;
    let (mu, se, intervals, lambda) = match method {
        Stage2::Ols => {
            let fit = ols_fit(y, &design, opts.level)?;
            (fit.mu.to_vec(), Some(fit.se), Some(fit.intervals), None)
        }
        Stage2::Lasso => {
            let grid = default_lambda_grid(y, &design);
            let lambda = cv_lambda(y, &design, &grid, DEFAULT_CV_FOLDS, derive_seed(opts.seed, &[TAG_CV]))?;
            let gamma = lasso_fit(y, &design, lambda)?;
            let mu = (0..g).map(|k| gamma[g + k]).collect();
            (mu, None, None, Some(lambda))
        }
        Stage2::Dl => {
            let grid = default_lambda_grid(y, &design);
            let lambda = cv_lambda(y, &design, &grid, DEFAULT_CV_FOLDS, derive_seed(opts.seed, &[TAG_CV]))?;
            let gamma = lasso_fit(y, &design, lambda)?;
            let rule = NodewiseLambda::cross_validated(derive_seed(opts.seed, &[TAG_NODEWISE]));
            let omega = nodewise_lasso(&design, &rule)?;
            let fit = debiased_lasso(y, &design, &gamma, &omega, opts.level, Some(lambda))?;
            (
                fit.mu.to_vec(),
                Some(fit.se),
                Some(fit.intervals),
                Some(lambda),
            )
        }
    };

    let mut top_items: Vec<TopItem> = (0..j)
        .map(|item| {
            let mean: f64 = (0..g).map(|k| theta_hat[[item, k]]).sum::<f64>() / g as f64;
            let variance = (0..g)
                .map(|k| {
                    let diff: f64 = theta_hat[[item, k]] - mean;
                    diff * diff
                })
                .sum::<f64>()
                / g as f64;
            TopItem { item, variance }
        })
        .collect();
    top_items.sort_by(|a, b| b.variance.partial_cmp(&a.variance).unwrap().then(a.item.cmp(&b.item)));
    top_items.truncate(opts.top_k.min(j));

    Ok(AnalysisReport {
        g,
        g_from_parallel_analysis: g_from_pa,
        n,
        j,
        p,
        tau_hat,
        theta_hat,
        labels,
        mu,
        se,
        intervals,
        method,
        lambda,
        top_items,
    })
}

/// Ingest the two CSV files and run [`analyze_in_memory`].
pub fn analyze_files(
    responses_csv: &Path,
    outcome_csv: &Path,
    opts: &AnalyzeOptions,
) -> Result<AnalysisReport> {
    let responses = read_responses_csv(responses_csv)?;
    let (y, d, x) = read_outcome_csv(outcome_csv)?;
    if y.len() != responses.nrows() {
        return Err(Error::Ingest {
            path: outcome_csv.display().to_string(),
            row: y.len(),
            col: 0,
            msg: format!(
                "outcome rows ({}) do not match response rows ({})",
                y.len(),
                responses.nrows()
            ),
        });
    }
    analyze_in_memory(&responses, &y, &d, &x, opts)
}

fn method_name(method: Stage2) -> &'static str {
    match method {
        Stage2::Ols => "ols",
        Stage2::Lasso => "lasso",
        Stage2::Dl => "dl",
    }
}

/// Write effects.csv, tau_hat.csv, theta_hat.csv, assignments.csv,
/// top_items.csv, and manifest.txt into `dir`.
pub fn write_report(dir: &Path, report: &AnalysisReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut effects = String::from("g,mu_hat,se,lower,upper,method,lambda\n");
    for k in 0..report.g {
        let se = report
            .se
            .as_ref()
            .map(|s| s[k].to_string())
            .unwrap_or_default();
        let (lo, hi) = report
            .intervals
            .as_ref()
            .map(|ci| (ci[k].0.to_string(), ci[k].1.to_string()))
            .unwrap_or_default();
        let lambda = report.lambda.map(|l| l.to_string()).unwrap_or_default();
        effects.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            k + 1,
            report.mu[k],
            se,
            lo,
            hi,
            method_name(report.method),
            lambda
        ));
    }
    std::fs::write(dir.join("effects.csv"), effects)?;

    crate::lcm::io::write_theta_csv(&report.theta_hat, &dir.join("theta_hat.csv"))?;
    crate::lcm::io::write_tau_csv(&Array1::from_vec(report.tau_hat.clone()), &dir.join("tau_hat.csv"))?;

    let mut assignments = String::from("row,cluster\n");
    for (i, &z) in report.labels.iter().enumerate() {
        assignments.push_str(&format!("{},{z}\n", i + 1));
    }
    std::fs::write(dir.join("assignments.csv"), assignments)?;

    let mut top = String::from("item,variance");
    for k in 1..=report.g {
        top.push_str(&format!(",g{k}"));
    }
    top.push('\n');
    for entry in &report.top_items {
        top.push_str(&format!("{},{}", entry.item + 1, entry.variance));
        for k in 0..report.g {
            top.push_str(&format!(",{}", report.theta_hat[[entry.item, k]]));
        }
        top.push('\n');
    }
    std::fs::write(dir.join("top_items.csv"), top)?;

    let manifest = format!(
        "n = {}\nj = {}\np = {}\ng = {}\ng_from_parallel_analysis = {}\nmethod = {}\npackage = {} {}\n",
        report.n,
        report.j,
        report.p,
        report.g,
        report.g_from_parallel_analysis,
        method_name(report.method),
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
    );
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}
