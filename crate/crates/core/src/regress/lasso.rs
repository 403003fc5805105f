//! Lasso by cyclic coordinate descent on standardized columns.
//!
//! The objective is (1/n)||y - M gamma||^2 + lambda ||gamma||_1, optimized on
//! an internally standardized design: confounder columns are mean-centered
//! and scaled to unit second moment, membership columns are scaled only
//! (centering would destroy the one-hot structure). Penalties therefore act
//! on the standardized scale; coefficients are mapped back to the original
//! scale, with the centering constant absorbed into the subgroup columns
//! (whose row sums are one).

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::regress::{ColumnRole, DesignMatrix};
use crate::rng::stream_rng;

/// Hard cap on coordinate-descent sweeps.
pub const MAX_SWEEPS: usize = 100_000;
/// Convergence threshold on the max standardized-coefficient change.
pub const CD_TOL: f64 = 1e-8;
/// When the design has a null space (2G + p > n) the minimizer can be
/// non-unique and coordinate descent crawls along a nearly flat valley,
/// shrinking per-sweep changes by only ~1e-5 per sweep. Past a sweep
/// budget, a solution whose changes are below SLOW_SWEEP_CHANGE and whose
/// stationarity conditions hold to the contract tolerance is accepted;
/// past a larger budget sub-SLOW_SWEEP_CHANGE drift alone is accepted
/// (the objective is then optimal at f64 resolution).
const SLOW_SWEEP_CHANGE: f64 = 1e-6;
const KKT_CERTIFICATE: f64 = 1e-6;
const CERTIFICATE_SWEEPS: usize = 500;
const DRIFT_SWEEPS: usize = 5_000;
/// Points in the default cross-validation grid.
pub const LAMBDA_GRID_POINTS: usize = 100;
/// Default cross-validation folds.
pub const DEFAULT_CV_FOLDS: usize = 10;

pub(crate) struct Standardized {
    /// d×n: standardized columns stored as contiguous rows.
    pub xt: Array2<f64>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardized {
    pub fn live(&self, j: usize) -> bool {
        self.scales[j] > 0.0
    }
}

/// Center (where masked) and scale columns to unit second moment. Constant
/// columns get scale 0 and are excluded from optimization.
pub(crate) fn standardize(x: &Array2<f64>, center: &[bool]) -> Standardized {
    let n = x.nrows();
    let d = x.ncols();
    let nf = n as f64;
    let mut xt = Array2::zeros((d, n));
    let mut centers = vec![0.0; d];
    let mut scales = vec![0.0; d];
    for j in 0..d {
        let col = x.column(j);
        let c = if center[j] { col.sum() / nf } else { 0.0 };
        let mut ss = 0.0;
        for &v in col.iter() {
            let w = v - c;
            ss += w * w;
        }
        let scale = (ss / nf).sqrt();
        centers[j] = c;
        if scale > 1e-12 {
            scales[j] = scale;
            for (i, &v) in col.iter().enumerate() {
                xt[[j, i]] = (v - c) / scale;
            }
        }
    }
    Standardized {
        xt,
        centers,
        scales,
    }
}

/// Map standardized coefficients back: returns (original-scale coefficients,
/// additive constant from centering).
pub(crate) fn to_original(sd: &Standardized, coef_std: &Array1<f64>) -> (Array1<f64>, f64) {
    let d = coef_std.len();
    let mut coef = Array1::zeros(d);
    let mut constant = 0.0;
    for j in 0..d {
        if sd.live(j) {
            let c = coef_std[j] / sd.scales[j];
            coef[j] = c;
            constant -= c * sd.centers[j];
        }
    }
    (coef, constant)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent with an active-set inner loop. Returns the
/// standardized coefficients and the number of sweeps used.
pub(crate) fn cd_lasso(
    sd: &Standardized,
    y: &Array1<f64>,
    lambda: f64,
    warm: Option<&Array1<f64>>,
    max_sweeps: usize,
) -> Result<(Array1<f64>, usize)> {
    let d = sd.xt.nrows();
    let n = sd.xt.ncols();
    let nf = n as f64;
    let mut coef = warm.map(|w| w.to_owned()).unwrap_or_else(|| Array1::zeros(d));
    let mut residual = y.to_owned();
    for j in 0..d {
        if coef[j] != 0.0 {
            residual.scaled_add(-coef[j], &sd.xt.row(j));
        }
    }
    let mut sweeps = 0usize;
    let mut objective = objective_value(&residual, &coef, lambda, nf);

    let accept_slow = |delta: f64, sweeps: usize, coef: &Array1<f64>, residual: &Array1<f64>| {
        delta < SLOW_SWEEP_CHANGE
            && sweeps >= CERTIFICATE_SWEEPS
            && (sweeps >= DRIFT_SWEEPS
                || kkt_violation(sd, coef, residual, lambda) <= KKT_CERTIFICATE * (1.0 + lambda))
    };

    loop {
        let delta = sweep(sd, y.len(), &mut coef, &mut residual, lambda, false);
        sweeps += 1;
        let new_objective = objective_value(&residual, &coef, lambda, nf);
        debug_assert!(
            new_objective <= objective + 1e-10 * (1.0 + objective.abs()),
            "lasso objective increased: {objective} -> {new_objective}"
        );
        objective = new_objective;
        if delta < CD_TOL || accept_slow(delta, sweeps, &coef, &residual) {
            return Ok((coef, sweeps));
        }
        if sweeps >= max_sweeps {
            return Err(Error::NoConvergence {
                sweeps,
                residual: delta,
            });
        }
        loop {
            let delta_active = sweep(sd, y.len(), &mut coef, &mut residual, lambda, true);
            sweeps += 1;
            if delta_active < CD_TOL {
                break;
            }
            if accept_slow(delta_active, sweeps, &coef, &residual) {
                return Ok((coef, sweeps));
            }
            if sweeps >= max_sweeps {
                return Err(Error::NoConvergence {
                    sweeps,
                    residual: delta_active,
                });
            }
        }
    }
}

fn objective_value(residual: &Array1<f64>, coef: &Array1<f64>, lambda: f64, nf: f64) -> f64 {
    residual.dot(residual) / nf + lambda * coef.iter().map(|c| c.abs()).sum::<f64>()
}

/// Worst stationarity violation on the standardized scale: inactive
/// coordinates must have |gradient| <= lambda, active ones gradient equal
/// to lambda times the sign.
fn kkt_violation(sd: &Standardized, coef: &Array1<f64>, residual: &Array1<f64>, lambda: f64) -> f64 {
    let nf = sd.xt.ncols() as f64;
    let mut worst = 0.0f64;
    for j in 0..coef.len() {
        if !sd.live(j) {
            continue;
        }
        let grad = 2.0 * sd.xt.row(j).dot(residual) / nf;
        let v = if coef[j] != 0.0 {
            (grad - lambda * coef[j].signum()).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        if v > worst {
            worst = v;
        }
    }
    worst
}

fn sweep(
    sd: &Standardized,
    _n: usize,
    coef: &mut Array1<f64>,
    residual: &mut Array1<f64>,
    lambda: f64,
    active_only: bool,
) -> f64 {
    let nf = sd.xt.ncols() as f64;
    let mut max_change = 0.0f64;
    for j in 0..coef.len() {
        if !sd.live(j) {
            continue;
        }
        let old = coef[j];
        if active_only && old == 0.0 {
            continue;
        }
        let row = sd.xt.row(j);
        // unit second moment makes the curvature constant: a_j = 2
        let b = 2.0 * row.dot(residual) / nf + 2.0 * old;
        let new = soft_threshold(b, lambda) / 2.0;
        if new != old {
            residual.scaled_add(old - new, &row);
            coef[j] = new;
            max_change = max_change.max((new - old).abs());
        }
    }
    max_change
}

fn center_mask(m: &DesignMatrix) -> Vec<bool> {
    m.roles()
        .iter()
        .map(|r| matches!(r, ColumnRole::Confounder(_)))
        .collect()
}

/// Lasso solution on the original coefficient scale.
pub fn lasso_fit(y: &Array1<f64>, m: &DesignMatrix, lambda: f64) -> Result<Array1<f64>> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda {lambda} must be nonnegative")));
    }
    if y.len() != m.n() {
        return Err(Error::Config(format!(
            "outcome length {} does not match {} design rows",
            y.len(),
            m.n()
        )));
    }
    let sd = standardize(m.values(), &center_mask(m));
    let (coef_std, _) = cd_lasso(&sd, y, lambda, None, MAX_SWEEPS)?;
    let (mut coef, constant) = to_original(&sd, &coef_std);
    if constant != 0.0 {
        for (j, role) in m.roles().iter().enumerate() {
            if matches!(role, ColumnRole::Subgroup(_)) {
                coef[j] += constant;
            }
        }
    }
    Ok(coef)
}

/// Lasso on a raw matrix with an explicit centering mask. Returns the
/// original-scale coefficients and the additive constant from centering.
pub fn lasso_on_matrix(
    y: &Array1<f64>,
    x: &Array2<f64>,
    lambda: f64,
    center: &[bool],
) -> Result<(Array1<f64>, f64)> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda {lambda} must be nonnegative")));
    }
    let sd = standardize(x, center);
    let (coef_std, _) = cd_lasso(&sd, y, lambda, None, MAX_SWEEPS)?;
    Ok(to_original(&sd, &coef_std))
}

/// Smallest penalty shrinking every coefficient to zero:
/// 2 ||M~' y||_inf / n on the standardized design.
pub fn lambda_max(y: &Array1<f64>, m: &DesignMatrix) -> f64 {
    let sd = standardize(m.values(), &center_mask(m));
    lambda_max_std(&sd, y)
}

fn lambda_max_std(sd: &Standardized, y: &Array1<f64>) -> f64 {
    let nf = sd.xt.ncols() as f64;
    let mut best = 0.0f64;
    for j in 0..sd.xt.nrows() {
        if sd.live(j) {
            best = best.max((2.0 * sd.xt.row(j).dot(y) / nf).abs());
        }
    }
    best
}

/// 100 log-spaced penalties from lambda_max down to 1e-4 lambda_max.
pub fn default_lambda_grid(y: &Array1<f64>, m: &DesignMatrix) -> Vec<f64> {
    let lmax = lambda_max(y, m);
    log_grid(lmax, 1e-4, LAMBDA_GRID_POINTS)
}

pub(crate) fn log_grid(lmax: f64, min_ratio: f64, points: usize) -> Vec<f64> {
    if lmax <= 0.0 || points == 0 {
        return vec![0.0];
    }
    if points == 1 {
        return vec![lmax];
    }
    let log_max = lmax.ln();
    let log_min = (lmax * min_ratio).ln();
    (0..points)
        .map(|k| {
            let t = k as f64 / (points - 1) as f64;
            (log_max + t * (log_min - log_max)).exp()
        })
        .collect()
}

/// Penalty minimizing mean out-of-fold squared prediction error over a
/// seeded K-fold split. Ties go to the larger penalty.
pub fn cv_lambda(
    y: &Array1<f64>,
    m: &DesignMatrix,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    cv_lambda_matrix(y, m.values(), &center_mask(m), grid, folds, seed)
}

pub(crate) fn cv_lambda_matrix(
    y: &Array1<f64>,
    x: &Array2<f64>,
    center: &[bool],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let n = x.nrows();
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if folds < 2 {
        return Err(Error::Config(format!("folds {folds} must be at least 2")));
    }
    if n < folds {
        return Err(Error::Config(format!(
            "cannot split {n} rows into {folds} folds"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0));

    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut sse = vec![0.0f64; sorted.len()];
    for fold in 0..folds {
        let lo = fold * n / folds;
        let hi = (fold + 1) * n / folds;
        let test: &[usize] = &order[lo..hi];
        let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();

        let x_train = take_rows(x, &train);
        let y_train = Array1::from_iter(train.iter().map(|&i| y[i]));
        let sd = standardize(&x_train, center);

        let mut warm = Array1::zeros(x.ncols());
        for (k, &lambda) in sorted.iter().enumerate() {
            let (coef_std, _) = cd_lasso(&sd, &y_train, lambda, Some(&warm), MAX_SWEEPS)?;
            warm = coef_std.clone();
            let (coef, constant) = to_original(&sd, &coef_std);
            for &i in test {
                let pred = x.row(i).dot(&coef) + constant;
                let err = y[i] - pred;
                sse[k] += err * err;
            }
        }
    }

    let mut best_idx = 0;
    for k in 1..sorted.len() {
        if sse[k] < sse[best_idx] {
            best_idx = k;
        }
    }
    Ok(sorted[best_idx])
}

pub(crate) fn take_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (dst, &i) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&x.row(i));
    }
    out
}

/// Stationarity diagnostics for a lasso solution at penalty `lambda`, on the
/// standardized scale where the optimization ran.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// max over inactive coordinates of |gradient| - lambda; nonpositive at
    /// an exact solution.
    pub max_inactive_excess: f64,
    /// max over active coordinates of |gradient - lambda * sign(coef)|.
    pub max_active_gap: f64,
}

pub fn kkt_report(
    y: &Array1<f64>,
    m: &DesignMatrix,
    coef_original: &Array1<f64>,
    lambda: f64,
) -> KktReport {
    let sd = standardize(m.values(), &center_mask(m));
    // invert the alpha absorption: the centering constant came only from
    // confounder columns, so it is recoverable from original coefficients
    let mut constant = 0.0;
    for (j, role) in m.roles().iter().enumerate() {
        if matches!(role, ColumnRole::Confounder(_)) {
            constant -= coef_original[j] * sd.centers[j];
        }
    }
    let d = coef_original.len();
    let mut coef_std = Array1::zeros(d);
    for (j, role) in m.roles().iter().enumerate() {
        if !sd.live(j) {
            continue;
        }
        let base = if matches!(role, ColumnRole::Subgroup(_)) {
            coef_original[j] - constant
        } else {
            coef_original[j]
        };
        coef_std[j] = base * sd.scales[j];
    }

    let residual = y - &m.values().dot(coef_original);
    let nf = m.n() as f64;
    let mut max_inactive = f64::NEG_INFINITY;
    let mut max_active = 0.0f64;
    for j in 0..d {
        if !sd.live(j) {
            continue;
        }
        let grad = 2.0 * sd.xt.row(j).dot(&residual) / nf;
        if coef_std[j].abs() > 1e-12 {
            max_active = max_active.max((grad - lambda * coef_std[j].signum()).abs());
        } else {
            max_inactive = max_inactive.max(grad.abs() - lambda);
        }
    }
    KktReport {
        max_inactive_excess: max_inactive,
        max_active_gap: max_active,
    }
}
