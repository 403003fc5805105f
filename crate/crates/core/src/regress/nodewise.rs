//! Nodewise Lasso: per-column regressions of the design on itself,
//! assembled into an approximate inverse of the Gram matrix M'M/n.
//!
//! Columns are scaled (not centered) internally so the assembled matrix
//! converges to n (M'M)^-1 along the lambda -> 0 path.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regress::lasso::{
    cd_lasso, cv_lambda_matrix, log_grid, standardize, to_original, MAX_SWEEPS,
};
use crate::regress::DesignMatrix;
use crate::rng::derive_seed;

/// Penalty policy for the per-column regressions.
#[derive(Debug, Clone)]
pub enum NodewiseLambda {
    /// K-fold cross-validation per column on a log grid anchored at that
    /// column's lambda_max.
    CrossValidated {
        folds: usize,
        grid_points: usize,
        min_ratio: f64,
        seed: u64,
    },
    /// One shared penalty for every column.
    Fixed(f64),
    /// Explicit penalty per column.
    PerColumn(Vec<f64>),
}

impl NodewiseLambda {
    pub fn cross_validated(seed: u64) -> Self {
        NodewiseLambda::CrossValidated {
            folds: 5,
            grid_points: 20,
            min_ratio: 0.01,
            seed,
        }
    }
}

impl Default for NodewiseLambda {
    fn default() -> Self {
        NodewiseLambda::cross_validated(0)
    }
}

/// Precision estimate Ω̂ for a design matrix; see [`nodewise_on_matrix`].
pub fn nodewise_lasso(m: &DesignMatrix, rule: &NodewiseLambda) -> Result<Array2<f64>> {
    nodewise_on_matrix(m.values(), rule)
}

/// Row j of Ω̂ is (1, -ĉ_j)/τ̂_j² with ĉ_j the lasso regression of column j
/// on the others and τ̂_j² = ||M_j - M_{-j} ĉ_j||²/n + (λ_j/2)||ĉ_j||₁,
/// the penalty term taken on the standardized scale where the regression
/// ran. Under the (1/n)||r||² + λ||c||₁ objective this equals
/// M_j'(M_j - M_{-j}ĉ_j)/n at the optimum, so Ω̂ (M'M/n) has unit diagonal
/// by construction.
pub fn nodewise_on_matrix(values: &Array2<f64>, rule: &NodewiseLambda) -> Result<Array2<f64>> {
    let d = values.ncols();
    if let NodewiseLambda::PerColumn(v) = rule {
        if v.len() != d {
            return Err(Error::Config(format!(
                "per-column penalties: got {} for {d} columns",
                v.len()
            )));
        }
    }

    let rows: Vec<Result<(usize, Array1<f64>, f64)>> = (0..d)
        .into_par_iter()
        .map(|j| nodewise_column(values, j, rule).map(|(c, tau)| (j, c, tau)))
        .collect();

    let mut omega = Array2::zeros((d, d));
    for row in rows {
        let (j, coef, tau_sq) = row?;
        omega[[j, j]] = 1.0 / tau_sq;
        let mut pos = 0;
        for k in 0..d {
            if k == j {
                continue;
            }
            omega[[j, k]] = -coef[pos] / tau_sq;
            pos += 1;
        }
    }
    Ok(omega)
}

fn nodewise_column(
    values: &Array2<f64>,
    j: usize,
    rule: &NodewiseLambda,
) -> Result<(Array1<f64>, f64)> {
    let n = values.nrows();
    let d = values.ncols();
    let nf = n as f64;

    let target = values.column(j).to_owned();
    let mut others = Array2::zeros((n, d - 1));
    let mut pos = 0;
    for k in 0..d {
        if k == j {
            continue;
        }
        others.column_mut(pos).assign(&values.column(k));
        pos += 1;
    }

    let no_center = vec![false; d - 1];
    let sd = standardize(&others, &no_center);

    let lambda_j = match rule {
        NodewiseLambda::Fixed(l) => *l,
        NodewiseLambda::PerColumn(v) => v[j],
        NodewiseLambda::CrossValidated {
            folds,
            grid_points,
            min_ratio,
            seed,
        } => {
            let mut lmax = 0.0f64;
            for r in 0..sd.xt.nrows() {
                if sd.live(r) {
                    lmax = lmax.max((2.0 * sd.xt.row(r).dot(&target) / nf).abs());
                }
            }
            if lmax <= 0.0 {
                0.0
            } else {
                let grid = log_grid(lmax, *min_ratio, *grid_points);
                cv_lambda_matrix(
                    &target,
                    &others,
                    &no_center,
                    &grid,
                    *folds,
                    derive_seed(*seed, &[j as u64]),
                )?
            }
        }
    };

    let (coef_std, _) = cd_lasso(&sd, &target, lambda_j, None, MAX_SWEEPS)?;
    let (coef, _) = to_original(&sd, &coef_std);
    let residual = &target - &others.dot(&coef);
    let penalty = 0.5 * lambda_j * coef_std.iter().map(|c| c.abs()).sum::<f64>();
    let tau_sq = residual.dot(&residual) / nf + penalty;
    if tau_sq <= 1e-12 {
        return Err(Error::NearDuplicateColumn { column: j, tau_sq });
    }
    Ok((coef, tau_sq))
}
