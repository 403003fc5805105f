//! Stage-two estimation and inference: the regression design built from
//! estimated memberships, OLS with covariance, Lasso by coordinate descent,
//! nodewise Lasso, and debiased-Lasso confidence intervals.

mod debias;
mod lasso;
mod normal;
mod nodewise;

pub use debias::debiased_lasso;
pub use lasso::{
    cv_lambda, default_lambda_grid, kkt_report, lambda_max, lasso_fit, lasso_on_matrix, KktReport,
    DEFAULT_CV_FOLDS, LAMBDA_GRID_POINTS,
};
pub use nodewise::{nodewise_lasso, NodewiseLambda};
pub use normal::normal_quantile;

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;

/// Condition-number gate for OLS; beyond it the design is reported singular
/// rather than silently pseudo-inverted.
pub const OLS_CONDITION_LIMIT: f64 = 1e12;

/// Role of a design-matrix column. Subgroup indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    /// Membership indicator (or posterior weight) for subgroup g.
    Subgroup(usize),
    /// Treatment times membership for subgroup g.
    TreatedSubgroup(usize),
    /// Confounder k (1-based).
    Confounder(usize),
}

impl ColumnRole {
    pub fn label(&self) -> String {
        match self {
            ColumnRole::Subgroup(g) => format!("z{g}"),
            ColumnRole::TreatedSubgroup(g) => format!("dz{g}"),
            ColumnRole::Confounder(k) => format!("x{k}"),
        }
    }
}

/// The n×(2G+p) regression matrix (Ẑ, DẐ, X) with column-role metadata.
/// Membership columns are one-hot for hard assignments and row-stochastic
/// for soft (posterior) designs.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: Array2<f64>,
    roles: Vec<ColumnRole>,
    g: usize,
    p: usize,
    soft: bool,
}

impl DesignMatrix {
    /// Assemble (memberships, D*memberships, X). `memberships` rows must sum
    /// to one; hard designs additionally have entries in {0,1}.
    pub fn from_parts(
        memberships: &Array2<f64>,
        d: &[f64],
        x: &Array2<f64>,
        soft: bool,
    ) -> Result<Self> {
        let n = memberships.nrows();
        let g = memberships.ncols();
        let p = x.ncols();
        if d.len() != n || x.nrows() != n {
            return Err(Error::Config(format!(
                "row mismatch: memberships {n}, d {}, x {}",
                d.len(),
                x.nrows()
            )));
        }
        if let Some(bad) = d.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config(format!("treatment value {bad} not in {{0,1}}")));
        }
        for (i, row) in memberships.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-8 {
                return Err(Error::Config(format!(
                    "membership row {i} sums to {sum}, expected 1"
                )));
            }
            if !soft && row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Config(format!(
                    "membership row {i} is not one-hot"
                )));
            }
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::Config(format!(
                    "membership row {i} has a negative entry"
                )));
            }
        }

        let mut values = Array2::zeros((n, 2 * g + p));
        values.slice_mut(s![.., ..g]).assign(memberships);
        for i in 0..n {
            for k in 0..g {
                values[[i, g + k]] = d[i] * memberships[[i, k]];
            }
        }
        values.slice_mut(s![.., 2 * g..]).assign(x);

        let mut roles = Vec::with_capacity(2 * g + p);
        roles.extend((1..=g).map(ColumnRole::Subgroup));
        roles.extend((1..=g).map(ColumnRole::TreatedSubgroup));
        roles.extend((1..=p).map(ColumnRole::Confounder));
        Ok(Self {
            values,
            roles,
            g,
            p,
            soft,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_subgroups(&self) -> usize {
        self.g
    }

    pub fn n_confounders(&self) -> usize {
        self.p
    }

    pub fn is_soft(&self) -> bool {
        self.soft
    }

    /// Design restricted to the given rows (cross-validation folds).
    pub fn rows_subset(&self, rows: &[usize]) -> DesignMatrix {
        let mut values = Array2::zeros((rows.len(), self.n_cols()));
        for (out, &i) in rows.iter().enumerate() {
            values.row_mut(out).assign(&self.values.row(i));
        }
        DesignMatrix {
            values,
            roles: self.roles.clone(),
            g: self.g,
            p: self.p,
            soft: self.soft,
        }
    }
}

/// Build the hard-assignment design from 1-based labels.
pub fn build_design(
    labels: &[usize],
    d: &[f64],
    x: &Array2<f64>,
    g: usize,
) -> Result<DesignMatrix> {
    let n = labels.len();
    let mut memberships = Array2::zeros((n, g));
    for (i, &z) in labels.iter().enumerate() {
        if z == 0 || z > g {
            return Err(Error::Domain(format!("label {z} outside 1..={g}")));
        }
        memberships[[i, z - 1]] = 1.0;
    }
    DesignMatrix::from_parts(&memberships, d, x, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ols,
    Lasso,
    DebiasedLasso,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Ols => write!(f, "ols"),
            Method::Lasso => write!(f, "lasso"),
            Method::DebiasedLasso => write!(f, "dl"),
        }
    }
}

/// Subgroup-effect estimate with covariance and confidence intervals.
/// `covariance` is the estimated covariance of sqrt(n)(mu_hat - mu)
/// restricted to the mu coordinates; `se` and `intervals` are on the raw
/// coefficient scale.
#[derive(Debug, Clone)]
pub struct EffectEstimate {
    pub gamma: Array1<f64>,
    pub mu: Array1<f64>,
    pub covariance: Array2<f64>,
    pub se: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub method: Method,
    pub lambda: Option<f64>,
    pub level: f64,
    pub sigma2: f64,
}

impl EffectEstimate {
    /// CSV with one row per subgroup: g, mu_hat, se, lower, upper, method,
    /// lambda (empty for OLS).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("g,mu_hat,se,lower,upper,method,lambda\n");
        for g in 0..self.mu.len() {
            let lambda = self.lambda.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                g + 1,
                self.mu[g],
                self.se[g],
                self.intervals[g].0,
                self.intervals[g].1,
                self.method,
                lambda
            ));
        }
        out
    }
}

pub(crate) fn extract_mu_estimate(
    gamma: Array1<f64>,
    full_cov: &Array2<f64>,
    n: usize,
    g: usize,
    method: Method,
    lambda: Option<f64>,
    level: f64,
    sigma2: f64,
) -> EffectEstimate {
    let mu = gamma.slice(s![g..2 * g]).to_owned();
    let mut covariance = full_cov.slice(s![g..2 * g, g..2 * g]).to_owned();
    // enforce exact symmetry
    for a in 0..g {
        for b in (a + 1)..g {
            let avg = 0.5 * (covariance[[a, b]] + covariance[[b, a]]);
            covariance[[a, b]] = avg;
            covariance[[b, a]] = avg;
        }
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let nf = n as f64;
    let se: Vec<f64> = (0..g)
        .map(|k| (covariance[[k, k]] / nf).max(0.0).sqrt())
        .collect();
    let intervals = (0..g)
        .map(|k| (mu[k] - z * se[k], mu[k] + z * se[k]))
        .collect();
    EffectEstimate {
        gamma,
        mu,
        covariance,
        se,
        intervals,
        method,
        lambda,
        level,
        sigma2,
    }
}

/// Ordinary least squares with classical covariance
/// (sigma2 * n * (M'M)^-1) and normal-quantile confidence intervals.
pub fn ols_fit(y: &Array1<f64>, m: &DesignMatrix, level: f64) -> Result<EffectEstimate> {
    let n = m.n();
    let d = m.n_cols();
    if y.len() != n {
        return Err(Error::Config(format!(
            "outcome length {} does not match {n} design rows",
            y.len()
        )));
    }
    if n <= d {
        return Err(Error::Domain(format!(
            "OLS requires n > 2G+p, got n = {n}, columns = {d}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0,1)")));
    }

    let svd = linalg::svd_dense(m.values(), d)?;
    let smax = svd.s[0];
    let smin = svd.s[d - 1];
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > OLS_CONDITION_LIMIT {
        let mut offenders = std::collections::BTreeSet::new();
        for k in 0..d {
            if svd.s[k] <= smax / OLS_CONDITION_LIMIT {
                let col = svd.v.column(k);
                let peak = col.iter().cloned().map(f64::abs).fold(0.0, f64::max);
                for (j, &v) in col.iter().enumerate() {
                    if v.abs() >= 0.5 * peak {
                        offenders.insert(j);
                    }
                }
            }
        }
        return Err(Error::SingularDesign {
            cond,
            columns: offenders
                .into_iter()
                .map(|j| m.roles()[j].label())
                .collect(),
        });
    }

    // gamma = V S^-1 U' y ; (M'M)^-1 = V S^-2 V'
    let uty = svd.u.t().dot(y);
    let mut scaled = uty.clone();
    for k in 0..d {
        scaled[k] /= svd.s[k];
    }
    let gamma = svd.v.dot(&scaled);

    let residual = y - &m.values().dot(&gamma);
    let rss = residual.dot(&residual);
    let dof = (n - d) as f64;
    let sigma2 = rss / dof;

    let mut vs = svd.v.clone();
    for (mut col, &sk) in vs.columns_mut().into_iter().zip(svd.s.iter()) {
        col.mapv_inplace(|x| x / sk);
    }
    let gram_inv = vs.dot(&vs.t());
    let cov_full = gram_inv.mapv(|x| x * sigma2 * n as f64);

    Ok(extract_mu_estimate(
        gamma,
        &cov_full,
        n,
        m.n_subgroups(),
        Method::Ols,
        None,
        level,
        sigma2,
    ))
}
