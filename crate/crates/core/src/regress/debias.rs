//! Debiased Lasso: lasso estimate plus a precision-matrix correction,
//! with plug-in covariance for confidence intervals.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::regress::{extract_mu_estimate, DesignMatrix, EffectEstimate, Method};

/// gamma_dl = gamma_lasso + Omega M'(y - M gamma_lasso)/n, with covariance
/// sigma2 * Omega (M'M/n) Omega' and normal-quantile intervals on the mu
/// coordinates. sigma2 is the lasso residual variance with degrees of
/// freedom n - |support|, floored at n/2.
pub fn debiased_lasso(
    y: &Array1<f64>,
    m: &DesignMatrix,
    gamma_lasso: &Array1<f64>,
    omega: &Array2<f64>,
    level: f64,
    lambda: Option<f64>,
) -> Result<EffectEstimate> {
    let n = m.n();
    let d = m.n_cols();
    if y.len() != n {
        return Err(Error::Config(format!(
            "outcome length {} does not match {n} design rows",
            y.len()
        )));
    }
    if gamma_lasso.len() != d {
        return Err(Error::Config(format!(
            "coefficient length {} does not match {d} columns",
            gamma_lasso.len()
        )));
    }
    if omega.dim() != (d, d) {
        return Err(Error::Config(format!(
            "omega shape {:?} does not match {d} columns",
            omega.dim()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0,1)")));
    }

    let residual = y - &m.values().dot(gamma_lasso);
    let correction = omega.dot(&m.values().t().dot(&residual)) / n as f64;
    let gamma_dl = gamma_lasso + &correction;

    let support = gamma_lasso.iter().filter(|&&c| c != 0.0).count();
    let dof = ((n - support.min(n)) as f64).max(n as f64 / 2.0);
    let sigma2 = residual.dot(&residual) / dof;

    let gram = m.values().t().dot(m.values()).mapv(|v| v / n as f64);
    let cov_full = omega.dot(&gram).dot(&omega.t()).mapv(|v| v * sigma2);

    Ok(extract_mu_estimate(
        gamma_dl,
        &cov_full,
        n,
        m.n_subgroups(),
        Method::DebiasedLasso,
        lambda,
        level,
        sigma2,
    ))
}
