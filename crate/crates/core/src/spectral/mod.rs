//! Stage-one estimation: truncated SVD of the response matrix, k-means++ on
//! the projected rows, and subgroup-count selection by parallel analysis.

mod kmeans;
mod parallel;

pub use kmeans::{kmeans_pp, ClusterAssignment, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
pub use parallel::{
    select_g_parallel_analysis, select_g_parallel_analysis_with, DEFAULT_N_PERM, DEFAULT_QUANTILE_Q,
};

use ndarray::{Array1, Array2};

use crate::error::Result;
use crate::linalg;

/// Rows of Û_G Σ̂_G plus the singular triplets they came from.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// n×G projection of the response rows.
    pub projected_rows: Array2<f64>,
    /// Top-G singular values, nonincreasing.
    pub singular_values: Array1<f64>,
    /// J×G right singular vectors.
    pub right_vectors: Array2<f64>,
    /// Number of singular values clearly above zero; embedding columns
    /// beyond it are zero-padded.
    pub effective_rank: usize,
}

/// Top-G singular value decomposition of the response matrix.
pub fn truncated_svd(r: &Array2<f64>, g: usize) -> Result<SpectralEmbedding> {
    let svd = linalg::svd_top(r, g)?;
    let tol = 1e-12 * svd.s[0].max(1.0);
    let effective_rank = svd.s.iter().filter(|&&s| s > tol).count();
    if effective_rank < g {
        log::warn!(
            "response matrix has rank {effective_rank} < G = {g}; embedding columns beyond the rank are zero"
        );
    }
    let mut projected_rows = svd.u.clone();
    for (mut col, &sigma) in projected_rows.columns_mut().into_iter().zip(svd.s.iter()) {
        col.mapv_inplace(|x| x * sigma);
    }
    Ok(SpectralEmbedding {
        projected_rows,
        singular_values: svd.s,
        right_vectors: svd.v,
        effective_rank,
    })
}

/// Algorithm steps 1 and 2 composed: k-means++ with default restarts on the
/// spectral embedding.
pub fn spectral_cluster(r: &Array2<f64>, g: usize, seed: u64) -> Result<ClusterAssignment> {
    let embedding = truncated_svd(r, g)?;
    kmeans_pp(
        &embedding.projected_rows,
        g,
        seed,
        DEFAULT_RESTARTS,
        DEFAULT_MAX_ITER,
    )
}
