//! Subgroup-count selection by parallel analysis: observed singular values
//! against a column-permutation null.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::stream_rng;

pub const DEFAULT_N_PERM: usize = 100;
pub const DEFAULT_QUANTILE_Q: f64 = 0.05;

/// Number of leading singular values of `r` exceeding the (1-q)-quantile of
/// the matching singular values of column-wise independently permuted copies
/// (q = 0.05), capped at `max_g`.
pub fn select_g_parallel_analysis(
    r: &Array2<f64>,
    max_g: usize,
    n_perm: usize,
    seed: u64,
) -> Result<usize> {
    select_g_parallel_analysis_with(r, max_g, n_perm, DEFAULT_QUANTILE_Q, seed)
}

pub fn select_g_parallel_analysis_with(
    r: &Array2<f64>,
    max_g: usize,
    n_perm: usize,
    q: f64,
    seed: u64,
) -> Result<usize> {
    let min_dim = r.nrows().min(r.ncols());
    if max_g == 0 || max_g > min_dim {
        return Err(Error::Domain(format!(
            "max_g {max_g} outside 1..={min_dim}"
        )));
    }
    if n_perm == 0 {
        return Err(Error::Config("n_perm must be at least 1".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("quantile q {q} outside (0,1)")));
    }

    let observed = linalg::singular_values(r);
    let mut null: Vec<Vec<f64>> = vec![Vec::with_capacity(n_perm); max_g];
    for t in 0..n_perm {
        let mut rng = stream_rng(seed, t as u64);
        let mut permuted = r.clone();
        for mut col in permuted.columns_mut() {
            let mut values: Vec<f64> = col.iter().copied().collect();
            values.shuffle(&mut rng);
            for (dst, src) in col.iter_mut().zip(values) {
                *dst = src;
            }
        }
        let sv = linalg::singular_values(&permuted);
        for k in 0..max_g {
            null[k].push(sv[k]);
        }
    }

    let mut count = 0;
    for k in 0..max_g {
        let threshold = upper_quantile(&mut null[k], q);
        if observed[k] > threshold {
            count += 1;
        } else {
            break;
        }
    }
    Ok(count)
}

/// Empirical (1-q)-quantile: the ceil((1-q) * len)-th smallest value.
fn upper_quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((1.0 - q) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}
