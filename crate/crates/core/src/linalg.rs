//! Dense and iterative singular value decompositions.
//!
//! The dense path (Golub–Kahan bidiagonalization via `nalgebra`) is used
//! whenever `min(n, m)` is at or below [`DENSE_SVD_LIMIT`]; larger problems
//! take a Golub–Kahan–Lanczos bidiagonalization with full
//! reorthogonalization. Both paths apply the same deterministic sign
//! convention: each left singular vector is oriented so its entry of largest
//! magnitude is positive, ties broken by lowest index.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest `min(n, m)` handled by the dense decomposition.
pub const DENSE_SVD_LIMIT: usize = 2000;

const LANCZOS_SEED: u64 = 0x4c41_4e43_5a4f_5321;

/// Top-`k` singular triplets, `s` nonincreasing, `u` is n×k, `v` is m×k.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

pub fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Top-`k` SVD, dispatching on problem size.
pub fn svd_top(a: &Array2<f64>, k: usize) -> Result<TruncatedSvd> {
    let min_dim = a.nrows().min(a.ncols());
    if k == 0 || k > min_dim {
        return Err(Error::Domain(format!(
            "svd rank {k} out of range for a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if min_dim <= DENSE_SVD_LIMIT {
        svd_dense(a, k)
    } else {
        svd_lanczos(a, k)
    }
}

/// Dense thin SVD truncated to the top `k` triplets.
pub fn svd_dense(a: &Array2<f64>, k: usize) -> Result<TruncatedSvd> {
    let svd = to_dmatrix(a).svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap().then(i.cmp(&j)));

    let n = a.nrows();
    let m = a.ncols();
    let mut out_u = Array2::zeros((n, k));
    let mut out_v = Array2::zeros((m, k));
    let mut out_s = Array1::zeros(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        out_s[col] = sv[idx];
        for i in 0..n {
            out_u[[i, col]] = u[(i, idx)];
        }
        for j in 0..m {
            out_v[[j, col]] = vt[(idx, j)];
        }
    }
    let mut result = TruncatedSvd {
        u: out_u,
        s: out_s,
        v: out_v,
    };
    fix_signs(&mut result);
    Ok(result)
}

/// All singular values of `a`, nonincreasing. Values only (no vectors).
pub fn singular_values(a: &Array2<f64>) -> Array1<f64> {
    let svd = to_dmatrix(a).svd(false, false);
    let mut vals: Vec<f64> = svd.singular_values.iter().copied().collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Array1::from_vec(vals)
}

/// Golub–Kahan–Lanczos bidiagonalization with full reorthogonalization.
///
/// Grows the Krylov basis until the top-`k` triplets have residual below
/// `1e-10 * sigma_1` or the basis spans the full column space (at which
/// point the decomposition is exact).
pub fn svd_lanczos(a: &Array2<f64>, k: usize) -> Result<TruncatedSvd> {
    let n = a.nrows();
    let m = a.ncols();
    let min_dim = n.min(m);
    if k == 0 || k > min_dim {
        return Err(Error::Domain(format!(
            "svd rank {k} out of range for a {n}x{m} matrix"
        )));
    }

    let mut rng = stream_rng(LANCZOS_SEED, 0);
    let mut v_basis: Vec<Array1<f64>> = Vec::new();
    let mut u_basis: Vec<Array1<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v = random_unit(m, &mut rng);
    let mut p = mat_vec(a, &v);
    let mut alpha = norm(&p);
    if alpha > 0.0 {
        p.mapv_inplace(|x| x / alpha);
    }
    v_basis.push(v.clone());
    u_basis.push(p.clone());
    alphas.push(alpha);

    // Scale reference for breakdown detection.
    let scale = alpha.max(1e-300);

    loop {
        let j = alphas.len();
        let u_j = u_basis[j - 1].clone();

        // r = A^T u_j - alpha_j v_j
        let mut r = mat_t_vec(a, &u_j);
        r.scaled_add(-alphas[j - 1], &v_basis[j - 1]);
        reorthogonalize(&mut r, &v_basis);
        let mut beta = norm(&r);
        if beta <= 1e-13 * scale {
            beta = 0.0;
            r = random_orthonormal(m, &v_basis, &mut rng);
        } else {
            r.mapv_inplace(|x| x / beta);
        }

        // Convergence check on the bidiagonal factor before extending.
        if j >= k {
            let (pmat, sigma, _q) = bidiag_svd(&alphas, &betas[..j - 1]);
            let sigma1 = sigma[0].max(1e-300);
            let converged = (0..k).all(|i| beta * pmat[[j - 1, i]].abs() <= 1e-10 * sigma1);
            if converged || j == min_dim {
                return Ok(assemble(a, k, &u_basis, &v_basis, &alphas, &betas));
            }
        }

        betas.push(beta);
        v = r;
        v_basis.push(v.clone());

        // p = A v_{j+1} - beta_j u_j
        let mut pnext = mat_vec(a, &v);
        pnext.scaled_add(-beta, &u_j);
        reorthogonalize(&mut pnext, &u_basis);
        alpha = norm(&pnext);
        if alpha <= 1e-13 * scale {
            alpha = 0.0;
            pnext = random_orthonormal(n, &u_basis, &mut rng);
        } else {
            pnext.mapv_inplace(|x| x / alpha);
        }
        u_basis.push(pnext);
        alphas.push(alpha);
    }
}

fn assemble(
    a: &Array2<f64>,
    k: usize,
    u_basis: &[Array1<f64>],
    v_basis: &[Array1<f64>],
    alphas: &[f64],
    betas: &[f64],
) -> TruncatedSvd {
    let j = alphas.len();
    let (pmat, sigma, qmat) = bidiag_svd(alphas, betas);
    let n = a.nrows();
    let m = a.ncols();
    let mut u = Array2::zeros((n, k));
    let mut v = Array2::zeros((m, k));
    let mut s = Array1::zeros(k);
    for col in 0..k {
        s[col] = sigma[col];
        for row in 0..j {
            let pu = pmat[[row, col]];
            let qv = qmat[[row, col]];
            if pu != 0.0 {
                u.column_mut(col).scaled_add(pu, &u_basis[row]);
            }
            if qv != 0.0 {
                v.column_mut(col).scaled_add(qv, &v_basis[row]);
            }
        }
    }
    let mut result = TruncatedSvd { u, s, v };
    fix_signs(&mut result);
    result
}

/// SVD of the upper-bidiagonal matrix B (diag `alphas`, superdiag `betas`),
/// returning (P, sigma, Q) with B = P diag(sigma) Q^T, sigma nonincreasing.
fn bidiag_svd(alphas: &[f64], betas: &[f64]) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let j = alphas.len();
    let mut b = DMatrix::zeros(j, j);
    for i in 0..j {
        b[(i, i)] = alphas[i];
        if i + 1 < j {
            b[(i, i + 1)] = betas[i];
        }
    }
    let svd = b.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&x, &y| sv[y].partial_cmp(&sv[x]).unwrap().then(x.cmp(&y)));

    let mut p = Array2::zeros((j, j));
    let mut q = Array2::zeros((j, j));
    let mut sigma = vec![0.0; j];
    for (col, &idx) in order.iter().enumerate() {
        sigma[col] = sv[idx];
        for row in 0..j {
            p[[row, col]] = u[(row, idx)];
            q[[row, col]] = vt[(idx, row)];
        }
    }
    (p, sigma, q)
}

/// Orient each left singular vector so its largest-magnitude entry is
/// positive (ties: lowest index); the paired right vector flips with it.
fn fix_signs(svd: &mut TruncatedSvd) {
    for col in 0..svd.s.len() {
        let mut best_idx = 0;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &x) in svd.u.column(col).iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best_idx = i;
            }
        }
        if svd.u[[best_idx, col]] < 0.0 {
            svd.u.column_mut(col).mapv_inplace(|x| -x);
            svd.v.column_mut(col).mapv_inplace(|x| -x);
        }
    }
}

fn mat_vec(a: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    a.dot(x)
}

fn mat_t_vec(a: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    a.t().dot(x)
}

fn norm(x: &Array1<f64>) -> f64 {
    x.dot(x).sqrt()
}

/// Two rounds of classical Gram–Schmidt against the whole basis.
fn reorthogonalize(x: &mut Array1<f64>, basis: &[Array1<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = x.dot(b);
            if c != 0.0 {
                x.scaled_add(-c, b);
            }
        }
    }
}

fn random_unit(dim: usize, rng: &mut impl Rng) -> Array1<f64> {
    let mut x = Array1::from_shape_fn(dim, |_| rng.random::<f64>() - 0.5);
    let nrm = norm(&x);
    x.mapv_inplace(|v| v / nrm);
    x
}

fn random_orthonormal(dim: usize, basis: &[Array1<f64>], rng: &mut impl Rng) -> Array1<f64> {
    loop {
        let mut x = random_unit(dim, rng);
        reorthogonalize(&mut x, basis);
        let nrm = norm(&x);
        if nrm > 1e-8 {
            x.mapv_inplace(|v| v / nrm);
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn random_matrix(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, 0);
        Array2::from_shape_fn((n, m), |_| rng.random::<f64>())
    }

    #[test]
    fn dense_reconstructs_full_rank() {
        let a = random_matrix(12, 7, 1);
        let svd = svd_dense(&a, 7).unwrap();
        let recon = svd.u.dot(&Array2::from_diag(&svd.s)).dot(&svd.v.t());
        let err = (&a - &recon).mapv(|x| x * x).sum().sqrt();
        assert!(err < 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn lanczos_matches_dense() {
        let a = random_matrix(80, 40, 2);
        let dense = svd_dense(&a, 5).unwrap();
        let lanczos = svd_lanczos(&a, 5).unwrap();
        for i in 0..5 {
            assert!(
                (dense.s[i] - lanczos.s[i]).abs() <= 1e-8 * dense.s[0],
                "sigma_{i}: dense {} vs lanczos {}",
                dense.s[i],
                lanczos.s[i]
            );
        }
        // Same sign convention, so vectors (not just subspaces) agree.
        let du = (&dense.u - &lanczos.u).mapv(f64::abs).sum();
        let dv = (&dense.v - &lanczos.v).mapv(f64::abs).sum();
        assert!(du < 1e-6 && dv < 1e-6, "u diff {du}, v diff {dv}");
    }

    #[test]
    fn lanczos_handles_low_rank() {
        // Rank-2 matrix; ask for 4 triplets.
        let b = random_matrix(30, 2, 3);
        let c = random_matrix(2, 20, 4);
        let a = b.dot(&c);
        let svd = svd_lanczos(&a, 4).unwrap();
        assert!(svd.s[0] > 1.0);
        assert!(svd.s[2].abs() < 1e-7 && svd.s[3].abs() < 1e-7);
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let a = random_matrix(9, 9, 5);
        let svd = svd_dense(&a, 9).unwrap();
        for col in 0..9 {
            let column = svd.u.column(col);
            let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max >= -min, "column {col} oriented wrong");
        }
    }

    #[test]
    fn rank_argument_validated() {
        let a = random_matrix(4, 6, 6);
        assert!(matches!(svd_top(&a, 5), Err(Error::Domain(_))));
        assert!(matches!(svd_top(&a, 0), Err(Error::Domain(_))));
    }
}
