//! Evaluation metrics: misclassification rate with optimal label alignment,
//! RMSE over replicates, and empirical confidence-interval coverage.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Optimal matching between true and estimated class labels.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// `permutation[g-1]` is the estimated class (1-based) matched to true
    /// class `g`; the lexicographically smallest optimum under ties.
    pub permutation: Vec<usize>,
    /// Fraction of subjects misclassified under the optimal matching.
    pub rate: f64,
    /// `confusion[[g-1, h-1]]` counts subjects with true class g and
    /// estimated class h.
    pub confusion: Array2<usize>,
}

impl AlignmentResult {
    /// Map estimated labels into the true-class labeling (applies the
    /// inverse of `permutation`).
    pub fn align_labels(&self, zhat: &[usize]) -> Vec<usize> {
        let g = self.permutation.len();
        let mut inverse = vec![0usize; g];
        for (true_class, &est_class) in self.permutation.iter().enumerate() {
            inverse[est_class - 1] = true_class + 1;
        }
        zhat.iter().map(|&h| inverse[h - 1]).collect()
    }

    /// Reorder per-class quantities from estimated-class order into
    /// true-class order.
    pub fn align_per_class<T: Clone>(&self, values: &[T]) -> Vec<T> {
        self.permutation
            .iter()
            .map(|&est| values[est - 1].clone())
            .collect()
    }
}

/// Misclassification rate minimized over label permutations. Exact: brute
/// force over G! for G ≤ 6, Hungarian assignment above.
pub fn misclassification_rate(z: &[usize], zhat: &[usize], g: usize) -> Result<AlignmentResult> {
    if z.len() != zhat.len() {
        return Err(Error::Domain(format!(
            "label vectors differ in length: {} vs {}",
            z.len(),
            zhat.len()
        )));
    }
    if z.is_empty() {
        return Err(Error::Domain("label vectors are empty".into()));
    }
    let mut confusion = Array2::zeros((g, g));
    for (&a, &b) in z.iter().zip(zhat) {
        if a == 0 || a > g || b == 0 || b > g {
            return Err(Error::Domain(format!(
                "label ({a}, {b}) outside 1..={g}"
            )));
        }
        confusion[[a - 1, b - 1]] += 1;
    }
    let (permutation, correct) = if g <= 6 {
        brute_force_alignment(&confusion)
    } else {
        hungarian_alignment(&confusion)
    };
    let rate = 1.0 - correct as f64 / z.len() as f64;
    Ok(AlignmentResult {
        permutation,
        rate,
        confusion,
    })
}

/// Exhaustive search over all G! permutations, lexicographic enumeration so
/// ties resolve to the smallest permutation. Returns (phi, matched count).
pub fn brute_force_alignment(confusion: &Array2<usize>) -> (Vec<usize>, usize) {
    let g = confusion.nrows();
    let mut perm: Vec<usize> = (0..g).collect();
    let mut best_perm = perm.clone();
    let mut best = matched(confusion, &perm);
    while next_permutation(&mut perm) {
        let m = matched(confusion, &perm);
        if m > best {
            best = m;
            best_perm = perm.clone();
        }
    }
    (best_perm.iter().map(|&c| c + 1).collect(), best)
}

/// O(G^3) Hungarian assignment maximizing the matched count.
pub fn hungarian_alignment(confusion: &Array2<usize>) -> (Vec<usize>, usize) {
    let g = confusion.nrows();
    let cost = confusion.mapv(|c| -(c as f64));
    let assignment = hungarian_min(&cost);
    let correct = (0..g).map(|r| confusion[[r, assignment[r]]]).sum();
    (assignment.iter().map(|&c| c + 1).collect(), correct)
}

fn matched(confusion: &Array2<usize>, perm: &[usize]) -> usize {
    perm.iter()
        .enumerate()
        .map(|(r, &c)| confusion[[r, c]])
        .sum()
}

fn next_permutation(arr: &mut [usize]) -> bool {
    if arr.len() < 2 {
        return false;
    }
    let mut i = arr.len() - 1;
    while i > 0 && arr[i - 1] >= arr[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = arr.len() - 1;
    while arr[j] <= arr[i - 1] {
        j -= 1;
    }
    arr.swap(i - 1, j);
    arr[i..].reverse();
    true
}

/// Minimum-cost assignment by shortest augmenting paths with potentials.
fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned = vec![0usize; n + 1]; // column -> row (1-based, 0 free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        assigned[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned[j0] = assigned[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        result[assigned[j] - 1] = j - 1;
    }
    result
}

/// Per-coordinate and pooled root mean square error over replicates.
#[derive(Debug, Clone)]
pub struct RmseSummary {
    pub per_coordinate: Vec<f64>,
    pub pooled: f64,
}

pub fn rmse(estimates: &[Vec<f64>], mu_true: &[f64]) -> Result<RmseSummary> {
    if estimates.is_empty() {
        return Err(Error::Domain("rmse of an empty estimate list".into()));
    }
    let g = mu_true.len();
    if estimates.iter().any(|e| e.len() != g) {
        return Err(Error::Domain("estimate length does not match mu".into()));
    }
    let reps = estimates.len() as f64;
    let mut sq = vec![0.0f64; g];
    for est in estimates {
        for k in 0..g {
            let d = est[k] - mu_true[k];
            sq[k] += d * d;
        }
    }
    let pooled = (sq.iter().sum::<f64>() / (reps * g as f64)).sqrt();
    let per_coordinate = sq.into_iter().map(|s| (s / reps).sqrt()).collect();
    Ok(RmseSummary {
        per_coordinate,
        pooled,
    })
}

/// Empirical coverage per subgroup with its Monte Carlo standard error.
#[derive(Debug, Clone)]
pub struct CoverageSummary {
    pub rate: Vec<f64>,
    pub se: Vec<f64>,
    pub replicates: usize,
}

pub fn coverage(intervals: &[Vec<(f64, f64)>], mu_true: &[f64]) -> Result<CoverageSummary> {
    if intervals.is_empty() {
        return Err(Error::Domain("coverage of an empty interval list".into()));
    }
    let g = mu_true.len();
    if intervals.iter().any(|ci| ci.len() != g) {
        return Err(Error::Domain("interval count does not match mu".into()));
    }
    let reps = intervals.len();
    let mut hits = vec![0usize; g];
    for ci in intervals {
        for k in 0..g {
            let (lo, hi) = ci[k];
            if lo <= mu_true[k] && mu_true[k] <= hi {
                hits[k] += 1;
            }
        }
    }
    let rate: Vec<f64> = hits.iter().map(|&h| h as f64 / reps as f64).collect();
    let se = rate
        .iter()
        .map(|&c| (c * (1.0 - c) / reps as f64).sqrt())
        .collect();
    Ok(CoverageSummary {
        rate,
        se,
        replicates: reps,
    })
}
