//! k-means++ with D² seeding, Lloyd iterations, deterministic tie-breaking,
//! and restart selection by within-cluster cost.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Cluster labels (1-based), centers in the point space, and the k-means
/// objective at the returned solution.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub within_cost: f64,
}

/// Best of `restarts` seeded k-means++ runs. Deterministic given `seed`:
/// restart r draws from stream (seed, r), assignment and sampling ties
/// resolve to the lowest index, and the lowest-cost (earliest on ties)
/// restart wins.
pub fn kmeans_pp(
    points: &Array2<f64>,
    g: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<ClusterAssignment> {
    let n = points.nrows();
    if g == 0 {
        return Err(Error::Domain("cluster count must be at least 1".into()));
    }
    if n < g {
        return Err(Error::Domain(format!(
            "cannot form {g} clusters from {n} points"
        )));
    }
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let mut best: Option<KmeansRun> = None;
    for r in 0..restarts {
        let mut rng = stream_rng(seed, r as u64);
        let run = run_once(points.view(), g, &mut rng, max_iter);
        if best.as_ref().map_or(true, |b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    Ok(ClusterAssignment {
        labels: run.labels.iter().map(|&l| l + 1).collect(),
        centers: run.centers,
        within_cost: run.cost,
    })
}

struct KmeansRun {
    labels: Vec<usize>,
    centers: Array2<f64>,
    cost: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    cost_trace: Vec<f64>,
}

fn run_once(points: ArrayView2<f64>, g: usize, rng: &mut impl Rng, max_iter: usize) -> KmeansRun {
    let seeds = seed_centers(points, g, rng);
    let dim = points.ncols();
    let mut centers = Array2::zeros((g, dim));
    for (c, &idx) in seeds.iter().enumerate() {
        centers.row_mut(c).assign(&points.row(idx));
    }
    let mut labels = assign(points, &centers);
    repair_empty(points, &mut centers, &mut labels);
    let mut cost = objective(points, &labels, &centers);
    let mut cost_trace = vec![cost];

    for _ in 0..max_iter {
        update_centers(points, &labels, &mut centers);
        let mut new_labels = assign(points, &centers);
        repair_empty(points, &mut centers, &mut new_labels);
        let new_cost = objective(points, &new_labels, &centers);
        debug_assert!(
            new_cost <= cost + 1e-10 * (1.0 + cost),
            "Lloyd objective increased: {cost} -> {new_cost}"
        );
        cost_trace.push(new_cost);
        let fixpoint = new_labels == labels;
        labels = new_labels;
        cost = new_cost;
        if fixpoint {
            break;
        }
    }
    KmeansRun {
        labels,
        centers,
        cost,
        cost_trace,
    }
}

/// D² sampling: first center uniform, then points with probability
/// proportional to squared distance from the chosen set.
fn seed_centers(points: ArrayView2<f64>, g: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(g);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < g {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        chosen.push(pick);
        for i in 0..n {
            let d = dist2(points.row(i), points.row(pick));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen
}

fn assign(points: ArrayView2<f64>, centers: &Array2<f64>) -> Vec<usize> {
    let mut labels = Vec::with_capacity(points.nrows());
    for row in points.rows() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.rows().into_iter().enumerate() {
            let d = dist2(row, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels.push(best);
    }
    labels
}

fn update_centers(points: ArrayView2<f64>, labels: &[usize], centers: &mut Array2<f64>) {
    let g = centers.nrows();
    let mut counts = vec![0usize; g];
    centers.fill(0.0);
    for (row, &l) in points.rows().into_iter().zip(labels) {
        counts[l] += 1;
        centers.row_mut(l).scaled_add(1.0, &row);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centers.row_mut(c).mapv_inplace(|x| x / count as f64);
        }
    }
}

/// Reseed each empty cluster at the point farthest from its assigned
/// center, then reassign. Deterministic: farthest ties resolve to the
/// lowest point index.
fn repair_empty(points: ArrayView2<f64>, centers: &mut Array2<f64>, labels: &mut Vec<usize>) {
    loop {
        let g = centers.nrows();
        let mut counts = vec![0usize; g];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far_idx = 0usize;
        let mut far_d = f64::NEG_INFINITY;
        for (i, row) in points.rows().into_iter().enumerate() {
            let d = dist2(row, centers.row(labels[i]));
            if d > far_d {
                far_d = d;
                far_idx = i;
            }
        }
        let far_point = points.row(far_idx).to_owned();
        centers.row_mut(empty).assign(&far_point);
        *labels = assign(points, centers);
    }
}

fn objective(points: ArrayView2<f64>, labels: &[usize], centers: &Array2<f64>) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| dist2(row, centers.row(l)))
        .sum()
}

fn dist2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
