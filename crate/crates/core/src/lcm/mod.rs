//! Latent class model: parameters, sampling, separability, and
//! design-condition diagnostics.
//!
//! Class labels are 1-based (`1..=G`) throughout; item indices are 0-based
//! row indices into the item-parameter matrix.

pub mod io;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::stream_rng;

/// Item-parameter matrix Θ (J×G success probabilities) plus class
/// proportions τ.
#[derive(Debug, Clone)]
pub struct ItemParams {
    theta: Array2<f64>,
    tau: Array1<f64>,
}

impl ItemParams {
    pub fn new(theta: Array2<f64>, tau: Array1<f64>) -> Result<Self> {
        if theta.nrows() == 0 || theta.ncols() == 0 {
            return Err(Error::Config("theta must be at least 1x1".into()));
        }
        if let Some(bad) = theta.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Config(format!("theta entry {bad} outside [0,1]")));
        }
        if tau.len() != theta.ncols() {
            return Err(Error::Config(format!(
                "tau length {} does not match {} classes",
                tau.len(),
                theta.ncols()
            )));
        }
        if tau.iter().any(|&t| t <= 0.0) {
            return Err(Error::Config("tau entries must be positive".into()));
        }
        let sum: f64 = tau.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("tau sums to {sum}, expected 1")));
        }
        Ok(Self { theta, tau })
    }

    /// Uniform class proportions.
    pub fn with_uniform_tau(theta: Array2<f64>) -> Result<Self> {
        let g = theta.ncols();
        let tau = Array1::from_elem(g, 1.0 / g as f64);
        Self::new(theta, tau)
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn tau(&self) -> &Array1<f64> {
        &self.tau
    }

    pub fn n_items(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.theta.ncols()
    }
}

/// Binary response matrix with optional true labels (simulation only).
#[derive(Debug, Clone)]
pub struct LabeledResponses {
    responses: Array2<u8>,
    labels: Option<Vec<usize>>,
}

impl LabeledResponses {
    pub fn new(responses: Array2<u8>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(bad) = responses.iter().find(|&&x| x > 1) {
            return Err(Error::Config(format!("response entry {bad} not in {{0,1}}")));
        }
        if let Some(ref z) = labels {
            if z.len() != responses.nrows() {
                return Err(Error::Config(format!(
                    "labels length {} does not match {} rows",
                    z.len(),
                    responses.nrows()
                )));
            }
            if let Some(bad) = z.iter().find(|&&g| g == 0) {
                return Err(Error::Config(format!("label {bad} outside 1..=G")));
            }
        }
        Ok(Self { responses, labels })
    }

    pub fn responses(&self) -> &Array2<u8> {
        &self.responses
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_subjects(&self) -> usize {
        self.responses.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.responses.ncols()
    }

    /// Response matrix as floating point, for spectral and EM routines.
    pub fn to_f64(&self) -> Array2<f64> {
        self.responses.mapv(f64::from)
    }
}

/// Per-pair δ-informative items and their minimum count J_I.
#[derive(Debug, Clone)]
pub struct SeparabilityReport {
    pub delta: f64,
    pub j_informative: usize,
    /// One entry per unordered class pair (g, g'), g < g', both 1-based;
    /// `items` holds 0-based row indices with |θ_{j,g} − θ_{j,g'}| ≥ δ.
    pub pairs: Vec<PairInformative>,
}

#[derive(Debug, Clone)]
pub struct PairInformative {
    pub class_a: usize,
    pub class_b: usize,
    pub items: Vec<usize>,
}

/// Advisory pass/warn flag for an asymptotic design condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Pass,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LowDim,
    HighDim,
}

#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub threshold: f64,
    pub flag: Flag,
}

/// Signal/threshold comparisons from the design conditions, plus subgroup
/// balance and singular-value balance when the inputs are available.
#[derive(Debug, Clone)]
pub struct DesignDiagnostics {
    pub regime: Regime,
    pub signal_exp: f64,
    pub conditions: Vec<ConditionCheck>,
    pub balance_ratio: Option<f64>,
    pub singular_ratio: Option<f64>,
}

/// Draw `n` subjects from the latent class model: labels i.i.d.
/// categorical(τ), responses conditionally independent Bernoulli(θ_{j,Z}).
/// Deterministic given `seed`.
pub fn sample_lcm(params: &ItemParams, n: usize, seed: u64) -> Result<LabeledResponses> {
    let mut rng = stream_rng(seed, 0);
    sample_lcm_from(params, n, &mut rng)
}

/// As [`sample_lcm`] but drawing from a caller-provided generator.
pub fn sample_lcm_from(
    params: &ItemParams,
    n: usize,
    rng: &mut impl Rng,
) -> Result<LabeledResponses> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let j = params.n_items();
    let mut labels = Vec::with_capacity(n);
    let mut responses = Array2::<u8>::zeros((n, j));
    for i in 0..n {
        let z = sample_categorical(params.tau(), rng);
        labels.push(z);
        for item in 0..j {
            let p = params.theta()[[item, z - 1]];
            responses[[i, item]] = u8::from(rng.random::<f64>() < p);
        }
    }
    LabeledResponses::new(responses, Some(labels))
}

fn sample_categorical(tau: &Array1<f64>, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (g, &t) in tau.iter().enumerate() {
        acc += t;
        if u < acc {
            return g + 1;
        }
    }
    tau.len()
}

/// Vertically stack `copies` of a base item-parameter block.
pub fn make_stacked_theta(base: &Array2<f64>, copies: usize) -> Result<Array2<f64>> {
    if copies == 0 {
        return Err(Error::Config("copies must be at least 1".into()));
    }
    if let Some(bad) = base.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Config(format!("base entry {bad} outside [0,1]")));
    }
    let (rows, cols) = base.dim();
    let mut theta = Array2::zeros((rows * copies, cols));
    for c in 0..copies {
        for r in 0..rows {
            for g in 0..cols {
                theta[[c * rows + r, g]] = base[[r, g]];
            }
        }
    }
    Ok(theta)
}

/// Append `count` rows constant across classes at `value`.
pub fn append_noninformative(theta: &Array2<f64>, count: usize, value: f64) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Config(format!("noninformative value {value} outside [0,1]")));
    }
    let (rows, cols) = theta.dim();
    let mut out = Array2::zeros((rows + count, cols));
    out.slice_mut(ndarray::s![..rows, ..]).assign(theta);
    out.slice_mut(ndarray::s![rows.., ..]).fill(value);
    Ok(out)
}

/// Count δ-informative items per class pair; J_I is the minimum over pairs.
pub fn separability(theta: &Array2<f64>, delta: f64) -> Result<SeparabilityReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} outside (0,1)")));
    }
    let g = theta.ncols();
    if g < 2 {
        return Err(Error::Domain(
            "separability undefined for fewer than 2 classes".into(),
        ));
    }
    let mut pairs = Vec::new();
    let mut j_informative = usize::MAX;
    for a in 0..g {
        for b in (a + 1)..g {
            let items: Vec<usize> = (0..theta.nrows())
                .filter(|&j| (theta[[j, a]] - theta[[j, b]]).abs() >= delta)
                .collect();
            j_informative = j_informative.min(items.len());
            pairs.push(PairInformative {
                class_a: a + 1,
                class_b: b + 1,
                items,
            });
        }
    }
    Ok(SeparabilityReport {
        delta,
        j_informative,
        pairs,
    })
}

/// Compare the exponential signal exp(J_I δ²) against the design-condition
/// thresholds (constants omitted; advisory flags only).
pub fn check_design_conditions(
    report: &SeparabilityReport,
    n: usize,
    p: usize,
    g: usize,
    labels: Option<&[usize]>,
    theta: Option<&Array2<f64>>,
) -> DesignDiagnostics {
    let signal_exp = (report.j_informative as f64 * report.delta * report.delta).exp();
    let nf = n as f64;
    let log_dim = ((p + 2 * g) as f64).ln();
    let thresholds = [
        ("lowdim-estimation", 1.0),
        ("lowdim-inference", nf.sqrt()),
        ("highdim-estimation", (nf / log_dim).sqrt()),
        ("highdim-inference", nf),
    ];
    let conditions = thresholds
        .iter()
        .map(|&(name, threshold)| ConditionCheck {
            name,
            threshold,
            flag: if signal_exp > threshold {
                Flag::Pass
            } else {
                Flag::Warn
            },
        })
        .collect();

    let balance_ratio = labels.map(|z| {
        let mut counts = vec![0usize; g];
        for &zi in z {
            if zi >= 1 && zi <= g {
                counts[zi - 1] += 1;
            }
        }
        let observed: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
        let min = observed.iter().min().copied().unwrap_or(0) as f64;
        let max = observed.iter().max().copied().unwrap_or(0) as f64;
        if max > 0.0 {
            min / max
        } else {
            0.0
        }
    });

    let singular_ratio = theta.map(|t| {
        let sv = linalg::singular_values(t);
        let top = sv[0];
        let min_nonzero = sv
            .iter()
            .rev()
            .find(|&&s| s > 1e-12 * top.max(1.0))
            .copied()
            .unwrap_or(top);
        if min_nonzero > 0.0 {
            top / min_nonzero
        } else {
            1.0
        }
    });

    DesignDiagnostics {
        regime: if 2 * g + p < n {
            Regime::LowDim
        } else {
            Regime::HighDim
        },
        signal_exp,
        conditions,
        balance_ratio,
        singular_ratio,
    }
}

/// The 5×3 well-separated base block used by the simulation designs.
pub fn base_block() -> Array2<f64> {
    ndarray::arr2(&[
        [0.25, 0.75, 0.75],
        [0.25, 0.75, 0.25],
        [0.75, 0.25, 0.75],
        [0.75, 0.25, 0.25],
        [0.75, 0.75, 0.25],
    ])
}
