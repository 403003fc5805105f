//! Scenario configuration: TOML schema, named presets, validation, and
//! sweep expansion.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcm::{self, ItemParams};

/// One Monte Carlo scenario. `beta` and `beta_l` list leading coefficients
/// and are zero-padded to length `p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelConfig,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub rho: f64,
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub beta_l: Vec<f64>,
    pub noise_sd: f64,
    pub estimator: Estimator,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

fn default_level() -> f64 {
    0.95
}

/// Item-parameter source: a stacked base block (plus optional
/// noninformative rows) or explicit CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_copies")]
    pub copies: usize,
    #[serde(default)]
    pub noninformative: usize,
    #[serde(default = "default_noninformative_value")]
    pub noninformative_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_csv: Option<PathBuf>,
}

fn default_copies() -> usize {
    1
}

fn default_noninformative_value() -> f64 {
    0.25
}

/// Run family: vary exactly one axis, optionally across several estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_noninf: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<Estimator>>,
}

/// Stage-one source and stage-two method, as a single tag. The EM variants
/// regress with OLS (the toy comparison design).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Ols,
    Lasso,
    Dl,
    OracleOls,
    OracleLasso,
    OracleDl,
    EmHard,
    EmSoft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1 {
    Spectral,
    Oracle,
    EmHard,
    EmSoft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2 {
    Ols,
    Lasso,
    Dl,
}

impl Estimator {
    pub fn stage1(&self) -> Stage1 {
        match self {
            Estimator::Ols | Estimator::Lasso | Estimator::Dl => Stage1::Spectral,
            Estimator::OracleOls | Estimator::OracleLasso | Estimator::OracleDl => Stage1::Oracle,
            Estimator::EmHard => Stage1::EmHard,
            Estimator::EmSoft => Stage1::EmSoft,
        }
    }

    pub fn stage2(&self) -> Stage2 {
        match self {
            Estimator::Ols | Estimator::OracleOls | Estimator::EmHard | Estimator::EmSoft => {
                Stage2::Ols
            }
            Estimator::Lasso | Estimator::OracleLasso => Stage2::Lasso,
            Estimator::Dl | Estimator::OracleDl => Stage2::Dl,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::Lasso => "lasso",
            Estimator::Dl => "dl",
            Estimator::OracleOls => "oracle-ols",
            Estimator::OracleLasso => "oracle-lasso",
            Estimator::OracleDl => "oracle-dl",
            Estimator::EmHard => "em-hard",
            Estimator::EmSoft => "em-soft",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Estimator::Ols),
            "lasso" => Ok(Estimator::Lasso),
            "dl" => Ok(Estimator::Dl),
            "oracle-ols" => Ok(Estimator::OracleOls),
            "oracle-lasso" => Ok(Estimator::OracleLasso),
            "oracle-dl" => Ok(Estimator::OracleDl),
            "em-hard" => Ok(Estimator::EmHard),
            "em-soft" => Ok(Estimator::EmSoft),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// A fully materialized single scenario: item parameters built, coefficient
/// vectors padded, sweep applied.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub id: String,
    pub config: ScenarioConfig,
    pub params: ItemParams,
    pub beta: Array1<f64>,
    pub beta_l: Array1<f64>,
}

impl ResolvedScenario {
    pub fn g(&self) -> usize {
        self.params.n_classes()
    }

    pub fn j(&self) -> usize {
        self.params.n_items()
    }

    pub fn j_noninf(&self) -> usize {
        self.config.model.noninformative
    }

    /// Informative-item count at the reporting threshold δ = 0.5 (0 when
    /// undefined).
    pub fn j_informative(&self) -> usize {
        if self.g() < 2 {
            return 0;
        }
        lcm::separability(self.params.theta(), 0.5)
            .map(|r| r.j_informative)
            .unwrap_or(0)
    }
}

const PRESET_LOWDIM: &str = include_str!("../../presets/lowdim.toml");
const PRESET_HIGHDIM: &str = include_str!("../../presets/highdim.toml");
const PRESET_NONINFORM: &str = include_str!("../../presets/noninform.toml");
const PRESET_TOY_FIG2: &str = include_str!("../../presets/toy-fig2.toml");

pub fn preset_names() -> &'static [&'static str] {
    &["lowdim", "highdim", "noninform", "toy-fig2"]
}

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "lowdim" => Some(PRESET_LOWDIM),
        "highdim" => Some(PRESET_HIGHDIM),
        "noninform" => Some(PRESET_NONINFORM),
        "toy-fig2" => Some(PRESET_TOY_FIG2),
        _ => None,
    }
}

/// Parse a config from a preset name or a TOML file path.
pub fn load_config(path_or_preset: &str) -> Result<ScenarioConfig> {
    let text = match preset(path_or_preset) {
        Some(text) => text.to_string(),
        None => std::fs::read_to_string(Path::new(path_or_preset))?,
    };
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level {} outside (0,1)",
                self.level
            )));
        }
        if self.beta.len() > self.p || self.beta_l.len() > self.p {
            return Err(Error::Config(format!(
                "beta lengths ({}, {}) exceed p = {}",
                self.beta.len(),
                self.beta_l.len(),
                self.p
            )));
        }
        let inline = self.model.base.is_some();
        let files = self.model.theta_csv.is_some();
        if inline == files {
            return Err(Error::Config(
                "model must specify exactly one of `base` or `theta_csv`".into(),
            ));
        }
        if let Some(sweep) = &self.sweep {
            let axes = usize::from(sweep.j.is_some())
                + usize::from(sweep.j_noninf.is_some())
                + usize::from(sweep.n.is_some());
            if axes > 1 {
                return Err(Error::Config(
                    "sweep may vary only one of j, j_noninf, n".into(),
                ));
            }
            if sweep.estimators.as_ref().is_some_and(|e| e.is_empty()) {
                return Err(Error::Config("sweep.estimators is empty".into()));
            }
        }
        Ok(())
    }

    fn build_theta(&self) -> Result<Array2<f64>> {
        let theta = if let Some(base) = &self.model.base {
            let rows = base.len();
            let cols = base.first().map(Vec::len).unwrap_or(0);
            if rows == 0 || cols == 0 || base.iter().any(|r| r.len() != cols) {
                return Err(Error::Config("model.base must be rectangular".into()));
            }
            let flat: Vec<f64> = base.iter().flatten().copied().collect();
            let block = Array2::from_shape_vec((rows, cols), flat)
                .map_err(|e| Error::Config(e.to_string()))?;
            lcm::make_stacked_theta(&block, self.model.copies)?
        } else {
            let path = self.model.theta_csv.as_ref().expect("validated");
            lcm::io::read_theta_csv(path)?
        };
        lcm::append_noninformative(&theta, self.model.noninformative, self.model.noninformative_value)
    }

    fn build_params(&self) -> Result<ItemParams> {
        let theta = self.build_theta()?;
        let tau = if let Some(tau) = &self.model.tau {
            Array1::from_vec(tau.clone())
        } else if let Some(path) = &self.model.tau_csv {
            lcm::io::read_tau_csv(path)?
        } else {
            Array1::from_elem(theta.ncols(), 1.0 / theta.ncols() as f64)
        };
        ItemParams::new(theta, tau)
    }

    /// Materialize this config (sweep ignored) under the given id.
    fn resolve_as(&self, id: String) -> Result<ResolvedScenario> {
        let params = self.build_params()?;
        let g = params.n_classes();
        if self.alpha.len() != g || self.mu.len() != g {
            return Err(Error::Config(format!(
                "alpha/mu lengths ({}, {}) do not match {g} classes",
                self.alpha.len(),
                self.mu.len()
            )));
        }
        let mut beta = Array1::zeros(self.p);
        for (k, &b) in self.beta.iter().enumerate() {
            beta[k] = b;
        }
        let mut beta_l = Array1::zeros(self.p);
        for (k, &b) in self.beta_l.iter().enumerate() {
            beta_l[k] = b;
        }
        let mut config = self.clone();
        config.sweep = None;
        Ok(ResolvedScenario {
            id,
            config,
            params,
            beta,
            beta_l,
        })
    }

    /// Single scenario (sweep ignored), id `{name}-{estimator}`.
    pub fn resolve_single(&self) -> Result<ResolvedScenario> {
        self.validate()?;
        self.resolve_as(format!("{}-{}", self.name, self.estimator))
    }

    /// Expand the sweep (axis values × estimators) into materialized
    /// scenarios; without a sweep this is the single scenario.
    pub fn expand(&self) -> Result<Vec<ResolvedScenario>> {
        self.validate()?;
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.resolve_single()?]);
        };
        let estimators = sweep
            .estimators
            .clone()
            .unwrap_or_else(|| vec![self.estimator]);

        let mut variants: Vec<(String, ScenarioConfig)> = Vec::new();
        if let Some(js) = &sweep.j {
            let rows = self
                .model
                .base
                .as_ref()
                .ok_or_else(|| Error::Config("sweep.j requires an inline model.base".into()))?
                .len();
            for &j in js {
                if j == 0 || j % rows != 0 {
                    return Err(Error::Config(format!(
                        "sweep.j value {j} is not a positive multiple of the {rows}-row base"
                    )));
                }
                let mut c = self.clone();
                c.model.copies = j / rows;
                variants.push((format!("{}-j{j}", self.name), c));
            }
        } else if let Some(counts) = &sweep.j_noninf {
            for &count in counts {
                let mut c = self.clone();
                c.model.noninformative = count;
                variants.push((format!("{}-noninf{count}", self.name), c));
            }
        } else if let Some(ns) = &sweep.n {
            for &n in ns {
                let mut c = self.clone();
                c.n = n;
                variants.push((format!("{}-n{n}", self.name), c));
            }
        } else {
            variants.push((self.name.clone(), self.clone()));
        }

        let mut out = Vec::new();
        for (base_id, config) in &variants {
            for &estimator in &estimators {
                let mut c = config.clone();
                c.estimator = estimator;
                out.push(c.resolve_as(format!("{base_id}-{estimator}"))?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_expand() {
        for name in preset_names() {
            let config = load_config(name).unwrap();
            let scenarios = config.expand().unwrap();
            assert!(!scenarios.is_empty(), "{name} expands to nothing");
            for sc in &scenarios {
                assert_eq!(sc.config.alpha.len(), sc.g());
            }
        }
    }

    #[test]
    fn lowdim_preset_matches_design() {
        let config = load_config("lowdim").unwrap();
        assert_eq!(config.p, 10);
        assert_eq!(config.mu, vec![-1.0, 0.0, 1.5]);
        assert_eq!(config.alpha, vec![0.0, -0.05, -0.2]);
        assert_eq!(config.beta, vec![1.0, 1.5, 1.5]);
        assert_eq!(config.beta_l, vec![1.0; 6]);
        let sweep = config.sweep.as_ref().unwrap();
        assert_eq!(sweep.j.as_ref().unwrap().len(), 16);
        let sc = config.resolve_single().unwrap();
        assert_eq!(sc.j(), 150);
        assert_eq!(sc.j_informative(), 90);
        // uniform tau
        assert!((sc.params.tau()[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn toy_preset_matches_figure_parameters() {
        let config = load_config("toy-fig2").unwrap();
        let sc = config.resolve_single().unwrap();
        assert_eq!(sc.g(), 2);
        assert_eq!(sc.j(), 2);
        assert_eq!(sc.params.tau().to_vec(), vec![0.6, 0.4]);
        assert_eq!(sc.params.theta()[[0, 0]], 0.7);
        assert_eq!(sc.params.theta()[[1, 0]], 0.8);
        assert_eq!(sc.params.theta()[[0, 1]], 0.3);
        assert_eq!(sc.params.theta()[[1, 1]], 0.2);
        assert_eq!(sc.config.noise_sd, 0.5);
        assert_eq!(sc.beta.to_vec(), vec![1.0; 10]);
        assert_eq!(sc.beta_l.to_vec(), vec![0.0; 10]);
    }

    #[test]
    fn sweep_expansion_sets_copies() {
        let config = load_config("lowdim").unwrap();
        let scenarios = config.expand().unwrap();
        let js: Vec<usize> = scenarios
            .iter()
            .filter(|s| s.config.estimator == Estimator::Ols)
            .map(|s| s.j())
            .collect();
        assert!(js.contains(&5) && js.contains(&150));
        let ids: Vec<&str> = scenarios.iter().map(|s| s.id.as_str()).collect();
        assert!(ids.contains(&"lowdim-j150-ols"));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut config = load_config("lowdim").unwrap();
        config.replicates = 0;
        assert!(config.validate().is_err());

        let mut config = load_config("lowdim").unwrap();
        config.mu.pop();
        assert!(config.resolve_single().is_err());

        let mut config = load_config("lowdim").unwrap();
        config.sweep = Some(Sweep {
            j: Some(vec![10]),
            j_noninf: Some(vec![0]),
            n: None,
            estimators: None,
        });
        assert!(config.validate().is_err());

        let mut config = load_config("lowdim").unwrap();
        config.sweep = Some(Sweep {
            j: Some(vec![7]),
            j_noninf: None,
            n: None,
            estimators: None,
        });
        assert!(config.expand().is_err());
    }

    #[test]
    fn estimator_round_trips() {
        for name in [
            "ols",
            "lasso",
            "dl",
            "oracle-ols",
            "oracle-lasso",
            "oracle-dl",
            "em-hard",
            "em-soft",
        ] {
            let e: Estimator = name.parse().unwrap();
            assert_eq!(e.to_string(), name);
        }
        assert!("bogus".parse::<Estimator>().is_err());
    }
}
