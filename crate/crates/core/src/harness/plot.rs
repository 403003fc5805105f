//! Tidy plot-data export: one (axis value, method, metric, value, se) row
//! per summary metric, for external plotting.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::summary::ScenarioSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    J,
    JNoninf,
    N,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::J => "j",
            Axis::JNoninf => "j_noninf",
            Axis::N => "n",
        }
    }

    fn value(&self, s: &ScenarioSummary) -> usize {
        match self {
            Axis::J => s.j,
            Axis::JNoninf => s.j_noninf,
            Axis::N => s.n,
        }
    }

    /// Fields that must be constant across a scenario family for this axis.
    fn family_key(&self, s: &ScenarioSummary) -> Vec<usize> {
        match self {
            Axis::J => vec![s.n, s.p, s.g, s.j_noninf],
            Axis::JNoninf => vec![s.n, s.p, s.g, s.j - s.j_noninf],
            Axis::N => vec![s.j, s.j_noninf, s.p, s.g],
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "j" => Ok(Axis::J),
            "j_noninf" | "jnoninf" | "noninf" => Ok(Axis::JNoninf),
            "n" => Ok(Axis::N),
            other => Err(Error::Config(format!(
                "unknown axis {other:?} (expected j, j_noninf, or n)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub axis_value: usize,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub se: Option<f64>,
}

/// Read `summary.csv` from each immediate subdirectory (sorted by name).
pub fn collect_summaries(dir: &Path) -> Result<Vec<ScenarioSummary>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("summary.csv").is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no scenario summaries found under {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| ScenarioSummary::read_csv(&p.join("summary.csv")))
        .collect()
}

/// Convert summaries from one scenario family into tidy rows, sorted by
/// (method, metric, axis value). Mixed families are rejected.
pub fn emit_plot_data(summaries: &[ScenarioSummary], axis: Axis) -> Result<Vec<PlotRow>> {
    if summaries.is_empty() {
        return Err(Error::Config("no summaries supplied".into()));
    }
    let key = axis.family_key(&summaries[0]);
    for s in summaries {
        if axis.family_key(s) != key {
            return Err(Error::Config(format!(
                "scenario {} does not belong to the same family (differs beyond the {} axis)",
                s.scenario_id,
                axis.name()
            )));
        }
    }

    let mut rows = Vec::new();
    for s in summaries {
        let axis_value = axis.value(s);
        rows.push(PlotRow {
            axis_value,
            method: s.method.clone(),
            metric: "misclass".into(),
            value: s.misclass_mean,
            se: Some(s.misclass_se),
        });
        rows.push(PlotRow {
            axis_value,
            method: s.method.clone(),
            metric: "rmse".into(),
            value: s.rmse_pooled,
            se: None,
        });
        if let (Some(cov), Some(se)) = (&s.coverage, &s.coverage_se) {
            for k in 0..s.g {
                rows.push(PlotRow {
                    axis_value,
                    method: s.method.clone(),
                    metric: format!("coverage_{}", k + 1),
                    value: cov[k],
                    se: Some(se[k]),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.method, &a.metric, a.axis_value).cmp(&(&b.method, &b.metric, b.axis_value))
    });
    Ok(rows)
}

pub fn plot_csv(axis: Axis, rows: &[PlotRow]) -> String {
    let mut out = format!("{},method,metric,value,se\n", axis.name());
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.axis_value,
            row.method,
            row.metric,
            row.value,
            row.se.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(j: usize, method: &str) -> ScenarioSummary {
        ScenarioSummary {
            scenario_id: format!("fam-j{j}-{method}"),
            n: 150,
            j,
            j_i: j * 3 / 5,
            j_noninf: 0,
            p: 10,
            g: 3,
            method: method.into(),
            replicates: 10,
            failed: 0,
            misclass_mean: 0.1,
            misclass_se: 0.01,
            rmse_pooled: 0.4,
            rmse_per: vec![0.4, 0.4, 0.4],
            coverage: Some(vec![0.95, 0.94, 0.96]),
            coverage_se: Some(vec![0.01, 0.01, 0.01]),
        }
    }

    #[test]
    fn single_summary_gives_row_per_metric() {
        let rows = emit_plot_data(&[summary(150, "ols")], Axis::J).unwrap();
        // misclass + rmse + 3 coverage rows
        assert_eq!(rows.len(), 5);
    }

    #[test]
    fn rows_sorted_by_method_metric_axis() {
        let summaries = vec![
            summary(150, "ols"),
            summary(5, "ols"),
            summary(50, "em-hard"),
        ];
        // em-hard at 50 is same family (n, p, g, j_noninf all equal)
        let rows = emit_plot_data(&summaries, Axis::J).unwrap();
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| {
            (&a.method, &a.metric, a.axis_value).cmp(&(&b.method, &b.metric, b.axis_value))
        });
        assert_eq!(rows, sorted);
        assert_eq!(rows[0].method, "em-hard");
    }

    #[test]
    fn mixed_families_rejected() {
        let mut other = summary(150, "ols");
        other.p = 200;
        assert!(emit_plot_data(&[summary(150, "ols"), other], Axis::J).is_err());
    }

    #[test]
    fn sixteen_point_sweep_has_sixteen_axis_values() {
        let js = [5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150];
        let summaries: Vec<ScenarioSummary> = js.iter().map(|&j| summary(j, "ols")).collect();
        let rows = emit_plot_data(&summaries, Axis::J).unwrap();
        let misclass: Vec<usize> = rows
            .iter()
            .filter(|r| r.metric == "misclass")
            .map(|r| r.axis_value)
            .collect();
        assert_eq!(misclass.len(), 16);
        assert!(misclass.windows(2).all(|w| w[0] < w[1]));
    }
}
