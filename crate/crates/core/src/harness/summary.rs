//! Scenario summary rows and their CSV serialization (scenario id, design
//! sizes, method, misclassification, RMSE, per-subgroup coverage).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub scenario_id: String,
    pub n: usize,
    pub j: usize,
    pub j_i: usize,
    pub j_noninf: usize,
    pub p: usize,
    pub g: usize,
    pub method: String,
    pub replicates: usize,
    pub failed: usize,
    pub misclass_mean: f64,
    pub misclass_se: f64,
    pub rmse_pooled: f64,
    pub rmse_per: Vec<f64>,
    pub coverage: Option<Vec<f64>>,
    pub coverage_se: Option<Vec<f64>>,
}

impl ScenarioSummary {
    pub fn csv_header(g: usize) -> String {
        let mut cols = vec![
            "scenario_id".to_string(),
            "n".into(),
            "j".into(),
            "j_i".into(),
            "j_noninf".into(),
            "p".into(),
            "g".into(),
            "method".into(),
            "replicates".into(),
            "failed".into(),
            "misclass_mean".into(),
            "misclass_se".into(),
            "rmse_pooled".into(),
        ];
        cols.extend((1..=g).map(|k| format!("rmse_{k}")));
        cols.extend((1..=g).map(|k| format!("coverage_{k}")));
        cols.extend((1..=g).map(|k| format!("coverage_se_{k}")));
        cols.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        let mut fields = vec![
            self.scenario_id.clone(),
            self.n.to_string(),
            self.j.to_string(),
            self.j_i.to_string(),
            self.j_noninf.to_string(),
            self.p.to_string(),
            self.g.to_string(),
            self.method.clone(),
            self.replicates.to_string(),
            self.failed.to_string(),
            self.misclass_mean.to_string(),
            self.misclass_se.to_string(),
            self.rmse_pooled.to_string(),
        ];
        for k in 0..self.g {
            fields.push(self.rmse_per.get(k).map(|v| v.to_string()).unwrap_or_default());
        }
        for k in 0..self.g {
            fields.push(
                self.coverage
                    .as_ref()
                    .and_then(|c| c.get(k))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        for k in 0..self.g {
            fields.push(
                self.coverage_se
                    .as_ref()
                    .and_then(|c| c.get(k))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        fields.join(",")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let text = format!("{}\n{}\n", Self::csv_header(self.g), self.to_csv_row());
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ScenarioSummary> {
        let text = std::fs::read_to_string(path)?;
        let name = path.display().to_string();
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| ingest(&name, 0, "missing header"))?
            .split(',')
            .collect();
        let row: Vec<&str> = lines
            .next()
            .ok_or_else(|| ingest(&name, 1, "missing data row"))?
            .split(',')
            .collect();
        if header.len() != row.len() {
            return Err(ingest(&name, 1, "header/row width mismatch"));
        }
        let field = |key: &str| -> Result<&str> {
            header
                .iter()
                .position(|&h| h == key)
                .map(|i| row[i])
                .ok_or_else(|| ingest(&name, 0, &format!("missing column {key}")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            field(key)?
                .parse()
                .map_err(|_| ingest(&name, 1, &format!("bad {key}")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            field(key)?
                .parse()
                .map_err(|_| ingest(&name, 1, &format!("bad {key}")))
        };
        let g = parse_usize("g")?;
        let series = |prefix: &str| -> Option<Vec<f64>> {
            let mut out = Vec::with_capacity(g);
            for k in 1..=g {
                let key = format!("{prefix}_{k}");
                let idx = header.iter().position(|&h| h == key)?;
                let value = row[idx];
                if value.is_empty() {
                    return None;
                }
                out.push(value.parse().ok()?);
            }
            Some(out)
        };
        Ok(ScenarioSummary {
            scenario_id: field("scenario_id")?.to_string(),
            n: parse_usize("n")?,
            j: parse_usize("j")?,
            j_i: parse_usize("j_i")?,
            j_noninf: parse_usize("j_noninf")?,
            p: parse_usize("p")?,
            g,
            method: field("method")?.to_string(),
            replicates: parse_usize("replicates")?,
            failed: parse_usize("failed")?,
            misclass_mean: parse_f64("misclass_mean")?,
            misclass_se: parse_f64("misclass_se")?,
            rmse_pooled: parse_f64("rmse_pooled")?,
            rmse_per: series("rmse").unwrap_or_default(),
            coverage: series("coverage"),
            coverage_se: series("coverage_se"),
        })
    }
}

fn ingest(path: &str, row: usize, msg: &str) -> Error {
    Error::Ingest {
        path: path.to_string(),
        row,
        col: 0,
        msg: msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let with = ScenarioSummary {
            scenario_id: "demo-j10-ols".into(),
            n: 150,
            j: 10,
            j_i: 6,
            j_noninf: 0,
            p: 10,
            g: 3,
            method: "ols".into(),
            replicates: 50,
            failed: 0,
            misclass_mean: 0.125,
            misclass_se: 0.01,
            rmse_pooled: 0.5,
            rmse_per: vec![0.4, 0.5, 0.6],
            coverage: Some(vec![0.93, 0.94, 0.96]),
            coverage_se: Some(vec![0.01, 0.01, 0.01]),
        };
        let path = dir.path().join("summary.csv");
        with.write_csv(&path).unwrap();
        assert_eq!(ScenarioSummary::read_csv(&path).unwrap(), with);

        let without = ScenarioSummary {
            coverage: None,
            coverage_se: None,
            method: "lasso".into(),
            ..with
        };
        without.write_csv(&path).unwrap();
        assert_eq!(ScenarioSummary::read_csv(&path).unwrap(), without);
    }
}
