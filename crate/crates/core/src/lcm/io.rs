//! Plain-text serialization of item parameters: θ as a J×G CSV, τ as a
//! one-row CSV. Files are written with a one-line header; readers accept
//! headerless files too.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::lcm::ItemParams;

fn class_header(g: usize) -> String {
    (1..=g).map(|k| format!("g{k}")).collect::<Vec<_>>().join(",")
}

fn format_row(row: impl Iterator<Item = f64>) -> String {
    row.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_theta_csv(theta: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", class_header(theta.ncols())).unwrap();
    for row in theta.rows() {
        writeln!(out, "{}", format_row(row.iter().copied())).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_tau_csv(tau: &Array1<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", class_header(tau.len())).unwrap();
    writeln!(out, "{}", format_row(tau.iter().copied())).unwrap();
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a rectangular numeric CSV, skipping a single header line when the
/// first record does not parse as numbers.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut data_row = 0usize;
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, usize> = fields
            .iter()
            .enumerate()
            .map(|(c, f)| f.parse::<f64>().map_err(|_| c))
            .collect();
        match parsed {
            Ok(values) => {
                data_row += 1;
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(Error::Ingest {
                            path: name,
                            row: data_row,
                            col: values.len(),
                            msg: format!("expected {w} columns, found {}", values.len()),
                        });
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(col) => {
                if line_idx == 0 && rows.is_empty() {
                    continue; // header line
                }
                return Err(Error::Ingest {
                    path: name,
                    row: data_row + 1,
                    col: col + 1,
                    msg: format!("field {:?} is not a number", fields[col]),
                });
            }
        }
    }
    let width = width.ok_or_else(|| Error::Ingest {
        path: name.clone(),
        row: 0,
        col: 0,
        msg: "empty file".into(),
    })?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let height = flat.len() / width;
    Array2::from_shape_vec((height, width), flat).map_err(|e| Error::Ingest {
        path: name,
        row: 0,
        col: 0,
        msg: e.to_string(),
    })
}

pub fn read_theta_csv(path: &Path) -> Result<Array2<f64>> {
    read_matrix_csv(path)
}

pub fn read_tau_csv(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix_csv(path)?;
    if m.nrows() != 1 {
        return Err(Error::Ingest {
            path: path.display().to_string(),
            row: m.nrows(),
            col: 1,
            msg: format!("tau file must contain exactly one data row, found {}", m.nrows()),
        });
    }
    Ok(m.row(0).to_owned())
}

impl ItemParams {
    pub fn write_csv(&self, theta_path: &Path, tau_path: &Path) -> Result<()> {
        write_theta_csv(self.theta(), theta_path)?;
        write_tau_csv(self.tau(), tau_path)
    }

    pub fn read_csv(theta_path: &Path, tau_path: &Path) -> Result<Self> {
        let theta = read_theta_csv(theta_path)?;
        let tau = read_tau_csv(tau_path)?;
        ItemParams::new(theta, tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcm::base_block;
    use ndarray::arr1;

    #[test]
    fn round_trip_item_params() {
        let dir = tempfile::tempdir().unwrap();
        let theta_path = dir.path().join("theta.csv");
        let tau_path = dir.path().join("tau.csv");
        let params =
            ItemParams::new(base_block(), arr1(&[0.25, 0.3, 0.45])).unwrap();
        params.write_csv(&theta_path, &tau_path).unwrap();
        let back = ItemParams::read_csv(&theta_path, &tau_path).unwrap();
        assert_eq!(back.theta(), params.theta());
        assert_eq!(back.tau(), params.tau());
    }

    #[test]
    fn headerless_files_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        std::fs::write(&path, "0.25,0.75\n0.5,0.5\n").unwrap();
        let theta = read_theta_csv(&path).unwrap();
        assert_eq!(theta.dim(), (2, 2));
        assert_eq!(theta[[0, 1]], 0.75);
    }

    #[test]
    fn bad_field_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        std::fs::write(&path, "g1,g2\n0.25,0.75\n0.5,oops\n").unwrap();
        match read_theta_csv(&path) {
            Err(Error::Ingest { row, col, .. }) => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected ingest error, got {other:?}"),
        }
    }
}
