//! File formats: dataset CSV, model/bank/path JSON, and result CSVs.
//!
//! Dataset CSV: header row with column 1 named `y`, columns 2..p+1 named
//! `x1..xp`, and optionally a trailing `period` column (constant per file).
//! Decimal point is `.`; encoding is UTF-8. Floats are written in shortest
//! round-trip form, so identical inputs produce byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{CoefficientVector, LinkFunction};
use crate::harness::{CellFailure, ResultRow, SummaryRow};
use crate::metrics::AucTable;
use crate::sim::CoefficientPath;

fn schema_err(path: &Path, message: impl Into<String>) -> Error {
    Error::CsvSchema {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes a dataset; the `period` column is appended when the dataset
/// carries a period label.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let p = data.p();
    let mut header = String::from("y");
    for j in 1..=p {
        header.push_str(&format!(",x{j}"));
    }
    if data.period_label().is_some() {
        header.push_str(",period");
    }
    writeln!(w, "{header}")?;
    for i in 0..data.n() {
        let mut line = format!("{}", data.outcomes()[i]);
        for j in 0..p {
            line.push_str(&format!(",{}", data.features()[[i, j]]));
        }
        if let Some(period) = data.period_label() {
            line.push_str(&format!(",{period}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV, validating the header schema.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.is_empty() || cols[0] != "y" {
        return Err(schema_err(path, "first column must be named 'y'"));
    }
    let has_period = cols.last() == Some(&"period");
    let p = cols.len() - 1 - usize::from(has_period);
    if p == 0 {
        return Err(schema_err(path, "at least one feature column x1.. is required"));
    }
    for (j, name) in cols[1..1 + p].iter().enumerate() {
        let expect = format!("x{}", j + 1);
        if *name != expect {
            return Err(schema_err(
                path,
                format!("column {} must be named '{expect}', found '{name}'", j + 2),
            ));
        }
    }

    let mut ys = Vec::new();
    let mut xs = Vec::new();
    let mut period: Option<i64> = None;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != cols.len() {
            return Err(schema_err(
                path,
                format!("row {} has {} fields, expected {}", row_idx + 2, record.len(), cols.len()),
            ));
        }
        let parse = |field: &str, what: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| {
                schema_err(path, format!("row {}: cannot parse {what} '{field}'", row_idx + 2))
            })
        };
        ys.push(parse(&record[0], "outcome")?);
        for j in 0..p {
            xs.push(parse(&record[1 + j], "feature")?);
        }
        if has_period {
            let value = record[cols.len() - 1].trim().parse::<i64>().map_err(|_| {
                schema_err(path, format!("row {}: cannot parse period", row_idx + 2))
            })?;
            match period {
                None => period = Some(value),
                Some(prev) if prev != value => {
                    return Err(schema_err(path, "period column must be constant per file"))
                }
                _ => {}
            }
        }
    }
    if ys.is_empty() {
        return Err(schema_err(path, "no data rows"));
    }
    let n = ys.len();
    let features = Array2::from_shape_vec((n, p), xs)
        .map_err(|e| schema_err(path, format!("shape error: {e}")))?;
    let dataset = Dataset::new(features, Array1::from_vec(ys))?;
    Ok(match period {
        Some(l) => dataset.with_period(l),
        None => dataset,
    })
}

/// On-disk model: coefficients plus the link they were fitted under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub link: LinkFunction,
}

impl ModelFile {
    pub fn new(beta: &CoefficientVector, link: LinkFunction) -> Self {
        ModelFile {
            intercept: beta.intercept,
            slopes: beta.slopes.to_vec(),
            link,
        }
    }

    pub fn coefficients(&self) -> Result<CoefficientVector> {
        CoefficientVector::new(self.intercept, Array1::from_vec(self.slopes.clone()))
    }
}

pub fn write_model_json(beta: &CoefficientVector, link: LinkFunction, path: &Path) -> Result<()> {
    let file = ModelFile::new(beta, link);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model_json(path: &Path) -> Result<(CoefficientVector, LinkFunction)> {
    let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    Ok((file.coefficients()?, file.link))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_coefficient_path_json(path_values: &CoefficientPath, path: &Path) -> Result<()> {
    write_json(path_values, path)
}

/// Results CSV with one row per (method, eval period, rep).
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures_csv(rows: &[CellFailure], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Builds a per-method AUC table (mean over reps) from result rows.
/// `method` must be given when the rows contain several methods.
pub fn auc_table_from_rows(rows: &[ResultRow], method: Option<&str>) -> Result<AucTable> {
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let selected = match method {
        Some(m) => {
            if !methods.contains(&m) {
                return Err(Error::invalid_config(format!(
                    "method '{m}' not present (have: {})",
                    methods.join(", ")
                )));
            }
            m
        }
        None => {
            if methods.len() != 1 {
                return Err(Error::invalid_config(format!(
                    "results contain several methods ({}); select one",
                    methods.join(", ")
                )));
            }
            methods[0]
        }
    };
    AucTable::from_observations(
        rows.iter()
            .filter(|r| r.method == selected)
            .map(|r| (r.train_period, r.eval_period, r.auc)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = Dataset::new(array![[1.5, -2.0], [0.25, 3.5]], array![1.0, 0.0])
            .unwrap()
            .with_period(7);
        write_dataset_csv(&d, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("y,x1,x2,period\n"));
        let back = read_dataset_csv(&p).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn dataset_csv_without_period() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = Dataset::new(array![[0.125]], array![1.0]).unwrap();
        write_dataset_csv(&d, &p).unwrap();
        let back = read_dataset_csv(&p).unwrap();
        assert_eq!(back.period_label(), None);
        assert_eq!(back.features()[[0, 0]], 0.125);
    }

    #[test]
    fn dataset_csv_rejects_bad_header() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "outcome,x1\n1,2\n").unwrap();
        assert!(matches!(read_dataset_csv(&p), Err(Error::CsvSchema { .. })));
        std::fs::write(&p, "y,x2\n1,2\n").unwrap();
        assert!(matches!(read_dataset_csv(&p), Err(Error::CsvSchema { .. })));
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.json");
        let beta = CoefficientVector::new(0.5, array![1.0, -0.25]).unwrap();
        write_model_json(&beta, LinkFunction::Logistic, &p).unwrap();
        let (back, link) = read_model_json(&p).unwrap();
        assert_eq!(back, beta);
        assert_eq!(link, LinkFunction::Logistic);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"link\": \"logistic\""));
    }

    #[test]
    fn results_csv_round_trip_is_exact() {
        use crate::harness::Regime;
        let dir = tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows = vec![ResultRow {
            method: "adapt".into(),
            train_period: 10,
            eval_period: 12,
            rho: 0.1,
            p_perturb: 0.3,
            rep: 4,
            auc: 0.123456789012345678,
            train_regime: Regime::Post,
            eval_regime: Regime::Post,
        }];
        write_results_csv(&rows, &p).unwrap();
        let back = read_results_csv(&p).unwrap();
        assert_eq!(back[0].auc.to_bits(), rows[0].auc.to_bits());
        assert_eq!(back, rows);
    }

    #[test]
    fn auc_table_needs_unique_method() {
        use crate::harness::Regime;
        let mk = |m: &str, auc: f64| ResultRow {
            method: m.into(),
            train_period: 1,
            eval_period: 2,
            rho: 0.2,
            p_perturb: 0.0,
            rep: 0,
            auc,
            train_regime: Regime::Pre,
            eval_regime: Regime::Pre,
        };
        let rows = vec![mk("a", 0.7), mk("b", 0.9)];
        assert!(auc_table_from_rows(&rows, None).is_err());
        let t = auc_table_from_rows(&rows, Some("a")).unwrap();
        assert_eq!(t.get(1, 2), Some(0.7));
    }
}
