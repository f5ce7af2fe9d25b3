//! File formats: CSV data in, CSV reports and JSON models out. Numbers are
//! written with 17 significant digits so every value round-trips exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::cv::CvReport;
use crate::error::{EssRegError, Result};
use crate::model::{Dataset, FittedModel, InferenceReport};
use crate::simulation::{EstimatorValues, ExperimentResult};

/// Scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Reads a dataset with a header row. `response` names the column that
/// becomes `y`; every other column goes into `x` in file order.
pub fn read_dataset<R: Read>(reader: R, response: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| EssRegError::MissingColumn(response.to_string()))?;
    let p = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(EssRegError::InvalidInput(format!(
                    "missing value in data row {}, column '{}'",
                    row + 1,
                    headers[col]
                )));
            }
            let v: f64 = field.parse().map_err(|_| {
                EssRegError::Parse(format!(
                    "non-numeric value '{field}' in data row {}, column '{}'",
                    row + 1,
                    headers[col]
                ))
            })?;
            if col == y_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    let mut ds = Dataset::new(DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys))?;
    ds.feature_names = Some(
        headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y_col)
            .map(|(_, h)| h.clone())
            .collect(),
    );
    ds.response_name = Some(response.to_string());
    Ok(ds)
}

pub fn read_dataset_file(path: &Path, response: &str) -> Result<Dataset> {
    read_dataset(File::open(path)?, response)
}

/// Writes `x` then `y` with the dataset's names, or `x0..x{p-1}` and `y`.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match &dataset.feature_names {
        Some(names) => names.clone(),
        None => (0..dataset.p()).map(|j| format!("x{j}")).collect(),
    };
    header.push(dataset.response_name.clone().unwrap_or_else(|| "y".into()));
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut rec: Vec<String> = dataset.x.row(i).iter().map(|&v| fmt_num(v)).collect();
        rec.push(fmt_num(dataset.y[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &FittedModel) -> Result<()> {
    std::fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    FittedModel::from_json(&std::fs::read_to_string(path)?)
}

/// Columns: k, beta_hat, variance, std_error, z, ci_lower, ci_upper, formula.
pub fn write_inference<W: Write>(writer: W, reports: &[InferenceReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "beta_hat", "variance", "std_error", "z", "ci_lower", "ci_upper", "formula"])?;
    for r in reports {
        w.write_record([
            r.coordinate.to_string(),
            fmt_num(r.estimate),
            fmt_num(r.variance),
            fmt_num(r.std_error),
            fmt_num(r.z_stat),
            fmt_num(r.ci_lower),
            fmt_num(r.ci_upper),
            r.variance_formula.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: delta, k_hat, cv_score. `k_hat` is empty where pure_var failed.
pub fn write_cv<W: Write>(writer: W, report: &CvReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["delta", "k_hat", "cv_score"])?;
    for r in &report.records {
        w.write_record([
            fmt_num(r.delta),
            r.k_hat.map(|k| k.to_string()).unwrap_or_default(),
            fmt_num(r.cv_score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One block of rows per setting, one row per estimator. Coverage and
/// interval length exist for beta_hat and beta_I only.
pub fn write_results<W: Write>(writer: W, settings: &[(String, &ExperimentResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "setting",
        "estimator",
        "mean_l2",
        "coverage",
        "mean_ci_length",
        "mean_k_hat",
        "mean_mse",
        "reps",
        "failures",
    ])?;
    for (label, res) in settings {
        let agg = &res.aggregate;
        for (idx, name) in EstimatorValues::NAMES.iter().enumerate() {
            let (cov, len) = match idx {
                0 => (agg.coverage, agg.mean_ci_length),
                2 => (agg.coverage_i_based, agg.mean_ci_length_i_based),
                _ => (None, None),
            };
            let k_hat = (agg.failures < agg.reps).then_some(agg.mean_k_hat);
            w.write_record([
                label.clone(),
                name.to_string(),
                fmt_opt(agg.mean_l2.get(idx)),
                fmt_opt(cov),
                fmt_opt(len),
                fmt_opt(k_hat),
                fmt_opt(agg.mean_mse.get(idx)),
                agg.reps.to_string(),
                agg.failures.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per replication: the standardized first-coordinate statistic,
/// empty when the replication failed or produced no interval.
pub fn write_standardized<W: Write>(writer: W, settings: &[(String, &ExperimentResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["setting", "rep", "standardized"])?;
    for (label, res) in settings {
        for (r, rep) in res.replications.iter().enumerate() {
            let value = rep
                .as_ref()
                .ok()
                .and_then(|x| x.ci_main.as_ref())
                .map(|c| c.standardized);
            w.write_record([label.clone(), r.to_string(), fmt_opt(value)])?;
        }
    }
    w.flush()?;
    Ok(())
}
