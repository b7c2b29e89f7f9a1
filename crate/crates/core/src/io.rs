//! CSV and JSON artifacts.
//!
//! Floats in CSV files are written in scientific notation with 17 significant
//! digits so that reading them back reproduces the exact bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{ErrorTrace, LinearFit};
use crate::herding::{HerdingMode, SuperSampleSet};
use crate::numerics::Points;
use crate::posterior::{PosteriorChain, PosteriorReport};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::ParseError { row: 0, message: format!("{other:?}") },
    }
}

/// Columns `x0..x{d-1}`, preceded by `index` when candidate indices are given.
pub fn write_samples_csv(path: &Path, points: &Points, indices: Option<&[usize]>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = Vec::new();
    if indices.is_some() {
        header.push("index".into());
    }
    header.extend((0..points.dim()).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for (t, row) in points.rows().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(idx) = indices {
            rec.push(idx[t].to_string());
        }
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric matrix, one point per line.
///
/// A first line made only of non-numeric fields is skipped as a header.
pub fn read_points_csv(path: &Path) -> Result<Points> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_io)?;
    let mut points: Option<Points> = None;
    let mut buf = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_io)?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        buf.clear();
        for (j, field) in record.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => buf.push(v),
                _ => {
                    return Err(Error::ParseError {
                        row: line,
                        message: format!("field {} is not a finite number: {field:?}", j + 1),
                    })
                }
            }
        }
        let pts = points.get_or_insert_with(|| Points::empty(buf.len()));
        if pts.dim() != buf.len() {
            return Err(Error::ParseError {
                row: line,
                message: format!("expected {} fields, found {}", pts.dim(), buf.len()),
            });
        }
        pts.push(&buf)?;
    }
    points.ok_or(Error::EmptyFile)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Sidecar written next to a samples CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub mode: HerdingMode,
    pub sigma: f64,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    pub error_trace: Vec<f64>,
}

impl SampleSidecar {
    pub fn from_run(run: &SuperSampleSet) -> Self {
        SampleSidecar {
            mode: run.config.mode,
            sigma: run.config.sigma,
            seed: run.config.seed,
            t: run.len(),
            error_trace: run.errors.clone(),
        }
    }
}

/// Per-step herding error: `T,error`.
pub fn write_error_trace_csv(path: &Path, errors: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["T", "error"]).map_err(csv_io)?;
    for (t, e) in errors.iter().enumerate() {
        w.write_record([(t + 1).to_string(), fmt_f64(*e)]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format traces: `T,error,estimator,function,seed,target,std`.
pub fn write_traces_csv<'a>(path: &Path, traces: impl IntoIterator<Item = &'a ErrorTrace>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["T", "error", "estimator", "function", "seed", "target", "std"])
        .map_err(csv_io)?;
    for trace in traces {
        for k in 0..trace.len() {
            let std = trace.std.as_ref().map(|s| fmt_f64(s[k])).unwrap_or_default();
            w.write_record([
                trace.sizes[k].to_string(),
                fmt_f64(trace.errors[k]),
                trace.estimator.to_string(),
                trace.function.clone(),
                trace.seed.to_string(),
                trace.target.clone(),
                std,
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One fitted rate in the slopes summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub estimator: String,
    pub function: String,
    pub target: String,
    /// `None` when the trace is too short or degenerate to fit.
    pub slope: Option<f64>,
    pub r2: Option<f64>,
}

impl SlopeRecord {
    pub fn new(trace: &ErrorTrace, fit: Option<&LinearFit>) -> Self {
        SlopeRecord {
            estimator: trace.estimator.to_string(),
            function: trace.function.clone(),
            target: trace.target.clone(),
            slope: fit.map(|f| f.slope),
            r2: fit.map(|f| f.r2),
        }
    }
}

/// θ rows as CSV (`theta0..`) plus the chain manifest as JSON.
pub fn write_chain(csv_path: &Path, json_path: &Path, chain: &PosteriorChain) -> Result<()> {
    let mut w = writer(csv_path)?;
    let header: Vec<String> = (0..chain.thetas.dim()).map(|i| format!("theta{i}")).collect();
    w.write_record(&header).map_err(csv_io)?;
    for row in chain.thetas.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_io)?;
    }
    w.flush()?;
    write_json(json_path, &chain.manifest())
}

/// Per-size herding and bootstrap metrics.
pub fn write_posterior_trace_csv(path: &Path, report: &PosteriorReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "T",
        "herding_rmse",
        "random_rmse_mean",
        "random_rmse_std",
        "herding_accuracy",
        "random_accuracy_mean",
    ])
    .map_err(csv_io)?;
    let opt = |v: &[f64], k: usize| v.get(k).map(|&x| fmt_f64(x)).unwrap_or_default();
    for (k, &t) in report.sizes.iter().enumerate() {
        w.write_record([
            t.to_string(),
            fmt_f64(report.herding_rmse[k]),
            opt(&report.random_rmse_mean, k),
            opt(&report.random_rmse_std, k),
            fmt_f64(report.herding_accuracy[k]),
            opt(&report.random_accuracy_mean, k),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0, f64::MAX] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn samples_csv_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let pts = Points::from_rows(&[[0.1, -2.5], [1.0 / 3.0, 7.0]]).unwrap();
        write_samples_csv(&path, &pts, None).unwrap();
        assert_eq!(read_points_csv(&path).unwrap(), pts);

        write_samples_csv(&path, &Points::empty(2), None).unwrap();
        assert!(matches!(read_points_csv(&path), Err(Error::EmptyFile)));
    }

    #[test]
    fn reader_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3,4\n5,x\n").unwrap();
        match read_points_csv(&path) {
            Err(Error::ParseError { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_points_csv(&path), Err(Error::ParseError { row: 2, .. })));
        // a numeric first line is data, not a header
        std::fs::write(&path, "1,2\n3,4\n").unwrap();
        assert_eq!(read_points_csv(&path).unwrap().len(), 2);
    }
}
