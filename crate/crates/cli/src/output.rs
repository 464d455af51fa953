//! CSV artifacts.
//!
//! Every file has a fixed header; floats carry 17 significant digits.
//!
//! | file | columns |
//! |------|---------|
//! | `error_vs_time.csv` | `step,t,rank,error` |
//! | `error_vs_rank.csv` | `scheme,r,error` |
//! | `error_vs_dt.csv` | `scheme,r,dt,error` |
//! | `slopes.csv` | `scheme,r,slope,points,status` |
//! | `singular_values.csv` | `t,index,sigma_reference,sigma_tdbcur` |
//! | `rank_trace.csv` | `step,t,rank,r_delta,next_rank,error_proxy,column_iterations,row_iterations` |
//! | `residual_trace.csv` | `step,iteration,rows,full` |
//! | `timing.csv` | `step,t,tdbcur_seconds,fom_seconds` |
//!
//! Missing values are written as `nan`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const ERROR_VS_TIME: (&str, &[&str]) = ("error_vs_time.csv", &["step", "t", "rank", "error"]);
pub const ERROR_VS_RANK: (&str, &[&str]) = ("error_vs_rank.csv", &["scheme", "r", "error"]);
pub const ERROR_VS_DT: (&str, &[&str]) = ("error_vs_dt.csv", &["scheme", "r", "dt", "error"]);
pub const SLOPES: (&str, &[&str]) = ("slopes.csv", &["scheme", "r", "slope", "points", "status"]);
pub const SINGULAR_VALUES: (&str, &[&str]) =
    ("singular_values.csv", &["t", "index", "sigma_reference", "sigma_tdbcur"]);
pub const RANK_TRACE: (&str, &[&str]) = (
    "rank_trace.csv",
    &["step", "t", "rank", "r_delta", "next_rank", "error_proxy", "column_iterations", "row_iterations"],
);
pub const RESIDUAL_TRACE: (&str, &[&str]) = ("residual_trace.csv", &["step", "iteration", "rows", "full"]);
pub const TIMING: (&str, &[&str]) = ("timing.csv", &["step", "t", "tdbcur_seconds", "fom_seconds"]);

pub fn float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), float)
}

pub struct Table {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(dir: &Path, spec: (&str, &[&str])) -> Result<Self, CliError> {
        let path = dir.join(spec.0);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(spec.1).map_err(|e| CliError::io(&path, e.into()))?;
        Ok(Table { path, w })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| CliError::io(&self.path, e.into()))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Least-squares slope of `log e` against `log dt`, or `None` when fewer than
/// two usable points remain.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<(f64, usize)> {
    let usable: Vec<(f64, f64)> =
        points.iter().filter(|(d, e)| *d > 0.0 && *e > 0.0 && e.is_finite()).map(|(d, e)| (d.ln(), e.ln())).collect();
    if usable.len() < 2 || usable.len() < points.len() {
        return None;
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx, usable.len()))
}
