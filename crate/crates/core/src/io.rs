//! CSV input and output and the run manifest.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value reads back to the same `f64`.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::simulate::SamplePath;

/// Path CSV: a `# seed=..,mode=..,n=..` line, then `t,x2,sigma2,z`.
pub fn write_path_csv<W: Write>(mut out: W, path: &SamplePath) -> Result<()> {
    writeln!(out, "# seed={},mode={},n={}", path.seed, path.start_mode.name(), path.n)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x2", "sigma2", "z"])?;
    for i in 0..path.n {
        w.write_record([
            (i + 1).to_string(),
            path.x2[i].to_string(),
            path.sigma2[i].to_string(),
            path.z[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads squared observations from a CSV with a header. Uses the `x2`
/// column when present, otherwise squares the `x` column. Lines starting
/// with `#` are skipped.
pub fn read_x2_csv<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (col, square) = match (find("x2"), find("x")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        _ => return Err(Error::Config("data CSV needs an x2 or x column".into())),
    };
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("");
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Config(format!("row {}: cannot parse {field:?}", line + 1)))?;
        let v = if square { v * v } else { v };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("row {}: x2 = {v} is not a finite non-negative number", line + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Fit-path CSV: `t0,u0,b,alpha_0..alpha_p,se_0..se_p,converged,value`,
/// plus the weighted mean of `X^2` and the active constraints.
pub fn write_fits_csv<W: Write>(out: W, p: usize, fits: &[(FitResult, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t0".to_string(), "u0".into(), "b".into()];
    header.extend((0..=p).map(|i| format!("alpha_{i}")));
    header.extend((0..=p).map(|i| format!("se_{i}")));
    header.extend(["converged".into(), "value".into(), "weighted_mean_x2".into(), "active".into()]);
    w.write_record(&header)?;
    for (f, wm) in fits {
        let mut row = vec![f.t0.to_string(), f.u0.to_string(), f.b.to_string()];
        row.extend(f.estimate.iter().map(|a| a.to_string()));
        for i in 0..=p {
            row.push(fmt_opt(f.stderr.as_ref().map(|s| s[i])));
        }
        row.extend([
            f.converged.to_string(),
            f.value.to_string(),
            wm.to_string(),
            f.active_constraints.join(";"),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table<W: Write>(out: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// What was run, from which config, with which seeds, producing which files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_digest: Option<String>,
    pub config: Option<String>,
    pub seeds: Vec<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub runtime_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{s}")?;
        Ok(())
    }
}
