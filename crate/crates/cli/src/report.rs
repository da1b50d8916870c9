//! Text summaries of a results CSV.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use ncd_core::Algorithm;

use crate::error::{CliError, Result};
use crate::experiment::{summarize, SummaryRow};

const REQUIRED: [&str; 5] = ["sweep_value", "algorithm", "outer_iters", "converged", "time_total"];

/// Reads the per-run CSV, skipping rows whose status is an error.
pub fn read_summary(r: impl Read, origin: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(origin, 1, format!("missing column {name:?}")))
    };
    let idx: Vec<usize> = REQUIRED.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let status = headers.iter().position(|h| h == "status");

    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if let Some(s) = status {
            if rec.get(s).is_some_and(|v| v.starts_with("error")) {
                continue;
            }
        }
        let get = |i: usize| rec.get(idx[i]).unwrap_or("");
        let bad = |what: &str, v: &str| CliError::parse(origin, line, format!("bad {what} {v:?}"));
        let value: f64 = get(0).parse().map_err(|_| bad("sweep_value", get(0)))?;
        let alg: Algorithm = get(1).parse().map_err(|_| bad("algorithm", get(1)))?;
        let iters: usize = get(2).parse().map_err(|_| bad("outer_iters", get(2)))?;
        let conv: bool = get(3).parse().map_err(|_| bad("converged", get(3)))?;
        let time: f64 = get(4).parse().map_err(|_| bad("time_total", get(4)))?;
        rows.push((value, alg, iters, conv, time));
    }
    Ok(summarize(rows))
}

pub fn report_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let rows = read_summary(std::fs::File::open(path)?, path)?;
    Ok(format_report(&rows))
}

pub fn format_report(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>12}  {:<6} {:>5} {:>9} {:>11} {:>14} {:>10}",
        "sweep_value", "alg", "runs", "converged", "mean_iters", "mean_time_s", "speedup"
    );
    for r in rows {
        let speedup = r.speedup_vs_kms.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:>12}  {:<6} {:>5} {:>9} {:>11.2} {:>14.6e} {:>10}",
            r.sweep_value, r.algorithm.name(), r.runs, r.converged, r.mean_outer_iters, r.mean_time_total, speedup
        );
    }
    s
}
