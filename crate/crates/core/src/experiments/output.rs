use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{ExperimentError, MetricRow};

pub const CSV_HEADER: [&str; 5] = ["scenario", "metric", "mean", "ci95", "runs"];

/// Writes `rows` under the fixed header. Floats use the shortest text
/// that reads back to the same value.
pub fn write_csv(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<(), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Validation("no rows to write".into()));
    }
    write_csv_to(rows, File::create(path)?)
}

/// [`write_csv`] into any writer.
pub fn write_csv_to(rows: &[MetricRow], out: impl Write) -> Result<(), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Validation("no rows to write".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.metric.to_string(),
            r.mean.to_string(),
            r.ci95.to_string(),
            r.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ExperimentError::Validation(format!("unexpected header {header:?}")));
    }
    let bad = |what: &str, v: &str| ExperimentError::Validation(format!("bad {what} {v:?}"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(MetricRow {
            scenario: rec[0].to_string(),
            metric: rec[1].parse().map_err(|_| bad("metric", &rec[1]))?,
            mean: rec[2].parse().map_err(|_| bad("mean", &rec[2]))?,
            ci95: rec[3].parse().map_err(|_| bad("ci95", &rec[3]))?,
            runs: rec[4].parse().map_err(|_| bad("run count", &rec[4]))?,
        });
    }
    Ok(rows)
}
