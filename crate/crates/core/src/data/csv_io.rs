use std::path::Path;

use super::Sample;
use crate::error::{Error, Result};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::config(format!("{}: malformed CSV: {other:?}", path.display())),
    }
}

/// Writes `x_0,…,x_{d−1},label` rows; hidden labels are written as `-1`.
pub fn write_samples_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = (0..dim).map(|j| format!("x_{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for s in samples {
        if s.x.len() != dim {
            return Err(Error::config("all samples must share one dimension"));
        }
        let mut row: Vec<String> = s.x.iter().map(f64::to_string).collect();
        row.push(s.label.map_or_else(|| "-1".to_string(), |y| y.to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().next_back() != Some("label") {
        return Err(Error::config(format!("{}: last column must be `label`", path.display())));
    }
    let dim = headers.len() - 1;
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("{}: row {i}: bad number `{s}`", path.display())))
        };
        let x = record.iter().take(dim).map(parse).collect::<Result<Vec<_>>>()?;
        let label: i64 = record[dim]
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("{}: row {i}: bad label", path.display())))?;
        out.push(Sample {
            x,
            label: usize::try_from(label).ok(),
        });
    }
    Ok(out)
}
