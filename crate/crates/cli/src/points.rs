//! Point sets as CSV: one point per row, comma-separated coordinates. A
//! first row that does not parse as numbers is taken as a header.

use std::path::Path;

use anyhow::{bail, Context, Result};
use otassign::Tensor;

pub fn read_csv(path: &Path) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: reading row {}", path.display(), line + 1))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => bail!("{}: row {}: {e}", path.display(), line + 1),
        }
    }
    if rows.is_empty() {
        bail!("{}: no points", path.display());
    }
    let d = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        bail!("{}: row {} has {} coordinates, expected {d}", path.display(), i + 1, rows[i].len());
    }
    Ok(Tensor::from_rows(&rows)?)
}
