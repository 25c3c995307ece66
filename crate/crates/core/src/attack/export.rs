use std::path::Path;

use super::{Constraint, ReconstructedDataset};
use crate::error::{Error, Result};
use crate::tabular::{FeatureSchema, FeatureStats};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn header(schema: &FeatureSchema) -> Vec<&str> {
    let mut h: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    h.push(&schema.label.name);
    h
}

/// One row per sample: box midpoints (infinite ends clamped to `bounds`),
/// decoded through the schema.
pub fn write_csv_midpoints(
    recon: &ReconstructedDataset,
    schema: &FeatureSchema,
    bounds: &FeatureStats,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(header(schema))?;
    for s in &recon.samples {
        let (mut cells, label) = schema.decode_row(&s.bounds.midpoint(bounds), s.label);
        cells.push(label);
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn bound(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One row per sample: `[lo, hi)` per numerical feature (`{x}` for a point)
/// and `a|b|...` candidate names per categorical feature.
pub fn write_ranges(recon: &ReconstructedDataset, schema: &FeatureSchema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(header(schema))?;
    for s in &recon.samples {
        let mut cells: Vec<String> = s
            .bounds
            .features
            .iter()
            .enumerate()
            .map(|(j, c)| match c {
                Constraint::Numerical(iv) if iv.is_point() => format!("{{{}}}", iv.lo),
                Constraint::Numerical(iv) => format!("[{}, {})", bound(iv.lo), bound(iv.hi)),
                Constraint::Categorical { candidates } => candidates
                    .iter()
                    .map(|&k| schema.decode_cell(j, k as f64))
                    .collect::<Vec<_>>()
                    .join("|"),
            })
            .collect();
        cells.push(schema.label.classes[s.label].clone());
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
