use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind, FeatureSchema};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    MedianImpute,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "?")
}

/// Reads a CSV whose header lists the schema's features in order followed by the label.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    policy: MissingPolicy,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, policy)
}

pub(crate) fn read_csv<R: std::io::Read>(
    reader: R,
    schema: &FeatureSchema,
    policy: MissingPolicy,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Empty("csv has no header".into()));
    }
    let expected: Vec<&str> = schema
        .features
        .iter()
        .map(|f| f.name.as_str())
        .chain(std::iter::once(schema.label.name.as_str()))
        .collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::SchemaMismatch(format!(
            "header {got:?} does not match schema columns {expected:?}"
        )));
    }

    let nf = schema.n_features();
    // Cells are kept as Option until imputation has seen the whole column.
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        if record.len() != nf + 1 {
            return Err(Error::SchemaMismatch(format!(
                "row {row_no} has {} cells, expected {}",
                record.len(),
                nf + 1
            )));
        }
        let mut row = Vec::with_capacity(nf);
        for j in 0..nf {
            let cell = &record[j];
            if is_missing(cell) {
                if policy == MissingPolicy::Reject {
                    return Err(Error::MissingValue {
                        row: row_no,
                        column: schema.features[j].name.clone(),
                    });
                }
                row.push(None);
                continue;
            }
            let v = schema.encode_cell(j, cell).ok_or_else(|| Error::Parse {
                row: row_no,
                column: schema.features[j].name.clone(),
                value: cell.to_string(),
            })?;
            row.push(Some(v));
        }
        let label_cell = &record[nf];
        if is_missing(label_cell) {
            return Err(Error::MissingValue {
                row: row_no,
                column: schema.label.name.clone(),
            });
        }
        let y = schema.encode_label(label_cell).ok_or_else(|| Error::Parse {
            row: row_no,
            column: schema.label.name.clone(),
            value: label_cell.to_string(),
        })?;
        cells.push(row);
        labels.push(y);
    }
    if cells.is_empty() {
        return Err(Error::Empty("csv has no data rows".into()));
    }

    let fills: Vec<Option<f64>> = (0..nf)
        .map(|j| {
            let present: Vec<f64> = cells.iter().filter_map(|r| r[j]).collect();
            if present.len() == cells.len() {
                return Ok(None);
            }
            if present.is_empty() {
                return Err(Error::MissingValue {
                    row: 1,
                    column: schema.features[j].name.clone(),
                });
            }
            Ok(Some(match schema.features[j].kind {
                FeatureKind::Numerical => median(present),
                FeatureKind::Categorical => mode(&present, schema.features[j].category_count()),
            }))
        })
        .collect::<Result<_>>()?;

    let rows = cells
        .into_iter()
        .map(|r| {
            r.into_iter()
                .enumerate()
                .map(|(j, v)| v.or(fills[j]).expect("fill exists for missing column"))
                .collect()
        })
        .collect();
    Dataset::new(schema.clone(), rows, labels)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Most frequent category; lowest index wins ties.
fn mode(v: &[f64], n_categories: usize) -> f64 {
    let mut counts = vec![0usize; n_categories];
    for &x in v {
        counts[x as usize] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    best as f64
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = data.schema.features.iter().map(|f| f.name.as_str()).collect();
    header.push(&data.schema.label.name);
    w.write_record(&header)?;
    for (row, &y) in data.rows.iter().zip(&data.labels) {
        let (mut cells, label) = data.schema.decode_row(row, y);
        cells.push(label);
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{Feature, LabelSpec};

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![Feature::numerical("age"), Feature::numerical("bmi")],
            LabelSpec {
                name: "label".into(),
                classes: vec!["0".into(), "1".into()],
            },
        )
        .unwrap()
    }

    const FIXTURE: &str = "age,bmi,label
25,22,0
31,35,0
38,27,0
42,31,0
47,24,0
52,33,0
57,30,0
60,24,1
66,26,1
71,27.5,1
78,28,1
63,29,0
69,31,1
74,33,0
80,36,0
";

    #[test]
    fn loads_fifteen_row_fixture() {
        let d = read_csv(FIXTURE.as_bytes(), &schema(), MissingPolicy::Reject).unwrap();
        assert_eq!(d.len(), 15);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.rows[9], vec![71.0, 27.5]);
        assert_eq!(d.class_counts(), vec![10, 5]);
    }

    #[test]
    fn missing_cell_rejected_or_imputed() {
        let text = "age,bmi,label\n20,30,0\n40,,1\n60,20,0\n80,10,1\n";
        let err = read_csv(text.as_bytes(), &schema(), MissingPolicy::Reject).unwrap_err();
        assert_eq!(err.to_string(), "missing value at row 2, column bmi");
        let d = read_csv(text.as_bytes(), &schema(), MissingPolicy::MedianImpute).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.rows[1], vec![40.0, 20.0]);
    }

    #[test]
    fn categorical_mode_imputation() {
        let schema = FeatureSchema::new(
            vec![Feature::categorical("c", ["a", "b"])],
            LabelSpec {
                name: "y".into(),
                classes: vec!["n".into(), "p".into()],
            },
        )
        .unwrap();
        let text = "c,y\nb,n\nNA,p\nb,p\na,n\n";
        let d = read_csv(text.as_bytes(), &schema, MissingPolicy::MedianImpute).unwrap();
        assert_eq!(d.rows[1], vec![1.0]);
    }

    #[test]
    fn header_mismatch_and_bad_cells() {
        let err = read_csv("bmi,age,label\n1,2,0\n".as_bytes(), &schema(), MissingPolicy::Reject)
            .unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        let err = read_csv("age,bmi,label\nx,2,0\n".as_bytes(), &schema(), MissingPolicy::Reject)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
        let err = read_csv("age,bmi,label\n1,2,7\n".as_bytes(), &schema(), MissingPolicy::Reject)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = read_csv("".as_bytes(), &schema(), MissingPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
        let err =
            read_csv("age,bmi,label\n".as_bytes(), &schema(), MissingPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn write_then_read_is_identity() {
        let d = read_csv(FIXTURE.as_bytes(), &schema(), MissingPolicy::Reject).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_csv(&d, &p).unwrap();
        let back = load_csv(&p, &schema(), MissingPolicy::Reject).unwrap();
        assert_eq!(back, d);
    }
}
