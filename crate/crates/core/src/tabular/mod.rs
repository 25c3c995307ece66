//! Tabular data model: feature schema, encoded datasets, CSV ingestion,
//! non-IID partitioning and per-feature statistics.

mod csv_io;
mod partition;
pub mod synth;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, write_csv, MissingPolicy};
pub use partition::{dirichlet_partition, train_test_split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl Feature {
    pub fn numerical(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Numerical,
            categories: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: Some(categories.into_iter().map(Into::into).collect()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    /// Number of categories, zero for numerical features.
    pub fn category_count(&self) -> usize {
        self.categories.as_ref().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    /// Class names as they appear in the label column; the position is the class index.
    pub classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
    pub label: LabelSpec,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>, label: LabelSpec) -> Result<Self> {
        let schema = FeatureSchema { features, label };
        schema.validate()?;
        Ok(schema)
    }

    /// Reads a schema from a `.json` or `.toml` file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: FeatureSchema = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
            match f.kind {
                FeatureKind::Categorical => {
                    let n = f.category_count();
                    if n < 2 {
                        return Err(Error::Schema(format!(
                            "categorical feature {:?} needs at least 2 categories",
                            f.name
                        )));
                    }
                    let cats: HashSet<_> = f.categories.iter().flatten().collect();
                    if cats.len() != n {
                        return Err(Error::Schema(format!(
                            "categorical feature {:?} has duplicate categories",
                            f.name
                        )));
                    }
                }
                FeatureKind::Numerical => {
                    if f.categories.is_some() {
                        return Err(Error::Schema(format!(
                            "numerical feature {:?} must not list categories",
                            f.name
                        )));
                    }
                }
            }
        }
        if seen.contains(self.label.name.as_str()) {
            return Err(Error::Schema(format!(
                "label {:?} collides with a feature name",
                self.label.name
            )));
        }
        if self.label.classes.len() < 2 {
            return Err(Error::Schema("label needs at least 2 classes".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label.classes.len()
    }

    pub fn is_multiclass(&self) -> bool {
        self.n_classes() > 2
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Encodes one textual cell of feature `j`. Categories become their index.
    pub fn encode_cell(&self, j: usize, cell: &str) -> Option<f64> {
        let f = &self.features[j];
        match f.kind {
            FeatureKind::Numerical => cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
            FeatureKind::Categorical => f
                .categories
                .as_ref()?
                .iter()
                .position(|c| c == cell.trim())
                .map(|i| i as f64),
        }
    }

    pub fn decode_cell(&self, j: usize, value: f64) -> String {
        let f = &self.features[j];
        match f.kind {
            FeatureKind::Numerical => format!("{value}"),
            FeatureKind::Categorical => f.categories.as_ref().unwrap()[value as usize].clone(),
        }
    }

    pub fn encode_label(&self, cell: &str) -> Option<usize> {
        self.label.classes.iter().position(|c| c == cell.trim())
    }

    pub fn encode_row(&self, cells: &[&str], label: &str) -> Option<(Vec<f64>, usize)> {
        if cells.len() != self.n_features() {
            return None;
        }
        let values = cells
            .iter()
            .enumerate()
            .map(|(j, c)| self.encode_cell(j, c))
            .collect::<Option<Vec<_>>>()?;
        Some((values, self.encode_label(label)?))
    }

    pub fn decode_row(&self, values: &[f64], label: usize) -> (Vec<String>, String) {
        let cells = values
            .iter()
            .enumerate()
            .map(|(j, &v)| self.decode_cell(j, v))
            .collect();
        (cells, self.label.classes[label].clone())
    }
}

/// Encoded tabular samples. Row-major feature values plus class indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let k = schema.n_classes();
        for (i, (row, &y)) in rows.iter().zip(&labels).enumerate() {
            if row.len() != schema.n_features() {
                return Err(Error::SchemaMismatch(format!(
                    "row {i} has {} values, schema has {} features",
                    row.len(),
                    schema.n_features()
                )));
            }
            if y >= k {
                return Err(Error::SchemaMismatch(format!("row {i}: label {y} >= {k}")));
            }
            for (j, f) in schema.features.iter().enumerate() {
                let v = row[j];
                if !v.is_finite() {
                    return Err(Error::SchemaMismatch(format!("row {i}: non-finite value")));
                }
                if f.is_categorical()
                    && (v < 0.0 || v.fract() != 0.0 || v as usize >= f.category_count())
                {
                    return Err(Error::SchemaMismatch(format!(
                        "row {i}: {v} is not a category index of {:?}",
                        f.name
                    )));
                }
            }
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Concatenates datasets sharing one schema.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Empty("no datasets".into()))?;
        let mut out = Dataset {
            schema: first.schema.clone(),
            rows: Vec::new(),
            labels: Vec::new(),
        };
        for p in parts {
            if p.schema != first.schema {
                return Err(Error::SchemaMismatch("datasets use different schemas".into()));
            }
            out.rows.extend(p.rows.iter().cloned());
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnStats {
    Numerical {
        mean: f64,
        std: f64,
        min: f64,
        max: f64,
    },
    Categorical {
        /// Occurrences per category index.
        counts: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub columns: Vec<ColumnStats>,
}

impl FeatureStats {
    pub fn std(&self, j: usize) -> Option<f64> {
        match self.columns[j] {
            ColumnStats::Numerical { std, .. } => Some(std),
            ColumnStats::Categorical { .. } => None,
        }
    }

    pub fn range(&self, j: usize) -> Option<(f64, f64)> {
        match self.columns[j] {
            ColumnStats::Numerical { min, max, .. } => Some((min, max)),
            ColumnStats::Categorical { .. } => None,
        }
    }
}

/// Exact sample statistics with the population (divisor n) standard deviation.
pub fn feature_stats(data: &Dataset) -> Result<FeatureStats> {
    if data.is_empty() {
        return Err(Error::Empty("feature_stats on an empty dataset".into()));
    }
    let n = data.len() as f64;
    let columns = data
        .schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| match f.kind {
            FeatureKind::Numerical => {
                let mean = data.rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = data.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                let (min, max) = data
                    .rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[j]), hi.max(r[j]))
                    });
                ColumnStats::Numerical {
                    mean,
                    std: var.max(0.0).sqrt(),
                    min,
                    max,
                }
            }
            FeatureKind::Categorical => {
                let mut counts = vec![0; f.category_count()];
                for r in &data.rows {
                    counts[r[j] as usize] += 1;
                }
                ColumnStats::Categorical { counts }
            }
        })
        .collect();
    Ok(FeatureStats { columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                Feature::numerical("x"),
                Feature::categorical("c", ["a", "b", "c"]),
            ],
            LabelSpec {
                name: "y".into(),
                classes: vec!["0".into(), "1".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_names_and_thin_categories() {
        let dup = FeatureSchema::new(
            vec![Feature::numerical("x"), Feature::numerical("x")],
            LabelSpec {
                name: "y".into(),
                classes: vec!["0".into(), "1".into()],
            },
        );
        assert!(matches!(dup, Err(Error::Schema(_))));
        let thin = FeatureSchema::new(
            vec![Feature::categorical("c", ["only"])],
            LabelSpec {
                name: "y".into(),
                classes: vec!["0".into(), "1".into()],
            },
        );
        assert!(matches!(thin, Err(Error::Schema(_))));
    }

    #[test]
    fn dataset_rejects_out_of_range_category() {
        let err = Dataset::new(schema(), vec![vec![1.0, 3.0]], vec![0]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        let err = Dataset::new(schema(), vec![vec![1.0, 0.0]], vec![2]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn stats_constant_and_two_point() {
        let d = Dataset::new(
            schema(),
            vec![vec![1.0, 0.0], vec![3.0, 2.0]],
            vec![0, 1],
        )
        .unwrap();
        let s = feature_stats(&d).unwrap();
        assert_eq!(
            s.columns[0],
            ColumnStats::Numerical {
                mean: 2.0,
                std: 1.0,
                min: 1.0,
                max: 3.0
            }
        );
        assert_eq!(s.columns[1], ColumnStats::Categorical { counts: vec![1, 0, 1] });

        let c = Dataset::new(schema(), vec![vec![5.0, 0.0]; 4], vec![0; 4]).unwrap();
        assert_eq!(feature_stats(&c).unwrap().std(0), Some(0.0));
    }

    #[test]
    fn stats_on_empty_dataset_fail() {
        let d = Dataset::new(schema(), vec![], vec![]).unwrap();
        assert!(feature_stats(&d).is_err());
    }

    #[test]
    fn schema_toml_round_trip() {
        let s = schema();
        let back: FeatureSchema = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }
}
