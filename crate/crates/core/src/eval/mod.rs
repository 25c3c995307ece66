//! Reconstruction accuracy under optimal pairing, feature importance, and
//! classifier utility.

mod hungarian;
mod transport;
mod utility;

use serde::{Deserialize, Serialize};

use crate::attack::{Constraint, FeatureBox, ReconstructedDataset};
use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, Node};
use crate::tabular::{Dataset, FeatureSchema, FeatureStats};

pub use hungarian::{hungarian, hungarian_rect};
pub use utility::{auc, f1_score, utility_metrics, utility_metrics_weighted, Utility};

/// Spread multiplier: a window of `±0.319 σ` covers about 25% of a normal.
pub const TOLERANCE_FACTOR: f64 = 0.319;

/// Per-feature matching windows; `None` marks an exact-match (categorical) feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSet {
    pub eps: Vec<Option<f64>>,
}

pub fn tolerances_from(stats: &FeatureStats) -> ToleranceSet {
    ToleranceSet {
        eps: (0..stats.columns.len())
            .map(|j| stats.std(j).map(|s| TOLERANCE_FACTOR * s))
            .collect(),
    }
}

/// Per-feature hits of one reconstruction against one original row, label last.
pub fn feature_matches(bounds: &FeatureBox, label: usize, row: &[f64], true_label: usize, tol: &ToleranceSet) -> Vec<bool> {
    let mut out: Vec<bool> = bounds
        .features
        .iter()
        .zip(row)
        .zip(&tol.eps)
        .map(|((c, &x), eps)| match c {
            Constraint::Numerical(iv) => {
                let e = eps.unwrap_or(0.0);
                iv.overlaps(x - e, x + e)
            }
            Constraint::Categorical { candidates } => candidates.binary_search(&(x as usize)).is_ok(),
        })
        .collect();
    out.push(label == true_label);
    out
}

/// Fraction of the `K + L` features (label included) that match.
pub fn sample_ra(bounds: &FeatureBox, label: usize, row: &[f64], true_label: usize, tol: &ToleranceSet) -> Result<f64> {
    if bounds.features.len() != row.len() || tol.eps.len() != row.len() {
        return Err(Error::SchemaMismatch(format!(
            "box has {} features, row {}, tolerances {}",
            bounds.features.len(),
            row.len(),
            tol.eps.len()
        )));
    }
    let m = feature_matches(bounds, label, row, true_label, tol);
    Ok(m.iter().filter(|&&b| b).count() as f64 / m.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRate {
    pub name: String,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub ra: f64,
    pub per_pair: Vec<f64>,
    pub per_feature: Vec<FeatureRate>,
    /// `(reconstructed index, original index)`.
    pub pairing: Vec<(usize, usize)>,
}

fn bits_of(hits: &[bool]) -> u32 {
    hits.iter().enumerate().fold(0, |acc, (f, &b)| acc | (u32::from(b) << f))
}

/// Pairs `n` reconstructions with `m` originals given per-pair hit bitmasks
/// and scores the features selected by `sel`.
fn pair_and_score(n: usize, m: usize, hits: &[u32], sel: u32, names: &[String]) -> Result<MatchReport> {
    if n == 0 || m == 0 {
        return Err(Error::Empty("reconstruction accuracy needs both sides non-empty".into()));
    }
    let width = f64::from(sel.count_ones());
    let score = |i: usize, j: usize| f64::from((hits[i * m + j] & sel).count_ones()) / width;
    let misses: Vec<u32> = hits.iter().map(|h| sel.count_ones() - (h & sel).count_ones()).collect();
    let pairs = transport::match_classes(n, m, &misses);
    let pairing: Vec<(usize, usize)> = pairs.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
    let per_pair: Vec<f64> = pairing.iter().map(|&(i, j)| score(i, j)).collect();
    let ra = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    let per_feature = (0..names.len())
        .filter(|f| sel >> f & 1 == 1)
        .map(|f| FeatureRate {
            name: names[f].clone(),
            rate: pairing.iter().filter(|&&(i, j)| hits[i * m + j] >> f & 1 == 1).count() as f64
                / pairing.len() as f64,
        })
        .collect();
    Ok(MatchReport {
        ra,
        per_pair,
        per_feature,
        pairing,
    })
}

/// RA from an explicit hit table `hits[recon][original][feature]` (label
/// last), over the features selected by `mask`.
pub fn match_from_hits(hits: &[Vec<Vec<bool>>], mask: &[bool], names: &[String]) -> Result<MatchReport> {
    let n = hits.len();
    let m = hits.first().map_or(0, Vec::len);
    if mask.len() > 32 || names.len() != mask.len() {
        return Err(Error::invalid("mask and names must agree and cover at most 32 columns"));
    }
    let flat: Vec<u32> = hits.iter().flat_map(|r| r.iter().map(|h| bits_of(h))).collect();
    if flat.len() != n * m {
        return Err(Error::invalid("ragged hit table"));
    }
    pair_and_score(n, m, &flat, bits_of(mask), names)
}

fn column_names(schema: &FeatureSchema) -> Vec<String> {
    schema
        .features
        .iter()
        .map(|f| f.name.clone())
        .chain(std::iter::once(schema.label.name.clone()))
        .collect()
}

fn restricted_ra(recon: &ReconstructedDataset, original: &Dataset, tol: &ToleranceSet, mask: &[bool]) -> Result<MatchReport> {
    if recon.is_empty() || original.is_empty() {
        return Err(Error::Empty("reconstruction accuracy needs both sides non-empty".into()));
    }
    let k = original.n_features();
    if tol.eps.len() != k || recon.samples.iter().any(|s| s.bounds.features.len() != k) {
        return Err(Error::SchemaMismatch("reconstruction, tolerances and data disagree on feature count".into()));
    }
    if k + 1 > 32 {
        return Err(Error::invalid("at most 31 features are supported"));
    }
    let mut hits = Vec::with_capacity(recon.len() * original.len());
    for s in &recon.samples {
        for (row, &y) in original.rows.iter().zip(&original.labels) {
            hits.push(bits_of(&feature_matches(&s.bounds, s.label, row, y, tol)));
        }
    }
    pair_and_score(recon.len(), original.len(), &hits, bits_of(mask), &column_names(&original.schema))
}

/// RA over all features plus the label, with `1 - ra` Hungarian pairing.
/// Surplus samples on the larger side stay unpaired.
pub fn reconstruction_accuracy(recon: &ReconstructedDataset, original: &Dataset, tol: &ToleranceSet) -> Result<MatchReport> {
    let mask = vec![true; original.n_features() + 1];
    restricted_ra(recon, original, tol, &mask)
}

/// Total split gain per feature over the ensemble.
pub fn feature_importance(ens: &Ensemble, n_features: usize) -> Vec<f64> {
    let mut imp = vec![0.0; n_features];
    for t in &ens.trees {
        for n in &t.tree.nodes {
            if let Node::Split { feature, gain, .. } = n {
                imp[*feature] += gain.unwrap_or(0.0);
            }
        }
    }
    imp
}

/// Indices of the `k` most important features, ties to the lower index.
pub fn top_features(importance: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importance.len()).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// RA restricted to the `k - 1` highest-gain features plus the label.
pub fn top_k_feature_ra(
    recon: &ReconstructedDataset,
    original: &Dataset,
    tol: &ToleranceSet,
    ensemble: &Ensemble,
    k: usize,
) -> Result<MatchReport> {
    let nf = original.n_features();
    if k == 0 || k > nf + 1 {
        return Err(Error::invalid(format!("top-k needs 1 <= k <= {}, got {k}", nf + 1)));
    }
    let top = top_features(&feature_importance(ensemble, nf), k - 1);
    let mut mask = vec![false; nf + 1];
    for f in top {
        mask[f] = true;
    }
    mask[nf] = true;
    restricted_ra(recon, original, tol, &mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{Interval, ReconstructedSample, Victim};
    use crate::gbdt::{BoostParams, Objective};
    use crate::tabular::{feature_stats, synth, Feature, LabelSpec};

    fn recon_of(d: &Dataset, f: impl Fn(usize) -> FeatureBox) -> ReconstructedDataset {
        ReconstructedDataset {
            samples: (0..d.len())
                .map(|i| ReconstructedSample {
                    bounds: f(i),
                    label: d.labels[i],
                    p: vec![0.5],
                    g: vec![0.0],
                    h: vec![0.25],
                    margin: vec![0.0],
                    origin_leaf: 0,
                })
                .collect(),
            victim: Victim::Global,
            source_params: BoostParams::default(),
            n_classes: 2,
            objective: Objective::Logistic,
        }
    }

    #[test]
    fn exact_boxes_score_one() {
        let d = synth::stroke_like(40, 3);
        let tol = tolerances_from(&feature_stats(&d).unwrap());
        let r = recon_of(&d, |i| FeatureBox::exact(&d.schema, &d.rows[i]));
        for i in 0..d.len() {
            assert_eq!(sample_ra(&r.samples[i].bounds, d.labels[i], &d.rows[i], d.labels[i], &tol).unwrap(), 1.0);
        }
        let rep = reconstruction_accuracy(&r, &d, &tol).unwrap();
        assert_eq!(rep.ra, 1.0);
        // Zero tolerance still admits the exact point.
        let zero = ToleranceSet { eps: tol.eps.iter().map(|e| e.map(|_| 0.0)).collect() };
        assert_eq!(reconstruction_accuracy(&r, &d, &zero).unwrap().ra, 1.0);
    }

    #[test]
    fn unconstrained_boxes_score_one() {
        let d = synth::pima_like(30, 1);
        let tol = tolerances_from(&feature_stats(&d).unwrap());
        let r = recon_of(&d, |_| FeatureBox::unconstrained(&d.schema));
        assert_eq!(reconstruction_accuracy(&r, &d, &tol).unwrap().ra, 1.0);
    }

    #[test]
    fn three_of_five_is_point_six() {
        let schema = FeatureSchema::new(
            (0..4).map(|j| Feature::numerical(format!("x{j}"))).collect(),
            LabelSpec {
                name: "y".into(),
                classes: vec!["0".into(), "1".into()],
            },
        )
        .unwrap();
        let row = [1.0, 2.0, 3.0, 4.0];
        let mut b = FeatureBox::exact(&schema, &row);
        b.features[0] = Constraint::Numerical(Interval { lo: 10.0, hi: 20.0 });
        b.features[1] = Constraint::Numerical(Interval::point(2.4));
        let tol = ToleranceSet { eps: vec![Some(0.5); 4] };
        assert_eq!(sample_ra(&b, 1, &row, 1, &tol).unwrap(), 0.8);
        assert_eq!(sample_ra(&b, 0, &row, 1, &tol).unwrap(), 0.6);
    }

    #[test]
    fn worked_pairing_example_gives_085() {
        // Five features (label included); optimal pairs score 5/5, 3/5, 5/5, 4/5.
        let names: Vec<String> = ["a", "b", "c", "d", "label"].iter().map(|s| s.to_string()).collect();
        let row = |k: usize| (0..5).map(|f| f < k).collect::<Vec<bool>>();
        let hits = vec![
            vec![row(5), row(1), row(0), row(0)],
            vec![row(1), row(3), row(1), row(0)],
            vec![row(0), row(0), row(5), row(2)],
            vec![row(0), row(1), row(2), row(4)],
        ];
        let rep = match_from_hits(&hits, &[true; 5], &names).unwrap();
        assert_eq!(rep.pairing, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(rep.per_pair, vec![1.0, 0.6, 1.0, 0.8]);
        assert!((rep.ra - 0.85).abs() < 1e-12);
    }

    #[test]
    fn disjoint_categories_contribute_nothing() {
        let d = synth::stroke_like(20, 2);
        let tol = tolerances_from(&feature_stats(&d).unwrap());
        let r = recon_of(&d, |i| {
            let mut b = FeatureBox::exact(&d.schema, &d.rows[i]);
            for (j, f) in d.schema.features.iter().enumerate() {
                if f.is_categorical() {
                    b.features[j] = Constraint::Categorical { candidates: vec![] };
                }
            }
            b
        });
        let rep = reconstruction_accuracy(&r, &d, &tol).unwrap();
        for fr in &rep.per_feature {
            let j = d.schema.feature_index(&fr.name);
            if j.is_some_and(|j| d.schema.features[j].is_categorical()) {
                assert_eq!(fr.rate, 0.0);
            }
        }
    }

    #[test]
    fn size_mismatch_pairs_the_smaller_side() {
        let d = synth::pima_like(10, 4);
        let tol = tolerances_from(&feature_stats(&d).unwrap());
        let mut r = recon_of(&d, |i| FeatureBox::exact(&d.schema, &d.rows[i]));
        r.samples.truncate(6);
        let rep = reconstruction_accuracy(&r, &d, &tol).unwrap();
        assert_eq!(rep.pairing.len(), 6);
        assert_eq!(rep.ra, 1.0);
        r.samples.clear();
        assert!(reconstruction_accuracy(&r, &d, &tol).is_err());
    }

    #[test]
    fn tolerances() {
        let d = synth::two_feature_demo();
        let s = feature_stats(&d).unwrap();
        let t = tolerances_from(&s);
        assert!((t.eps[0].unwrap() - 0.319 * s.std(0).unwrap()).abs() < 1e-15);
        let c = Dataset::new(d.schema.clone(), vec![vec![1.0, 5.0]; 3], vec![0, 1, 0]).unwrap();
        assert_eq!(tolerances_from(&feature_stats(&c).unwrap()).eps, vec![Some(0.0), Some(0.0)]);
    }
}
