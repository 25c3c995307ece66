//! Deterministic synthetic datasets.
//!
//! `pima_like` and `stroke_like` follow the column layout and approximate
//! marginal statistics of the public Pima Indians Diabetes and (class-balanced)
//! Stroke Prediction tables. Labels are drawn first and features conditioned
//! on them, so the data is learnable but not separable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};

use super::{Dataset, Feature, FeatureSchema, LabelSpec};
use crate::rng;

fn binary_label(name: &str) -> LabelSpec {
    LabelSpec {
        name: name.into(),
        classes: vec!["0".into(), "1".into()],
    }
}

/// The 15-row age/BMI table used throughout the docs and tests. A depth-2 tree
/// trained on it with `b = 0.5, eta = 0.3, lambda = 1` splits at `age < 60`
/// and then `bmi < 29`.
pub fn two_feature_demo() -> Dataset {
    let schema = FeatureSchema::new(
        vec![Feature::numerical("age"), Feature::numerical("bmi")],
        binary_label("label"),
    )
    .expect("valid schema");
    let rows: [(f64, f64, usize); 15] = [
        (25.0, 22.0, 0),
        (31.0, 35.0, 0),
        (38.0, 27.0, 0),
        (42.0, 31.0, 0),
        (47.0, 24.0, 0),
        (52.0, 33.0, 0),
        (57.0, 30.0, 0),
        (60.0, 24.0, 1),
        (66.0, 26.0, 1),
        (71.0, 27.5, 1),
        (78.0, 28.0, 1),
        (63.0, 29.0, 0),
        (69.0, 31.0, 1),
        (74.0, 33.0, 0),
        (80.0, 36.0, 0),
    ];
    Dataset::new(
        schema,
        rows.iter().map(|r| vec![r.0, r.1]).collect(),
        rows.iter().map(|r| r.2).collect(),
    )
    .expect("valid fixture")
}

pub fn pima_schema() -> FeatureSchema {
    FeatureSchema::new(
        [
            "pregnancies",
            "glucose",
            "blood_pressure",
            "skin_thickness",
            "insulin",
            "bmi",
            "diabetes_pedigree",
            "age",
        ]
        .into_iter()
        .map(Feature::numerical)
        .collect(),
        binary_label("outcome"),
    )
    .expect("valid schema")
}

fn round_to(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).unwrap().sample(rng)
}

/// Eight numerical features plus a binary outcome (about 35% positive).
pub fn pima_like(n: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, "pima_like", &[]);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = usize::from(rng.random::<f64>() < 0.35);
        let pos = y == 1;
        let preg_shape = if pos { 1.6 } else { 1.2 };
        let preg = Gamma::<f64>::new(preg_shape, 2.9).unwrap().sample(&mut rng).round().min(17.0);
        let glucose = normal(&mut rng, if pos { 141.0 } else { 110.0 }, if pos { 31.0 } else { 26.0 })
            .round()
            .clamp(44.0, 199.0);
        let bp = if rng.random::<f64>() < 0.04 {
            0.0
        } else {
            normal(&mut rng, if pos { 74.0 } else { 70.0 }, 12.0).round().clamp(24.0, 122.0)
        };
        let skin = if rng.random::<f64>() < 0.30 {
            0.0
        } else {
            normal(&mut rng, if pos { 32.0 } else { 27.0 }, 10.0).round().clamp(7.0, 99.0)
        };
        let insulin = if rng.random::<f64>() < 0.48 {
            0.0
        } else {
            let median: f64 = if pos { 160.0 } else { 110.0 };
            LogNormal::new(median.ln(), 0.6)
                .unwrap()
                .sample(&mut rng)
                .round()
                .clamp(14.0, 846.0)
        };
        let bmi = round_to(normal(&mut rng, if pos { 35.1 } else { 30.3 }, 7.5), 1).clamp(18.0, 67.1);
        let dpf_median: f64 = if pos { 0.45 } else { 0.34 };
        let dpf = round_to(
            LogNormal::new(dpf_median.ln(), 0.65).unwrap().sample(&mut rng),
            3,
        )
        .clamp(0.078, 2.42);
        let age_shape = if pos { 2.6 } else { 1.3 };
        let age_scale = if pos { 7.2 } else { 9.5 };
        let age = (21.0 + Gamma::<f64>::new(age_shape, age_scale).unwrap().sample(&mut rng))
            .round()
            .min(81.0);
        rows.push(vec![preg, glucose, bp, skin, insulin, bmi, dpf, age]);
        labels.push(y);
    }
    Dataset::new(pima_schema(), rows, labels).expect("generated rows match schema")
}

pub fn stroke_schema() -> FeatureSchema {
    FeatureSchema::new(
        vec![
            Feature::categorical("gender", ["Male", "Female"]),
            Feature::numerical("age"),
            Feature::categorical("hypertension", ["0", "1"]),
            Feature::categorical("heart_disease", ["0", "1"]),
            Feature::categorical("ever_married", ["No", "Yes"]),
            Feature::categorical(
                "work_type",
                ["children", "Govt_job", "Never_worked", "Private", "Self-employed"],
            ),
            Feature::categorical("residence_type", ["Rural", "Urban"]),
            Feature::numerical("avg_glucose_level"),
            Feature::numerical("bmi"),
            Feature::categorical(
                "smoking_status",
                ["Unknown", "formerly smoked", "never smoked", "smokes"],
            ),
        ],
        binary_label("stroke"),
    )
    .expect("valid schema")
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as f64;
        }
        u -= w;
    }
    (weights.len() - 1) as f64
}

/// Three numerical and seven categorical features with a balanced binary label.
pub fn stroke_like(n: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, "stroke_like", &[]);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = usize::from(rng.random::<f64>() < 0.5);
        let pos = y == 1;
        let gender = pick(&mut rng, if pos { &[0.45, 0.55] } else { &[0.41, 0.59] });
        let age = round_to(
            if pos {
                normal(&mut rng, 68.0, 12.0)
            } else {
                normal(&mut rng, 42.0, 21.0)
            },
            0,
        )
        .clamp(1.0, 82.0);
        let hyper = pick(&mut rng, if pos { &[0.73, 0.27] } else { &[0.91, 0.09] });
        let heart = pick(&mut rng, if pos { &[0.81, 0.19] } else { &[0.95, 0.05] });
        let married = if age < 18.0 {
            0.0
        } else {
            pick(&mut rng, if pos { &[0.12, 0.88] } else { &[0.30, 0.70] })
        };
        let work = if age < 16.0 {
            0.0
        } else if pos {
            pick(&mut rng, &[0.01, 0.13, 0.01, 0.58, 0.27])
        } else {
            pick(&mut rng, &[0.05, 0.14, 0.01, 0.62, 0.18])
        };
        let residence = pick(&mut rng, if pos { &[0.46, 0.54] } else { &[0.50, 0.50] });
        let high_glucose = rng.random::<f64>() < if pos { 0.38 } else { 0.12 };
        let glucose = round_to(
            if high_glucose {
                normal(&mut rng, 205.0, 30.0)
            } else {
                normal(&mut rng, 96.0, 21.0)
            },
            2,
        )
        .clamp(55.0, 272.0);
        let bmi = round_to(normal(&mut rng, if pos { 30.2 } else { 28.6 }, 7.2), 1).clamp(10.3, 78.0);
        let smoking = if age < 12.0 {
            0.0
        } else if pos {
            pick(&mut rng, &[0.19, 0.28, 0.36, 0.17])
        } else {
            pick(&mut rng, &[0.30, 0.17, 0.37, 0.16])
        };
        rows.push(vec![
            gender, age, hyper, heart, married, work, residence, glucose, bmi, smoking,
        ]);
        labels.push(y);
    }
    Dataset::new(stroke_schema(), rows, labels).expect("generated rows match schema")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::feature_stats;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(pima_like(50, 4), pima_like(50, 4));
        assert_ne!(pima_like(50, 4), pima_like(50, 5));
        assert_eq!(stroke_like(50, 4), stroke_like(50, 4));
    }

    #[test]
    fn pima_like_spreads_track_the_public_table() {
        let d = pima_like(728, 0);
        let s = feature_stats(&d).unwrap();
        // Tolerances 0.319 * sigma on the public table: bmi 2.50, pedigree 0.105, glucose 10.06, age 3.77.
        for (j, target) in [(5, 2.50), (6, 0.105), (1, 10.06), (7, 3.77)] {
            let eps = 0.319 * s.std(j).unwrap();
            assert!((eps / target - 1.0).abs() < 0.12, "feature {j}: {eps} vs {target}");
        }
        let pos = d.class_counts()[1] as f64 / d.len() as f64;
        assert!((0.28..0.42).contains(&pos));
    }

    #[test]
    fn stroke_like_glucose_spread() {
        let d = stroke_like(5000, 0);
        let s = feature_stats(&d).unwrap();
        let eps = 0.319 * s.std(7).unwrap();
        assert!((eps - 17.03).abs() < 1.0, "glucose tolerance {eps}");
    }
}
