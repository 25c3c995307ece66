//! Epsilon-DP release of gradient histograms: clip per-sample statistics,
//! then add Laplace noise of scale `2R / epsilon` to every bin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{GradPair, Histogram};

fn default_clip() -> f64 {
    1.0
}

/// Exactly one of `epsilon_total` and `epsilon_histogram` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DPConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_histogram: Option<f64>,
    #[serde(default = "default_clip")]
    pub clip_r: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DPConfig {
    pub fn per_histogram(epsilon: f64) -> Self {
        DPConfig {
            epsilon_total: None,
            epsilon_histogram: Some(epsilon),
            clip_r: 1.0,
            seed: 0,
        }
    }

    pub fn total(epsilon: f64) -> Self {
        DPConfig {
            epsilon_total: Some(epsilon),
            epsilon_histogram: None,
            clip_r: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = match (self.epsilon_total, self.epsilon_histogram) {
            (Some(e), None) | (None, Some(e)) => e,
            _ => {
                return Err(Error::Config(
                    "defense needs exactly one of epsilon_total and epsilon_histogram".into(),
                ))
            }
        };
        if !(eps > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        if !(self.clip_r > 0.0 && self.clip_r.is_finite()) {
            return Err(Error::Config(format!("clip_r must be positive, got {}", self.clip_r)));
        }
        Ok(())
    }

    /// Per-histogram budget for an ensemble of `n_trees` trees.
    pub fn epsilon_histogram(&self, n_trees: usize) -> Result<f64> {
        self.validate()?;
        match (self.epsilon_total, self.epsilon_histogram) {
            (_, Some(e)) => Ok(e),
            (Some(t), None) => split_budget(t, n_trees),
            (None, None) => unreachable!("validated"),
        }
    }
}

/// `epsilon_total / (2 T)`.
pub fn split_budget(epsilon_total: f64, n_trees: usize) -> Result<f64> {
    if n_trees == 0 {
        return Err(Error::invalid("budget split needs at least one tree"));
    }
    Ok(epsilon_total / (2.0 * n_trees as f64))
}

/// `g` into `[-R, R]`, `h` into `[0, 2R]`.
pub fn clip_grad_hess(g: f64, h: f64, r: f64) -> (f64, f64) {
    (g.clamp(-r, r), h.clamp(0.0, 2.0 * r))
}

/// One draw from Laplace(0, scale) by inverse CDF.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // u in (-1/2, 1/2]; 1 - 2|u| stays in [0, 1), and 0 maps to a finite tail.
    let u: f64 = 0.5 - rng.random::<f64>();
    let a = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -scale * u.signum() * a.ln()
}

/// Adds independent Laplace(0, 2R/epsilon) noise to every `G` and `H` bin.
/// The histogram total is reset to the noisy sum of the first feature's bins.
pub fn dp_histogram<R: Rng + ?Sized>(hist: &Histogram, epsilon: f64, r: f64, rng: &mut R) -> Result<Histogram> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("clip bound must be positive, got {r}")));
    }
    let scale = 2.0 * r / epsilon;
    let mut out = hist.clone();
    for bins in &mut out.bins {
        for b in bins.iter_mut() {
            b.g += sample_laplace(rng, scale);
            b.h += sample_laplace(rng, scale);
        }
    }
    out.total = if out.bins.is_empty() {
        GradPair::default()
    } else {
        out.feature_total(0)
    };
    Ok(out)
}
