//! Synthetic two-group data with a controllable gap between group score
//! means.
//!
//! Each individual has a latent vector `z ~ N(0, I)`; the first coordinate
//! is shifted by `+δ/2` for group 1 and `-δ/2` for group 2, and the label is
//! Bernoulli with probability `σ(slope · z₀)`. Features are a fixed random
//! linear embedding of `z` plus small isotropic noise, so group membership
//! is visible only through the label-relevant coordinate. `δ` is solved for
//! so that the expected ideal score means differ by `score_mean_shift`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scoring::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub per_group: usize,
    pub feature_dim: usize,
    pub latent_dim: usize,
    /// Target gap between the groups' expected ideal scores.
    pub score_mean_shift: f64,
    pub label_slope: f64,
    /// Probability of flipping each drawn label.
    pub label_noise: f64,
    pub feature_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            per_group: 2000,
            feature_dim: 10,
            latent_dim: 2,
            score_mean_shift: 0.2,
            label_slope: 1.0,
            label_noise: 0.0,
            feature_noise: 0.05,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_group < 2 {
            return Err(Error::invalid("need at least two rows per group"));
        }
        if self.latent_dim == 0 || self.feature_dim < self.latent_dim {
            return Err(Error::invalid(format!(
                "latent dimension {} must be in 1..={}",
                self.latent_dim, self.feature_dim
            )));
        }
        if !(0.0..1.0).contains(&self.score_mean_shift) {
            return Err(Error::invalid("score mean shift must lie in [0, 1)"));
        }
        if !(self.label_slope > 0.0) {
            return Err(Error::invalid("label slope must be positive"));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::invalid("label noise must lie in [0, 0.5)"));
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::invalid("feature noise must be >= 0"));
        }
        Ok(())
    }
}

/// `E[σ(slope · (z + offset))]` for `z ~ N(0, 1)`, by the trapezoid rule.
fn expected_score(slope: f64, offset: f64) -> f64 {
    const STEPS: usize = 4000;
    const SPAN: f64 = 9.0;
    let h = 2.0 * SPAN / STEPS as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    (0..=STEPS)
        .map(|i| {
            let z = -SPAN + i as f64 * h;
            let w = if i == 0 || i == STEPS { 0.5 } else { 1.0 };
            w * norm * (-0.5 * z * z).exp() * sigmoid(slope * (z + offset))
        })
        .sum::<f64>()
        * h
}

/// Latent separation `δ` whose expected score gap equals `gap`.
pub fn latent_shift_for(gap: f64, slope: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    let f = |d: f64| expected_score(slope, d / 2.0) - expected_score(slope, -d / 2.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < gap && hi < 64.0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Rows alternate group 1, group 2.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, l) = (config.feature_dim, config.latent_dim);
    let scale = 1.0 / (l as f64).sqrt();
    let embed: Vec<f64> = (0..d * l)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let delta = latent_shift_for(config.score_mean_shift, config.label_slope);
    let n = 2 * config.per_group;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut z = vec![0.0; l];
    for i in 0..n {
        let g = 1 + i % 2;
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        z[0] += if g == 1 { delta / 2.0 } else { -delta / 2.0 };
        let p = sigmoid(config.label_slope * z[0]);
        let mut y = rng.random::<f64>() < p;
        if rng.random::<f64>() < config.label_noise {
            y = !y;
        }
        for row in embed.chunks(l) {
            let clean: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
            let noise: f64 = rng.sample(StandardNormal);
            data.push(clean + config.feature_noise * noise);
        }
        labels.push(u8::from(y));
        groups.push(g);
    }
    Dataset::from_numeric(Matrix::from_vec(n, d, data)?, labels, groups)
}
