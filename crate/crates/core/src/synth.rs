//! Synthetic stand-in for a labelled face set.
//!
//! Age `a ~ U[0, 100]`; the first feature is `a / 100 + noise * N(0, 1)`,
//! the remaining `dim - 1` features are standard normal nuisance values;
//! the annotator stddev grows with age as `1 + a / 20`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{AnnotatedFace, Dataset, Split};
use crate::error::{Error, Result};
use crate::toymodel::TrainingSet;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub dim: usize,
    /// Standard deviation of the noise on the informative feature.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            dim: 4,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub age: f64,
    pub sigma: f64,
    pub features: Vec<f64>,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<SyntheticSample>> {
    if cfg.dim == 0 {
        return Err(Error::InvalidArgument(
            "feature dimension must be positive".into(),
        ));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be nonnegative, got {}",
            cfg.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n)
        .map(|i| {
            let age: f64 = rng.random_range(0.0..=100.0);
            let eta: f64 = rng.sample(StandardNormal);
            let mut features = Vec::with_capacity(cfg.dim);
            features.push(age / 100.0 + cfg.noise * eta);
            features.extend((1..cfg.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            SyntheticSample {
                id: format!("syn{i:06}"),
                age,
                sigma: 1.0 + age / 20.0,
                features,
            }
        })
        .collect())
}

pub fn to_training_set(samples: &[SyntheticSample]) -> TrainingSet {
    TrainingSet {
        features: samples.iter().map(|s| s.features.clone()).collect(),
        ages: samples.iter().map(|s| s.age).collect(),
    }
}

pub fn to_dataset(samples: &[SyntheticSample], split: Split) -> Result<Dataset> {
    let records = samples
        .iter()
        .map(|s| AnnotatedFace::new(s.id.clone(), s.age, s.sigma))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(split, records)
}
