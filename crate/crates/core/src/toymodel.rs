//! Single-layer softmax classifier over supplied feature vectors, trained
//! with mini-batch gradient descent on cross-entropy, and the three-member
//! shifted-group ensemble built from it.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agecore::{
    decode_topk, encode_age, fuse, AgeEstimate, GroupingScheme, ModelScore, ProbVector, NUM_GROUPS,
};
use crate::error::{Error, Result};
use crate::numfmt::sig12;

const INIT_RANGE: f64 = 0.01;

/// `softmax(W x + b)` with `W` stored row-major as 34 rows of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    dim: usize,
    weights: Vec<f64>,
    bias: [f64; NUM_GROUPS],
}

impl SoftmaxModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weights: vec![0.0; NUM_GROUPS * dim],
            bias: [0.0; NUM_GROUPS],
        }
    }

    pub fn from_parts(dim: usize, weights: Vec<f64>, bias: [f64; NUM_GROUPS]) -> Result<Self> {
        if weights.len() != NUM_GROUPS * dim {
            return Err(Error::InvariantViolation(format!(
                "weight matrix needs {} entries for dimension {dim}, got {}",
                NUM_GROUPS * dim,
                weights.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation(
                "model parameters must be finite".into(),
            ));
        }
        Ok(Self { dim, weights, bias })
    }

    /// Weights uniform in `(-0.01, 0.01)` from a seeded PRNG, bias zero.
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(dim, &mut rng)
    }

    fn init_with(dim: usize, rng: &mut impl Rng) -> Self {
        let weights = (0..NUM_GROUPS * dim)
            .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        Self {
            dim,
            weights,
            bias: [0.0; NUM_GROUPS],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64; NUM_GROUPS] {
        &self.bias
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> [f64; NUM_GROUPS] {
        std::array::from_fn(|j| {
            let row = &self.weights[j * self.dim..(j + 1) * self.dim];
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[j]
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<ProbVector> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature vector must be finite".into()));
        }
        ProbVector::new(&softmax(self.logits(x)))
    }

    /// Writes the flat binary checkpoint: `d` and `34` as little-endian u64,
    /// then `W` row-major and `b`, all little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * (self.weights.len() + NUM_GROUPS));
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        buf.extend_from_slice(&(NUM_GROUPS as u64).to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().expect("8 bytes") };
        if bytes.len() < 16 {
            return Err(Error::schema(path, "checkpoint shorter than its header"));
        }
        let dim = u64::from_le_bytes(word(0)) as usize;
        let classes = u64::from_le_bytes(word(1)) as usize;
        if classes != NUM_GROUPS {
            return Err(Error::schema(
                path,
                format!("checkpoint has {classes} classes, expected {NUM_GROUPS}"),
            ));
        }
        let n_params = dim
            .checked_mul(NUM_GROUPS)
            .and_then(|w| w.checked_add(NUM_GROUPS))
            .ok_or_else(|| Error::schema(path, "checkpoint dimension overflows"))?;
        if bytes.len() != 16 + 8 * n_params {
            return Err(Error::schema(
                path,
                format!(
                    "checkpoint is {} bytes, expected {} for dimension {dim}",
                    bytes.len(),
                    16 + 8 * n_params
                ),
            ));
        }
        let values: Vec<f64> = (0..n_params)
            .map(|i| f64::from_le_bytes(word(2 + i)))
            .collect();
        let (w, b) = values.split_at(NUM_GROUPS * dim);
        let bias: [f64; NUM_GROUPS] = b.try_into().expect("34 bias entries");
        Self::from_parts(dim, w.to_vec(), bias).map_err(|e| Error::schema(path, e.to_string()))
    }
}

fn softmax(z: [f64; NUM_GROUPS]) -> [f64; NUM_GROUPS] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

/// `ln Σ exp(z_j) - z_label`, stable for large logits.
fn cross_entropy(z: &[f64; NUM_GROUPS], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_GROUPS],
}

/// Mean cross-entropy plus `(l2 / 2) ‖W‖²`, and its gradient.
pub fn loss_and_grad(
    model: &SoftmaxModel,
    batch: &[(&[f64], usize)],
    l2: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let d = model.dim;
    let mut gw = vec![0.0; NUM_GROUPS * d];
    let mut gb = [0.0; NUM_GROUPS];
    let mut loss = 0.0;
    for &(x, label) in batch {
        model.check_dim(x)?;
        if label >= NUM_GROUPS {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside 0..{NUM_GROUPS}"
            )));
        }
        let z = model.logits(x);
        loss += cross_entropy(&z, label);
        let mut delta = softmax(z);
        delta[label] -= 1.0;
        for (j, &dj) in delta.iter().enumerate() {
            gb[j] += dj;
            for (g, &v) in gw[j * d..(j + 1) * d].iter_mut().zip(x) {
                *g += dj * v;
            }
        }
    }
    let n = batch.len() as f64;
    let norm2: f64 = model.weights.iter().map(|w| w * w).sum();
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
    }
    for g in &mut gb {
        *g /= n;
    }
    Ok((
        loss / n + 0.5 * l2 * norm2,
        Gradients {
            weights: gw,
            bias: gb,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Train on z-scored features and fold the scaling back into `W` and `b`.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 10.0,
            epochs: 300,
            l2: 0.0,
            seed: 0,
            batch_size: 16,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "l2 must be nonnegative, got {}",
                self.l2
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-feature mean and standard deviation; constant features get scale 1.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn fit(features: &[Vec<f64>], dim: usize) -> Self {
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in features {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for x in features {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Rewrites a model on standardized inputs as one on raw inputs.
    fn fold(&self, model: SoftmaxModel) -> SoftmaxModel {
        let d = model.dim;
        let mut weights = model.weights;
        let mut bias = model.bias;
        for j in 0..NUM_GROUPS {
            let row = &mut weights[j * d..(j + 1) * d];
            for ((w, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *w /= s;
                bias[j] -= *w * m;
            }
        }
        SoftmaxModel {
            dim: d,
            weights,
            bias,
        }
    }
}

/// Result of [`fit_with_history`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: SoftmaxModel,
    /// Full-data objective before training and after each epoch.
    pub losses: Vec<f64>,
}

fn check_training_set(features: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    for (i, x) in features.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has {} features, expected {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample {i} has non-finite features"
            )));
        }
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= NUM_GROUPS) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside 0..{NUM_GROUPS}"
        )));
    }
    Ok(dim)
}

/// The model training starts from, expressed on raw features.
pub fn initial_model(features: &[Vec<f64>], cfg: &TrainConfig) -> Result<SoftmaxModel> {
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let init = SoftmaxModel::init(dim, cfg.seed);
    Ok(if cfg.standardize {
        Standardizer::fit(features, dim).fold(init)
    } else {
        init
    })
}

/// Trains on explicit group labels. Returns the parameters with the lowest
/// full-data objective seen, so the result never scores worse than the
/// initialization.
pub fn fit_with_history(
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let dim = check_training_set(features, labels)?;
    let standardizer = if cfg.standardize {
        Standardizer::fit(features, dim)
    } else {
        Standardizer::identity(dim)
    };
    let xs: Vec<Vec<f64>> = features.iter().map(|x| standardizer.apply(x)).collect();
    let full: Vec<(&[f64], usize)> = xs
        .iter()
        .map(Vec::as_slice)
        .zip(labels.iter().copied())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SoftmaxModel::init_with(dim, &mut rng);
    let mut loss = loss_and_grad(&model, &full, cfg.l2)?.0;
    let mut losses = vec![loss];
    let mut best = (loss, model.clone());

    let mut order: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| full[i]).collect();
            let (_, g) = loss_and_grad(&model, &batch, cfg.l2)?;
            for (w, gw) in model.weights.iter_mut().zip(&g.weights) {
                *w -= cfg.learning_rate * gw;
            }
            for (b, gb) in model.bias.iter_mut().zip(&g.bias) {
                *b -= cfg.learning_rate * gb;
            }
        }
        loss = loss_and_grad(&model, &full, cfg.l2)?.0;
        if !loss.is_finite() {
            return Err(Error::InvariantViolation(
                "training diverged; lower the learning rate".into(),
            ));
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, model.clone());
        }
    }
    Ok(FitOutcome {
        model: standardizer.fold(best.1),
        losses,
    })
}

pub fn fit(features: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<SoftmaxModel> {
    fit_with_history(features, labels, cfg).map(|o| o.model)
}

/// Feature vectors with the annotator-mean age of each sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub ages: Vec<f64>,
}

impl TrainingSet {
    pub fn labels(&self, scheme: &GroupingScheme) -> Result<Vec<usize>> {
        self.ages.iter().map(|&a| encode_age(a, scheme)).collect()
    }
}

/// Trains one member on ages encoded under `scheme`.
pub fn train(
    set: &TrainingSet,
    scheme: &GroupingScheme,
    cfg: &TrainConfig,
) -> Result<SoftmaxModel> {
    fit(&set.features, &set.labels(scheme)?, cfg)
}

/// One classifier per grouping shift, fused by summing decoded scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    models: [SoftmaxModel; 3],
}

impl Ensemble {
    pub fn new(models: [SoftmaxModel; 3]) -> Result<Self> {
        if models.iter().any(|m| m.dim != models[0].dim) {
            return Err(Error::InvariantViolation(
                "ensemble members disagree on feature dimension".into(),
            ));
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[SoftmaxModel; 3] {
        &self.models
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim
    }

    /// Top-k decoded score of each member, in shift order.
    pub fn scores(&self, x: &[f64], k: usize) -> Result<[ModelScore; 3]> {
        let schemes = GroupingScheme::ensemble();
        let mut out = [ModelScore::new(0.0)?; 3];
        for ((slot, model), scheme) in out.iter_mut().zip(&self.models).zip(&schemes) {
            *slot = decode_topk(&model.forward(x)?, scheme, k)?;
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64], k: usize) -> Result<AgeEstimate> {
        fuse(&self.scores(x, k)?)
    }

    pub fn checkpoint_name(shift: u32) -> String {
        format!("shift{shift}.model")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (model, scheme) in self.models.iter().zip(GroupingScheme::ensemble()) {
            model.save(&dir.join(Self::checkpoint_name(scheme.shift())))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let [a, b, c] = GroupingScheme::ensemble()
            .map(|s| SoftmaxModel::load(&dir.join(Self::checkpoint_name(s.shift()))));
        Self::new([a?, b?, c?])
    }
}

/// Trains the three shifted members concurrently; member `i` uses seed
/// `cfg.seed + i`.
pub fn train_ensemble(set: &TrainingSet, cfg: &TrainConfig) -> Result<Ensemble> {
    let schemes = GroupingScheme::ensemble();
    let results: Vec<Result<SoftmaxModel>> = std::thread::scope(|scope| {
        let handles: Vec<_> = schemes
            .iter()
            .map(|scheme| {
                let cfg = TrainConfig {
                    seed: cfg.seed.wrapping_add(scheme.shift() as u64),
                    ..cfg.clone()
                };
                scope.spawn(move || train(set, scheme, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut it = results.into_iter();
    let mut next = || it.next().expect("three members");
    Ensemble::new([next()?, next()?, next()?])
}

/// Reads a feature CSV with header `id,f0,f1,...`.
pub fn read_features(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::schema(path, e.to_string()))?
        .clone();
    let dim = header.len().saturating_sub(1);
    let expected = std::iter::once("id".to_string()).chain((0..dim).map(|i| format!("f{i}")));
    if dim == 0 || header.iter().ne(expected) {
        return Err(Error::schema(path, "expected header `id,f0,f1,...`"));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::schema(path, format!("line {line}: {e}")))?;
        let values = row
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::schema(path, format!("line {line}: non-numeric feature")))?;
        out.push((row[0].to_string(), values));
    }
    Ok(out)
}

pub fn features_to_csv(rows: &[(String, Vec<f64>)]) -> String {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut out = String::from("id");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (id, x) in rows {
        out.push_str(id);
        for v in x {
            out.push(',');
            out.push_str(&sig12(*v));
        }
        out.push('\n');
    }
    out
}
