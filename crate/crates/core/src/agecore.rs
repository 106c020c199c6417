//! Shifted age grouping, expected-value decoding of class probabilities,
//! three-model fusion and the epsilon-error metric.
//!
//! Ages in `[0, 100]` are split into 34 groups of 3 years. Each of the three
//! ensemble members uses the same grid offset by 0, 1 or 2 years, so the
//! three group indices of an age `a >= 2` always sum to `a - 2`.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub const NUM_GROUPS: usize = 34;
pub const GROUP_WIDTH: u32 = 3;
/// Shifts used by the three ensemble members.
pub const SHIFTS: [u32; 3] = [0, 1, 2];
/// Added to the summed group-index scores so that exact one-hot classifiers
/// reproduce the input age on `[2, 100]`.
pub const FUSION_BIAS: f64 = 2.0;
pub const MAX_AGE: f64 = 100.0;
pub const MAX_ESTIMATE: f64 = 102.0;
/// Allowed deviation of a probability vector's sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// A 34-group partition of the age axis offset by `shift` years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupingScheme {
    shift: u32,
}

impl GroupingScheme {
    pub fn new(shift: u32) -> Result<Self> {
        if !SHIFTS.contains(&shift) {
            return Err(Error::InvalidArgument(format!(
                "grouping shift must be 0, 1 or 2, got {shift}"
            )));
        }
        Ok(Self { shift })
    }

    /// The three schemes of the ensemble, in shift order.
    pub fn ensemble() -> [GroupingScheme; 3] {
        SHIFTS.map(|shift| GroupingScheme { shift })
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn num_groups(&self) -> usize {
        NUM_GROUPS
    }

    pub fn group_width(&self) -> u32 {
        GROUP_WIDTH
    }

    /// Decode weight of group `j`: the group index itself.
    pub fn weight(&self, group: usize) -> f64 {
        group as f64
    }

    pub fn weights(&self) -> [f64; NUM_GROUPS] {
        std::array::from_fn(|j| self.weight(j))
    }
}

/// Maps an age in years to its group index under `scheme`.
///
/// Ages are clamped to `[0, 100]` first; the index is
/// `clamp(floor((age - shift) / 3), 0, 33)`.
pub fn encode_age(age: f64, scheme: &GroupingScheme) -> Result<usize> {
    if !age.is_finite() {
        return Err(Error::InvalidInput(format!(
            "age must be finite, got {age}"
        )));
    }
    let age = age.clamp(0.0, MAX_AGE);
    let raw = ((age - scheme.shift as f64) / GROUP_WIDTH as f64).floor();
    Ok(raw.clamp(0.0, (NUM_GROUPS - 1) as f64) as usize)
}

/// One classifier's softmax output over the 34 groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: [f64; NUM_GROUPS],
}

impl ProbVector {
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.len() != NUM_GROUPS {
            return Err(Error::InvariantViolation(format!(
                "probability vector needs {NUM_GROUPS} entries, got {}",
                probs.len()
            )));
        }
        if let Some((j, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvariantViolation(format!(
                "probability {j} is {p}, expected a finite nonnegative value"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvariantViolation(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        let mut out = [0.0; NUM_GROUPS];
        out.copy_from_slice(probs);
        Ok(Self { probs: out })
    }

    pub fn one_hot(group: usize) -> Result<Self> {
        if group >= NUM_GROUPS {
            return Err(Error::InvalidArgument(format!(
                "group index {group} outside 0..{NUM_GROUPS}"
            )));
        }
        let mut probs = [0.0; NUM_GROUPS];
        probs[group] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / NUM_GROUPS as f64; NUM_GROUPS],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Group indices ordered by descending probability, ties by ascending index.
    pub fn ranked(&self) -> [usize; NUM_GROUPS] {
        let mut order: [usize; NUM_GROUPS] = std::array::from_fn(|j| j);
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

/// Decoded output of one ensemble member, on the group-index scale `[0, 33]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ModelScore(f64);

impl ModelScore {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=(NUM_GROUPS - 1) as f64).contains(&value) {
            return Err(Error::InvariantViolation(format!(
                "model score {value} outside [0, {}]",
                NUM_GROUPS - 1
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Final age prediction in years.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AgeEstimate(f64);

impl AgeEstimate {
    pub fn years(self) -> f64 {
        self.0
    }
}

/// Expected value over the `k` most probable groups, without renormalising
/// the truncated mass. `k = 34` uses every group, `k = 1` only the arg-max.
pub fn decode_topk(p: &ProbVector, scheme: &GroupingScheme, k: usize) -> Result<ModelScore> {
    if !(1..=NUM_GROUPS).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={NUM_GROUPS}, got {k}"
        )));
    }
    let score: f64 = p
        .ranked()
        .iter()
        .take(k)
        .map(|&j| p.probs[j] * scheme.weight(j))
        .sum();
    // A sum that is 1 only within tolerance can overshoot the top index by a hair.
    Ok(ModelScore(score.clamp(0.0, (NUM_GROUPS - 1) as f64)))
}

/// Sums the three member scores and adds [`FUSION_BIAS`].
pub fn fuse(scores: &[ModelScore]) -> Result<AgeEstimate> {
    if scores.len() != SHIFTS.len() {
        return Err(Error::InvalidArgument(format!(
            "fusion needs exactly {} scores, got {}",
            SHIFTS.len(),
            scores.len()
        )));
    }
    let total: f64 = scores.iter().map(|s| s.0).sum::<f64>() + FUSION_BIAS;
    Ok(AgeEstimate(total.clamp(0.0, MAX_ESTIMATE)))
}

/// `1 - exp(-(x - mu)^2 / (2 sigma^2))`.
///
/// With `sigma == 0` the pointwise limit is used: 0 when `x` equals `mu`
/// (within 1e-9), 1 otherwise.
pub fn epsilon_error(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(x.is_finite() && mu.is_finite() && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon-error inputs must be finite: x={x}, mu={mu}, sigma={sigma}"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let diff = x - mu;
    if sigma == 0.0 {
        return Ok(if diff.abs() <= 1e-9 { 0.0 } else { 1.0 });
    }
    Ok(-(-(diff * diff) / (2.0 * sigma * sigma)).exp_m1())
}

/// Arithmetic mean of [`epsilon_error`] over `(x, mu, sigma)` triples.
pub fn mean_epsilon(entries: &[(f64, f64, f64)]) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::InvalidArgument(
            "mean epsilon-error of an empty list".into(),
        ));
    }
    let mut total = 0.0;
    for &(x, mu, sigma) in entries {
        total += epsilon_error(x, mu, sigma)?;
    }
    Ok(total / entries.len() as f64)
}
