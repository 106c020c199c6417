//! Adaptive augmentation planning.
//!
//! Each integer-age bin is topped up toward the most populated bin, but never
//! beyond `cap` times its original size. Replicas are handed out round-robin
//! over the bin's images, and the transform parameters of every replica come
//! from a PRNG keyed by `(seed, id, replica)` so a plan does not depend on
//! iteration order or platform.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numfmt::sig12;
use crate::raster::{CROP_OFFSETS, MAX_ROTATION_DEG};

pub const PLAN_HEADER: &str = "id,replica,rotation_deg,zoom,dr,dg,db,crop_index,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationRanges {
    /// Rotation is drawn from `[-max_rotation_deg, max_rotation_deg]`.
    pub max_rotation_deg: f64,
    pub min_zoom: f64,
    pub max_zoom: f64,
    /// Per-channel shift is drawn from `[-max_channel_shift, max_channel_shift]`.
    pub max_channel_shift: i16,
}

impl Default for AugmentationRanges {
    fn default() -> Self {
        Self {
            max_rotation_deg: 10.0,
            min_zoom: 0.9,
            max_zoom: 1.1,
            max_channel_shift: 10,
        }
    }
}

impl AugmentationRanges {
    fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_ROTATION_DEG).contains(&self.max_rotation_deg) {
            return Err(Error::InvalidArgument(format!(
                "rotation range must be within [0, {MAX_ROTATION_DEG}] degrees"
            )));
        }
        if !(self.min_zoom > 0.0 && self.min_zoom <= self.max_zoom && self.max_zoom.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "zoom range [{}, {}] must be positive and ordered",
                self.min_zoom, self.max_zoom
            )));
        }
        if !(0..=255).contains(&self.max_channel_shift) {
            return Err(Error::InvalidArgument(
                "channel shift range must be 0..=255".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub rotation_deg: f64,
    pub zoom: f64,
    pub deltas: [i16; 3],
    pub crop_index: usize,
    /// Seed the parameters were drawn from.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub id: String,
    pub replica: usize,
    pub spec: TransformSpec,
}

/// Replicas to synthesize, ordered by age bin, then source order, then replica.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentationPlan {
    entries: Vec<PlanEntry>,
}

impl AugmentationPlan {
    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Transform specs for one source image.
    pub fn replicas_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TransformSpec> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.id == id)
            .map(|e| &e.spec)
    }

    /// Line-delimited records with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(PLAN_HEADER);
        out.push('\n');
        for e in &self.entries {
            let s = &e.spec;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.id,
                e.replica,
                sig12(s.rotation_deg),
                sig12(s.zoom),
                s.deltas[0],
                s.deltas[1],
                s.deltas[2],
                s.crop_index,
                s.seed
            ));
        }
        out
    }
}

/// Per-replica seed: the first 8 bytes of SHA-256 over `(seed, id, replica)`.
fn replica_seed(seed: u64, id: &str, replica: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((id.len() as u64).to_le_bytes());
    h.update(id.as_bytes());
    h.update((replica as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn draw_spec(seed: u64, ranges: &AugmentationRanges) -> TransformSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = ranges.max_rotation_deg;
    let c = ranges.max_channel_shift;
    TransformSpec {
        rotation_deg: rng.random_range(-r..=r),
        zoom: rng.random_range(ranges.min_zoom..=ranges.max_zoom),
        deltas: std::array::from_fn(|_| rng.random_range(-c..=c)),
        crop_index: rng.random_range(0..CROP_OFFSETS.len()),
        seed,
    }
}

pub fn plan_augmentation(d: &Dataset, seed: u64, cap: usize) -> Result<AugmentationPlan> {
    plan_augmentation_with(d, seed, cap, &AugmentationRanges::default())
}

pub fn plan_augmentation_with(
    d: &Dataset,
    seed: u64,
    cap: usize,
    ranges: &AugmentationRanges,
) -> Result<AugmentationPlan> {
    if cap < 1 {
        return Err(Error::InvalidArgument(
            "replication cap must be at least 1".into(),
        ));
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot plan augmentation of an empty dataset".into(),
        ));
    }
    ranges.validate()?;

    let mut bins: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for r in d.records() {
        bins.entry(r.age_bin()).or_default().push(&r.id);
    }
    let largest = bins.values().map(Vec::len).max().unwrap_or(0);

    let mut entries = Vec::new();
    for ids in bins.values() {
        let count = ids.len();
        let target = largest.min(cap.saturating_mul(count));
        let extra = target - count;
        // Round-robin: replica t goes to image t mod count as its (t / count)-th copy.
        let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); count];
        for t in 0..extra {
            assigned[t % count].push(t / count);
        }
        for (id, replicas) in ids.iter().zip(assigned) {
            for replica in replicas {
                let s = replica_seed(seed, id, replica);
                entries.push(PlanEntry {
                    id: id.to_string(),
                    replica,
                    spec: draw_spec(s, ranges),
                });
            }
        }
    }
    Ok(AugmentationPlan { entries })
}
