//! Annotated label sets: ingestion, distribution statistics, augmentation
//! planning and label derivations.

mod plan;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agecore::{encode_age, GroupingScheme, MAX_AGE};
use crate::error::{Error, Result};
use crate::numfmt::sig12;
use crate::raster::LandmarkSet;

pub use self::plan::{
    plan_augmentation, plan_augmentation_with, AugmentationPlan, AugmentationRanges, PlanEntry,
    TransformSpec, PLAN_HEADER,
};

pub const LABEL_HEADER: [&str; 3] = ["id", "mean", "stddev"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split `{other}`, expected train, val or test"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        })
    }
}

/// One labelled face: annotator mean and standard deviation in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFace {
    pub id: String,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<LandmarkSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl AnnotatedFace {
    pub fn new(id: impl Into<String>, mu: f64, sigma: f64) -> Result<Self> {
        let face = Self {
            id: id.into(),
            mu,
            sigma,
            landmarks: None,
            features: None,
        };
        face.validate()?;
        Ok(face)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_AGE).contains(&self.mu) {
            return Err(Error::InvariantViolation(format!(
                "`{}`: mean age {} outside [0, 100]",
                self.id, self.mu
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "`{}`: stddev {} must be a nonnegative number",
                self.id, self.sigma
            )));
        }
        Ok(())
    }

    /// Integer-year bin used for histograms and augmentation planning.
    pub fn age_bin(&self) -> u32 {
        self.mu.round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    split: Split,
    records: Vec<AnnotatedFace>,
}

impl Dataset {
    pub fn new(split: Split, records: Vec<AnnotatedFace>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if let Some(first) = seen.insert(r.id.as_str(), i) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate id `{}` at records {first} and {i}",
                    r.id
                )));
            }
        }
        Ok(Self { split, records })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn records(&self) -> &[AnnotatedFace] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedFace> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Writes the label CSV (`id,mean,stddev`).
    pub fn to_label_csv(&self) -> String {
        let mut out = LABEL_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.id, sig12(r.mu), sig12(r.sigma)));
        }
        out
    }

    /// Validated dataset file (JSON).
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("dataset serializes");
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Dataset =
            serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        Dataset::new(raw.split, raw.records).map_err(|e| Error::schema(path, e.to_string()))
    }
}

/// Parses a label CSV with header `id,mean,stddev`.
///
/// Rows are rejected with their line number (the header is line 1) when a
/// field is missing or unparsable, the mean is outside `[0, 100]`, the
/// stddev is negative, or the id repeats.
pub fn ingest(path: &Path, split: Split) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::schema(path, e.to_string()))?
        .clone();
    if header.iter().ne(LABEL_HEADER) {
        return Err(Error::schema(
            path,
            format!(
                "expected header `id,mean,stddev`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut records = Vec::new();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |msg: String| Error::schema(path, format!("line {line}: {msg}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        let mu: f64 = row[1]
            .parse()
            .map_err(|_| bad(format!("mean `{}` is not a number", &row[1])))?;
        let sigma: f64 = row[2]
            .parse()
            .map_err(|_| bad(format!("stddev `{}` is not a number", &row[2])))?;
        let face = AnnotatedFace::new(id.clone(), mu, sigma).map_err(|e| bad(e.to_string()))?;
        if let Some(first) = lines.insert(id.clone(), line) {
            return Err(bad(format!("duplicate id `{id}` (first on line {first})")));
        }
        records.push(face);
    }
    Dataset::new(split, records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeBin {
    pub age: u32,
    pub count: usize,
    pub mean_sigma: f64,
}

/// Histogram of rounded mean ages with the average annotator stddev per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub bins: Vec<AgeBin>,
    pub count: usize,
    pub mean_sigma: f64,
}

impl StatsReport {
    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        self.bins.iter().map(|b| (b.age, b.count)).collect()
    }

    /// `age,count,mean_sigma` rows, then a closing `all` row with the totals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("age,count,mean_sigma\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", b.age, b.count, sig12(b.mean_sigma)));
        }
        out.push_str(&format!("all,{},{}\n", self.count, sig12(self.mean_sigma)));
        out
    }
}

pub fn stats(d: &Dataset) -> Result<StatsReport> {
    if d.is_empty() {
        return Err(Error::InvalidArgument(
            "statistics of an empty dataset".into(),
        ));
    }
    let mut bins: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for r in d.records() {
        let e = bins.entry(r.age_bin()).or_default();
        e.0 += 1;
        e.1 += r.sigma;
    }
    let total: f64 = d.records().iter().map(|r| r.sigma).sum();
    Ok(StatsReport {
        bins: bins
            .into_iter()
            .map(|(age, (count, sum))| AgeBin {
                age,
                count,
                mean_sigma: sum / count as f64,
            })
            .collect(),
        count: d.len(),
        mean_sigma: total / d.len() as f64,
    })
}

/// Integer ages in `[0, 100]` within one stddev of the mean, always
/// including the rounded mean.
pub fn multilabel_targets(mu: f64, sigma: f64) -> Result<RangeInclusive<u32>> {
    if !mu.is_finite() {
        return Err(Error::InvalidInput(format!(
            "mean age must be finite, got {mu}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "stddev must be nonnegative, got {sigma}"
        )));
    }
    let centre = mu.round().clamp(0.0, MAX_AGE);
    let lo = (mu - sigma).ceil().clamp(0.0, MAX_AGE).min(centre);
    let hi = (mu + sigma).floor().clamp(0.0, MAX_AGE).max(centre);
    Ok(lo as u32..=hi as u32)
}

/// Group index of every record's mean age under `scheme`.
pub fn group_labels(d: &Dataset, scheme: &GroupingScheme) -> Vec<(String, usize)> {
    d.records()
        .iter()
        .map(|r| {
            let g = encode_age(r.mu, scheme).expect("dataset ages are finite");
            (r.id.clone(), g)
        })
        .collect()
}
