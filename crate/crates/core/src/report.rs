//! Prediction files, epsilon-error reports and group confusion matrices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::agecore::{encode_age, epsilon_error, GroupingScheme, NUM_GROUPS};
use crate::dataset::{AnnotatedFace, Dataset};
use crate::error::{Error, Result};
use crate::numfmt::sig12;

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub age: f64,
    /// Decoded member scores in shift order, when known.
    pub scores: Option<[f64; 3]>,
}

pub fn predictions_to_csv(preds: &[Prediction]) -> String {
    let mut out = String::from("id,age,m0,m1,m2\n");
    for p in preds {
        out.push_str(&p.id);
        out.push(',');
        out.push_str(&sig12(p.age));
        match p.scores {
            Some(s) => s.iter().for_each(|v| {
                out.push(',');
                out.push_str(&sig12(*v));
            }),
            None => out.push_str(",,,"),
        }
        out.push('\n');
    }
    out
}

/// Reads a predictions CSV. Only the `id` and `age` columns are required.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::schema(path, e.to_string()))?
        .clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (id_col, age_col) = match (col("id"), col("age")) {
        (Some(i), Some(a)) => (i, a),
        _ => {
            return Err(Error::schema(
                path,
                "predictions need `id` and `age` columns",
            ))
        }
    };
    let score_cols = match (col("m0"), col("m1"), col("m2")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |msg: String| Error::schema(path, format!("line {line}: {msg}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        let id = row.get(id_col).unwrap_or_default().to_string();
        let age: f64 = row
            .get(age_col)
            .and_then(|v| v.parse().ok())
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad("age is not a finite number".into()))?;
        if !seen.insert(id.clone()) {
            return Err(bad(format!("duplicate id `{id}`")));
        }
        let scores = score_cols.and_then(|cols| {
            let parsed: Option<Vec<f64>> = cols.iter().map(|&c| row.get(c)?.parse().ok()).collect();
            parsed.map(|v| [v[0], v[1], v[2]])
        });
        out.push(Prediction { id, age, scores });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub id: String,
    pub prediction: f64,
    pub mu: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinError {
    pub age: u32,
    pub count: usize,
    pub mean_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub records: Vec<RecordError>,
    pub bins: Vec<BinError>,
    pub mean_epsilon: f64,
    pub count: usize,
}

impl EvaluationReport {
    /// Long format: one `record` row per prediction, one `bin` row per
    /// rounded label age, and a closing `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,key,count,epsilon\n");
        for r in &self.records {
            out.push_str(&format!("record,{},1,{}\n", r.id, sig12(r.epsilon)));
        }
        for b in &self.bins {
            out.push_str(&format!(
                "bin,{},{},{}\n",
                b.age,
                b.count,
                sig12(b.mean_epsilon)
            ));
        }
        out.push_str(&format!(
            "all,all,{},{}\n",
            self.count,
            sig12(self.mean_epsilon)
        ));
        out
    }
}

struct LabelIndex<'a>(HashMap<&'a str, &'a AnnotatedFace>);

impl<'a> LabelIndex<'a> {
    fn new(labels: &'a Dataset) -> Self {
        Self(
            labels
                .records()
                .iter()
                .map(|r| (r.id.as_str(), r))
                .collect(),
        )
    }

    fn get(&self, id: &str) -> Result<&'a AnnotatedFace> {
        self.0
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvariantViolation(format!("prediction `{id}` has no label")))
    }
}

/// Scores each prediction against its label with the epsilon-error.
pub fn evaluate(preds: &[Prediction], labels: &Dataset) -> Result<EvaluationReport> {
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }
    let index = LabelIndex::new(labels);
    let mut records = Vec::with_capacity(preds.len());
    let mut bins: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for p in preds {
        let face = index.get(&p.id)?;
        let epsilon = epsilon_error(p.age, face.mu, face.sigma)?;
        let bin = bins.entry(face.age_bin()).or_default();
        bin.0 += 1;
        bin.1 += epsilon;
        records.push(RecordError {
            id: p.id.clone(),
            prediction: p.age,
            mu: face.mu,
            sigma: face.sigma,
            epsilon,
        });
    }
    let mean_epsilon = records.iter().map(|r| r.epsilon).sum::<f64>() / records.len() as f64;
    Ok(EvaluationReport {
        count: records.len(),
        records,
        bins: bins
            .into_iter()
            .map(|(age, (count, sum))| BinError {
                age,
                count,
                mean_epsilon: sum / count as f64,
            })
            .collect(),
        mean_epsilon,
    })
}

/// Counts of (true group, predicted group) under one grouping scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    counts: Vec<[u64; NUM_GROUPS]>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self {
            counts: vec![[0; NUM_GROUPS]; NUM_GROUPS],
        }
    }
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_GROUPS).map(|g| self.counts[g][g]).sum()
    }

    pub fn row_sums(&self) -> [u64; NUM_GROUPS] {
        std::array::from_fn(|g| self.counts[g].iter().sum())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_group");
        for g in 0..NUM_GROUPS {
            out.push_str(&format!(",{g}"));
        }
        out.push('\n');
        for (g, row) in self.counts.iter().enumerate() {
            out.push_str(&g.to_string());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Rows are the label's group, columns the predicted age's group.
pub fn confusion(
    preds: &[Prediction],
    labels: &Dataset,
    scheme: &GroupingScheme,
) -> Result<ConfusionMatrix> {
    let index = LabelIndex::new(labels);
    let mut m = ConfusionMatrix::default();
    for p in preds {
        let face = index.get(&p.id)?;
        let truth = encode_age(face.mu, scheme)?;
        let predicted = encode_age(p.age, scheme)?;
        m.counts[truth][predicted] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn labels() -> Dataset {
        Dataset::new(
            Split::Validation,
            vec![
                AnnotatedFace::new("a", 30.0, 4.0).unwrap(),
                AnnotatedFace::new("b", 30.2, 4.0).unwrap(),
                AnnotatedFace::new("c", 70.0, 2.0).unwrap(),
            ],
        )
        .unwrap()
    }

    fn pred(id: &str, age: f64) -> Prediction {
        Prediction {
            id: id.into(),
            age,
            scores: None,
        }
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let d = labels();
        let preds: Vec<_> = d.records().iter().map(|r| pred(&r.id, r.mu)).collect();
        let rep = evaluate(&preds, &d).unwrap();
        assert_eq!(rep.mean_epsilon, 0.0);
        assert_eq!(rep.count, 3);
        assert_eq!(rep.bins.len(), 2);
    }

    #[test]
    fn report_values() {
        let d = labels();
        let rep = evaluate(&[pred("a", 34.0), pred("c", 70.0)], &d).unwrap();
        assert!((rep.mean_epsilon - 0.1967346701436833).abs() < 1e-15);
        assert!(rep.to_csv().ends_with("all,all,2,0.196734670144\n"));
        assert!(evaluate(&[pred("zz", 1.0)], &d).is_err());
        assert!(evaluate(&[], &d).is_err());
    }

    #[test]
    fn confusion_perfect_is_diagonal() {
        let d = labels();
        let preds: Vec<_> = d.records().iter().map(|r| pred(&r.id, r.mu)).collect();
        for s in GroupingScheme::ensemble() {
            let m = confusion(&preds, &d, &s).unwrap();
            assert_eq!(m.trace(), 3);
            assert_eq!(m.total(), 3);
        }
        let m = confusion(&preds, &d, &GroupingScheme::new(0).unwrap()).unwrap();
        assert_eq!(m.get(10, 10), 2);
        assert_eq!(m.row_sums()[23], 1);
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 35);
        assert!(csv.lines().all(|l| l.split(',').count() == 35));
    }

    #[test]
    fn prediction_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let preds = vec![
            Prediction {
                id: "a".into(),
                age: 25.5,
                scores: Some([8.0, 8.0, 7.5]),
            },
            pred("b", 40.0),
        ];
        std::fs::write(&path, predictions_to_csv(&preds)).unwrap();
        let back = read_predictions(&path).unwrap();
        assert_eq!(back[0], preds[0]);
        assert_eq!(back[1].age, 40.0);

        std::fs::write(&path, "id,years\na,3\n").unwrap();
        assert!(matches!(read_predictions(&path), Err(Error::Schema { .. })));
        std::fs::write(&path, "id,age\na,3\na,4\n").unwrap();
        assert!(read_predictions(&path).is_err());
    }
}
