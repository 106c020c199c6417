use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use age_ensemble::dataset::{self, plan_augmentation, Dataset, Split};
use age_ensemble::raster::{align_face, augment as augment_image, read_landmarks, RasterImage};
use age_ensemble::report::{self, predictions_to_csv, read_predictions, Prediction};
use age_ensemble::synth::{self, SyntheticConfig};
use age_ensemble::toymodel::{
    features_to_csv, read_features, train_ensemble, Ensemble, TrainConfig, TrainingSet,
};
use age_ensemble::GroupingScheme;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "AGE_ENSEMBLE_SEED";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Label CSVs are ingested on the fly; anything else is a dataset file.
fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv {
        dataset::ingest(path, Split::Train)?
    } else {
        Dataset::load(path)?
    })
}

pub fn ingest(labels: &Path, split: Split, out: Option<PathBuf>) -> CliResult {
    let d = dataset::ingest(labels, split)?;
    let out = out.unwrap_or_else(|| labels.with_extension("dataset.json"));
    d.save(&out)?;
    println!("{} records ({split}) -> {}", d.len(), out.display());
    Ok(())
}

pub fn stats(dataset: &Path, out: Option<&Path>) -> CliResult {
    let report = dataset::stats(&load_dataset(dataset)?)?;
    let csv = report.to_csv();
    match out {
        Some(path) => write(path, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn effective_seed(flag: u64) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("{SEED_ENV}=`{v}` is not a u64"))),
        Err(_) => Ok(flag),
    }
}

fn find_image(dir: &Path, id: &str) -> CliResult<PathBuf> {
    ["png", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Io(format!("{}: no {id}.png or {id}.ppm", dir.display())))
}

pub fn augment(dataset: &Path, images: &Path, seed: u64, cap: usize, out: &Path) -> CliResult {
    let d = load_dataset(dataset)?;
    let seed = effective_seed(seed)?;
    let plan = plan_augmentation(&d, seed, cap)?;
    create_dir(out)?;

    let mut ids: Vec<&str> = plan.entries().iter().map(|e| e.id.as_str()).collect();
    ids.dedup();
    let sources: HashMap<&str, RasterImage> = ids
        .par_iter()
        .map(|&id| Ok((id, RasterImage::load(&find_image(images, id)?)?)))
        .collect::<CliResult<_>>()?;

    plan.entries().par_iter().try_for_each(|e| -> CliResult {
        let s = &e.spec;
        let img = augment_image(
            &sources[e.id.as_str()],
            s.rotation_deg,
            s.zoom,
            s.deltas,
            s.crop_index,
        )?;
        img.save(&out.join(format!("{}_r{}.png", e.id, e.replica)))?;
        Ok(())
    })?;
    write(&out.join("plan.csv"), plan.to_csv())?;
    println!(
        "{} replicas from {} records (seed {seed}) -> {}",
        plan.len(),
        d.len(),
        out.display()
    );
    Ok(())
}

pub fn align(images: &Path, landmarks: &Path, out: &Path) -> CliResult {
    let rows = read_landmarks(landmarks)?;
    create_dir(out)?;
    rows.par_iter().try_for_each(|(id, lm)| -> CliResult {
        let img = RasterImage::load(&find_image(images, id)?)?;
        align_face(&img, lm)?.save(&out.join(format!("{id}.png")))?;
        Ok(())
    })?;
    println!("{} faces aligned -> {}", rows.len(), out.display());
    Ok(())
}

fn load_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: TrainConfig = toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(features: &Path, dataset: &Path, config: Option<&Path>, out: &Path) -> CliResult {
    let cfg = load_config(config)?;
    let d = load_dataset(dataset)?;
    let rows: HashMap<String, Vec<f64>> = read_features(features)?.into_iter().collect();
    let mut set = TrainingSet::default();
    for r in d.records() {
        let x = rows.get(&r.id).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: no features for `{}`",
                features.display(),
                r.id
            ))
        })?;
        set.features.push(x.clone());
        set.ages.push(r.mu);
    }
    if set.features.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no records",
            dataset.display()
        )));
    }
    let ensemble = train_ensemble(&set, &cfg)?;
    create_dir(out)?;
    ensemble.save(out)?;
    println!(
        "trained 3 members on {} samples -> {}",
        set.ages.len(),
        out.display()
    );
    Ok(())
}

pub fn predict(models: &Path, features: &Path, k: usize, out: &Path) -> CliResult {
    let ensemble = Ensemble::load(models)?;
    let rows = read_features(features)?;
    let preds = rows
        .iter()
        .map(|(id, x)| {
            let scores = ensemble.scores(x, k)?;
            Ok(Prediction {
                id: id.clone(),
                age: age_ensemble::fuse(&scores)?.years(),
                scores: Some(scores.map(|s| s.value())),
            })
        })
        .collect::<age_ensemble::Result<Vec<_>>>()?;
    write(out, predictions_to_csv(&preds))?;
    println!("{} predictions (k={k}) -> {}", preds.len(), out.display());
    Ok(())
}

pub fn evaluate(predictions: &Path, labels: &Path, out: &Path) -> CliResult {
    let preds = read_predictions(predictions)?;
    let report = report::evaluate(&preds, &load_dataset(labels)?)?;
    write(out, report.to_csv())?;
    println!(
        "mean epsilon {} over {} faces",
        age_ensemble::numfmt::sig12(report.mean_epsilon),
        report.count
    );
    Ok(())
}

pub fn confusion(predictions: &Path, labels: &Path, shift: u32, out: &Path) -> CliResult {
    let preds = read_predictions(predictions)?;
    let scheme = GroupingScheme::new(shift)?;
    let m = report::confusion(&preds, &load_dataset(labels)?, &scheme)?;
    write(out, m.to_csv())?;
    println!(
        "{} of {} on the diagonal (shift {shift})",
        m.trace(),
        m.total()
    );
    Ok(())
}

pub fn synth(n: usize, dim: usize, noise: f64, seed: u64, out: &Path) -> CliResult {
    let seed = effective_seed(seed)?;
    let samples = synth::generate(&SyntheticConfig {
        n,
        dim,
        noise,
        seed,
    })?;
    create_dir(out)?;
    let d = synth::to_dataset(&samples, Split::Train)?;
    write(&out.join("labels.csv"), d.to_label_csv())?;
    let rows: Vec<(String, Vec<f64>)> = samples.into_iter().map(|s| (s.id, s.features)).collect();
    write(&out.join("features.csv"), features_to_csv(&rows))?;
    println!("{n} samples -> {}", out.display());
    Ok(())
}
