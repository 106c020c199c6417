//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Set `LAP_TRAIN_LABELS` to a real training label CSV to enable the
//! dataset statistics check.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use age_ensemble::agecore::{mean_epsilon, NUM_GROUPS};
use age_ensemble::numfmt::sig12;
use age_ensemble::raster::{
    fit_similarity, five_crop, LandmarkSet, RasterImage, SimilarityTransform, CROP_SIZE,
};
use age_ensemble::synth::{generate, to_training_set, SyntheticConfig, SyntheticSample};
use age_ensemble::toymodel::{loss_and_grad, train_ensemble, Ensemble, SoftmaxModel, TrainConfig};
use age_ensemble::{decode_topk, encode_age, epsilon_error, fuse, GroupingScheme, ProbVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const BIN: &str = env!("CARGO_BIN_EXE_age-ensemble");

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed(budget: Option<Duration>, f: impl FnOnce() -> Check) -> (Outcome, Duration) {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let outcome = match result {
        Ok(detail) => match budget {
            Some(b) if elapsed > b => Outcome::Fail(format!("{detail}; over the {b:?} budget")),
            _ => Outcome::Pass(detail),
        },
        Err(e) => Outcome::Fail(e),
    };
    (outcome, elapsed)
}

fn metric_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mu: f64 = rng.random_range(0.0..=100.0);
        let sigma: f64 = rng.random_range(0.1..15.0);
        let x: f64 = rng.random_range(-10.0..=110.0);
        let closed = 1.0 - (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp();
        let got = epsilon_error(x, mu, sigma).map_err(|e| e.to_string())?;
        worst = worst.max((got - closed).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    let examples = [
        ((30.0, 30.0, 4.0), 0.0),
        ((34.0, 30.0, 4.0), 1.0 - (-0.5f64).exp()),
        ((38.0, 30.0, 4.0), 1.0 - (-2.0f64).exp()),
    ];
    for ((x, mu, sigma), want) in examples {
        let got = epsilon_error(x, mu, sigma).map_err(|e| e.to_string())?;
        ensure(sig12(got) == sig12(want), || {
            format!(
                "epsilon({x}, {mu}, {sigma}) = {} not {}",
                sig12(got),
                sig12(want)
            )
        })?;
    }
    Ok(format!(
        "1000 triples, max deviation {worst:e}; 3 worked examples to 12 digits"
    ))
}

fn round_trip() -> Check {
    let schemes = GroupingScheme::ensemble();
    let mut worst_low = 0.0f64;
    for age in 0..=100u32 {
        for k in 1..=NUM_GROUPS {
            let mut scores = Vec::with_capacity(3);
            for s in &schemes {
                let g = encode_age(age as f64, s).map_err(|e| e.to_string())?;
                let p = ProbVector::one_hot(g).map_err(|e| e.to_string())?;
                scores.push(decode_topk(&p, s, k).map_err(|e| e.to_string())?);
            }
            let est = fuse(&scores).map_err(|e| e.to_string())?.years();
            if age >= 2 {
                ensure(est == age as f64, || format!("age {age}, k={k} -> {est}"))?;
            } else {
                worst_low = worst_low.max((est - age as f64).abs());
            }
        }
    }
    ensure(worst_low <= 2.0, || format!("ages 0-1 off by {worst_low}"))?;
    Ok(format!(
        "ages 2-100 exact for k=1..34; ages 0-1 within {worst_low}"
    ))
}

fn brute_force_topk(p: &[f64], k: usize) -> f64 {
    let mut pairs: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    pairs[..k].iter().map(|&(v, j)| v * j as f64).sum()
}

fn decode_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_dot = 0.0f64;
    let mut worst_k = 0.0f64;
    for i in 0..10_000 {
        // Every fourth vector is drawn from a few levels so ties are common.
        let raw: Vec<f64> = (0..NUM_GROUPS)
            .map(|_| {
                if i % 4 == 0 {
                    rng.random_range(0..4u8) as f64
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            continue;
        }
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let pv = ProbVector::new(&p).map_err(|e| e.to_string())?;
        let scheme = &GroupingScheme::ensemble()[i % 3];
        let dot: f64 = p.iter().enumerate().map(|(j, v)| v * j as f64).sum();
        let full = decode_topk(&pv, scheme, NUM_GROUPS).map_err(|e| e.to_string())?;
        worst_dot = worst_dot.max((full.value() - dot).abs());
        for k in 1..=NUM_GROUPS {
            let m = decode_topk(&pv, scheme, k)
                .map_err(|e| e.to_string())?
                .value();
            worst_k = worst_k.max((m - brute_force_topk(&p, k)).abs());
        }
    }
    ensure(worst_dot <= 1e-12, || {
        format!("k=34 vs dot product {worst_dot:e}")
    })?;
    ensure(worst_k <= 1e-12, || {
        format!("top-k vs brute force {worst_k:e}")
    })?;
    Ok(format!(
        "10000 vectors; dot {worst_dot:e}, brute force over all k {worst_k:e}"
    ))
}

fn held_out_epsilon(
    ensemble: &Ensemble,
    samples: &[SyntheticSample],
    k: usize,
) -> Result<f64, String> {
    let triples = samples
        .iter()
        .map(|s| Ok((ensemble.predict(&s.features, k)?.years(), s.age, s.sigma)))
        .collect::<age_ensemble::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    mean_epsilon(&triples).map_err(|e| e.to_string())
}

fn synthetic(n: usize, noise: f64, seed: u64) -> Result<Vec<SyntheticSample>, String> {
    generate(&SyntheticConfig {
        n,
        dim: 4,
        noise,
        seed,
    })
    .map_err(|e| e.to_string())
}

fn ordering() -> Check {
    let mut held = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let train = synthetic(2000, 0.02, seed)?;
        let test = synthetic(1000, 0.02, seed + 100)?;
        let cfg = TrainConfig {
            seed,
            ..Default::default()
        };
        let ensemble = train_ensemble(&to_training_set(&train), &cfg).map_err(|e| e.to_string())?;
        let e5 = held_out_epsilon(&ensemble, &test, 5)?;
        let e1 = held_out_epsilon(&ensemble, &test, 1)?;
        if e5 <= e1 {
            held += 1;
        }
        lines.push(format!("{e5:.4}<={e1:.4}"));
    }
    let detail = format!("k=5 <= k=1 for {held}/5 seeds [{}]", lines.join(" "));
    ensure(held >= 4, || detail.clone())?;
    Ok(detail)
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=10usize);
        let n = rng.random_range(1..=8usize);
        let l2 = if rng.random::<bool>() {
            rng.random_range(0.0..0.5)
        } else {
            0.0
        };
        let mut gauss = || rng.sample::<f64, _>(StandardNormal);
        let weights: Vec<f64> = (0..NUM_GROUPS * dim).map(|_| 0.5 * gauss()).collect();
        let bias: [f64; NUM_GROUPS] = std::array::from_fn(|_| 0.5 * gauss());
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| gauss()).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..NUM_GROUPS)).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| x.as_slice()).zip(labels).collect();

        let loss = |w: Vec<f64>, b: [f64; NUM_GROUPS]| -> Result<f64, String> {
            let m = SoftmaxModel::from_parts(dim, w, b).map_err(|e| e.to_string())?;
            Ok(loss_and_grad(&m, &batch, l2).map_err(|e| e.to_string())?.0)
        };
        let model =
            SoftmaxModel::from_parts(dim, weights.clone(), bias).map_err(|e| e.to_string())?;
        let (_, grad) = loss_and_grad(&model, &batch, l2).map_err(|e| e.to_string())?;

        let mut analytic = grad.weights.clone();
        analytic.extend_from_slice(&grad.bias);
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..weights.len() {
            let (mut up, mut down) = (weights.clone(), weights.clone());
            up[i] += h;
            down[i] -= h;
            numeric.push((loss(up, bias)? - loss(down, bias)?) / (2.0 * h));
        }
        for j in 0..NUM_GROUPS {
            let (mut up, mut down) = (bias, bias);
            up[j] += h;
            down[j] -= h;
            numeric.push((loss(weights.clone(), up)? - loss(weights.clone(), down)?) / (2.0 * h));
        }
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&mut analytic.iter().zip(&numeric).map(|(a, b)| a - b));
        let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
        worst = worst.max(diff / scale.max(1e-12));
    }
    ensure(worst <= 1e-4, || format!("relative error {worst:e}"))?;
    Ok(format!("100 configurations, max relative error {worst:e}"))
}

fn end_to_end() -> Check {
    let train = synthetic(2000, 0.0, 10)?;
    let test = synthetic(1000, 0.0, 11)?;
    let bayes: Vec<(f64, f64, f64)> = test.iter().map(|s| (s.age, s.age, s.sigma)).collect();
    let floor = mean_epsilon(&bayes).map_err(|e| e.to_string())?;
    let ensemble = train_ensemble(&to_training_set(&train), &TrainConfig::default())
        .map_err(|e| e.to_string())?;
    let eps = held_out_epsilon(&ensemble, &test, 5)?;
    let detail = format!("held-out mean epsilon {eps:.4} (Bayes floor {floor})");
    ensure(eps <= 0.20, || detail.clone())?;
    Ok(detail)
}

fn geometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut fitted = 0;
    while fitted < 1000 {
        let coords: [f64; 10] = std::array::from_fn(|_| rng.random_range(0.0..256.0));
        let src = LandmarkSet::from_coords(coords).map_err(|e| e.to_string())?;
        let scale = rng.random_range(0.2..5.0);
        let rotation = rng.random_range(-3.1..3.1);
        let (tx, ty) = (
            rng.random_range(-300.0..300.0),
            rng.random_range(-300.0..300.0),
        );
        let t = SimilarityTransform::new(scale, rotation, (tx, ty)).map_err(|e| e.to_string())?;
        let Ok(fit) = fit_similarity(&src, &src.map(&t)) else {
            continue;
        };
        fitted += 1;
        let (fx, fy) = fit.translation();
        for err in [
            fit.scale() - scale,
            fit.rotation() - rotation,
            fx - tx,
            fy - ty,
        ] {
            worst = worst.max(err.abs());
        }
    }
    ensure(worst <= 1e-9, || format!("parameter error {worst:e}"))?;

    let img = RasterImage::from_fn(256, 256, |x, y| {
        [x as u8, y as u8, (x / 64 + 4 * (y / 64)) as u8]
    })
    .map_err(|e| e.to_string())?;
    let crops = five_crop(&img).map_err(|e| e.to_string())?;
    let margin = 256 - CROP_SIZE;
    let lattice = [
        (0, 0),
        (margin, 0),
        (0, margin),
        (margin, margin),
        (margin / 2, margin / 2),
    ];
    for (crop, (ox, oy)) in crops.iter().zip(lattice) {
        ensure((crop.width(), crop.height()) == (224, 224), || {
            "crop is not 224x224".into()
        })?;
        for y in 0..CROP_SIZE {
            for x in 0..CROP_SIZE {
                ensure(crop.pixel(x, y) == img.pixel(x + ox, y + oy), || {
                    format!("crop at ({ox},{oy}) differs at ({x},{y})")
                })?;
            }
        }
    }
    Ok(format!(
        "1000 transforms, max parameter error {worst:e}; 5 crop offsets match"
    ))
}

fn run_bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("AGE_ENSEMBLE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
            Ok((p.file_name().unwrap().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<Vec<_>, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let p = |rel: &str| d.join(rel).to_string_lossy().into_owned();
    std::fs::create_dir_all(d.join("img")).map_err(|e| e.to_string())?;
    let mut labels = String::from("id,mean,stddev\n");
    for i in 0..6u32 {
        let img = RasterImage::from_fn(80, 72, |x, y| {
            [(x * 3) as u8, (y * 3 + i * 10) as u8, (x ^ y) as u8]
        })
        .map_err(|e| e.to_string())?;
        img.save(&d.join(format!("img/f{i}.png")))
            .map_err(|e| e.to_string())?;
        labels.push_str(&format!(
            "f{i},{},3\n",
            [25.0, 25.3, 25.1, 70.0, 40.2, 40.0][i as usize]
        ));
    }
    std::fs::write(d.join("labels.csv"), labels).map_err(|e| e.to_string())?;
    run_bin(&["synth", "--n", "500", "--noise", "0.02", "--out", &p("s")])?;

    for run in ["a", "b"] {
        run_bin(&[
            "augment",
            "--dataset",
            &p("labels.csv"),
            "--images",
            &p("img"),
            "--seed",
            "42",
            "--cap",
            "3",
            "--out",
            &p(&format!("aug_{run}")),
        ])?;
        run_bin(&[
            "train",
            "--features",
            &p("s/features.csv"),
            "--dataset",
            &p("s/labels.csv"),
            "--out",
            &p(&format!("model_{run}")),
        ])?;
    }
    let aug = dir_bytes(&d.join("aug_a"))?;
    ensure(aug.len() > 1, || "augment wrote no replicas".into())?;
    ensure(aug == dir_bytes(&d.join("aug_b"))?, || {
        "augment outputs differ".into()
    })?;
    let models = dir_bytes(&d.join("model_a"))?;
    ensure(models.len() == 3, || {
        "train did not write 3 checkpoints".into()
    })?;
    ensure(models == dir_bytes(&d.join("model_b"))?, || {
        "train outputs differ".into()
    })?;
    Ok(format!(
        "augment ({} files) and train (3 checkpoints) byte-identical",
        aug.len()
    ))
}

fn lap_stats(path: &Path) -> Check {
    let out = Command::new(BIN)
        .args(["stats", "--dataset"])
        .arg(path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        String::from_utf8_lossy(&out.stderr).trim().to_string()
    })?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let all = stdout
        .lines()
        .find_map(|l| l.strip_prefix("all,"))
        .ok_or("no summary row")?;
    let (count, sigma) = all.split_once(',').ok_or("malformed summary row")?;
    let count: usize = count.parse().map_err(|_| "bad count")?;
    let sigma: f64 = sigma.parse().map_err(|_| "bad mean sigma")?;
    let detail = format!("count {count}, mean sigma {sigma:.4}");
    ensure(count == 4113 && (sigma - 4.012).abs() <= 0.01, || {
        detail.clone()
    })?;
    Ok(detail)
}

fn main() -> ExitCode {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let criteria: Vec<Criterion> = vec![
        ("metric exactness", secs(1), metric_exactness),
        ("round-trip identity", secs(1), round_trip),
        ("decode oracle equivalence", secs(5), decode_oracle),
        ("k=5 vs k=1 ordering", secs(60), ordering),
        ("gradient check", secs(5), gradient_check),
        ("end-to-end held-out error", secs(120), end_to_end),
        ("geometry", secs(5), geometry),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome, elapsed: Duration| {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name} ({:.2} s): {detail}", elapsed.as_secs_f64());
    };
    for (name, budget, f) in criteria {
        let (outcome, elapsed) = timed(budget, f);
        report(name, outcome, elapsed);
    }
    match std::env::var_os("LAP_TRAIN_LABELS") {
        Some(path) => {
            let (outcome, elapsed) = timed(None, || lap_stats(Path::new(&path)));
            report("training label statistics", outcome, elapsed);
        }
        None => report(
            "training label statistics",
            Outcome::Skip("LAP_TRAIN_LABELS not set".into()),
            Duration::ZERO,
        ),
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
