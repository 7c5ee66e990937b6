//! The four harness commands and the evaluation pipeline behind them.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DenoiserChoice, ExperimentConfig, SweepAxis};
use super::dataset::{load_or_generate, stream, write_dataset, Dataset, Record};
use super::manifest::{sha256_hex, OutputDir, RunManifest, TripletRecord, WallTime, ARTIFACT_VERSION};
use super::pgm;
use crate::denoiser::{
    save_weights, train, write_weights, AnalyticDenoiser, Conditioning, Denoiser, TinyDenoiser,
    TinyDenoiserWeights, TrainingSample, BASE_CHANNELS,
};
use crate::editing::{edit, EditConfig, Method, Triplet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{
    dice, extract_features_with, frechet_distance, healthy_tissue_mae, indirect_effect_error,
    segment_lesion, FeatureProjection,
};
use crate::morphology::{dilate, Mask};
use crate::phantom::{ConditionalPrior, ContextPrior};
use crate::schedule::NoiseSchedule;

const TAG_PAIR_MASK: u64 = 4;
const TAG_PAIR_PRIOR: u64 = 5;
const TAG_EDIT: u64 = 6;
const TAG_INIT: u64 = 7;
const TAG_TRAIN: u64 = 8;

pub const PAIRING: &str = "without_replacement";

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

fn base_manifest(command: &str, config: &ExperimentConfig) -> RunManifest {
    let text = config.to_text();
    RunManifest {
        command: command.into(),
        artifact_version: ARTIFACT_VERSION.into(),
        config_hash: sha256_hex(text.as_bytes()),
        config: text,
        seeds: config.seeds.clone(),
        pairing: PAIRING.into(),
        projection_seed: config.feature_seed,
        triplets: Vec::new(),
        metrics: Vec::new(),
        files: Vec::new(),
        wall_times: Vec::new(),
        fingerprint: String::new(),
    }
}

fn finish(out: OutputDir, mut manifest: RunManifest) -> Result<RunManifest> {
    let path = out.root().join("manifest.json");
    manifest.files = out.into_files();
    let manifest = manifest.seal();
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Writes the dataset for the first configured seed.
pub fn cmd_generate_dataset(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let seed = config.seeds[0];
    let pool = thread_pool(config.threads)?;
    let ds = pool.install(|| super::dataset::generate_dataset(config, seed))?;
    let mut out = OutputDir::create(out_dir)?;
    write_dataset(&mut out, "", &ds, &config.to_text())?;
    let mut manifest = base_manifest("generate-dataset", config);
    manifest.seeds = vec![seed];
    manifest.wall_times.push(WallTime {
        stage: "total".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    finish(out, manifest)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub denoiser: TinyDenoiserWeights,
    pub losses: Vec<f64>,
    pub palette: Option<(TinyDenoiserWeights, Vec<f64>)>,
    pub manifest: RunManifest,
}

fn train_one(
    samples: &[TrainingSample],
    channels: usize,
    tag_offset: u64,
    config: &ExperimentConfig,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<(TinyDenoiserWeights, Vec<f64>)> {
    let init = TinyDenoiserWeights::init(
        channels,
        config.hidden,
        config.embed_dim,
        schedule.steps(),
        &mut stream(seed, TAG_INIT, tag_offset),
    );
    let outcome = train(
        init,
        samples,
        schedule,
        &config.train,
        &mut stream(seed, TAG_TRAIN, tag_offset),
    )?;
    Ok((outcome.weights, outcome.epoch_losses))
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

fn weight_bytes(w: &TinyDenoiserWeights) -> Vec<u8> {
    let mut buf = Vec::new();
    write_weights(w, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Trains the mask-conditioned denoiser (and, with `train.palette`, the
/// inpainting variant) on the train split.
pub fn cmd_train(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainReport> {
    config.validate()?;
    let start = Instant::now();
    let seed = config.seeds[0];
    let schedule = config.schedule()?;
    let ds = load_or_generate(config, seed)?;
    if ds.train.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let samples: Vec<TrainingSample> = ds
        .train
        .iter()
        .map(|r| TrainingSample {
            x0: r.image.clone(),
            cond: Conditioning::new(r.brain.clone(), r.pathology.clone()),
        })
        .collect();
    let (weights, losses) = train_one(&samples, BASE_CHANNELS, 0, config, &schedule, seed)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write("denoiser.cfd", &weight_bytes(&weights))?;
    out.write("loss.csv", loss_csv(&losses).as_bytes())?;

    let palette = if config.train_palette {
        let samples = ds
            .train
            .iter()
            .map(|r| {
                let m = dilate(&r.pathology, config.palette_k)?;
                Ok(TrainingSample {
                    x0: r.image.clone(),
                    cond: Conditioning::new(r.brain.clone(), r.pathology.clone())
                        .with_known_region(&r.image, &m)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (w, l) = train_one(&samples, BASE_CHANNELS + 2, 1, config, &schedule, seed)?;
        out.write("palette.cfd", &weight_bytes(&w))?;
        out.write("palette_loss.csv", loss_csv(&l).as_bytes())?;
        Some((w, l))
    } else {
        None
    };
    let mut manifest = base_manifest("train", config);
    manifest.seeds = vec![seed];
    manifest.wall_times.push(WallTime {
        stage: "total".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(TrainReport {
        denoiser: weights,
        losses,
        palette,
        manifest: finish(out, manifest)?,
    })
}

/// Saves weights outside an [`OutputDir`]; used by tools that hand-build models.
pub fn export_weights(w: &TinyDenoiserWeights, path: &Path) -> Result<()> {
    save_weights(w, path)
}

fn build_denoiser(
    choice: &DenoiserChoice,
    palette: bool,
    config: &ExperimentConfig,
    schedule: &NoiseSchedule,
) -> Result<Arc<dyn Denoiser>> {
    let params = config.phantom.clone();
    Ok(match (choice, palette) {
        (DenoiserChoice::Analytic, false) => {
            Arc::new(AnalyticDenoiser::new(ConditionalPrior { params }, schedule.clone()))
        }
        (DenoiserChoice::Analytic, true) => {
            Arc::new(AnalyticDenoiser::new(ContextPrior { params }, schedule.clone()))
        }
        (DenoiserChoice::Trained(path), palette) => {
            let channels = BASE_CHANNELS + if palette { 2 } else { 0 };
            let w = crate::denoiser::load_weights_for_channels(path, channels)?;
            if w.max_step() < schedule.steps() {
                return Err(Error::Config(format!(
                    "{}: weights cover {} steps but the schedule has {}",
                    path.display(),
                    w.max_step(),
                    schedule.steps()
                )));
            }
            Arc::new(TinyDenoiser::new(w))
        }
    })
}

/// Method settings as used by the harness for `config`.
pub fn edit_config(config: &ExperimentConfig, method: Method) -> EditConfig {
    let mut c = EditConfig::new(method);
    c.k = config.mededit_k;
    c.resample = config.mededit_resample;
    c.encoding_ratio = config.sdedit_ratio;
    match method {
        Method::NaiveRePaint => {
            c.k = 1;
            c.resample = config.naive_resample;
        }
        Method::Palette => c.k = config.palette_k,
        _ => {}
    }
    c
}

/// `(k, U)` reported for a method; 0 marks a parameter the method ignores.
pub fn reported_k_u(c: &EditConfig) -> (usize, usize) {
    match c.method {
        Method::MedEdit | Method::NaiveRePaint => (c.k, c.resample),
        Method::SdEdit => (0, 0),
        Method::Palette => (c.k, 0),
    }
}

#[derive(Debug, Clone)]
pub struct PairedTriplet {
    pub record: TripletRecord,
    pub prior: Record,
    pub pathology: Mask,
}

/// Seeded pairing: priors are drawn from the healthy pool without
/// replacement; test masks are visited in successive seeded permutations and
/// clipped to the prior's brain, skipping masks whose clip is empty.
pub fn pair_triplets(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<PairedTriplet>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if ds.test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    if n > ds.healthy.len() {
        return Err(Error::Config(format!(
            "{n} triplets but only {} healthy priors",
            ds.healthy.len()
        )));
    }
    let mut prior_rng = stream(seed, TAG_PAIR_PRIOR, 0);
    let mut priors: Vec<usize> = (0..ds.healthy.len()).collect();
    prior_rng.shuffle(&mut priors);

    let mut mask_rng = stream(seed, TAG_PAIR_MASK, 0);
    let mut queue: Vec<usize> = Vec::new();
    let mut next_mask = || {
        if queue.is_empty() {
            queue = (0..ds.test.len()).rev().collect();
            mask_rng.shuffle(&mut queue);
        }
        queue.pop().expect("refilled above")
    };

    let mut out = Vec::with_capacity(n);
    for (i, &pi) in priors.iter().take(n).enumerate() {
        let prior = &ds.healthy[pi];
        let mut found = None;
        for _ in 0..ds.test.len() {
            let mi = next_mask();
            let clipped = ds.test[mi].pathology.intersect(&prior.brain)?;
            if !clipped.is_empty() {
                found = Some((mi, clipped));
                break;
            }
        }
        let (mi, pathology) = found.ok_or_else(|| {
            Error::Generation(format!("no test mask overlaps the brain of healthy prior {pi}"))
        })?;
        out.push(PairedTriplet {
            record: TripletRecord {
                seed,
                triplet: i,
                prior_id: ds.healthy[pi].id,
                mask_id: ds.test[mi].id,
                edit_seed: stream(seed, TAG_EDIT, i as u64).next_u64(),
            },
            prior: prior.clone(),
            pathology,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub method: Method,
    pub seed: u64,
    pub triplet: usize,
    pub prior_id: usize,
    pub mask_id: usize,
    pub lesion_area: usize,
    pub dice: f64,
    pub indirect_error: f64,
    pub healthy_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: Method,
    pub seed: u64,
    pub k: usize,
    pub u: usize,
    pub dice: f64,
    pub frechet: f64,
    pub indirect_error: f64,
    pub healthy_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryItem {
    pub method: Method,
    pub triplet: usize,
    pub prior: Image,
    pub counterfactual: Image,
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub triplets: Vec<TripletRecord>,
    pub samples: Vec<SampleRow>,
    pub metrics: Vec<MetricRow>,
    pub gallery: Vec<GalleryItem>,
    pub wall_times: Vec<WallTime>,
}

impl Evaluation {
    /// Mean of a per-seed metric over seeds for one method.
    pub fn mean(&self, method: Method, f: impl Fn(&MetricRow) -> f64) -> Option<f64> {
        let v: Vec<f64> = self.metrics.iter().filter(|r| r.method == method).map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

struct Denoisers {
    base: Option<Arc<dyn Denoiser>>,
    palette: Option<Arc<dyn Denoiser>>,
}

impl Denoisers {
    fn build(config: &ExperimentConfig, schedule: &NoiseSchedule) -> Result<Self> {
        let needs_base = config.methods.iter().any(|&m| m != Method::Palette);
        let needs_palette = config.methods.contains(&Method::Palette);
        Ok(Self {
            base: needs_base
                .then(|| build_denoiser(&config.denoiser, false, config, schedule))
                .transpose()?,
            palette: needs_palette
                .then(|| build_denoiser(&config.palette_denoiser, true, config, schedule))
                .transpose()?,
        })
    }

    fn for_method(&self, m: Method) -> &dyn Denoiser {
        let d = if m == Method::Palette { &self.palette } else { &self.base };
        d.as_deref().expect("built for every configured method")
    }
}

struct TripletOutcome {
    rows: Vec<SampleRow>,
    images: Vec<Image>,
}

fn run_triplet(
    t: &PairedTriplet,
    config: &ExperimentConfig,
    denoisers: &Denoisers,
    schedule: &NoiseSchedule,
) -> Result<TripletOutcome> {
    let triplet = Triplet {
        prior: &t.prior.image,
        brain: &t.prior.brain,
        pathology: &t.pathology,
    };
    let params = &config.phantom;
    let mut rows = Vec::new();
    let mut images = Vec::new();
    for &method in &config.methods {
        let mut ec = edit_config(config, method);
        ec.seed = t.record.edit_seed;
        let cf = edit(&ec, &triplet, denoisers.for_method(method), schedule)?.counterfactual;
        let seg = segment_lesion(&cf, triplet.brain, params)?;
        rows.push(SampleRow {
            method,
            seed: t.record.seed,
            triplet: t.record.triplet,
            prior_id: t.record.prior_id,
            mask_id: t.record.mask_id,
            lesion_area: t.pathology.area(),
            dice: dice(&seg, triplet.pathology)?,
            indirect_error: indirect_effect_error(&cf, triplet.brain, triplet.pathology, params)?,
            healthy_mae: healthy_tissue_mae(&cf, triplet.prior, triplet.brain, triplet.pathology, config.mededit_k)?
                .unwrap_or(0.0),
        });
        images.push(cf);
    }
    Ok(TripletOutcome { rows, images })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs every configured method on every seed's triplets.
pub fn evaluate_datasets(config: &ExperimentConfig, datasets: &[(u64, Dataset)]) -> Result<Evaluation> {
    config.validate()?;
    let schedule = config.schedule()?;
    let denoisers = Denoisers::build(config, &schedule)?;
    let pool = thread_pool(config.threads)?;
    let mut eval = Evaluation::default();
    for (seed, ds) in datasets {
        let start = Instant::now();
        let triplets = pair_triplets(ds, config.triplets, *seed)?;
        eval.triplets.extend(triplets.iter().map(|t| t.record.clone()));
        if config.methods.is_empty() {
            continue;
        }
        let outcomes: Vec<TripletOutcome> = pool.install(|| {
            triplets
                .par_iter()
                .map(|t| run_triplet(t, config, &denoisers, &schedule))
                .collect::<Result<Vec<_>>>()
        })?;

        let reference: Vec<Image> = ds.test.iter().map(|r| r.image.clone()).collect();
        let (h, w) = reference
            .first()
            .map(|i| i.shape())
            .unwrap_or((config.phantom.height, config.phantom.width));
        let projection = FeatureProjection::new(config.feature_seed, config.feature_dim, h * w)?;
        let real = extract_features_with(&reference, &projection)?;

        for (mi, &method) in config.methods.iter().enumerate() {
            let rows: Vec<&SampleRow> = outcomes.iter().map(|o| &o.rows[mi]).collect();
            let images: Vec<Image> = outcomes.iter().map(|o| o.images[mi].clone()).collect();
            let frechet = frechet_distance(&extract_features_with(&images, &projection)?, &real)?;
            let (k, u) = reported_k_u(&edit_config(config, method));
            eval.metrics.push(MetricRow {
                method,
                seed: *seed,
                k,
                u,
                dice: mean(rows.iter().map(|r| r.dice)),
                frechet,
                indirect_error: mean(rows.iter().map(|r| r.indirect_error)),
                healthy_mae: mean(rows.iter().map(|r| r.healthy_mae)),
            });
            if eval.gallery.len() < config.gallery * config.methods.len() {
                for (t, o) in triplets.iter().zip(&outcomes).take(config.gallery) {
                    eval.gallery.push(GalleryItem {
                        method,
                        triplet: t.record.triplet,
                        prior: t.prior.image.clone(),
                        counterfactual: o.images[mi].clone(),
                    });
                }
            }
        }
        eval.samples
            .extend(outcomes.into_iter().flat_map(|o| o.rows.into_iter()));
        eval.wall_times.push(WallTime {
            stage: format!("seed {seed}"),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(eval)
}

/// Loads or generates the dataset for every configured seed.
pub fn datasets_for(config: &ExperimentConfig) -> Result<Vec<(u64, Dataset)>> {
    let pool = thread_pool(config.threads)?;
    config
        .seeds
        .iter()
        .map(|&s| Ok((s, pool.install(|| load_or_generate(config, s))?)))
        .collect()
}

pub fn evaluate(config: &ExperimentConfig) -> Result<Evaluation> {
    evaluate_datasets(config, &datasets_for(config)?)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Metric(format!("non-finite value in {what}")))
    }
}

pub const METRICS_HEADER: [&str; 7] = ["method", "seed", "k", "U", "dice", "frechet", "indirect_error"];

fn metric_cells(r: &MetricRow) -> Vec<String> {
    vec![
        r.method.to_string(),
        r.seed.to_string(),
        r.k.to_string(),
        r.u.to_string(),
        r.dice.to_string(),
        r.frechet.to_string(),
        r.indirect_error.to_string(),
    ]
}

fn csv(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per-method aggregate over seeds, including `(1 - Dice) * FD`.
pub fn aggregate_table(eval: &Evaluation, methods: &[Method]) -> String {
    let mut rows = vec![[
        "method", "k", "U", "seeds", "dice_mean", "dice_std", "frechet_mean", "frechet_std",
        "indirect_mean", "indirect_std", "healthy_mae_mean", "combined_mean",
    ]
    .map(String::from)
    .to_vec()];
    for &m in methods {
        let rs: Vec<&MetricRow> = eval.metrics.iter().filter(|r| r.method == m).collect();
        let Some(first) = rs.first() else { continue };
        let col = |f: &dyn Fn(&MetricRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let d = col(&|r| r.dice);
        let f = col(&|r| r.frechet);
        let ind = col(&|r| r.indirect_error);
        let mae = col(&|r| r.healthy_mae);
        let comb = col(&|r| (1.0 - r.dice) * r.frechet);
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push(vec![
            m.to_string(),
            first.k.to_string(),
            first.u.to_string(),
            rs.len().to_string(),
            avg(&d).to_string(),
            std_dev(&d).to_string(),
            avg(&f).to_string(),
            std_dev(&f).to_string(),
            avg(&ind).to_string(),
            std_dev(&ind).to_string(),
            avg(&mae).to_string(),
            avg(&comb).to_string(),
        ]);
    }
    csv(rows)
}

fn samples_csv(samples: &[SampleRow]) -> String {
    let header = "method,seed,triplet,prior_id,mask_id,lesion_area,dice,indirect_error,healthy_mae"
        .split(',')
        .map(String::from)
        .collect();
    csv(std::iter::once(header).chain(samples.iter().map(|s| {
        vec![
            s.method.to_string(),
            s.seed.to_string(),
            s.triplet.to_string(),
            s.prior_id.to_string(),
            s.mask_id.to_string(),
            s.lesion_area.to_string(),
            s.dice.to_string(),
            s.indirect_error.to_string(),
            s.healthy_mae.to_string(),
        ]
    })))
}

fn write_gallery(out: &mut OutputDir, items: &[GalleryItem]) -> Result<()> {
    for g in items {
        let (pos, neg) = pgm::signed_difference(&g.prior, &g.counterfactual)?;
        let stem = format!("gallery/{}/{:04}", g.method, g.triplet);
        let panel = pgm::side_by_side(&[&g.prior, &g.counterfactual, &pos, &neg])?;
        out.write(&format!("{stem}_panel.pgm"), &pgm::encode(&panel))?;
        out.write(&format!("{stem}_prior.pgm"), &pgm::encode(&g.prior))?;
        out.write(&format!("{stem}_cf.pgm"), &pgm::encode(&g.counterfactual))?;
        out.write(&format!("{stem}_diffpos.pgm"), &pgm::encode(&pos))?;
        out.write(&format!("{stem}_diffneg.pgm"), &pgm::encode(&neg))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub evaluation: Evaluation,
    pub manifest: RunManifest,
}

/// Full evaluation with CSVs, gallery and manifest under `out_dir`.
pub fn cmd_evaluate(config: &ExperimentConfig, out_dir: &Path) -> Result<EvaluateReport> {
    config.validate()?;
    let start = Instant::now();
    let evaluation = evaluate(config)?;
    for r in &evaluation.metrics {
        check_finite(&[r.dice, r.frechet, r.indirect_error, r.healthy_mae], "metrics")?;
    }
    let mut out = OutputDir::create(out_dir)?;
    let metric_rows: Vec<Vec<String>> = std::iter::once(METRICS_HEADER.map(String::from).to_vec())
        .chain(evaluation.metrics.iter().map(metric_cells))
        .collect();
    out.write("metrics.csv", csv(metric_rows.clone()).as_bytes())?;
    out.write("samples.csv", samples_csv(&evaluation.samples).as_bytes())?;
    out.write("table.csv", aggregate_table(&evaluation, &config.methods).as_bytes())?;
    write_gallery(&mut out, &evaluation.gallery)?;

    let mut manifest = base_manifest("evaluate", config);
    manifest.triplets = evaluation.triplets.clone();
    manifest.metrics = metric_rows;
    manifest.wall_times = evaluation.wall_times.clone();
    manifest.wall_times.push(WallTime {
        stage: "total".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(EvaluateReport {
        manifest: finish(out, manifest)?,
        evaluation,
    })
}

/// One sweep point: the configuration and methods evaluated at `value`.
pub fn sweep_point(config: &ExperimentConfig, axis: SweepAxis, value: f64) -> ExperimentConfig {
    let mut c = config.clone();
    c.gallery = 0;
    match axis {
        SweepAxis::K => {
            c.mededit_k = value as usize;
            c.palette_k = value as usize;
            c.methods = config
                .methods
                .iter()
                .copied()
                .filter(|m| matches!(m, Method::MedEdit | Method::Palette))
                .collect();
        }
        SweepAxis::U => {
            c.mededit_resample = value as usize;
            c.methods = vec![Method::MedEdit];
        }
        SweepAxis::EncodingRatio => {
            c.sdedit_ratio = value;
            c.methods = vec![Method::SdEdit];
        }
    }
    if c.methods.is_empty() {
        c.methods = vec![if axis == SweepAxis::EncodingRatio {
            Method::SdEdit
        } else {
            Method::MedEdit
        }];
    }
    c
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<(f64, Evaluation)>,
    pub manifest: RunManifest,
}

/// Re-runs the evaluation at each value on `axis`, everything else fixed.
pub fn cmd_sweep(config: &ExperimentConfig, axis: SweepAxis, out_dir: &Path) -> Result<SweepReport> {
    let mut config = config.clone();
    config.sweep_axis = axis;
    config.validate()?;
    config.validate_sweep(axis)?;
    let start = Instant::now();
    let datasets = datasets_for(&config)?;
    let mut points = Vec::new();
    let mut rows = vec!["axis,value,method,seed,k,U,dice,frechet,indirect_error,healthy_mae"
        .split(',')
        .map(String::from)
        .collect::<Vec<_>>()];
    for &v in &config.sweep_values {
        let point = sweep_point(&config, axis, v);
        let eval = evaluate_datasets(&point, &datasets)?;
        for r in &eval.metrics {
            check_finite(&[r.dice, r.frechet, r.indirect_error, r.healthy_mae], "sweep")?;
            let mut cells = vec![axis.as_str().to_string(), v.to_string()];
            cells.extend(metric_cells(r));
            cells.push(r.healthy_mae.to_string());
            rows.push(cells);
        }
        points.push((v, eval));
    }
    let mut out = OutputDir::create(out_dir)?;
    out.write("sweep.csv", csv(rows.clone()).as_bytes())?;
    let mut manifest = base_manifest("sweep", &config);
    manifest.metrics = rows;
    manifest.wall_times.push(WallTime {
        stage: "total".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(SweepReport {
        points,
        manifest: finish(out, manifest)?,
    })
}
