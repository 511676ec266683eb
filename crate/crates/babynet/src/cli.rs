//! `babynet` command line: `synth`, `train`, `cv`, `predict`, `gradcheck`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use babynet_core::autodiff::Mode;
use babynet_core::data::{generate_synthetic, SyntheticConfig, WEIGHT_MAX_G, WEIGHT_MIN_G};
use babynet_core::gradcheck::{check_model, GradCheckOptions, GradCheckReport};
use babynet_core::model::{Model, ModelConfig, Variant};
use babynet_core::train::{
    assign_folds, ensemble_average, paired_t_test, predict_patient, prepare_records, run_fold, train_with, CvConfig,
    FoldResult, MetricsReport,
};
use babynet_core::{rng, Tensor};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{Preset, RunConfig, SynthSection};
use crate::csvio::{read_estimates, write_losses, write_predictions, PredictionLine};
use crate::dataset::{read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::report::{write_report, write_summary};

#[derive(Debug, Parser)]
#[command(name = "babynet", version, about = "Birth-weight regression from fetal ultrasound clips")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Train one model on every patient of a dataset.
    Train(TrainArgs),
    /// Grouped K-fold cross-validation.
    Cv(CvArgs),
    /// Predict patient weights with a trained checkpoint.
    Predict(PredictArgs),
    /// Finite-difference check of the model gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub patients: usize,
    #[arg(long, default_value_t = 3)]
    pub videos: usize,
    #[arg(long, default_value_t = 32)]
    pub frames: usize,
    /// Frame height and width in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f32,
    #[arg(long, default_value_t = WEIGHT_MIN_G)]
    pub weight_min: f32,
    #[arg(long, default_value_t = WEIGHT_MAX_G)]
    pub weight_max: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Model and optimization settings shared by `train`, `cv` and `gradcheck`.
/// Unset options take the preset's value.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "paper")]
    pub preset: Preset,
    /// base, rtm or rtm_tpe
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Clip length in frames.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Channel width multiplier, e.g. `1/8`.
    #[arg(long)]
    pub width_mult: Option<String>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub lr_step: Option<usize>,
    #[arg(long)]
    pub lr_gamma: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f32>,
    /// Disable all training-time augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Regress grams directly instead of standardized targets.
    #[arg(long)]
    pub raw_targets: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Run all three variants, one report each.
    #[arg(long)]
    pub ablation: bool,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// External estimates CSV (`patient_id,estimate_g`) to ensemble with.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long, default_value = "rtm_tpe")]
    pub variant: Variant,
    #[arg(long, default_value_t = 32)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f32,
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f32,
    #[arg(long, default_value_t = 1e-3)]
    pub floor: f32,
    /// Random batches folded into the batch-norm statistics first.
    #[arg(long, default_value_t = 40)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the per-parameter report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Cv(a) => cmd_cv(&a).map(|_| ()),
        Command::Predict(a) => cmd_predict(&a).map(|_| ()),
        Command::Gradcheck(a) => cmd_gradcheck(&a).map(|_| ()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        num_patients: a.patients,
        videos_per_patient: a.videos,
        frames_per_video: a.frames,
        noise_sigma: a.noise,
        seed: a.seed,
        weight_range: (a.weight_min, a.weight_max),
        ..SyntheticConfig::sized(a.patients, a.size, a.size)
    };
    if !(WEIGHT_MIN_G <= a.weight_min && a.weight_max <= WEIGHT_MAX_G) {
        return Err(Error::Usage(format!(
            "weight range [{}, {}] must lie within [{WEIGHT_MIN_G}, {WEIGHT_MAX_G}]",
            a.weight_min, a.weight_max
        )));
    }
    let records = generate_synthetic(&config)?;
    create_dir(&a.out)?;
    write_dataset(&a.out, &records)?;
    let mut run = RunConfig::preset(Preset::Paper, "synth", a.out.clone());
    run.seed = a.seed;
    run.synth = Some(SynthSection {
        patients: a.patients,
        videos_per_patient: a.videos,
        frames_per_video: a.frames,
        height: a.size,
        width: a.size,
        noise_sigma: a.noise,
        weight_min_g: a.weight_min,
        weight_max_g: a.weight_max,
    });
    run.save(&a.out)?;
    eprintln!("wrote {} patients to {}", records.len(), a.out.display());
    Ok(())
}

/// Preset defaults with command-line overrides applied.
pub fn build_run_config(
    command: &str,
    dataset: Option<&Path>,
    out: &Path,
    m: &ModelArgs,
    o: &OptimArgs,
) -> Result<RunConfig> {
    let mut run = RunConfig::preset(m.preset, command, out.to_path_buf());
    run.dataset = dataset.map(Path::to_path_buf);
    run.seed = m.seed;
    if let Some(v) = m.variant {
        run.model.variant = v.as_str().to_string();
    }
    if let Some(v) = m.frames {
        run.model.in_frames = v;
    }
    if let Some(v) = m.height {
        run.model.in_height = v;
    }
    if let Some(v) = m.width {
        run.model.in_width = v;
    }
    if let Some(v) = &m.width_mult {
        run.model.width = v.clone();
    }
    if let Some(v) = m.heads {
        run.model.num_heads = v;
    }
    if let Some(v) = o.epochs {
        run.schedule.epochs = v;
    }
    if let Some(v) = o.lr {
        run.schedule.lr = v;
    }
    if let Some(v) = o.lr_step {
        run.schedule.step_epochs = v;
    }
    if let Some(v) = o.lr_gamma {
        run.schedule.gamma = v;
    }
    if let Some(v) = o.batch_size {
        run.batch_size = v;
    }
    if let Some(v) = o.weight_decay {
        run.optimizer.weight_decay = v;
    }
    run.augment.enabled &= !o.no_augment;
    run.raw_targets = o.raw_targets;
    // surface invalid combinations before any work is done
    run.model_config(run.variant()?)?;
    run.train_config()?;
    Ok(run)
}

fn load_records(dataset: &Path, model: &ModelConfig) -> Result<Vec<babynet_core::data::PatientRecord>> {
    if !dataset.is_dir() {
        return Err(Error::Usage(format!("dataset directory {} does not exist", dataset.display())));
    }
    Ok(prepare_records(&read_dataset(dataset)?, model)?)
}

pub fn cmd_train(a: &TrainArgs) -> Result<Checkpoint> {
    let run = build_run_config("train", Some(&a.dataset), &a.out, &a.model, &a.optim)?;
    let model_config = run.model_config(run.variant()?)?;
    let records = load_records(&a.dataset, &model_config)?;
    create_dir(&a.out)?;
    run.save(&a.out)?;
    let mut model = Model::build(model_config)?;
    let epochs = run.schedule.epochs;
    let outcome = train_with(&mut model, &records, &run.train_config()?, |row| {
        eprintln!(
            "epoch {}/{epochs}  lr {:e}  train_mse {:.6}",
            row.epoch + 1,
            row.lr,
            row.train_mse
        )
    })?;
    write_losses(&a.out.join("loss.csv"), &outcome.losses)?;
    let ckpt = Checkpoint {
        model,
        scaler: outcome.scaler,
        fold: None,
    };
    save_checkpoint(&a.out.join("checkpoint"), &ckpt)?;
    Ok(ckpt)
}

/// Runs the folds of one variant on up to `jobs` threads. Each fold depends
/// only on its own seeds, so the result does not depend on `jobs`.
fn run_folds(records: &[babynet_core::data::PatientRecord], config: &CvConfig, jobs: usize) -> Result<Vec<FoldResult>> {
    let assignment = assign_folds(records, config)?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<FoldResult>>>> = Mutex::new((0..config.k).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, config.k) {
            s.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::SeqCst);
                if f >= config.k {
                    break;
                }
                let result = run_fold(records, &assignment, f, config).map_err(Error::from);
                if let Ok(r) = &result {
                    eprintln!(
                        "{} fold {}/{}: MAE {:.1} g, MAPE {:.2} %",
                        config.model.variant.as_str(),
                        f + 1,
                        config.k,
                        r.metrics.mae,
                        r.metrics.mape
                    );
                }
                slots.lock().unwrap()[f] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every fold ran"))
        .collect()
}

/// Cross-validation outputs of one variant.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub report: MetricsReport,
}

pub fn cmd_cv(a: &CvArgs) -> Result<Vec<VariantOutcome>> {
    let mut run = build_run_config("cv", Some(&a.dataset), &a.out, &a.model, &a.optim)?;
    run.folds = a.folds;
    run.ablation = a.ablation;
    run.jobs = a.jobs;
    if a.jobs == 0 {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    let variants = if a.ablation {
        vec![Variant::Base, Variant::Rtm, Variant::RtmTpe]
    } else {
        vec![run.variant()?]
    };
    let probe = run.model_config(variants[0])?;
    let records = load_records(&a.dataset, &probe)?;
    if records.len() < a.folds {
        return Err(Error::Usage(format!(
            "{} patients cannot fill {} folds",
            records.len(),
            a.folds
        )));
    }
    create_dir(&a.out)?;
    run.save(&a.out)?;

    let mut outcomes = Vec::new();
    for variant in variants {
        let config = CvConfig {
            k: a.folds,
            seed: run.seed,
            model: run.model_config(variant)?,
            train: run.train_config()?,
        };
        let folds = run_folds(&records, &config, a.jobs)?;
        let dir = a.out.join(variant.as_str());
        create_dir(&dir)?;
        for f in &folds {
            let fdir = dir.join(format!("fold{}", f.fold));
            create_dir(&fdir)?;
            write_losses(&fdir.join("loss.csv"), &f.losses)?;
            let ckpt = Checkpoint {
                model: f.model.clone(),
                scaler: f.scaler,
                fold: Some(f.fold),
            };
            save_checkpoint(&fdir.join("checkpoint"), &ckpt)?;
        }
        let rows = folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
        let report = MetricsReport::from_predictions(rows)?;
        let lines: Vec<PredictionLine> = report.predictions.iter().map(PredictionLine::from).collect();
        write_predictions(&dir.join("predictions.csv"), &lines)?;
        write_report(&dir.join("report.json"), &report)?;
        eprintln!(
            "{}: MAE {:.1} g, RMSE {:.1} g, MAPE {:.2} % over {} patients",
            variant.as_str(),
            report.overall.mae,
            report.overall.rmse,
            report.overall.mape,
            report.overall.n
        );
        outcomes.push(VariantOutcome { variant, report });
    }
    write_summary(&a.out.join("summary.csv"), &outcomes)?;
    Ok(outcomes)
}

pub fn cmd_predict(a: &PredictArgs) -> Result<Vec<PredictionLine>> {
    if !a.checkpoint.is_dir() {
        return Err(Error::Usage(format!("checkpoint directory {} does not exist", a.checkpoint.display())));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let records = load_records(&a.dataset, &ckpt.model.config)?;
    let mut lines = records
        .iter()
        .map(|r| {
            Ok(PredictionLine {
                patient_id: r.patient_id.clone(),
                target_g: r.birth_weight_g,
                pred_g: predict_patient(&ckpt.model, &ckpt.scaler, r)?,
                fold: ckpt.fold,
                ensemble: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &a.estimates {
        let estimates = read_estimates(path)?;
        let model: Vec<(String, f64)> = lines.iter().map(|l| (l.patient_id.clone(), l.pred_g as f64)).collect();
        let external: Vec<(String, f64)> = estimates.iter().map(|(id, v)| (id.clone(), *v as f64)).collect();
        let ens = ensemble_average(&model, &external).map_err(|e| Error::parse(path, e.to_string()))?;
        for (line, (_, mean)) in lines.iter_mut().zip(ens) {
            let est = estimates.iter().find(|(id, _)| *id == line.patient_id).map(|e| e.1).unwrap();
            line.ensemble = Some((est, mean));
        }
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_predictions(&a.out, &lines)?;
    Ok(lines)
}

/// Random input batch of the model's item shape, values in `[0, 1)`.
fn random_batch(config: &ModelConfig, n: usize, seed: u64) -> Tensor {
    let [_, t, h, w] = config.item_shape();
    rng::uniform_tensor(&[n, 1, t, h, w], seed)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<GradCheckReport> {
    let mut config = match a.preset {
        Preset::Desk => ModelConfig::desk(a.variant),
        Preset::Paper => ModelConfig {
            variant: a.variant,
            ..ModelConfig::default()
        },
    };
    config.seed = a.seed;
    let mut model = Model::build(config.clone())?;
    for i in 0..a.warmup {
        model.update_statistics(&random_batch(&config, 2, rng::mix(&[a.seed, 1, i as u64])))?;
    }
    let input = random_batch(&config, 2, rng::mix(&[a.seed, 2]));
    let target = Tensor::new(&[2, 1], vec![0.5, -0.5])?;
    let opts = GradCheckOptions {
        eps: a.eps,
        tol: a.tol,
        floor: a.floor,
        sample: Some(a.samples),
        seed: a.seed,
    };
    let mode = if a.warmup > 0 { Mode::Eval } else { Mode::Train };
    let report = check_model(&model, &input, &target, mode, &opts)?;
    let mut text = String::new();
    text.push_str("parameter,checked,max_rel_error\n");
    for p in report.params.iter().filter(|p| p.checked > 0) {
        text.push_str(&format!("{},{},{:e}\n", p.name, p.checked, p.max_rel_error));
    }
    let worst = report.worst_param_name().unwrap_or("-");
    let verdict = format!(
        "{}: {} scalars checked, {} skipped at ReLU kinks, max relative error {:e} (tol {:e}), worst parameter {worst}",
        if report.passed() { "PASS" } else { "FAIL" },
        report.entries.len(),
        report.skipped,
        report.max_rel_error(),
        report.tol
    );
    print!("{text}");
    println!("{verdict}");
    if let Some(out) = &a.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        fs::write(out, format!("{text}# {verdict}\n")).map_err(|e| Error::io(out, e))?;
    }
    if !report.passed() {
        return Err(Error::Numeric(verdict));
    }
    Ok(report)
}

/// The paired t-test between two variants' per-patient absolute percentage
/// errors, matched by patient id.
pub fn compare_variants(a: &MetricsReport, b: &MetricsReport) -> Result<babynet_core::train::TTest> {
    let ape = |r: &babynet_core::train::PredictionRow| {
        100.0 * (r.pred_g as f64 - r.target_g as f64).abs() / r.target_g as f64
    };
    let mut xa = Vec::new();
    let mut xb = Vec::new();
    for r in &a.predictions {
        let other = b
            .predictions
            .iter()
            .find(|o| o.patient_id == r.patient_id)
            .ok_or_else(|| Error::Usage(format!("patient {} missing from the second report", r.patient_id)))?;
        xa.push(ape(r));
        xb.push(ape(other));
    }
    Ok(paired_t_test(&xa, &xb)?)
}
