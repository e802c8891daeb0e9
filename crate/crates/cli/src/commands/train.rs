//! `train`: fit a deterministic solution bundle and write its checkpoint.

use std::path::{Path, PathBuf};

use serde::Serialize;

use bundle_uq::models::ModelId;
use bundle_uq::presets::{train_preset, Preset};
use bundle_uq::train::{self, TrainConfig};
use bundle_uq::Result;

use crate::artifacts;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Model to train: lcdm, cpl, quintessence, or hs.
    #[arg(long)]
    pub model: String,
    /// Hyperparameter scale: paper or desk.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Global seed; all training randomness derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for checkpoint.json, loss.csv, and config.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the preset's iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Override the preset's batch samples per input dimension.
    #[arg(long)]
    pub samples_per_dim: Option<usize>,
    /// Override the preset's learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Override the preset's decay floor; the rate glides from the initial
    /// value down to this one. Zero disables decay.
    #[arg(long)]
    pub lr_floor: Option<f64>,
}

#[derive(Serialize)]
pub struct TrainRunConfig {
    pub command: &'static str,
    pub preset: Preset,
    pub train: TrainConfig,
}

pub fn resolve(args: &TrainArgs) -> Result<(Preset, TrainConfig)> {
    let model: ModelId = args.model.parse()?;
    let preset: Preset = args.preset.parse()?;
    let mut cfg = train_preset(model, preset, args.seed);
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.samples_per_dim {
        cfg.samples_per_dim = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.lr_floor {
        cfg.lr_floor = (v > 0.0).then_some(v);
    }
    Ok((preset, cfg))
}

pub fn run_config(preset: Preset, cfg: &TrainConfig) -> TrainRunConfig {
    TrainRunConfig {
        command: "train",
        preset,
        train: cfg.clone(),
    }
}

pub fn execute(dir: &Path, preset: Preset, cfg: &TrainConfig) -> Result<()> {
    artifacts::ensure_dir(dir)?;
    artifacts::write_config(dir, "train", &run_config(preset, cfg))?;
    log::info!(
        "training {} ({} preset, {} iterations, {} samples/dim)",
        cfg.model_id,
        preset,
        cfg.iterations,
        cfg.samples_per_dim
    );
    let det = train::train(cfg)?;
    artifacts::write_json(&dir.join(artifacts::CHECKPOINT), &det)?;
    artifacts::write_csv(
        &dir.join(artifacts::LOSS),
        "iteration,loss",
        det.loss_history.iter().map(|&(i, l)| vec![i as f64, l]),
    )?;
    log::info!(
        "final loss {:.3e}; checkpoint in {}",
        det.final_loss,
        dir.display()
    );
    Ok(())
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let (preset, cfg) = resolve(args)?;
    execute(&args.out, preset, &cfg)
}
