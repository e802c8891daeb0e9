//! `pipeline`: train -> bounds -> bayes -> eval -> inverse as one run tree,
//! with stage-level resume.

use std::path::PathBuf;

use serde::Serialize;

use bundle_uq::metrics::RegionTag;
use bundle_uq::models::{ModelId, Oracle};
use bundle_uq::presets::{inverse_preset, train_preset, Preset};
use bundle_uq::train::DetSolution;
use bundle_uq::Result;

use crate::artifacts;
use crate::commands::bayes::{self, BayesInputs, LikelihoodKind, Method, EB_PARTITIONS, EB_POINTS};
use crate::commands::bounds::{certified_table, certified_table_set, default_lambda_grid, table_rows};
use crate::commands::inverse::{self, SourceKind};
use crate::commands::{eval, train};

#[derive(Debug, clap::Args)]
pub struct PipelineArgs {
    /// Equation model: lcdm, cpl, quintessence, or hs.
    #[arg(long)]
    pub model: String,
    /// Hyperparameter scale: paper or desk.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Global seed shared by every stage.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Root run directory; stages write to train/, bounds/, bayes/, eval/,
    /// and inverse/ beneath it.
    #[arg(long)]
    pub out: PathBuf,
    /// Posterior method for the bayes stage: nlm, bbb, or hmc.
    #[arg(long, default_value = "hmc")]
    pub method: String,
    /// Observation model: homo, eb, or residual. Defaults to eb for models
    /// with certified bounds, homo otherwise.
    #[arg(long)]
    pub likelihood: Option<String>,
    /// Truth oracle for the eval stage; defaults to analytic when the model
    /// has a closed form, rk otherwise.
    #[arg(long)]
    pub truth: Option<String>,
    /// Skip stages whose config and artifacts are already in place.
    #[arg(long)]
    pub resume: bool,
    /// Override training iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Override ensemble walkers for the inverse stage.
    #[arg(long)]
    pub walkers: Option<usize>,
    /// Override ensemble steps for the inverse stage.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Grid points along the independent variable for predictive grids.
    #[arg(long, default_value_t = 64)]
    pub grid_x: usize,
    /// Grid points per bundle-parameter dimension.
    #[arg(long, default_value_t = 8)]
    pub grid_lambda: usize,
    /// Posterior draws behind predictive summaries.
    #[arg(long, default_value_t = 64)]
    pub draws: usize,
}

#[derive(Serialize)]
struct PipelineRunConfig {
    command: &'static str,
    model_id: ModelId,
    preset: Preset,
    seed: u64,
    method: Method,
    likelihood: LikelihoodKind,
    truth: Oracle,
    iterations: usize,
    walkers: usize,
    steps: usize,
    grid_x: usize,
    grid_lambda: usize,
    draws: usize,
}

/// Stage echo for the bounds directory; field names match the standalone
/// bounds command so the bounds plot can read either.
#[derive(Serialize)]
struct BoundsStageConfig {
    command: &'static str,
    model_id: ModelId,
    checkpoint: String,
    checkpoint_fingerprint: String,
    partitions: usize,
    points: usize,
    lambda_grid_per_dim: usize,
    lambda: Vec<f64>,
    out: String,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}: running");
    f().map_err(|e| {
        log::error!("pipeline halted at stage '{name}': {e}");
        e
    })
}

pub fn run(args: &PipelineArgs) -> Result<()> {
    let model: ModelId = args.model.parse()?;
    let preset: Preset = args.preset.parse()?;
    let method: Method = args.method.parse()?;
    let kind: LikelihoodKind = match &args.likelihood {
        Some(text) => text.parse()?,
        None => match model {
            ModelId::Lcdm | ModelId::Cpl => LikelihoodKind::Eb,
            _ => LikelihoodKind::Homo,
        },
    };
    let truth: Oracle = match &args.truth {
        Some(text) => text.parse()?,
        None => match model {
            ModelId::Lcdm | ModelId::Cpl => Oracle::Analytic,
            _ => Oracle::Rk,
        },
    };
    let ip = inverse_preset(preset);
    let walkers = args.walkers.unwrap_or(ip.walkers);
    let steps = args.steps.unwrap_or(ip.steps);
    let mut train_cfg = train_preset(model, preset, args.seed);
    if let Some(iters) = args.iterations {
        train_cfg.iterations = iters;
    }

    artifacts::ensure_dir(&args.out)?;
    artifacts::write_config(
        &args.out,
        "pipeline",
        &PipelineRunConfig {
            command: "pipeline",
            model_id: model,
            preset,
            seed: args.seed,
            method,
            likelihood: kind,
            truth,
            iterations: train_cfg.iterations,
            walkers,
            steps,
            grid_x: args.grid_x,
            grid_lambda: args.grid_lambda,
            draws: args.draws,
        },
    )?;

    let train_dir = args.out.join("train");
    let train_conf = train::run_config(preset, &train_cfg);
    if args.resume
        && artifacts::stage_complete(
            &train_dir,
            &train_conf,
            &[artifacts::CHECKPOINT, artifacts::LOSS],
        )
    {
        log::info!("stage train: up to date, skipped");
    } else {
        stage("train", || train::execute(&train_dir, preset, &train_cfg))?;
    }
    let ckpt_path = train_dir.join(artifacts::CHECKPOINT);
    let det: DetSolution = artifacts::read_json(&ckpt_path, "checkpoint")?;

    let mut bounds_file: Option<PathBuf> = None;
    if kind == LikelihoodKind::Eb {
        let bounds_dir = args.out.join("bounds");
        let per_dim = default_lambda_grid(det.spec.n_bundle_params());
        let center: Vec<f64> = det
            .spec
            .bundle_param_box
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect();
        let table_out = bounds_dir.join(artifacts::TABLE);
        let bounds_conf = BoundsStageConfig {
            command: "bounds",
            model_id: model,
            checkpoint: ckpt_path.display().to_string(),
            checkpoint_fingerprint: artifacts::file_fingerprint(&ckpt_path)?,
            partitions: EB_PARTITIONS,
            points: EB_POINTS,
            lambda_grid_per_dim: per_dim,
            lambda: center.clone(),
            out: table_out.display().to_string(),
        };
        if args.resume
            && artifacts::stage_complete(
                &bounds_dir,
                &bounds_conf,
                &[artifacts::TABLES, artifacts::TABLE],
            )
        {
            log::info!("stage bounds: up to date, skipped");
        } else {
            stage("bounds", || {
                artifacts::ensure_dir(&bounds_dir)?;
                artifacts::write_config(&bounds_dir, "bounds", &bounds_conf)?;
                log::info!(
                    "certifying bound tables on a {per_dim}-per-dimension lambda grid \
                     ({EB_PARTITIONS} partitions x {EB_POINTS} points)"
                );
                let set = certified_table_set(&det, EB_PARTITIONS, EB_POINTS, per_dim)?;
                artifacts::write_json(&bounds_dir.join(artifacts::TABLES), &set)?;
                let center_table = certified_table(&det, &center, EB_PARTITIONS, EB_POINTS)?;
                artifacts::write_csv(&table_out, "t,bound", table_rows(&center_table))?;
                Ok(())
            })?;
        }
        bounds_file = Some(bounds_dir.join(artifacts::TABLES));
    }

    let bayes_dir = args.out.join("bayes");
    let inputs = BayesInputs {
        det: &det,
        preset,
        method,
        kind,
        seed: args.seed,
        draws: args.draws,
        grid_x: args.grid_x,
        grid_lambda: args.grid_lambda,
        checkpoint: &ckpt_path,
        bounds_file: bounds_file.as_deref(),
    };
    let bayes_conf = bayes::run_config(&inputs)?;
    if args.resume
        && artifacts::stage_complete(
            &bayes_dir,
            &bayes_conf,
            &[artifacts::POSTERIOR, artifacts::PREDICTIVE],
        )
    {
        log::info!("stage bayes: up to date, skipped");
    } else {
        stage("bayes", || bayes::execute(&bayes_dir, &inputs))?;
    }

    let eval_dir = args.out.join("eval");
    let report_path = eval_dir.join(artifacts::REPORT_JSON);
    let settings = eval::EvalSettings {
        truth,
        regions: vec![RegionTag::Train, RegionTag::Test, RegionTag::Ood],
        grid_x: args.grid_x,
        grid_lambda: args.grid_lambda,
        draws: args.draws,
        seed: args.seed,
    };
    let (subject, fingerprint, subject_file) = eval::load_subject(&bayes_dir)?;
    let eval_conf = eval::run_config(
        &bayes_dir,
        &subject,
        &fingerprint,
        subject_file,
        &settings,
        &report_path,
    );
    if args.resume
        && artifacts::stage_complete(
            &eval_dir,
            &eval_conf,
            &[artifacts::REPORT_JSON, artifacts::REPORT_CSV],
        )
    {
        log::info!("stage eval: up to date, skipped");
    } else {
        stage("eval", || {
            eval::execute(
                &report_path,
                &bayes_dir,
                &subject,
                &fingerprint,
                subject_file,
                &settings,
            )
        })?;
    }

    let inverse_dir = args.out.join("inverse");
    let source_kind = match method {
        Method::Nlm => SourceKind::Nlm,
        Method::Bbb => SourceKind::Bbb,
        Method::Hmc => SourceKind::Hmc,
    };
    let resolved = inverse::resolve_source(
        model,
        source_kind,
        None,
        Some(&bayes_dir.join(artifacts::POSTERIOR)),
        None,
    )?;
    let inverse_settings = inverse::InverseSettings {
        walkers,
        steps,
        draws: ip.solution_draws,
        seed: args.seed,
        burn_in: 0.2,
    };
    let inverse_conf = inverse::run_config(&resolved, &inverse_settings);
    if args.resume
        && artifacts::stage_complete(
            &inverse_dir,
            &inverse_conf,
            &[artifacts::CHAIN, artifacts::SUMMARY],
        )
    {
        log::info!("stage inverse: up to date, skipped");
    } else {
        stage("inverse", || {
            inverse::execute(&inverse_dir, resolved, &inverse_settings)
        })?;
    }

    log::info!("pipeline complete: {}", args.out.display());
    Ok(())
}
