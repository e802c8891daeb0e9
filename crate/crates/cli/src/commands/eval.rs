//! `eval`: score a run's solution against an oracle on the train, test, and
//! out-of-distribution grids.

use std::path::{Path, PathBuf};

use serde::Serialize;

use bundle_uq::bayes::predictive;
use bundle_uq::metrics::{self, eval_report, region_grid, RegionTag};
use bundle_uq::models::{truth_on_points, ModelSpec, Oracle};
use bundle_uq::rngutil::stream_rng;
use bundle_uq::train::DetSolution;
use bundle_uq::{Error, Result};

use crate::artifacts::{self, PosteriorArtifact};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Run directory holding posterior.json (Bayesian) or checkpoint.json
    /// (deterministic).
    #[arg(long)]
    pub run: PathBuf,
    /// Truth oracle: analytic or rk.
    #[arg(long, default_value = "rk")]
    pub truth: String,
    /// Comma-separated subset of train,test,ood.
    #[arg(long, default_value = "train,test,ood")]
    pub regions: String,
    /// Report file; the CSV mirror and config.json land beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid points along the independent variable (test regions use twice
    /// this to cover both flanks of the training range).
    #[arg(long, default_value_t = 64)]
    pub grid_x: usize,
    /// Grid points per bundle-parameter dimension.
    #[arg(long, default_value_t = 8)]
    pub grid_lambda: usize,
    /// Posterior draws behind each predictive evaluation.
    #[arg(long, default_value_t = 64)]
    pub draws: usize,
    /// Global seed; each region draws from its own "eval-<region>" stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// What the run directory holds: a weight posterior or a plain checkpoint.
pub enum Subject {
    Bayes(Box<PosteriorArtifact>),
    Det(Box<DetSolution>),
}

impl Subject {
    pub fn spec(&self) -> &ModelSpec {
        match self {
            Subject::Bayes(art) => &art.spec,
            Subject::Det(det) => &det.spec,
        }
    }

    pub fn method(&self) -> &str {
        match self {
            Subject::Bayes(art) => &art.method,
            Subject::Det(_) => "det",
        }
    }
}

/// Locate the subject artifact in a run directory. Returns the subject, its
/// content fingerprint, and the artifact filename found.
pub fn load_subject(run: &Path) -> Result<(Subject, String, &'static str)> {
    let posterior = run.join(artifacts::POSTERIOR);
    if posterior.exists() {
        let art: PosteriorArtifact = artifacts::read_json(&posterior, "posterior artifact")?;
        let fp = artifacts::file_fingerprint(&posterior)?;
        return Ok((Subject::Bayes(Box::new(art)), fp, artifacts::POSTERIOR));
    }
    let checkpoint = run.join(artifacts::CHECKPOINT);
    if checkpoint.exists() {
        let det: DetSolution = artifacts::read_json(&checkpoint, "checkpoint")?;
        let fp = artifacts::file_fingerprint(&checkpoint)?;
        return Ok((Subject::Det(Box::new(det)), fp, artifacts::CHECKPOINT));
    }
    Err(Error::Config(format!(
        "{} holds neither {} nor {}",
        run.display(),
        artifacts::POSTERIOR,
        artifacts::CHECKPOINT
    )))
}

pub fn parse_regions(text: &str) -> Result<Vec<RegionTag>> {
    text.split(',')
        .map(|part| match part.trim() {
            "train" => Ok(RegionTag::Train),
            "test" => Ok(RegionTag::Test),
            "ood" => Ok(RegionTag::Ood),
            other => Err(Error::Config(format!(
                "unknown region '{other}', expected train | test | ood"
            ))),
        })
        .collect()
}

#[derive(Clone)]
pub struct EvalSettings {
    pub truth: Oracle,
    pub regions: Vec<RegionTag>,
    pub grid_x: usize,
    pub grid_lambda: usize,
    pub draws: usize,
    pub seed: u64,
}

fn region_nx(settings: &EvalSettings, region: RegionTag) -> usize {
    if region == RegionTag::Test {
        2 * settings.grid_x
    } else {
        settings.grid_x
    }
}

#[derive(Serialize)]
struct GridEcho {
    region: String,
    n_x: usize,
    n_lambda: usize,
}

#[derive(Serialize)]
pub struct EvalRunConfig {
    command: &'static str,
    run: String,
    subject: &'static str,
    subject_fingerprint: String,
    method: String,
    truth: Oracle,
    regions: Vec<String>,
    grids: Vec<GridEcho>,
    draws: usize,
    seed: u64,
    out: String,
}

pub fn run_config(
    run: &Path,
    subject: &Subject,
    fingerprint: &str,
    subject_file: &'static str,
    settings: &EvalSettings,
    out: &Path,
) -> EvalRunConfig {
    EvalRunConfig {
        command: "eval",
        run: run.display().to_string(),
        subject: subject_file,
        subject_fingerprint: fingerprint.to_string(),
        method: subject.method().to_string(),
        truth: settings.truth,
        regions: settings.regions.iter().map(|r| r.to_string()).collect(),
        grids: settings
            .regions
            .iter()
            .map(|&r| GridEcho {
                region: r.to_string(),
                n_x: region_nx(settings, r),
                n_lambda: settings.grid_lambda,
            })
            .collect(),
        draws: settings.draws,
        seed: settings.seed,
        out: out.display().to_string(),
    }
}

/// Deterministic runs carry accuracy metrics only; the calibration block
/// needs a predictive spread.
#[derive(Serialize)]
struct DetReport {
    region_tag: RegionTag,
    median_re: f64,
    median_residual: f64,
    mae: f64,
    rmse: f64,
    quantiles: [f64; 10],
}

#[derive(Serialize)]
struct ReportFile {
    method: String,
    truth: Oracle,
    regions: Vec<serde_json::Value>,
}

pub fn execute(
    out: &Path,
    run: &Path,
    subject: &Subject,
    fingerprint: &str,
    subject_file: &'static str,
    settings: &EvalSettings,
) -> Result<()> {
    let dir = out.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    artifacts::ensure_dir(&dir)?;
    artifacts::write_config(
        &dir,
        "eval",
        &run_config(run, subject, fingerprint, subject_file, settings, out),
    )?;

    let spec = subject.spec().clone();
    let mut region_values = Vec::new();
    let mut csv = String::from("region,method,median_re,median_residual,miscal_area\n");
    for &region in &settings.regions {
        let grid = region_grid(&spec, region, region_nx(settings, region), settings.grid_lambda)?;
        let truth = truth_on_points(&spec, &grid, settings.truth)?;
        match subject {
            Subject::Bayes(art) => {
                let mut rng = stream_rng(settings.seed, &format!("eval-{region}"));
                let summary = predictive(
                    &art.handle,
                    &spec,
                    &art.likelihood,
                    &grid,
                    settings.draws,
                    false,
                    &mut rng,
                )?;
                let med_res = metrics::posterior_median_residual(&spec, &art.handle, &grid)?;
                let report = eval_report(region, &summary.mean, &summary.std, &truth, med_res)?;
                log::info!(
                    "{region}: median RE {:.3e}, median residual {:.3e}, MA {:.3}",
                    report.median_re,
                    report.median_residual,
                    report.miscal_area
                );
                csv.push_str(&format!(
                    "{region},{},{},{},{}\n",
                    subject.method(),
                    report.median_re,
                    report.median_residual,
                    report.miscal_area
                ));
                region_values.push(serde_json::to_value(&report)?);
            }
            Subject::Det(det) => {
                let pred = det.evaluate(&grid)?;
                let med_res = metrics::median_residual(&spec, &det.params, &grid)?;
                let median_re = metrics::median_relative_error(&pred, &truth)?;
                let (mae, rmse) = metrics::mae_rmse(&pred, &truth)?;
                let quantiles = metrics::decile_table(&pred, &truth)?;
                log::info!(
                    "{region}: median RE {median_re:.3e}, median residual {med_res:.3e}"
                );
                csv.push_str(&format!("{region},det,{median_re},{med_res},-\n"));
                region_values.push(serde_json::to_value(DetReport {
                    region_tag: region,
                    median_re,
                    median_residual: med_res,
                    mae,
                    rmse,
                    quantiles,
                })?);
            }
        }
    }

    artifacts::write_json(
        out,
        &ReportFile {
            method: subject.method().to_string(),
            truth: settings.truth,
            regions: region_values,
        },
    )?;
    artifacts::write_text(&out.with_extension("csv"), &csv)?;
    log::info!("report written to {}", out.display());
    Ok(())
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let settings = EvalSettings {
        truth: args.truth.parse()?,
        regions: parse_regions(&args.regions)?,
        grid_x: args.grid_x,
        grid_lambda: args.grid_lambda,
        draws: args.draws,
        seed: args.seed,
    };
    let (subject, fingerprint, subject_file) = load_subject(&args.run)?;
    execute(&args.out, &args.run, &subject, &fingerprint, subject_file, &settings)
}
