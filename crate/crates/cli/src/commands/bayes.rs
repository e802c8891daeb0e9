//! `bayes`: fit a weight posterior on top of a trained bundle and summarize
//! its predictive distribution.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use bundle_uq::bayes::{bbb_train, build_dataset, nlm_fit, nuts_fit, predictive, LikelihoodSpec};
use bundle_uq::bounds::BoundTableSet;
use bundle_uq::metrics::{region_grid, RegionTag};
use bundle_uq::models::{ModelId, ModelSpec};
use bundle_uq::nn::NetworkParams;
use bundle_uq::presets::{bbb_preset, hmc_preset, nlm_preset, sigma_like, Preset};
use bundle_uq::rngutil::stream_rng;
use bundle_uq::train::DetSolution;
use bundle_uq::{Error, Result};

use crate::artifacts::{self, PosteriorArtifact};
use crate::commands::bounds::{certified_table_set, default_lambda_grid};

/// Partition count and residual samples per partition for bound tables
/// certified on the fly by the error-bound likelihood.
pub const EB_PARTITIONS: usize = 100;
pub const EB_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nlm,
    Bbb,
    Hmc,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nlm" => Ok(Method::Nlm),
            "bbb" => Ok(Method::Bbb),
            "hmc" => Ok(Method::Hmc),
            other => Err(Error::Config(format!(
                "unknown method '{other}', expected nlm | bbb | hmc"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nlm => "nlm",
            Method::Bbb => "bbb",
            Method::Hmc => "hmc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    Homo,
    Eb,
    Residual,
}

impl FromStr for LikelihoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homo" => Ok(LikelihoodKind::Homo),
            "eb" => Ok(LikelihoodKind::Eb),
            "residual" => Ok(LikelihoodKind::Residual),
            other => Err(Error::Config(format!(
                "unknown likelihood '{other}', expected homo | eb | residual"
            ))),
        }
    }
}

impl fmt::Display for LikelihoodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LikelihoodKind::Homo => "homo",
            LikelihoodKind::Eb => "eb",
            LikelihoodKind::Residual => "residual",
        })
    }
}

impl LikelihoodKind {
    pub fn matches(&self, like: &LikelihoodSpec) -> bool {
        matches!(
            (self, like),
            (LikelihoodKind::Homo, LikelihoodSpec::Homoscedastic(_))
                | (LikelihoodKind::Eb, LikelihoodSpec::ErrorBoundHetero(_))
                | (LikelihoodKind::Residual, LikelihoodSpec::ResidualBaseline(_))
        )
    }

    pub fn describe(like: &LikelihoodSpec) -> &'static str {
        match like {
            LikelihoodSpec::Homoscedastic(_) => "homo",
            LikelihoodSpec::ErrorBoundHetero(_) => "eb",
            LikelihoodSpec::ResidualBaseline(_) => "residual",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct BayesArgs {
    /// Posterior method: nlm, bbb, or hmc.
    #[arg(long)]
    pub method: String,
    /// Observation model: homo, eb, or residual.
    #[arg(long)]
    pub likelihood: String,
    /// Trained checkpoint to build on.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Hyperparameter scale: paper or desk.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Global seed; posterior randomness derives from its "bayes" stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for posterior.json, predictive.csv, and config.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Precomputed bound tables (tables.json) for the eb likelihood;
    /// certified on the fly when omitted.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    /// Posterior draws behind the predictive summary.
    #[arg(long, default_value_t = 64)]
    pub draws: usize,
    /// Predictive grid points along the independent variable.
    #[arg(long, default_value_t = 64)]
    pub grid_x: usize,
    /// Predictive grid points per bundle-parameter dimension.
    #[arg(long, default_value_t = 8)]
    pub grid_lambda: usize,
}

/// Fully resolved inputs of one bayes run, shared by the standalone command
/// and the pipeline stage.
pub struct BayesInputs<'a> {
    pub det: &'a DetSolution,
    pub preset: Preset,
    pub method: Method,
    pub kind: LikelihoodKind,
    pub seed: u64,
    pub draws: usize,
    pub grid_x: usize,
    pub grid_lambda: usize,
    pub checkpoint: &'a Path,
    pub bounds_file: Option<&'a Path>,
}

#[derive(Serialize)]
struct LikelihoodEcho {
    kind: LikelihoodKind,
    sigma: Option<f64>,
    bounds: Option<String>,
    bounds_fingerprint: Option<String>,
}

#[derive(Serialize)]
pub struct BayesRunConfig {
    command: &'static str,
    model_id: ModelId,
    preset: Preset,
    method: Method,
    likelihood: LikelihoodEcho,
    seed: u64,
    draws: usize,
    grid_x: usize,
    grid_lambda: usize,
    checkpoint: String,
    checkpoint_fingerprint: String,
    method_params: serde_json::Value,
}

pub fn run_config(inp: &BayesInputs) -> Result<BayesRunConfig> {
    let model = inp.det.spec.id;
    let method_params = match inp.method {
        Method::Nlm => serde_json::to_value(nlm_preset(model, inp.preset))?,
        Method::Bbb => serde_json::to_value(bbb_preset(model, inp.preset))?,
        Method::Hmc => serde_json::to_value(hmc_preset(model, inp.preset))?,
    };
    let p = inp.det.spec.n_bundle_params();
    let likelihood = match inp.kind {
        LikelihoodKind::Homo | LikelihoodKind::Residual => LikelihoodEcho {
            kind: inp.kind,
            sigma: Some(sigma_like(model)),
            bounds: None,
            bounds_fingerprint: None,
        },
        LikelihoodKind::Eb => LikelihoodEcho {
            kind: inp.kind,
            sigma: None,
            bounds: Some(inp.bounds_file.map_or_else(
                || {
                    format!(
                        "certified on the fly: {}^{p} lambda grid, {EB_PARTITIONS}x{EB_POINTS}",
                        default_lambda_grid(p)
                    )
                },
                |f| f.display().to_string(),
            )),
            bounds_fingerprint: inp
                .bounds_file
                .map(artifacts::file_fingerprint)
                .transpose()?,
        },
    };
    Ok(BayesRunConfig {
        command: "bayes",
        model_id: model,
        preset: inp.preset,
        method: inp.method,
        likelihood,
        seed: inp.seed,
        draws: inp.draws,
        grid_x: inp.grid_x,
        grid_lambda: inp.grid_lambda,
        checkpoint: inp.checkpoint.display().to_string(),
        checkpoint_fingerprint: artifacts::file_fingerprint(inp.checkpoint)?,
        method_params,
    })
}

/// Step-two layer layout: model input width, hidden layers, state width.
fn layer_sizes(spec: &ModelSpec, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(spec.input_dim());
    sizes.extend_from_slice(hidden);
    sizes.push(spec.state_dim);
    sizes
}

/// The deterministic optimum when it fits the step-two layout, else none
/// (fresh initialization).
fn init_params<'a>(det: &'a DetSolution, sizes: &[usize]) -> Option<&'a NetworkParams> {
    if det.params.layer_sizes == sizes {
        Some(&det.params)
    } else {
        log::info!(
            "step-two layers {:?} differ from checkpoint layers {:?}; starting fresh",
            sizes,
            det.params.layer_sizes
        );
        None
    }
}

/// Materialize the likelihood. The error-bound variant loads or certifies
/// its tables and writes them to `tables.json` in the run directory.
fn resolve_likelihood(inp: &BayesInputs, dir: &Path) -> Result<LikelihoodSpec> {
    let model = inp.det.spec.id;
    match inp.kind {
        LikelihoodKind::Homo => Ok(LikelihoodSpec::Homoscedastic(sigma_like(model))),
        LikelihoodKind::Residual => Ok(LikelihoodSpec::ResidualBaseline(sigma_like(model))),
        LikelihoodKind::Eb => {
            let tables = match inp.bounds_file {
                Some(path) => artifacts::read_json::<BoundTableSet>(path, "bound tables")?,
                None => {
                    let per_dim = default_lambda_grid(inp.det.spec.n_bundle_params());
                    log::info!(
                        "certifying bound tables on a {per_dim}-per-dimension lambda grid \
                         ({EB_PARTITIONS} partitions x {EB_POINTS} points)"
                    );
                    certified_table_set(inp.det, EB_PARTITIONS, EB_POINTS, per_dim)?
                }
            };
            artifacts::write_json(&dir.join(artifacts::TABLES), &tables)?;
            Ok(LikelihoodSpec::ErrorBoundHetero(tables))
        }
    }
}

pub fn execute(dir: &Path, inp: &BayesInputs) -> Result<()> {
    let spec = inp.det.spec.clone();
    let model = spec.id;
    artifacts::ensure_dir(dir)?;
    artifacts::write_config(dir, "bayes", &run_config(inp)?)?;
    let like = resolve_likelihood(inp, dir)?;
    like.validate(&spec)?;

    let mut rng = stream_rng(inp.seed, "bayes");
    let handle = match inp.method {
        Method::Nlm => {
            let p = nlm_preset(model, inp.preset);
            let set = build_dataset(inp.det, &like, p.samples_per_dim, &mut rng)?;
            log::info!(
                "neural linear fit on {} points ({} likelihood)",
                set.inputs.nrows(),
                inp.kind
            );
            nlm_fit(&inp.det.params, &set, &like, p.prior_std)?
        }
        Method::Bbb => {
            let p = bbb_preset(model, inp.preset);
            let set = build_dataset(inp.det, &like, p.samples_per_dim, &mut rng)?;
            let sizes = layer_sizes(&spec, &p.hidden);
            log::info!(
                "variational fit: {} iterations on {} points ({} likelihood)",
                p.iterations,
                set.inputs.nrows(),
                inp.kind
            );
            bbb_train(
                &spec,
                &sizes,
                &set,
                &like,
                &p.config(),
                init_params(inp.det, &sizes),
                &mut rng,
            )?
        }
        Method::Hmc => {
            let p = hmc_preset(model, inp.preset);
            let set = build_dataset(inp.det, &like, p.samples_per_dim, &mut rng)?;
            let sizes = layer_sizes(&spec, &p.hidden);
            log::info!(
                "sampling {} posterior draws ({} tuning) on {} points ({} likelihood)",
                p.posterior_samples,
                p.tune_samples,
                set.inputs.nrows(),
                inp.kind
            );
            nuts_fit(
                &spec,
                &sizes,
                &set,
                &like,
                p.prior_std,
                p.posterior_samples,
                p.tune_samples,
                init_params(inp.det, &sizes),
                &mut rng,
            )?
        }
    };

    let artifact = PosteriorArtifact {
        model_id: model,
        preset: inp.preset,
        method: handle.method().to_string(),
        seed: inp.seed,
        spec: spec.clone(),
        likelihood: like.clone(),
        handle,
    };
    artifacts::write_json(&dir.join(artifacts::POSTERIOR), &artifact)?;

    let grid = region_grid(&spec, RegionTag::Test, inp.grid_x, inp.grid_lambda)?;
    let summary = predictive(
        &artifact.handle,
        &spec,
        &like,
        &grid,
        inp.draws,
        false,
        &mut rng,
    )?;
    let mut header = String::from("x");
    for name in &spec.bundle_param_names {
        header.push(',');
        header.push_str(name);
    }
    for k in 1..=spec.state_dim {
        header.push_str(&format!(",mean_{k}"));
    }
    for k in 1..=spec.state_dim {
        header.push_str(&format!(",std_{k}"));
    }
    let rows = (0..grid.nrows()).map(|i| {
        let mut row: Vec<f64> = grid.row(i).to_vec();
        row.extend(summary.mean.row(i).iter().copied());
        row.extend(summary.std.row(i).iter().copied());
        row
    });
    artifacts::write_csv(&dir.join(artifacts::PREDICTIVE), &header, rows)?;
    log::info!(
        "{} posterior over {} points written to {}",
        artifact.method,
        grid.nrows(),
        dir.display()
    );
    Ok(())
}

pub fn run(args: &BayesArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let kind: LikelihoodKind = args.likelihood.parse()?;
    let preset: Preset = args.preset.parse()?;
    let det: DetSolution = artifacts::read_json(&args.checkpoint, "checkpoint")?;
    let inputs = BayesInputs {
        det: &det,
        preset,
        method,
        kind,
        seed: args.seed,
        draws: args.draws,
        grid_x: args.grid_x,
        grid_lambda: args.grid_lambda,
        checkpoint: &args.checkpoint,
        bounds_file: args.bounds.as_deref(),
    };
    execute(&args.out, &inputs)
}
