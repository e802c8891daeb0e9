//! `inverse`: estimate equation parameters from Hubble observations with an
//! affine-invariant ensemble, marginalizing over the learned solution.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use bundle_uq::inverse::{
    default_prior_box, ensemble_sample, load_cc, summarize, InferenceTask, SolutionSource,
};
use bundle_uq::models::{ModelId, ModelSpec};
use bundle_uq::rngutil::stream_rng;
use bundle_uq::train::DetSolution;
use bundle_uq::{Error, Result};

use crate::artifacts::{self, PosteriorArtifact};
use crate::commands::bayes::LikelihoodKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Det,
    Nlm,
    Bbb,
    Hmc,
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "det" => Ok(SourceKind::Det),
            "nlm" => Ok(SourceKind::Nlm),
            "bbb" => Ok(SourceKind::Bbb),
            "hmc" => Ok(SourceKind::Hmc),
            other => Err(Error::Config(format!(
                "unknown source '{other}', expected det | nlm | bbb | hmc"
            ))),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Det => "det",
            SourceKind::Nlm => "nlm",
            SourceKind::Bbb => "bbb",
            SourceKind::Hmc => "hmc",
        })
    }
}

#[derive(Debug, clap::Args)]
pub struct InverseArgs {
    /// Equation model: lcdm, cpl, quintessence, or hs.
    #[arg(long)]
    pub model: String,
    /// Solution source: det, nlm, bbb, or hmc.
    #[arg(long)]
    pub source: String,
    /// Observation model the posterior artifact must have been fit with
    /// (homo or eb); checked against the artifact, ignored for det.
    #[arg(long)]
    pub likelihood: Option<String>,
    /// Ensemble walkers.
    #[arg(long, default_value_t = 32)]
    pub walkers: usize,
    /// Steps per walker.
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Run directory for chain.csv, summary.json, and diagnostics.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained checkpoint (required with --source det).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Posterior artifact (required with posterior sources).
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Solution draws marginalized per likelihood evaluation.
    #[arg(long, default_value_t = 50)]
    pub draws: usize,
    /// Global seed; chain randomness derives from its "inverse" stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leading fraction of steps dropped before summarizing.
    #[arg(long, default_value_t = 0.2)]
    pub burn_in: f64,
}

/// A validated solution source plus the provenance recorded in config.json.
pub struct ResolvedSource {
    pub kind: SourceKind,
    pub source: SolutionSource,
    pub spec: ModelSpec,
    pub path: String,
    pub fingerprint: String,
    pub likelihood: Option<&'static str>,
}

pub fn resolve_source(
    model: ModelId,
    kind: SourceKind,
    checkpoint: Option<&Path>,
    posterior: Option<&Path>,
    likelihood: Option<LikelihoodKind>,
) -> Result<ResolvedSource> {
    match kind {
        SourceKind::Det => {
            let path = checkpoint.ok_or_else(|| {
                Error::Config("--source det needs --checkpoint".to_string())
            })?;
            let det: DetSolution = artifacts::read_json(path, "checkpoint")?;
            if det.spec.id != model {
                return Err(Error::Config(format!(
                    "checkpoint was trained on {}, not {model}",
                    det.spec.id
                )));
            }
            Ok(ResolvedSource {
                kind,
                spec: det.spec.clone(),
                fingerprint: artifacts::file_fingerprint(path)?,
                path: path.display().to_string(),
                source: SolutionSource::Deterministic(det),
                likelihood: None,
            })
        }
        SourceKind::Nlm | SourceKind::Bbb | SourceKind::Hmc => {
            let path = posterior.ok_or_else(|| {
                Error::Config(format!("--source {kind} needs --posterior"))
            })?;
            let art: PosteriorArtifact = artifacts::read_json(path, "posterior artifact")?;
            if art.model_id != model {
                return Err(Error::Config(format!(
                    "posterior artifact was fit on {}, not {model}",
                    art.model_id
                )));
            }
            let expect = match kind {
                SourceKind::Nlm => "nlm",
                SourceKind::Bbb => "bbb",
                SourceKind::Hmc => "nuts",
                SourceKind::Det => unreachable!(),
            };
            if art.handle.method() != expect {
                return Err(Error::Config(format!(
                    "posterior artifact holds a '{}' posterior, but --source {kind} was requested",
                    art.handle.method()
                )));
            }
            let actual = LikelihoodKind::describe(&art.likelihood);
            if let Some(want) = likelihood {
                if !want.matches(&art.likelihood) {
                    return Err(Error::Config(format!(
                        "posterior artifact was fit with the '{actual}' likelihood, not '{want}'"
                    )));
                }
            }
            Ok(ResolvedSource {
                kind,
                spec: art.spec.clone(),
                fingerprint: artifacts::file_fingerprint(path)?,
                path: path.display().to_string(),
                source: SolutionSource::Bayesian {
                    handle: art.handle,
                    likelihood: art.likelihood,
                },
                likelihood: Some(actual),
            })
        }
    }
}

#[derive(Clone, Copy)]
pub struct InverseSettings {
    pub walkers: usize,
    pub steps: usize,
    pub draws: usize,
    pub seed: u64,
    pub burn_in: f64,
}

#[derive(Serialize)]
pub struct InverseRunConfig {
    command: &'static str,
    model_id: ModelId,
    source: SourceKind,
    source_path: String,
    source_fingerprint: String,
    likelihood: Option<&'static str>,
    walkers: usize,
    steps: usize,
    solution_draws: usize,
    seed: u64,
    burn_in_fraction: f64,
    param_names: Vec<String>,
    prior_box: Vec<(f64, f64)>,
}

pub fn run_config(src: &ResolvedSource, settings: &InverseSettings) -> InverseRunConfig {
    let mut param_names = src.spec.bundle_param_names.clone();
    param_names.push("h0".to_string());
    InverseRunConfig {
        command: "inverse",
        model_id: src.spec.id,
        source: src.kind,
        source_path: src.path.clone(),
        source_fingerprint: src.fingerprint.clone(),
        likelihood: src.likelihood,
        walkers: settings.walkers,
        steps: settings.steps,
        solution_draws: settings.draws,
        seed: settings.seed,
        burn_in_fraction: settings.burn_in,
        param_names,
        prior_box: default_prior_box(&src.spec),
    }
}

pub fn execute(dir: &Path, src: ResolvedSource, settings: &InverseSettings) -> Result<()> {
    artifacts::ensure_dir(dir)?;
    artifacts::write_config(dir, "inverse", &run_config(&src, settings))?;

    let mut task = InferenceTask::new(src.spec.clone(), src.source);
    task.walkers = settings.walkers;
    task.steps = settings.steps;
    task.m_draws = settings.draws;
    task.seed = settings.seed;
    let obs = load_cc();
    log::info!(
        "sampling {} walkers x {} steps over {:?} against {} observations",
        task.walkers,
        task.steps,
        task.param_names(),
        obs.len()
    );
    let mut rng = stream_rng(settings.seed, "inverse");
    let chain = ensemble_sample(&task, &obs, &mut rng)?;

    let header = format!("walker,step,{},logp", chain.param_names.join(","));
    let (walkers, steps, dim) = chain.samples.dim();
    let rows = (0..walkers).flat_map(|w| {
        let chain = &chain;
        (0..steps).map(move |t| {
            let mut row = Vec::with_capacity(dim + 3);
            row.push(w as f64);
            row.push(t as f64);
            for c in 0..dim {
                row.push(chain.samples[[w, t, c]]);
            }
            row.push(chain.log_probs[[w, t]]);
            row
        })
    });
    artifacts::write_csv(&dir.join(artifacts::CHAIN), &header, rows)?;

    let summaries = summarize(&chain, settings.burn_in)?;
    let mut map = serde_json::Map::new();
    for s in &summaries {
        map.insert(s.name.clone(), json!({ "mean": s.mean, "std": s.std }));
        log::info!("  {} = {:.4} +/- {:.4}", s.name, s.mean, s.std);
    }
    artifacts::write_json(&dir.join(artifacts::SUMMARY), &serde_json::Value::Object(map))?;
    artifacts::write_json(
        &dir.join(artifacts::DIAGNOSTICS),
        &json!({
            "acceptance_rate": chain.acceptance_rate,
            "burn_in_steps": chain.burn_in,
            "walkers": walkers,
            "steps": steps,
            "solution_draws": settings.draws,
            "total_samples": walkers * steps,
        }),
    )?;
    log::info!(
        "chain written to {} (acceptance rate {:.3})",
        dir.display(),
        chain.acceptance_rate
    );
    Ok(())
}

pub fn run(args: &InverseArgs) -> Result<()> {
    let model: ModelId = args.model.parse()?;
    let kind: SourceKind = args.source.parse()?;
    let likelihood = args
        .likelihood
        .as_deref()
        .map(str::parse::<LikelihoodKind>)
        .transpose()?;
    if likelihood == Some(LikelihoodKind::Residual) {
        return Err(Error::Config(
            "the inverse command takes --likelihood homo or eb".to_string(),
        ));
    }
    let src = resolve_source(
        model,
        kind,
        args.checkpoint.as_deref(),
        args.posterior.as_deref(),
        likelihood,
    )?;
    let settings = InverseSettings {
        walkers: args.walkers,
        steps: args.steps,
        draws: args.draws,
        seed: args.seed,
        burn_in: args.burn_in,
    };
    execute(&args.out, src, &settings)
}
