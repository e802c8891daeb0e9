//! `bounds`: certify sound error-bound tables for a trained bundle.

use std::path::PathBuf;

use serde::Serialize;

use bundle_uq::bounds::{self, BoundTable, BoundTableSet};
use bundle_uq::models::ModelId;
use bundle_uq::train::{self, DetSolution};
use bundle_uq::{Error, Result};

use crate::artifacts;

#[derive(Debug, clap::Args)]
pub struct BoundsArgs {
    /// Model the checkpoint was trained on: lcdm or cpl.
    #[arg(long)]
    pub model: String,
    /// Trained checkpoint (checkpoint.json from a train run).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Bundle parameters, comma-separated (e.g. "0.3" or "-0.9,0.1").
    #[arg(long)]
    pub lambda: String,
    /// Number of domain partitions.
    #[arg(long, default_value_t = 100)]
    pub partitions: usize,
    /// Residual samples per partition.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Output CSV with columns t,bound; config.json lands beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct BoundsRunConfig {
    command: &'static str,
    model_id: ModelId,
    checkpoint: String,
    checkpoint_fingerprint: String,
    lambda: Vec<f64>,
    partitions: usize,
    points: usize,
    out: String,
}

pub fn parse_lambda(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad lambda component {f:?}: {e}")))
        })
        .collect()
}

/// Certified residual-integral bound table for one bundle-parameter point,
/// over the training range.
pub fn certified_table(
    det: &DetSolution,
    lam: &[f64],
    partitions: usize,
    points: usize,
) -> Result<BoundTable> {
    let spec = &det.spec;
    if lam.len() != spec.n_bundle_params() {
        return Err(Error::DimensionMismatch {
            context: "bound lambda",
            expected: spec.n_bundle_params(),
            actual: lam.len(),
        });
    }
    let ingredients = match spec.id {
        ModelId::Lcdm => bounds::lcdm_ingredients(lam),
        ModelId::Cpl => bounds::cpl_ingredients(lam)?,
        other => {
            return Err(Error::Config(format!(
                "certified bounds exist for lcdm and cpl only, not {other}"
            )))
        }
    };
    let residual_fn = |t: f64| Ok(train::residual(spec, &det.params, t, lam)?[0]);
    bounds::tight_bounds(
        spec.train_range,
        residual_fn,
        &ingredients,
        partitions,
        points,
    )
}

/// Grid resolution per bundle-parameter dimension for a table set: dense for
/// one parameter, coarser when tables multiply.
pub fn default_lambda_grid(n_bundle_params: usize) -> usize {
    if n_bundle_params <= 1 {
        9
    } else {
        5
    }
}

/// Bound tables on a uniform grid over the bundle box (`per_dim` points per
/// dimension, endpoints included), for nearest-λ lookups by the error-bound
/// likelihood.
pub fn certified_table_set(
    det: &DetSolution,
    partitions: usize,
    points: usize,
    per_dim: usize,
) -> Result<BoundTableSet> {
    if per_dim < 2 {
        return Err(Error::Config(format!(
            "lambda grid needs at least 2 points per dimension, got {per_dim}"
        )));
    }
    let spec = &det.spec;
    let p = spec.n_bundle_params();
    let total = per_dim.pow(p as u32);
    let mut tables = Vec::with_capacity(total);
    let mut lam = vec![0.0; p];
    for flat in 0..total {
        let mut rest = flat;
        for (j, (lo, hi)) in spec.bundle_param_box.iter().enumerate() {
            let i = rest % per_dim;
            rest /= per_dim;
            lam[j] = lo + (hi - lo) * i as f64 / (per_dim - 1) as f64;
        }
        tables.push(certified_table(det, &lam, partitions, points)?);
    }
    BoundTableSet::new(tables)
}

/// CSV rows for one table: a leading `(t_min, 0)` anchor, then the certified
/// right-endpoint bounds.
pub fn table_rows(table: &BoundTable) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(table.times.len() + 1);
    rows.push(vec![table.t_min, 0.0]);
    for (t, b) in table.times.iter().zip(&table.bounds) {
        rows.push(vec![*t, *b]);
    }
    rows
}

pub fn run(args: &BoundsArgs) -> Result<()> {
    let model: ModelId = args.model.parse()?;
    let lam = parse_lambda(&args.lambda)?;
    let det: DetSolution = artifacts::read_json(&args.checkpoint, "checkpoint")?;
    if det.spec.id != model {
        return Err(Error::Config(format!(
            "checkpoint was trained on {}, not {model}",
            det.spec.id
        )));
    }
    let dir = args.out.parent().map(PathBuf::from).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir
    };
    artifacts::ensure_dir(&dir)?;
    artifacts::write_config(
        &dir,
        "bounds",
        &BoundsRunConfig {
            command: "bounds",
            model_id: model,
            checkpoint: args.checkpoint.display().to_string(),
            checkpoint_fingerprint: artifacts::file_fingerprint(&args.checkpoint)?,
            lambda: lam.clone(),
            partitions: args.partitions,
            points: args.points,
            out: args.out.display().to_string(),
        },
    )?;
    log::info!(
        "certifying bounds for {model} at lambda {:?} ({} partitions x {} points)",
        lam,
        args.partitions,
        args.points
    );
    let table = certified_table(&det, &lam, args.partitions, args.points)?;
    let last = table.bounds.last().copied().unwrap_or(0.0);
    artifacts::write_csv(&args.out, "t,bound", table_rows(&table))?;
    log::info!("bound at domain end: {last:.3e}; wrote {}", args.out.display());
    Ok(())
}
