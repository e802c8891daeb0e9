//! `plot`: render a run's artifacts to a self-contained SVG.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use bundle_uq::bayes::predictive;
use bundle_uq::metrics::{coverage_curve, region_grid, RegionTag};
use bundle_uq::models::{truth_on_points, ModelId, ModelSpec, Oracle};
use bundle_uq::rngutil::stream_rng;
use bundle_uq::train::DetSolution;
use bundle_uq::{Error, Result};

use crate::artifacts;
use crate::commands::eval::{load_subject, Subject};
use crate::svg::{self, Axes, Figure, BLUE, GRAY, ORANGE};

#[derive(Debug, clap::Args)]
pub struct PlotArgs {
    /// Run directory holding the artifacts to render.
    #[arg(long)]
    pub run: PathBuf,
    /// Plot family: solution, bounds, calibration, or corner.
    #[arg(long)]
    pub kind: String,
    /// Output SVG; defaults to <run>/<kind>.svg.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Posterior draws behind predictive curves.
    #[arg(long, default_value_t = 64)]
    pub draws: usize,
    /// Global seed; plot randomness derives from its "plot" stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn default_oracle(model: ModelId) -> Oracle {
    match model {
        ModelId::Lcdm | ModelId::Cpl => Oracle::Analytic,
        _ => Oracle::Rk,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Column of evaluation points at a fixed bundle parameter.
fn line_points(spec: &ModelSpec, xs: &[f64], lam: &[f64]) -> Array2<f64> {
    let p = spec.n_bundle_params();
    let mut pts = Array2::zeros((xs.len(), 1 + p));
    for (i, &x) in xs.iter().enumerate() {
        pts[[i, 0]] = x;
        for (j, &l) in lam.iter().enumerate() {
            pts[[i, 1 + j]] = l;
        }
    }
    pts
}

fn fmt_lambda(names: &[String], lam: &[f64]) -> String {
    names
        .iter()
        .zip(lam)
        .map(|(n, v)| format!("{n}={v:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Posterior (or deterministic) mean across the full x extent at the center
/// of the bundle box, with a 2-sigma band and the oracle dotted.
fn solution(run: &Path, out: &Path, draws: usize, seed: u64) -> Result<()> {
    let (subject, _, _) = load_subject(run)?;
    let spec = subject.spec().clone();
    let lam: Vec<f64> = spec.bundle_param_box.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let x_lo = spec.train_range.0.min(spec.ood_range.0);
    let x_hi = spec.train_range.1.max(spec.ood_range.1);
    let xs = linspace(x_lo, x_hi, 241);
    let pts = line_points(&spec, &xs, &lam);

    let (mean, std) = match &subject {
        Subject::Bayes(art) => {
            let mut rng = stream_rng(seed, "plot");
            let summary = predictive(
                &art.handle,
                &spec,
                &art.likelihood,
                &pts,
                draws,
                false,
                &mut rng,
            )?;
            (summary.mean, Some(summary.std))
        }
        Subject::Det(det) => (det.evaluate(&pts)?, None),
    };
    let oracle = truth_on_points(&spec, &pts, default_oracle(spec.id))?;

    let d = spec.state_dim;
    let (pw, ph, left, top, vgap) = (540.0, 220.0, 80.0, 48.0, 72.0);
    let width = left + pw + 30.0;
    let height = top + d as f64 * (ph + vgap);
    let mut fig = Figure::new(width, height);
    fig.comment(&format!(
        "kind=solution method={} model={} lambda=[{}] draws={draws} seed={seed}",
        subject.method(),
        spec.id,
        fmt_lambda(&spec.bundle_param_names, &lam)
    ));
    fig.text(
        width / 2.0,
        20.0,
        &format!(
            "{}: mean, 2-sigma band, oracle dotted ({})",
            spec.id,
            fmt_lambda(&spec.bundle_param_names, &lam)
        ),
        13.0,
        "middle",
    );

    for k in 0..d {
        fig.comment(&format!("panel {}", k + 1));
        let py = top + k as f64 * (ph + vgap);
        let mean_k: Vec<f64> = (0..xs.len()).map(|i| mean[[i, k]]).collect();
        let truth_k: Vec<f64> = (0..xs.len()).map(|i| oracle[[i, k]]).collect();
        let (lo_k, hi_k) = match &std {
            Some(s) => {
                let lo: Vec<f64> = (0..xs.len()).map(|i| mean[[i, k]] - 2.0 * s[[i, k]]).collect();
                let hi: Vec<f64> = (0..xs.len()).map(|i| mean[[i, k]] + 2.0 * s[[i, k]]).collect();
                (lo, hi)
            }
            None => (mean_k.clone(), mean_k.clone()),
        };
        let y_range = svg::padded(svg::data_range(
            lo_k.iter()
                .chain(&hi_k)
                .chain(&mean_k)
                .chain(&truth_k)
                .copied(),
        ));
        let axes = Axes::new(left, py, pw, ph, (x_lo, x_hi), y_range);
        axes.frame(
            &mut fig,
            "",
            if k + 1 == d { "x" } else { "" },
            &format!("u_{}", k + 1),
        );
        // Training/extrapolation boundary.
        let edge = spec.train_range.1;
        if edge > x_lo && edge < x_hi {
            axes.polyline(
                &mut fig,
                &[(edge, y_range.0), (edge, y_range.1)],
                "#999999",
                1.0,
                Some("4 4"),
            );
        }
        if std.is_some() {
            axes.band(&mut fig, &xs, &lo_k, &hi_k, BLUE);
        }
        let mean_pts: Vec<(f64, f64)> = xs.iter().copied().zip(mean_k).collect();
        axes.polyline(&mut fig, &mean_pts, BLUE, 1.5, None);
        let truth_pts: Vec<(f64, f64)> = xs.iter().copied().zip(truth_k).collect();
        axes.polyline(&mut fig, &truth_pts, GRAY, 1.5, Some("2 4"));
    }
    artifacts::write_text(out, &fig.render())
}

/// Certified bound from table.csv against the realized absolute error of the
/// checkpoint the table was certified for.
fn bounds(run: &Path, out: &Path) -> Result<()> {
    let conf: serde_json::Value =
        artifacts::read_json(&run.join(artifacts::CONFIG), "bounds run config")?;
    if conf["command"] != "bounds" {
        return Err(Error::Config(format!(
            "{} does not hold a bounds run (config command is {})",
            run.display(),
            conf["command"]
        )));
    }
    let lam: Vec<f64> = conf["lambda"]
        .as_array()
        .map(|a| a.iter().filter_map(serde_json::Value::as_f64).collect())
        .unwrap_or_default();
    let mut table_candidates: Vec<PathBuf> = Vec::new();
    if let Some(recorded) = conf["out"].as_str().map(PathBuf::from) {
        if let Some(name) = recorded.file_name() {
            table_candidates.push(run.join(name));
        }
        table_candidates.insert(0, recorded);
    }
    table_candidates.push(run.join(artifacts::TABLE));
    let table_path = table_candidates
        .iter()
        .find(|p| p.exists())
        .ok_or_else(|| {
            Error::Config(format!("cannot locate the bound table near {}", run.display()))
        })?;
    let (_, rows) = artifacts::read_csv(table_path, "bound table")?;

    // The certified checkpoint: as recorded, else relative to the run
    // directory, else the sibling train stage.
    let recorded = conf["checkpoint"].as_str().unwrap_or(artifacts::CHECKPOINT);
    let candidates = [
        PathBuf::from(recorded),
        run.join(recorded),
        run.parent()
            .unwrap_or(run)
            .join("train")
            .join(artifacts::CHECKPOINT),
    ];
    let ckpt = candidates
        .iter()
        .find(|p| p.exists())
        .ok_or_else(|| {
            Error::Config(format!("cannot locate the certified checkpoint {recorded}"))
        })?;
    let det: DetSolution = artifacts::read_json(ckpt, "checkpoint")?;
    let spec = det.spec.clone();
    if lam.len() != spec.n_bundle_params() {
        return Err(Error::Config(format!(
            "bounds config carries {} lambda components, {} expects {}",
            lam.len(),
            spec.id,
            spec.n_bundle_params()
        )));
    }

    let bound_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
    let t_end = bound_pts.last().map_or(spec.train_range.1, |p| p.0);
    let xs = linspace(spec.train_range.0, t_end, 201);
    let pts = line_points(&spec, &xs, &lam);
    let pred = det.evaluate(&pts)?;
    let truth = truth_on_points(&spec, &pts, Oracle::Analytic)?;
    let err_pts: Vec<(f64, f64)> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, (pred[[i, 0]] - truth[[i, 0]]).abs()))
        .collect();

    let (width, height) = (660.0, 340.0);
    let mut fig = Figure::new(width, height);
    fig.comment(&format!(
        "kind=bounds model={} lambda=[{}]",
        spec.id,
        fmt_lambda(&spec.bundle_param_names, &lam)
    ));
    let y_range = svg::padded((
        0.0,
        svg::data_range(bound_pts.iter().chain(&err_pts).map(|p| p.1)).1,
    ));
    let axes = Axes::new(80.0, 48.0, 540.0, 230.0, (spec.train_range.0, t_end), y_range);
    axes.frame(
        &mut fig,
        &format!(
            "{}: certified bound vs realized error ({})",
            spec.id,
            fmt_lambda(&spec.bundle_param_names, &lam)
        ),
        "x",
        "absolute error",
    );
    axes.polyline(&mut fig, &bound_pts, ORANGE, 1.8, None);
    axes.polyline(&mut fig, &err_pts, BLUE, 1.5, None);
    fig.text(90.0, 30.0, "certified bound", 11.0, "start");
    fig.push(&format!(
        "<rect x=\"200\" y=\"22\" width=\"18\" height=\"4\" fill=\"{ORANGE}\"/>"
    ));
    fig.text(240.0, 30.0, "|network - analytic|", 11.0, "start");
    fig.push(&format!(
        "<rect x=\"400\" y=\"22\" width=\"18\" height=\"4\" fill=\"{BLUE}\"/>"
    ));
    artifacts::write_text(out, &fig.render())
}

/// Empirical coverage against nominal central-interval probability on the
/// test grid.
fn calibration(run: &Path, out: &Path, draws: usize, seed: u64) -> Result<()> {
    let (subject, _, _) = load_subject(run)?;
    let art = match &subject {
        Subject::Bayes(art) => art,
        Subject::Det(_) => {
            return Err(Error::Config(
                "calibration plots need a posterior run; this directory holds a \
                 deterministic checkpoint"
                    .to_string(),
            ))
        }
    };
    let spec = art.spec.clone();
    let grid = region_grid(&spec, RegionTag::Test, 64, 8)?;
    let truth = truth_on_points(&spec, &grid, default_oracle(spec.id))?;
    let mut rng = stream_rng(seed, "plot");
    let summary = predictive(
        &art.handle,
        &spec,
        &art.likelihood,
        &grid,
        draws,
        false,
        &mut rng,
    )?;
    let curve = coverage_curve(&summary.mean, &summary.std, &truth)?;
    let ma = curve.iter().map(|&(p, c)| (c - p).abs()).sum::<f64>() / curve.len() as f64;

    let (width, height) = (420.0, 420.0);
    let mut fig = Figure::new(width, height);
    fig.comment(&format!(
        "kind=calibration method={} model={} draws={draws} seed={seed}",
        art.method, spec.id
    ));
    let axes = Axes::new(70.0, 48.0, 310.0, 310.0, (0.0, 1.0), (0.0, 1.0));
    axes.frame(
        &mut fig,
        &format!("{} {}: calibration (MA = {ma:.3})", spec.id, art.method),
        "nominal coverage",
        "empirical coverage",
    );
    axes.polyline(&mut fig, &[(0.0, 0.0), (1.0, 1.0)], GRAY, 1.0, Some("3 3"));
    axes.polyline(&mut fig, &curve, BLUE, 1.8, None);
    artifacts::write_text(out, &fig.render())
}

fn histogram(values: &[f64], range: (f64, f64), bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let span = range.1 - range.0;
    for &v in values {
        let b = (((v - range.0) / span * bins as f64) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let peak = counts.iter().cloned().fold(0.0, f64::max).max(1.0);
    counts.iter().map(|c| c / peak).collect()
}

fn histogram2d(
    xs: &[f64],
    ys: &[f64],
    xr: (f64, f64),
    yr: (f64, f64),
    bins: usize,
) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0f64; bins]; bins];
    for (&x, &y) in xs.iter().zip(ys) {
        let bx = (((x - xr.0) / (xr.1 - xr.0) * bins as f64) as usize).min(bins - 1);
        let by = (((y - yr.0) / (yr.1 - yr.0) * bins as f64) as usize).min(bins - 1);
        counts[by][bx] += 1.0;
    }
    let peak = counts
        .iter()
        .flatten()
        .cloned()
        .fold(0.0, f64::max)
        .max(1.0);
    counts
        .iter()
        .map(|row| row.iter().map(|c| c / peak).collect())
        .collect()
}

/// Pairwise 2-d histograms of the equation-parameter chain, 1-d histograms
/// on the diagonal.
fn corner(run: &Path, out: &Path) -> Result<()> {
    let (header, rows) = artifacts::read_csv(&run.join(artifacts::CHAIN), "chain")?;
    if header.len() < 4 || header[0] != "walker" || header[1] != "step" {
        return Err(Error::Config(format!(
            "{} does not look like a chain file (columns {:?})",
            run.join(artifacts::CHAIN).display(),
            header
        )));
    }
    let names: Vec<&str> = header[2..header.len() - 1].iter().map(String::as_str).collect();
    let d = names.len();
    let steps = rows.iter().map(|r| r[1] as usize).max().unwrap_or(0) + 1;
    let burn = steps / 5;
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            rows.iter()
                .filter(|r| r[1] as usize >= burn)
                .map(|r| r[2 + j])
                .collect()
        })
        .collect();
    let ranges: Vec<(f64, f64)> = cols
        .iter()
        .map(|c| svg::padded(svg::data_range(c.iter().copied())))
        .collect();

    let (cell, gap, left, top) = (180.0, 34.0, 84.0, 40.0);
    let stride = cell + gap;
    let width = left + d as f64 * stride + 20.0;
    let height = top + d as f64 * stride + 40.0;
    let mut fig = Figure::new(width, height);
    fig.comment(&format!(
        "kind=corner params=[{}] kept_steps={} burn_in={burn}",
        names.join(", "),
        steps - burn
    ));
    fig.text(
        width / 2.0,
        22.0,
        &format!("posterior over {}", names.join(", ")),
        13.0,
        "middle",
    );

    for row in 0..d {
        for col in 0..=row {
            let px = left + col as f64 * stride;
            let py = top + row as f64 * stride;
            let xlabel = if row + 1 == d { names[col] } else { "" };
            if row == col {
                let bins = 30;
                let hist = histogram(&cols[col], ranges[col], bins);
                let axes = Axes::new(px, py, cell, cell, ranges[col], (0.0, 1.05));
                axes.frame(&mut fig, "", xlabel, if col == 0 { names[0] } else { "" });
                let bw = (ranges[col].1 - ranges[col].0) / bins as f64;
                for (b, &h) in hist.iter().enumerate() {
                    let x0 = ranges[col].0 + b as f64 * bw;
                    axes.bar(&mut fig, x0, x0 + bw, h);
                }
            } else {
                let bins = 40;
                let hist = histogram2d(&cols[col], &cols[row], ranges[col], ranges[row], bins);
                let axes = Axes::new(px, py, cell, cell, ranges[col], ranges[row]);
                axes.frame(&mut fig, "", xlabel, if col == 0 { names[row] } else { "" });
                let bw = (ranges[col].1 - ranges[col].0) / bins as f64;
                let bh = (ranges[row].1 - ranges[row].0) / bins as f64;
                for (by, hrow) in hist.iter().enumerate() {
                    for (bx, &w) in hrow.iter().enumerate() {
                        let x0 = ranges[col].0 + bx as f64 * bw;
                        let y0 = ranges[row].0 + by as f64 * bh;
                        axes.cell(&mut fig, x0, x0 + bw, y0, y0 + bh, w);
                    }
                }
            }
        }
    }
    artifacts::write_text(out, &fig.render())
}

pub fn run(args: &PlotArgs) -> Result<()> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.run.join(format!("{}.svg", args.kind)));
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            artifacts::ensure_dir(dir)?;
        }
    }
    match args.kind.as_str() {
        "solution" => solution(&args.run, &out, args.draws, args.seed)?,
        "bounds" => bounds(&args.run, &out)?,
        "calibration" => calibration(&args.run, &out, args.draws, args.seed)?,
        "corner" => corner(&args.run, &out)?,
        other => {
            return Err(Error::Config(format!(
                "unknown plot kind '{other}', expected solution | bounds | calibration | corner"
            )))
        }
    }
    log::info!("{} plot written to {}", args.kind, out.display());
    Ok(())
}
