use std::path::{Path, PathBuf};

use forge_core::csvio::{read_trajectories_path, write_trajectories_path};
use forge_core::encounter::{build_scenarios, write_library};
use forge_core::metrics::evaluate;
use forge_core::preprocess::{preprocess_route, PreprocessError};
use forge_core::smoothing::{smooth_with, SavgolFilter};
use forge_core::synth::{synth_flow, FlowSpec};
use forge_core::{RouteDataset, Trajectory};
use forge_vae::{generate, load_weights, save_weights, train_with, VaeError};
use serde_json::json;

use crate::{Cli, CliError, Command, PipelineConfig};

/// What a command reports: a human line and the same facts as JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub text: String,
    pub json: serde_json::Value,
}

fn validation(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn vae_error(path: &Path, e: VaeError) -> CliError {
    match e {
        VaeError::Io(_) | VaeError::Nn(_) => runtime(path, e),
        _ => validation(path, e),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(validation(path, "no such file"))
    }
}

fn out_path(cli: &Cli) -> Result<&Path, CliError> {
    cli.out.as_deref().ok_or_else(|| CliError::Validation("--out is required".into()))
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    require_file(path)?;
    read_trajectories_path(path).map_err(|e| validation(path, e))
}

pub fn load_dataset(path: &Path) -> Result<RouteDataset, CliError> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| validation(path, e))?;
    let ds: RouteDataset = serde_json::from_str(&text)
        .map_err(|e| validation(path, format!("line {}, column {}: {e}", e.line(), e.column())))?;
    ds.validate().map_err(|e| validation(path, e))?;
    Ok(ds)
}

/// CSV pools, or dataset JSON when the extension says so.
fn load_pool(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(load_dataset(path)?.trajectories)
    } else {
        load_trajectories(path)
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| runtime(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| runtime(path, e))
}

pub(crate) fn dispatch(cli: &Cli, cfg: &PipelineConfig) -> Result<Summary, CliError> {
    match &cli.command {
        Command::Synth { kind, route, count } => {
            let kind = kind.unwrap_or(cfg.synth.kind);
            let count = count.unwrap_or(cfg.synth.count);
            let seed = cli.seed.unwrap_or(cfg.seeds.synth);
            if !matches!(route, 1 | 2) {
                return Err(CliError::Validation(format!("--route must be 1 or 2, got {route}")));
            }
            let out = out_path(cli)?;
            let tracks = synth_flow(&FlowSpec::preset(kind, *route), &format!("r{route}_"), count, seed);
            write_trajectories_path(out, &tracks).map_err(|e| runtime(out, e))?;
            Ok(Summary {
                text: format!("wrote {count} synthetic {kind:?} tracks (route {route}) to {}", out.display()),
                json: json!({"command": "synth", "kind": kind, "route": route, "count": count, "seed": seed}),
            })
        }
        Command::Preprocess { input, route } => {
            let spec = match route {
                Some(name) => cfg.route(name)?,
                None => &cfg.routes[0],
            };
            let out = out_path(cli)?;
            let raw = load_trajectories(input)?;
            let (ds, counts) = preprocess_route(&raw, spec).map_err(|e| match e {
                PreprocessError::NoTrajectoriesSurvive { .. } => runtime(input, e),
                PreprocessError::Trajectory(_) => validation(input, e),
            })?;
            let uniform = ds.trajectories.iter().all(|t| t.is_uniform(ds.dt, 1e-9 * ds.dt));
            write_json(out, &ds)?;
            Ok(Summary {
                text: format!(
                    "{}: {} -> route {} -> resample {} -> outliers {} -> window {}; {} tracks of {} steps at {} s",
                    spec.name,
                    counts.input,
                    counts.route_filter,
                    counts.resample,
                    counts.outlier_filter,
                    counts.window,
                    ds.len(),
                    spec.window_steps,
                    ds.dt
                ),
                json: json!({
                    "command": "preprocess",
                    "route": spec.name,
                    "counts": counts,
                    "trajectories": ds.len(),
                    "seq_len": ds.seq_len(),
                    "dt_s": ds.dt,
                    "uniform": uniform,
                    "bounds": ds.bounds,
                }),
            })
        }
        Command::Train { input, epochs } => {
            let out = out_path(cli)?;
            let ds = load_dataset(input)?;
            let mut model = cfg.model.clone();
            if let Some(e) = epochs {
                model.epochs = *e;
            }
            let seed = cli.seed.unwrap_or(cfg.seeds.train);
            let every = (model.epochs / 10).max(1);
            let outcome = train_with(&ds, &model, seed, |p| {
                if (p.loss.epoch + 1) % every == 0 {
                    eprintln!(
                        "epoch {:>4}  total {:.6}  recon {:.6}  kl {:.4}",
                        p.loss.epoch + 1,
                        p.loss.total,
                        p.loss.recon,
                        p.loss.kl
                    );
                }
                Ok(())
            })
            .map_err(|e| vae_error(input, e))?;
            save_weights(&outcome.weights, out).map_err(|e| vae_error(out, e))?;
            let hist = history_path(out);
            write_json(&hist, &outcome.history)?;
            let last = outcome.history.last().copied();
            Ok(Summary {
                text: format!(
                    "trained {} epochs on {} tracks; final recon {}; weights {}",
                    model.epochs,
                    ds.len(),
                    last.map_or("n/a".into(), |l| format!("{:.6}", l.recon)),
                    out.display()
                ),
                json: json!({
                    "command": "train",
                    "epochs": model.epochs,
                    "seed": seed,
                    "trajectories": ds.len(),
                    "parameters": outcome.weights.num_scalars(),
                    "final": last,
                    "history": hist,
                }),
            })
        }
        Command::Generate { input, count } => {
            let out = out_path(cli)?;
            require_file(input)?;
            let w = load_weights(input).map_err(|e| vae_error(input, e))?;
            let count = count.unwrap_or(cfg.generate.count);
            let seed = cli.seed.unwrap_or(cfg.seeds.generate);
            let tracks = generate(&w, count, seed).map_err(|e| vae_error(input, e))?;
            write_trajectories_path(out, &tracks).map_err(|e| runtime(out, e))?;
            Ok(Summary {
                text: format!("generated {count} tracks of {} steps to {}", w.config.seq_len, out.display()),
                json: json!({"command": "generate", "count": count, "seed": seed, "seq_len": w.config.seq_len}),
            })
        }
        Command::Smooth { input } => {
            let out = out_path(cli)?;
            let tracks = load_trajectories(input)?;
            let skip = cfg.model.ablation.disable_sg_filter;
            let smoothed = if skip {
                tracks
            } else {
                let f = SavgolFilter::new(cfg.smoothing).map_err(|e| CliError::Validation(e.to_string()))?;
                tracks.iter().map(|t| smooth_with(&f, t)).collect::<Result<Vec<_>, _>>().map_err(|e| validation(input, e))?
            };
            write_trajectories_path(out, &smoothed).map_err(|e| runtime(out, e))?;
            Ok(Summary {
                text: format!(
                    "{} {} tracks to {}",
                    if skip { "copied (smoothing disabled)" } else { "smoothed" },
                    smoothed.len(),
                    out.display()
                ),
                json: json!({"command": "smooth", "tracks": smoothed.len(), "smoothing": cfg.smoothing, "skipped": skip}),
            })
        }
        Command::Evaluate { input, reference } => {
            let gen = load_trajectories(input)?;
            let ds = load_dataset(reference)?;
            // metrics live in the reference's normalized frame; generated
            // points outside its box map outside [0, 1] and count as error
            let flat = |t: &Trajectory| t.positions().flat_map(|p| ds.bounds.to_unit(p)).collect::<Vec<f64>>();
            let g: Vec<Vec<f64>> = gen.iter().map(flat).collect();
            let r: Vec<Vec<f64>> = ds.trajectories.iter().map(flat).collect();
            let report = evaluate(&g, &r).map_err(|e| validation(input, e))?;
            if let Some(out) = &cli.out {
                write_json(out, &report)?;
            }
            Ok(Summary {
                text: format!(
                    "mae {:.6}  mse {:.6}  dm {:.6}  mmd {:.6}  ({} generated vs {} reference)",
                    report.mae, report.mse, report.dm, report.mmd, report.n_generated, report.n_reference
                ),
                json: serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
            })
        }
        Command::Pair { input } => {
            let out = out_path(cli)?;
            let p1 = load_pool(&input[0])?;
            let p2 = load_pool(&input[1])?;
            let scenarios = build_scenarios(&p1, &p2, &cfg.roi, &cfg.scenario)
                .map_err(|e| CliError::Validation(format!("{} + {}: {e}", input[0].display(), input[1].display())))?;
            let index = write_library(out, &scenarios).map_err(|e| runtime(out, e))?;
            Ok(Summary {
                text: format!(
                    "{} scenarios from {} x {} tracks written to {}",
                    index.len(),
                    p1.len(),
                    p2.len(),
                    out.display()
                ),
                json: json!({"command": "pair", "scenarios": index.len(), "pool1": p1.len(), "pool2": p2.len()}),
            })
        }
    }
}

/// `model.fvae` -> `model.history.json`, next to the weights.
pub(crate) fn history_path(weights: &Path) -> PathBuf {
    weights.with_extension("history.json")
}
