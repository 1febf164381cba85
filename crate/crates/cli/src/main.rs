//! Batch command-line front end.
//!
//! Subcommands: `synth`, `train`, `eval`, `transfer`, `experiment`,
//! `inspect`. Machine-readable JSON goes to stdout; diagnostics go to
//! stderr. Exit codes: 0 success, 1 usage, 2 data/configuration error,
//! 3 numeric failure. Every run writes `run.json` (the resolved config and
//! seeds) into the output directory so it can be reproduced exactly.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clrnet_core::data::{read_packed_samples, DatasetManifest};
use clrnet_core::error::{Error, Result};
use clrnet_core::model::{build_clrnet, LayeredModel};
use clrnet_core::synth::{pack_dataset, synth_dataset};
use clrnet_core::train::train;
use clrnet_core::transfer::{cross_dataset_matrix, run_experiment, transfer_learn, ExperimentEnv};

use config::{resolve_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "clrnet",
    about = "Temporal-inconsistency video classifier: data synthesis, training, evaluation, transfer learning",
    version
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Root seed override (config seeds still apply where set).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: env CLRNET_OUT, then "./out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dotted config overrides, e.g. --set model.input_hw=16
    #[arg(long = "set", global = true, value_name = "KEY.PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: manifest plus packed sample splits.
    Synth,
    /// Train on the first dataset manifest and save the best checkpoint.
    Train,
    /// Evaluate a saved model on every dataset's test split.
    Eval {
        /// Weight file produced by `train` or `transfer`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Fine-tune a saved model per the `transfer` plan section.
    Transfer {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the four-stage experiment per the `experiment` plan section.
    Experiment,
    /// Print the layer table and both layer-count conventions.
    Inspect,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Also covers --help/--version, which are "successful" usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match root_cause(&e) {
                Error::Numeric(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn root_cause(e: &Error) -> &Error {
    match e {
        Error::Stage { source, .. } => root_cause(source),
        other => other,
    }
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("CLRNET_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn emit(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// The reproducibility record written for every run.
fn write_run_manifest(dir: &Path, command: &str, cfg: &RunConfig, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "config": cfg,
    });
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn load_manifest(path: &str) -> Result<(DatasetManifest, Option<PathBuf>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read manifest '{path}': {e}")))?;
    let manifest = DatasetManifest::from_json(&text)?;
    let base = Path::new(path).parent().map(Path::to_path_buf);
    Ok((manifest, base))
}

fn load_manifests(cfg: &RunConfig) -> Result<Vec<(DatasetManifest, Option<PathBuf>)>> {
    if cfg.data.datasets.is_empty() {
        return Err(Error::data(
            "no dataset manifests configured (data.datasets)",
        ));
    }
    cfg.data.datasets.iter().map(|p| load_manifest(p)).collect()
}

fn load_model(cfg: &RunConfig, seed: u64, path: &Path) -> Result<LayeredModel> {
    let skeleton = build_clrnet(&cfg.model, seed)?;
    let bytes = std::fs::read(path)
        .map_err(|e| Error::data(format!("cannot read model '{}': {e}", path.display())))?;
    skeleton.load_weights(&bytes)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        // Later commands use whatever pool exists if this one already ran.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve_config(cli.common.config.as_deref(), &cli.common.overrides)?;
    let seed = cli.common.seed.unwrap_or(cfg.train.seed);
    let dir = out_dir(&cli.common);

    match &cli.command {
        Command::Synth => {
            write_run_manifest(&dir, "synth", &cfg, seed)?;
            let manifest = synth_dataset(
                cfg.data.method,
                cfg.data.n_videos,
                cfg.data.amplitude,
                cfg.model.seq_len,
                cfg.data.samples_per_video,
                seed,
            )?;
            let packed = pack_dataset(&manifest, cfg.model.input_hw, seed)?;
            std::fs::create_dir_all(&dir)?;
            let manifest_path = dir.join(format!("{}.manifest.json", manifest.name));
            std::fs::write(&manifest_path, manifest.to_json()?)?;
            let mut split_info = serde_json::Map::new();
            for (split, bytes) in packed {
                let p = dir.join(format!("{}.{}.seqs", manifest.name, split.name()));
                let count = read_packed_samples(&bytes)?.len();
                std::fs::write(&p, bytes)?;
                split_info.insert(
                    split.name().to_string(),
                    serde_json::json!({"file": p.to_string_lossy(), "samples": count}),
                );
            }
            eprintln!("dataset '{}' written to {}", manifest.name, dir.display());
            emit(&serde_json::json!({
                "dataset": manifest.name,
                "manifest": manifest_path.to_string_lossy(),
                "splits": split_info,
            }))
        }

        Command::Train => {
            write_run_manifest(&dir, "train", &cfg, seed)?;
            let manifests = load_manifests(&cfg)?;
            let (manifest, base) = &manifests[0];
            let model = build_clrnet(&cfg.model, seed)?;
            let mut tc = cfg.train.clone();
            tc.seed = seed;
            eprintln!(
                "training on '{}' for {} epochs ({} train videos)",
                manifest.name,
                tc.epochs,
                manifest.splits.train.len()
            );
            let outcome = train(&model, manifest, &tc, base.as_deref())?;
            std::fs::create_dir_all(&dir)?;
            let model_path = dir.join("model.clrn");
            std::fs::write(&model_path, outcome.model.save_weights())?;
            let history_path = dir.join("history.csv");
            std::fs::write(&history_path, outcome.history.to_csv())?;
            let best = &outcome.history.0[outcome.best_epoch];
            emit(&serde_json::json!({
                "model": model_path.to_string_lossy(),
                "history": history_path.to_string_lossy(),
                "best_epoch": outcome.best_epoch,
                "best_val_loss": best.val_loss,
                "epochs": outcome.history.0.len(),
            }))
        }

        Command::Eval { model } => {
            write_run_manifest(&dir, "eval", &cfg, seed)?;
            let manifests = load_manifests(&cfg)?;
            let m = load_model(&cfg, seed, model)?;
            let base = manifests[0].1.clone();
            let refs: Vec<&DatasetManifest> = manifests.iter().map(|(m, _)| m).collect();
            let matrix = cross_dataset_matrix(
                &m,
                &refs,
                &[],
                seed,
                cfg.train.batch_size,
                base.as_deref(),
            )?;
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("metrics.json");
            std::fs::write(&path, serde_json::to_string_pretty(&matrix)?)?;
            emit(&serde_json::json!({
                "metrics": matrix,
                "metrics_file": path.to_string_lossy(),
            }))
        }

        Command::Transfer { model } => {
            write_run_manifest(&dir, "transfer", &cfg, seed)?;
            let plan = &cfg.transfer;
            plan.validate()?;
            let manifests = load_manifests(&cfg)?;
            let base = manifests[0].1.clone();
            let by_name = |name: &String| -> Result<&DatasetManifest> {
                manifests
                    .iter()
                    .map(|(m, _)| m)
                    .find(|m| &m.name == name)
                    .ok_or_else(|| Error::data(format!("dataset '{name}' not among data.datasets")))
            };
            let sources: Vec<&DatasetManifest> =
                plan.sources.iter().map(by_name).collect::<Result<_>>()?;
            let targets: Vec<&DatasetManifest> =
                plan.targets.iter().map(by_name).collect::<Result<_>>()?;
            let m = load_model(&cfg, seed, model)?;
            let mut tc = cfg.train.clone();
            tc.seed = seed;
            let outcome = transfer_learn(&m, &sources, &targets, plan, &tc, base.as_deref())?;
            std::fs::create_dir_all(&dir)?;
            let model_path = dir.join("tl_model.clrn");
            std::fs::write(&model_path, outcome.model.save_weights())?;
            let history_path = dir.join("transfer_history.csv");
            std::fs::write(&history_path, outcome.history.to_csv())?;
            emit(&serde_json::json!({
                "model": model_path.to_string_lossy(),
                "history": history_path.to_string_lossy(),
                "best_epoch": outcome.best_epoch,
                "frozen_layers": plan.freeze_k.unwrap_or(m.default_freeze_k()),
            }))
        }

        Command::Experiment => {
            write_run_manifest(&dir, "experiment", &cfg, seed)?;
            let plan = &cfg.experiment;
            plan.validate()?;
            // With no manifests configured, generate the two synthetic
            // datasets the default plans refer to.
            let generated;
            let loaded;
            let (manifests, base): (Vec<&DatasetManifest>, Option<PathBuf>) =
                if cfg.data.datasets.is_empty() {
                    eprintln!("no datasets configured; generating synthA and synthB");
                    generated = vec![
                        synth_dataset(
                            clrnet_core::synth::ForgeryMethod::FlickerA,
                            cfg.data.n_videos,
                            cfg.data.amplitude,
                            cfg.model.seq_len,
                            cfg.data.samples_per_video,
                            seed,
                        )?,
                        synth_dataset(
                            clrnet_core::synth::ForgeryMethod::JitterB,
                            cfg.data.n_videos,
                            cfg.data.amplitude,
                            cfg.model.seq_len,
                            cfg.data.samples_per_video,
                            seed,
                        )?,
                    ];
                    (generated.iter().collect(), None)
                } else {
                    loaded = load_manifests(&cfg)?;
                    let base = loaded[0].1.clone();
                    (loaded.iter().map(|(m, _)| m).collect(), base)
                };
            let mut tc = cfg.train.clone();
            tc.seed = seed;
            let env = ExperimentEnv {
                model_config: cfg.model.clone(),
                train_config: tc,
                datasets: manifests,
                base_dir: base.as_deref(),
                out_dir: Some(&dir),
                seed,
            };
            let outcome = run_experiment(plan, &env)?;
            std::fs::write(
                dir.join("base_model.clrn"),
                outcome.base_model.save_weights(),
            )?;
            std::fs::write(dir.join("tl_model.clrn"), outcome.tl_model.save_weights())?;
            emit(&serde_json::to_value(&outcome.bundle)?)
        }

        Command::Inspect => {
            let model = build_clrnet(&cfg.model, seed)?;
            let layers: Vec<serde_json::Value> = model
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let params: usize =
                        l.kind.named_tensors().iter().map(|(_, t)| t.numel()).sum();
                    serde_json::json!({
                        "index": i,
                        "name": l.name,
                        "kind": l.kind.tag(),
                        "parameters": params,
                        "trainable": l.trainable,
                    })
                })
                .collect();
            emit(&serde_json::json!({
                "total_layers": model.total_layers(),
                "parameterized_layers": model.parameterized_layers(),
                "default_freeze_k": model.default_freeze_k(),
                "block_pattern": model.block_pattern(),
                "layers": layers,
            }))
        }
    }
}
