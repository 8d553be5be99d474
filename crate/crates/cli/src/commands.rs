//! The six subcommands. Each one loads its inputs, calls into the core
//! library, writes artifacts under the output directory, and prints a short
//! human-readable account to stdout. Timings go to stderr so the files and
//! stdout stay deterministic.

use std::path::{Path, PathBuf};
use std::time::Instant;

use maskfdia_core::data::{load_csv, write_csv, CsvSchema, TimeSeriesDataset};
use maskfdia_core::eval::{
    accommodation_benchmark, auprc, detection_benchmark, latency_benchmark, roc_auc, sha256_hex,
    DownstreamPipeline, EvalSummary, ScoredSample,
};
use maskfdia_core::faults::apply_scenario;
use maskfdia_core::fdia::{calibrate_thresholds, FdiaEngine, ThresholdMethod};
use maskfdia_core::model::{
    load_checkpoint, save_checkpoint, CheckpointData, CheckpointEncoding,
};
use maskfdia_core::training::train as train_model;
use maskfdia_core::{Error, ExecMode, Result};

use crate::config::RunConfig;
use crate::{Cli, Outcome};

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

fn out_dir(config: &RunConfig, cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::Usage(format!("cannot create output dir {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Loads the input CSV named by `--data` or `data.path`, then applies the
/// `data` section's channel drops and downsampling.
fn load_input(config: &RunConfig, cli: &Cli) -> Result<TimeSeriesDataset> {
    let path = cli
        .data
        .clone()
        .or_else(|| config.data.path.clone())
        .ok_or_else(|| Error::Usage("no input data: pass --data or set data.path".into()))?;
    if !path.exists() {
        return Err(Error::Usage(format!(
            "data file not found: {}",
            path.display()
        )));
    }
    let mut dataset = load_csv(&path, &CsvSchema::Infer)?;
    if !config.data.drop_channels.is_empty() {
        dataset = dataset.drop_channels(&config.data.drop_channels)?;
    }
    if config.data.downsample != 1 {
        dataset = dataset.downsample(config.data.downsample)?;
    }
    Ok(dataset)
}

/// `--checkpoint`, falling back to `checkpoint.ckpt` in the output
/// directory (`--out` or `output.dir`), where `train` put it.
fn checkpoint_path(config: &RunConfig, cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.as_ref().unwrap_or(&config.output.dir);
    let path = cli
        .checkpoints
        .first()
        .cloned()
        .unwrap_or_else(|| dir.join("checkpoint.ckpt"));
    if !path.exists() {
        return Err(Error::Usage(format!(
            "checkpoint not found: {} (train first, or pass --checkpoint)",
            path.display()
        )));
    }
    Ok(path)
}

/// A checkpoint's on-disk encoding is its third line; calibration rewrites
/// the file and must not silently change it.
fn sniff_encoding(path: &Path) -> Result<CheckpointEncoding> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = bytes.split(|&b| b == b'\n').skip(2);
    match lines.next() {
        Some(b"BINARY") => Ok(CheckpointEncoding::Binary),
        Some(b"TEXT") => Ok(CheckpointEncoding::Text),
        _ => Err(Error::Usage(format!(
            "{} does not look like a checkpoint file",
            path.display()
        ))),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn report(
    kind: &str,
    seed: u64,
    config: &RunConfig,
    checkpoint_sha256: Option<String>,
    metrics: serde_json::Value,
) -> Result<EvalSummary> {
    Ok(EvalSummary {
        schema_version: 1,
        kind: kind.into(),
        seed,
        config_echo: serde_json::to_value(config)?,
        checkpoint_sha256,
        metrics,
    })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn synth(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    let dir = out_dir(config, cli)?;
    let dataset = maskfdia_core::data::synthesize_plant(&config.synth)?;
    let csv_path = dir.join("synthetic.csv");
    write_csv(&dataset, &csv_path)?;
    let sha = sha256_hex(&std::fs::read(&csv_path)?);
    println!(
        "wrote {} ({} samples x {} channels)",
        csv_path.display(),
        dataset.n_samples(),
        dataset.n_channels()
    );

    if let Some(expected) = config
        .manifest
        .as_ref()
        .and_then(|m| m.csv_sha256.as_deref())
    {
        if expected == sha {
            println!("regeneration check: sha256 matches the manifest");
        } else {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!(
                    "regenerated CSV digest {sha} does not match the manifest's {expected}"
                ),
            )));
        }
    }

    // The manifest is itself a valid run configuration: `synth --config
    // manifest.json` regenerates the CSV and verifies the digest above.
    let mut echo = config.clone();
    echo.manifest = Some(crate::config::ManifestSection {
        csv_sha256: Some(sha),
    });
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &echo)?;
    println!("wrote {}", manifest_path.display());
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn train(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    let dir = out_dir(config, cli)?;
    let dataset = load_input(config, cli)?;
    let (train_part, _held_out) =
        dataset.chronological_split(config.data.train_fraction, config.train.lookback + 1)?;

    let maskable = match &config.model.maskable_channels {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .map(|name| {
                    dataset.channel_index(name).ok_or_else(|| {
                        Error::Usage(format!("maskable_channels names unknown channel '{name}'"))
                    })
                })
                .collect::<Result<Vec<usize>>>()?,
        ),
    };
    let train_config = config.train_config(maskable);

    let begin = Instant::now();
    let mut outcome = train_model(&train_part, &train_config)?;
    eprintln!("training took {:.1} s", begin.elapsed().as_secs_f64());

    let ckpt_path = dir.join("checkpoint.ckpt");
    save_checkpoint(&outcome.checkpoint, &ckpt_path, CheckpointEncoding::Binary)?;
    let sha = sha256_hex(&std::fs::read(&ckpt_path)?);
    outcome.report.checkpoint_path = Some(ckpt_path.display().to_string());

    let summary = report(
        "train",
        train_config.seed,
        config,
        Some(sha.clone()),
        serde_json::to_value(&outcome.report)?,
    )?;
    let report_path = dir.join("train_report.json");
    write_json(&report_path, &summary)?;

    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {:?} model: {} epochs, {} train / {} validation windows",
        outcome.report.formulation,
        outcome.report.epochs,
        outcome.report.n_train_windows,
        outcome.report.n_validation_windows
    );
    println!(
        "final train loss {:.6e}, validation loss {:.6e}",
        last(&outcome.report.train_loss),
        last(&outcome.report.validation_loss)
    );
    println!("wrote {} (sha256 {sha})", ckpt_path.display());
    println!("wrote {}", report_path.display());
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

pub fn calibrate(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    let ckpt_path = checkpoint_path(config, cli)?;
    let encoding = sniff_encoding(&ckpt_path)?;
    let mut ckpt = load_checkpoint(&ckpt_path)?;

    let dataset = load_input(config, cli)?;
    let lookback = ckpt.model.lookback();
    let (train_part, _held_out) =
        dataset.chronological_split(config.data.train_fraction, lookback + 1)?;
    // Thresholds come from the same validation tail the training run held
    // back, so they are calibrated on windows the model never fitted.
    let fit_fraction = ckpt
        .train_config
        .as_ref()
        .map(|c| c.train_fraction)
        .unwrap_or(config.train.train_fraction);
    let (_fit, validation) = train_part.chronological_split(fit_fraction, lookback + 1)?;

    if let ThresholdMethod::MeanPlusKStd { k } = config.fdia.threshold {
        if k == 0.0 {
            eprintln!(
                "warning: threshold k = 0 sits at the residual mean and will \
                 flag roughly half of all clean windows"
            );
        }
    }
    let info = calibrate_thresholds(
        &ckpt,
        &validation,
        config.fdia.threshold,
        config.fdia.stride,
        ExecMode::default(),
    )?;

    println!("{:<16} {:>12} {:>12} {:>12}", "channel", "threshold", "resid_mean", "resid_std");
    for (pos, &col) in ckpt.maskable.dataset_indices().iter().enumerate() {
        println!(
            "{:<16} {:>12.6} {:>12.6} {:>12.6}",
            ckpt.channel_names[col],
            info.per_channel[pos],
            info.residual_mean[pos],
            info.residual_std[pos]
        );
    }
    println!(
        "calibrated {} channels on {} windows; rewrote {}",
        info.per_channel.len(),
        info.calibration_windows,
        ckpt_path.display()
    );
    ckpt.thresholds = Some(info);
    save_checkpoint(&ckpt, &ckpt_path, encoding)?;
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

pub fn detect(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    let dir = out_dir(config, cli)?;
    let ckpt_path = checkpoint_path(config, cli)?;
    let ckpt = load_checkpoint(&ckpt_path)?;
    if ckpt.thresholds.is_none() {
        return Err(Error::Usage(format!(
            "{} has no calibrated thresholds; run `maskfdia calibrate` first",
            ckpt_path.display()
        )));
    }
    let sha = sha256_hex(&std::fs::read(&ckpt_path)?);
    let dataset = load_input(config, cli)?;

    let (series, labels) = if config.scenario.is_empty() {
        (dataset, None)
    } else {
        let (faulted, labels) = apply_scenario(&dataset, &config.scenario, &ckpt.raw_stats)?;
        (faulted, Some(labels))
    };

    let engine = FdiaEngine::new(&ckpt, ExecMode::default())?
        .with_fill_policy(config.fdia.fill_policy)
        .with_max_iterations(config.fdia.max_iterations)?;
    let verdict = engine.stream(&series, config.fdia.stride)?;
    let summary = verdict.summary();

    // A single-channel scenario doubles as a labeled benchmark: the faulted
    // channel's residual column scores every window.
    let mut metric_lines = Vec::new();
    let mut metrics = serde_json::json!({ "stream": summary });
    if let Some(labels) = &labels {
        let mut targets = config.scenario.iter().flat_map(|s| s.targets.iter());
        if let (Some(name), None) = (targets.next(), targets.next()) {
            let col = series.channel_index(name).expect("validated by apply_scenario");
            if let Some(pos) = verdict
                .maskable_dataset_indices
                .iter()
                .position(|&c| c == col)
            {
                let lookback = ckpt.model.lookback();
                let samples: Vec<ScoredSample> = verdict
                    .window_end_steps
                    .iter()
                    .enumerate()
                    .map(|(w, &end)| ScoredSample {
                        score: verdict.residuals[[w, pos]],
                        label: labels.channel_in_window(col, end - lookback, lookback + 1),
                    })
                    .collect();
                if let Ok(auc) = roc_auc(&samples) {
                    metrics["roc_auc"] = serde_json::json!(auc);
                    metric_lines.push(format!("roc_auc {auc:.4}"));
                }
                if let Ok(pr) = auprc(&samples) {
                    metrics["auprc"] = serde_json::json!(pr);
                    metric_lines.push(format!("auprc {pr:.4}"));
                }
            }
        }
    }

    let csv_path = dir.join("verdict.csv");
    verdict.write_csv(&csv_path)?;
    let json_path = dir.join("verdict.json");
    write_json(
        &json_path,
        &report("detect", ckpt.seed, config, Some(sha), metrics)?,
    )?;

    println!(
        "streamed {} windows (stride {}): {} flagged, {} alarms",
        summary.n_windows,
        config.fdia.stride,
        summary.n_flagged_windows,
        summary.alarm_steps.len()
    );
    let onsets: Vec<String> = summary
        .onsets
        .iter()
        .filter_map(|(name, onset)| onset.map(|t| format!("{name}@{t}")))
        .collect();
    println!(
        "first flags: {}",
        if onsets.is_empty() {
            "none".to_string()
        } else {
            onsets.join(", ")
        }
    );
    if !metric_lines.is_empty() {
        println!("{}", metric_lines.join("  "));
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    if summary.alarm_steps.is_empty() {
        Ok(Outcome::Clean)
    } else {
        println!(
            "ALARM: {} windows exceeded the accommodation limit",
            summary.alarm_steps.len()
        );
        Ok(Outcome::Alarmed)
    }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub fn bench(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    match cli.mode.as_deref() {
        Some("latency") => bench_latency(config, cli),
        Some("detection") => bench_detection(config, cli),
        Some("accommodation") => bench_accommodation(config, cli),
        Some(other) => Err(Error::Usage(format!(
            "unknown bench mode '{other}' (latency | detection | accommodation)"
        ))),
        None => Err(Error::Usage(
            "bench needs --mode latency | detection | accommodation".into(),
        )),
    }
}

fn bench_latency(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    let dir = out_dir(config, cli)?;
    let ckpt_path = checkpoint_path(config, cli)?;
    let ckpt = load_checkpoint(&ckpt_path)?;
    let sha = sha256_hex(&std::fs::read(&ckpt_path)?);

    let latency = latency_benchmark(&ckpt, config.bench.repetitions)?;
    println!(
        "latency: mean {:.3} ms, p95 {:.3} ms, {} passes/step, budget {} ms -> {}",
        latency.mean_ms,
        latency.p95_ms,
        latency.passes_per_step,
        latency.budget_ms,
        if latency.within_budget { "PASS" } else { "FAIL" }
    );
    let json_path = dir.join("bench_latency.json");
    write_json(
        &json_path,
        &report(
            "latency",
            ckpt.seed,
            config,
            Some(sha),
            serde_json::to_value(&latency)?,
        )?,
    )?;
    println!("wrote {}", json_path.display());
    Ok(Outcome::Clean)
}

fn bench_detection(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    if cli.checkpoints.is_empty() {
        return Err(Error::Usage(
            "bench --mode detection compares checkpoints: pass one or more --checkpoint".into(),
        ));
    }
    let dir = out_dir(config, cli)?;
    let dataset = load_input(config, cli)?;

    let loaded: Vec<(PathBuf, CheckpointData)> = cli
        .checkpoints
        .iter()
        .map(|p| {
            if !p.exists() {
                return Err(Error::Usage(format!("checkpoint not found: {}", p.display())));
            }
            Ok((p.clone(), load_checkpoint(p)?))
        })
        .collect::<Result<_>>()?;
    let stems: Vec<String> = loaded
        .iter()
        .map(|(p, _)| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    // Same stem twice (e.g. two checkpoint.ckpt in different dirs): fall
    // back to full paths so the rows stay distinguishable.
    let unique = stems.iter().collect::<std::collections::BTreeSet<_>>().len() == stems.len();
    let models: Vec<(String, &CheckpointData)> = loaded
        .iter()
        .zip(&stems)
        .map(|((path, ckpt), stem)| {
            let name = if unique {
                stem.clone()
            } else {
                path.display().to_string()
            };
            (name, ckpt)
        })
        .collect();

    let begin = Instant::now();
    let bench = detection_benchmark(
        &models,
        &dataset,
        &config.scenario,
        config.fdia.stride,
        ExecMode::default(),
    )?;
    eprintln!("scored {} models in {:.1} s", models.len(), begin.elapsed().as_secs_f64());

    println!(
        "fault on '{}': {} windows, {} positive",
        bench.channel, bench.n_windows, bench.n_positive
    );
    println!("{:<24} {:>16} {:>10} {:>10}", "model", "formulation", "roc_auc", "auprc");
    for row in &bench.rows {
        println!(
            "{:<24} {:>16} {:>10.4} {:>10.4}",
            row.name,
            format!("{:?}", row.formulation),
            row.roc_auc,
            row.auprc
        );
    }
    let sha = sha256_hex(&std::fs::read(&loaded[0].0)?);
    let json_path = dir.join("bench_detection.json");
    write_json(
        &json_path,
        &report(
            "detection",
            loaded[0].1.seed,
            config,
            Some(sha),
            serde_json::to_value(&bench)?,
        )?,
    )?;
    println!("wrote {}", json_path.display());
    Ok(Outcome::Clean)
}

fn bench_accommodation(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    let dir = out_dir(config, cli)?;
    let ckpt_path = checkpoint_path(config, cli)?;
    let ckpt = load_checkpoint(&ckpt_path)?;
    let sha = sha256_hex(&std::fs::read(&ckpt_path)?);
    let dataset = load_input(config, cli)?;

    let [lo, hi] = config.bench.pipeline_weight_band;
    let pipeline = DownstreamPipeline::new_seeded_in_band(
        dataset.n_channels(),
        config.bench.pipeline_outputs,
        (lo, hi),
        config.bench.pipeline_noise_std,
        config.bench.pipeline_seed,
    )?;
    let bench = accommodation_benchmark(
        &ckpt,
        &pipeline,
        &dataset,
        &config.scenario,
        config.fdia.stride,
        ExecMode::default(),
    )?;

    println!(
        "{:<8} {:>14} {:>14} {:>14} {:>12} {:>12}",
        "output", "mse_clean", "mse_fault", "mse_fdia", "fault_pct", "fdia_pct"
    );
    for arm in &bench.per_output {
        println!(
            "{:<8} {:>14.6} {:>14.6} {:>14.6} {:>11.1}% {:>11.1}%",
            arm.output,
            arm.mse_no_fault,
            arm.mse_fault_no_fdia,
            arm.mse_fault_with_fdia,
            arm.pct_increase_no_fdia,
            arm.pct_increase_with_fdia
        );
    }
    let json_path = dir.join("bench_accommodation.json");
    write_json(
        &json_path,
        &report(
            "accommodation",
            ckpt.seed,
            config,
            Some(sha),
            serde_json::to_value(&bench)?,
        )?,
    )?;
    println!("wrote {}", json_path.display());
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

pub fn inject(config: &RunConfig, cli: &Cli) -> Result<Outcome> {
    if config.scenario.is_empty() {
        return Err(Error::Usage(
            "the scenario section lists no faults to inject".into(),
        ));
    }
    let dir = out_dir(config, cli)?;
    let dataset = load_input(config, cli)?;

    // Std-unit magnitudes need per-channel statistics. A checkpoint carries
    // the training-time stats; otherwise fall back to the series itself.
    let stats = match cli.checkpoints.first() {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Usage(format!(
                    "checkpoint not found: {}",
                    path.display()
                )));
            }
            load_checkpoint(path)?.raw_stats
        }
        None => dataset.compute_stats(0..dataset.n_samples())?,
    };
    let (faulted, labels) = apply_scenario(&dataset, &config.scenario, &stats)?;

    let csv_path = dir.join("faulted.csv");
    write_csv(&faulted, &csv_path)?;
    let labels_path = dir.join("labels.json");
    write_json(&labels_path, &labels)?;

    println!(
        "injected {} fault(s) across {} labeled interval(s)",
        config.scenario.len(),
        labels.intervals.len()
    );
    println!("wrote {}", csv_path.display());
    println!("wrote {}", labels_path.display());
    Ok(Outcome::Clean)
}
