//! `maskfdia` — train, calibrate, and run the masked-model sensor fault
//! detector from the command line. One JSON config file drives every
//! subcommand; any field can be overridden inline with
//! `--section.field=value`.

mod commands;
mod config;

use std::path::PathBuf;

use maskfdia_core::{Error, Result};

const USAGE: &str = "\
maskfdia — masked-model sensor fault detection, isolation and accommodation

USAGE:
  maskfdia <COMMAND> [FLAGS] [--section.field=value ...]

COMMANDS:
  synth      generate the synthetic plant -> synthetic.csv + manifest.json
             (running synth on a manifest regenerates and verifies the CSV)
  train      fit a model on a CSV -> checkpoint.ckpt + train_report.json
  calibrate  set per-channel thresholds from fault-free validation windows
             (rewrites the checkpoint in place)
  detect     stream a series through the detector -> verdict.csv + verdict.json
  bench      measure performance; pick a flavor with --mode
  inject     apply the configured fault scenario -> faulted.csv + labels.json

FLAGS:
  --config PATH      JSON run configuration; every field has a default,
                     so any subset (down to {}) is accepted
  --data PATH        input CSV, overrides data.path
  --checkpoint PATH  checkpoint file; repeatable for bench --mode detection
  --out DIR          output directory, overrides output.dir
  --seed N           override train.seed and synth.seed (beats MASKFDIA_SEED,
                     loses to an explicit --train.seed=N)
  --mode MODE        bench flavor: latency | detection | accommodation
  --section.field=V  override any config field, e.g. --train.epochs=30
                     or --model.hidden_sizes=[32,16]
  -h, --help         this text

EXIT CODES:
  0 success   2 bad usage or configuration   3 detector raised alarms
  4 runtime failure
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Calibrate,
    Detect,
    Bench,
    Inject,
}

/// Parsed command line, before the config file is consulted.
#[derive(Debug)]
pub struct Cli {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    /// Dotted-path config overrides, in command-line order.
    pub overrides: Vec<(String, String)>,
}

/// What a successfully executed command tells the shell.
pub enum Outcome {
    Clean,
    /// `detect` found alarm windows; map to exit code 3.
    Alarmed,
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args.iter().any(|a| a == "-h" || a == "--help" || a == "help") {
        print!("{USAGE}");
        std::process::exit(if args.is_empty() { 2 } else { 0 });
    }
    if args.iter().any(|a| a == "--version") {
        println!("maskfdia {}", env!("CARGO_PKG_VERSION"));
        std::process::exit(0);
    }
    let code = match parse(&args).and_then(run) {
        Ok(Outcome::Clean) => 0,
        Ok(Outcome::Alarmed) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                4
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = config::load_effective(&cli)?;
    match cli.command {
        Command::Synth => commands::synth(&config, &cli),
        Command::Train => commands::train(&config, &cli),
        Command::Calibrate => commands::calibrate(&config, &cli),
        Command::Detect => commands::detect(&config, &cli),
        Command::Bench => commands::bench(&config, &cli),
        Command::Inject => commands::inject(&config, &cli),
    }
}

fn parse(args: &[String]) -> Result<Cli> {
    let command = match args[0].as_str() {
        "synth" => Command::Synth,
        "train" => Command::Train,
        "calibrate" => Command::Calibrate,
        "detect" => Command::Detect,
        "bench" => Command::Bench,
        "inject" => Command::Inject,
        other => {
            return Err(Error::Usage(format!(
                "unknown command '{other}' (run maskfdia --help)"
            )))
        }
    };
    let mut cli = Cli {
        command,
        config: None,
        data: None,
        checkpoints: Vec::new(),
        out: None,
        seed: None,
        mode: None,
        overrides: Vec::new(),
    };

    let mut rest = args[1..].iter().peekable();
    while let Some(arg) = rest.next() {
        // `--flag=value` and `--flag value` are both accepted.
        let (flag, inline) = match arg.split_once('=') {
            Some((f, v)) => (f, Some(v.to_string())),
            None => (arg.as_str(), None),
        };
        let value = |rest: &mut std::iter::Peekable<std::slice::Iter<String>>| {
            inline.clone().or_else(|| rest.next().cloned()).ok_or_else(
                || Error::Usage(format!("flag {flag} expects a value")),
            )
        };
        match flag {
            "--config" => cli.config = Some(PathBuf::from(value(&mut rest)?)),
            "--data" => cli.data = Some(PathBuf::from(value(&mut rest)?)),
            "--checkpoint" => cli.checkpoints.push(PathBuf::from(value(&mut rest)?)),
            "--out" => cli.out = Some(PathBuf::from(value(&mut rest)?)),
            "--mode" => cli.mode = Some(value(&mut rest)?),
            "--seed" => {
                let text = value(&mut rest)?;
                cli.seed = Some(text.parse().map_err(|_| {
                    Error::Usage(format!("--seed expects an unsigned integer, got {text:?}"))
                })?);
            }
            _ if flag.starts_with("--") && flag[2..].contains('.') => {
                let raw = inline.ok_or_else(|| {
                    Error::Usage(format!(
                        "config overrides use --section.field=value, got bare {flag}"
                    ))
                })?;
                cli.overrides.push((flag[2..].to_string(), raw));
            }
            _ => {
                return Err(Error::Usage(format!(
                    "unknown flag {arg} (run maskfdia --help)"
                )))
            }
        }
    }
    Ok(cli)
}
