use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resonet_cli::commands::{cmd_bench, cmd_export_features, cmd_featurize, cmd_sweep, cmd_synth_corpus, summarize};
use resonet_cli::{exit_code, RawConfig, RunConfig};
use resonet_core::{Error, Result};

#[derive(Parser)]
#[command(name = "resonet", version, about = "Spoken-digit reservoir benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`section.key = value` lines). Defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; overrides `run.workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` override, e.g. `mask=4` or `filter.kind=mfcc`. Repeatable.
    #[arg(long = "seed-override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and cache features for every clip.
    Featurize(Common),
    /// Cross-validated or condition-stratified benchmark.
    Bench(Common),
    /// Exponent sweep with its parity diagnostic.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents; overrides `sweep.alphas`.
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Write the configured features as CSV.
    ExportFeatures(Common),
    /// Render the synthetic corpus to WAV files and a manifest.
    SynthCorpus(Common),
}

fn load(c: &Common) -> Result<RunConfig> {
    let mut raw = match &c.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::parse("", std::path::Path::new("."))?,
    };
    for o in &c.overrides {
        raw.set_override(o)?;
    }
    if let Some(w) = c.workers {
        raw.set("run.workers", &w.to_string())?;
    }
    let mut cfg = RunConfig::from_raw(raw)?;
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Featurize(c) => {
            let cfg = load(&c)?;
            let s = cmd_featurize(&cfg)?;
            println!("features {}: {} written, {} reused", cfg.filter.key(), s.written, s.reused);
        }
        Command::Bench(c) => {
            let cfg = load(&c)?;
            let o = cmd_bench(&cfg)?;
            print!("{}", summarize(&o));
            for f in &o.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep { common, alphas } => {
            let cfg = load(&common)?;
            let alphas = alphas
                .map(|s| {
                    s.split(',')
                        .map(|a| a.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad alpha `{a}`"))))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            let o = cmd_sweep(&cfg, alphas.as_deref())?;
            for p in &o.points {
                println!("alpha {}: test WSR {:.2} % (std {:.2})", p.alpha, p.wsr, p.wsr_std);
            }
            for f in &o.files {
                println!("wrote {}", f.display());
            }
        }
        Command::ExportFeatures(c) => {
            let cfg = load(&c)?;
            let (path, rows) = cmd_export_features(&cfg)?;
            println!("wrote {rows} rows to {}", path.display());
        }
        Command::SynthCorpus(c) => {
            let cfg = load(&c)?;
            println!("wrote {}", cmd_synth_corpus(&cfg)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
