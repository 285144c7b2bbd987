use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use acdistill::config::{load_config_or_preset, run_experiment, ExperimentConfig, PRESETS};
use acdistill::incremental::{SampleCount, StrategySpec};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acdistill", version, about = "Class-incremental learning with generative pseudo-rehearsal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a bundled preset name.
    Run {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the bundled presets.
    ListPresets,
    /// Validate a config and print every effective value as JSON.
    Validate {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Flags take precedence over the environment and the config file.
#[derive(Args)]
struct Overrides {
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategySpec>>,
    #[arg(long)]
    temperature: Option<f32>,
    #[arg(long)]
    alpha: Option<f32>,
    /// Generated samples per old class, or `match-real`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    gan_epochs: Option<usize>,
    /// Record wall-clock timings (outputs are then not byte-identical).
    #[arg(long)]
    timings: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = &self.seeds {
            cfg.seeds.clone_from(s);
        }
        if let Some(s) = &self.strategies {
            cfg.strategies.clone_from(s);
        }
        if let Some(t) = self.temperature {
            cfg.temperature = t;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(k) = &self.k {
            cfg.k = match k.as_str() {
                "match-real" => SampleCount::MatchReal,
                n => SampleCount::Fixed(n.parse().context("--k expects an integer or `match-real`")?),
            };
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(e) = self.gan_epochs {
            cfg.gan.epochs = e;
        }
        if self.timings {
            cfg.deterministic = false;
        }
        cfg.resolve();
        cfg.validate()?;
        Ok(())
    }
}

fn load(config: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = load_config_or_preset(config).with_context(|| format!("loading `{config}`"))?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::ListPresets => {
            for (name, src) in PRESETS {
                let about = src.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name:<14} {about}");
            }
        }
        Command::Validate { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            println!("{}", serde_json::to_string_pretty(&cfg.echo())?);
        }
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let out = overrides.output.clone().unwrap_or_else(|| cfg.effective_output_dir());
            let mut stdout = std::io::stdout();
            let outcome = run_experiment(&cfg, &out, &mut stdout)?;
            let _ = writeln!(stdout, "wrote {} files to {}", outcome.files.len(), out.display());
        }
    }
    Ok(())
}
