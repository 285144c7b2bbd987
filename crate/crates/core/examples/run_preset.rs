//! Runs a bundled preset through the same entry point as the command-line
//! tool, with a reduced strategy list and one seed.
//!
//! Usage: `cargo run --release --example run_preset -- [preset] [out_dir]`

use std::path::PathBuf;

use acdistill::config::{run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "desk-gauss".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "results/example".into()));

    let mut cfg = ExperimentConfig::preset(&preset)?;
    cfg.seeds = vec![0];
    cfg.strategies = vec!["finetune".parse()?, "icarl".parse()?, "ac-distillation-moe".parse()?];
    let outcome = run_experiment(&cfg, &out, &mut std::io::stdout())?;
    for f in &outcome.files {
        if f.extension().is_some_and(|e| e == "json") || f.ends_with("accuracy.csv") {
            println!("{}", f.display());
        }
    }
    Ok(())
}
