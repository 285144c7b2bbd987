//! Five increments of two Gaussian classes each, comparing finetuning with
//! model and auxiliary-classifier distillation, plus the soft-target bias
//! metrics of both distillation sources.

use acdistill::bench::{bias_report, run_protocol_rules};
use acdistill::config::{summary_line, ExperimentConfig};
use acdistill::error::Result;
use acdistill::incremental::{Rule, StrategyKind};

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::preset("desk-gauss")?;
    cfg.seeds = vec![0];
    let (train, test) = cfg.load_data()?;
    let stream = cfg.stream(&train)?;
    println!("class order {:?}", stream.class_order);
    let inc = cfg.increment_config(train.input_shape().expect("non-empty"), 0);

    for kind in [StrategyKind::Finetune, StrategyKind::ModelDistillation, StrategyKind::AcDistillation] {
        let rules = if kind == StrategyKind::Finetune { vec![Rule::Tc] } else { vec![Rule::Tc, Rule::Moe] };
        let r = run_protocol_rules(kind, &rules, &stream, &test, &cfg.seeds, &inc)?;
        for p in &r.results {
            println!("{}", summary_line(p));
        }
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        for e in bias_report(&r.logs[0].1).increments {
            println!(
                "  inc {}: new inputs' mass on old classes {}, old inputs' mass on new classes {}",
                e.increment,
                fmt(e.new_inputs_mass_on_old),
                fmt(e.old_inputs_mass_on_new)
            );
        }
    }
    Ok(())
}
