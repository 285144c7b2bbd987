use std::time::Instant;

use acdistill::bench::{bias_report, emit_outputs, evaluate, run_protocol, run_protocol_rules, ReportKey};
use acdistill::config::ExperimentConfig;
use acdistill::data::{LabeledDataset, Normalization};
use acdistill::diffcore::Tensor;
use acdistill::incremental::{Rule, StrategyKind, StrategySpec};
use rand::Rng;

fn key() -> ReportKey {
    ReportKey {
        strategy: "t".into(),
        rule: Rule::Tc,
        seed: 0,
        increment: 1,
    }
}

#[test]
fn confusion_matches_hand_count() {
    let mut rng = acdistill::rng::rng(21);
    let labels: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
    let guesses: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
    // the input carries its index so the predictor can look up its guess
    let inputs = (0..30).map(|i| Tensor::full(&[1], i as f32)).collect();
    let ds = LabeledDataset::new(inputs, labels.clone(), &[0, 1, 2], Normalization::identity()).unwrap();
    let predict = |xs: &[Tensor]| Ok(xs.iter().map(|x| guesses[x.data()[0] as usize]).collect());
    let r = evaluate(&predict, &ds, &[0, 1, 2], key()).unwrap();

    let mut counted = [[0u64; 3]; 3];
    for i in 0..30 {
        counted[labels[i]][guesses[i]] += 1;
    }
    for t in 0..3 {
        assert_eq!(r.confusion[t], counted[t].to_vec());
        let row: u64 = counted[t].iter().sum();
        assert_eq!(row as usize, labels.iter().filter(|&&y| y == t).count());
        if row > 0 {
            assert_eq!(r.recall[&t], counted[t][t] as f64 / row as f64);
        }
    }
    let trace: u64 = (0..3).map(|i| counted[i][i]).sum();
    assert_eq!(r.accuracy, trace as f64 / 30.0);
}

fn gauss(seeds: &[u64]) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset("desk-gauss").unwrap();
    c.seeds = seeds.to_vec();
    c
}

#[test]
fn finetune_protocol_shape_and_forgetting() {
    let c = gauss(&[0, 1, 2]);
    let (train, test) = c.load_data().unwrap();
    let stream = c.stream(&train).unwrap();
    let inc = c.increment_config(train.input_shape().unwrap(), 0);
    let spec = StrategySpec::new(StrategyKind::Finetune, Rule::Tc);
    let r = run_protocol(spec, &stream, &test, &c.seeds, &inc).unwrap();
    assert_eq!(r.runs.len(), 3);
    assert!(r.runs.iter().all(|run| run.len() == 5));
    assert_eq!((r.mean.len(), r.std.len()), (5, 5));
    let first = &stream.class_order[0];
    for rep in r.at(5) {
        assert!(rep.mean_recall_of(first) <= 0.10, "{:?}", rep.recall);
        for row in &rep.confusion {
            assert_eq!(row.iter().sum::<u64>(), 100);
        }
    }
    let again = run_protocol(spec, &stream, &test, &[0], &inc).unwrap();
    assert_eq!(again.runs[0], r.runs[0]);
    let dup = run_protocol(spec, &stream, &test, &[0, 0], &inc).unwrap();
    assert!(dup.std.iter().all(|&s| s == 0.0));
}

#[test]
fn distillation_sources_show_their_biases() {
    let c = gauss(&[0]);
    let (train, test) = c.load_data().unwrap();
    let stream = c.stream(&train).unwrap();
    let inc = c.increment_config(train.input_shape().unwrap(), 0);

    let md = run_protocol_rules(StrategyKind::ModelDistillation, &[Rule::Tc], &stream, &test, &[0], &inc).unwrap();
    for e in bias_report(&md.logs[0].1).increments.iter().skip(1) {
        assert_eq!(e.new_inputs_mass_on_old, Some(1.0));
        assert_eq!(e.old_inputs_mass_on_new, Some(0.0));
        assert_eq!(e.imbalance_ratio, (e.increment - 1) as f64);
    }

    let ac = run_protocol_rules(StrategyKind::AcDistillation, &[Rule::Tc], &stream, &test, &[0], &inc).unwrap();
    let entries = bias_report(&ac.logs[0].1).increments;
    let later: Vec<f64> = entries.iter().skip(1).map(|e| e.new_inputs_mass_on_old.unwrap()).collect();
    let mean = later.iter().sum::<f64>() / later.len() as f64;
    assert!(mean <= 0.5, "{later:?}");
}

#[test]
fn emitted_files_follow_the_formats() {
    let c = gauss(&[0, 1]);
    let (train, test) = c.load_data().unwrap();
    let stream = c.stream(&train).unwrap();
    let inc = c.increment_config(train.input_shape().unwrap(), 0);
    let spec = StrategySpec::new(StrategyKind::Finetune, Rule::Tc);
    let r = run_protocol(spec, &stream, &test, &c.seeds, &inc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&[r.clone()], &[], &c.echo(), dir.path()).unwrap();

    let csv = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("increment,strategy,rule,seed,accuracy"));
    assert_eq!(lines.count(), 2 * 5);

    let conf = std::fs::read_to_string(dir.path().join("confusion_finetune_tc_inc5_seed1.csv")).unwrap();
    let rows: Vec<&str> = conf.lines().collect();
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        let total: u64 = row.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum();
        assert_eq!(total, 100);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["temperature"], serde_json::json!(2.0));
    assert_eq!(summary["strategies"]["finetune"]["mean"].as_array().unwrap().len(), 5);

    let before: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    emit_outputs(&[r], &[], &c.echo(), dir.path()).unwrap();
    let after: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn gauss_finetune_experiment_is_fast_and_complete() {
    let mut c = gauss(&[0]);
    c.strategies = vec!["finetune".parse().unwrap()];
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = acdistill::config::run_experiment(&c, dir.path(), &mut std::io::sink()).unwrap();
    assert!(t.elapsed().as_secs() < 60);
    for name in ["accuracy.csv", "summary.json", "bias.json", "confusion_finetune_tc_inc1_seed0.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(out.results.len(), 1);
}

#[test]
fn unknown_strategy_fails_before_training() {
    let err = ExperimentConfig::from_toml("dataset = \"gauss2d\"\nstrategies = [\"finetune\", \"magic\"]").unwrap_err();
    assert!(err.to_string().contains("magic"), "{err}");
}
