//! Evaluation protocol: per-increment reports, multi-seed aggregation, bias
//! metrics and result files.

mod bias;
mod output;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::classify::ncm_classify;
use crate::data::{IncrementStream, LabeledDataset};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::incremental::{run_increment, IncrementConfig, IncrementLog, IncrementState, Rule, StrategyKind, StrategySpec};

pub use bias::{bias_report, soft_mass_shares, BiasEntry, BiasReport};
pub use output::{emit_outputs, write_atomic, RunBias};

/// Identifies the run an [`IncrementReport`] belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReportKey {
    pub strategy: String,
    pub rule: Rule,
    pub seed: u64,
    /// 1-based.
    pub increment: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementReport {
    #[serde(flatten)]
    pub key: ReportKey,
    /// Sorted seen classes; the row and column order of `confusion`.
    pub classes: Vec<usize>,
    pub accuracy: f64,
    pub recall: BTreeMap<usize, f64>,
    /// Rows are ground truth, columns are predictions.
    pub confusion: Vec<Vec<u64>>,
}

impl IncrementReport {
    /// Mean recall over `classes` that appear in the report.
    pub fn mean_recall_of(&self, classes: &[usize]) -> f64 {
        let vals: Vec<f64> = classes.iter().filter_map(|c| self.recall.get(c).copied()).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Fraction of all predictions that fall into `classes`.
    pub fn predicted_share_of(&self, classes: &[usize]) -> f64 {
        let total: u64 = self.confusion.iter().flatten().sum();
        let cols: Vec<usize> = (0..self.classes.len())
            .filter(|&j| classes.contains(&self.classes[j]))
            .collect();
        let hit: u64 = self.confusion.iter().map(|row| cols.iter().map(|&j| row[j]).sum::<u64>()).sum();
        hit as f64 / total.max(1) as f64
    }
}

/// Scores `predict` on `test`, which must only contain classes in `seen`.
pub fn evaluate(
    predict: &dyn Fn(&[Tensor]) -> Result<Vec<usize>>,
    test: &LabeledDataset,
    seen: &[usize],
    key: ReportKey,
) -> Result<IncrementReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut classes = seen.to_vec();
    classes.sort_unstable();
    let index = |c: usize| classes.binary_search(&c).map_err(|_| Error::UnknownClass(c));
    let preds = predict(test.inputs())?;
    if preds.len() != test.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: test.len(),
        });
    }
    let n = classes.len();
    let mut confusion = vec![vec![0u64; n]; n];
    for (&y, &p) in test.labels().iter().zip(&preds) {
        confusion[index(y)?][index(p)?] += 1;
    }
    let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
    let accuracy = correct as f64 / test.len() as f64;
    let recall = classes
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| {
            let row: u64 = confusion[i].iter().sum();
            (row > 0).then(|| (c, confusion[i][i] as f64 / row as f64))
        })
        .collect();
    Ok(IncrementReport {
        key,
        classes,
        accuracy,
        recall,
        confusion,
    })
}

/// Reports of one (strategy, rule) over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolResult {
    pub strategy: StrategySpec,
    pub seeds: Vec<u64>,
    /// `runs[s][i]` is seed `seeds[s]` after increment `i + 1`.
    pub runs: Vec<Vec<IncrementReport>>,
    /// Per increment, over seeds.
    pub mean: Vec<f64>,
    /// Population standard deviation per increment.
    pub std: Vec<f64>,
}

impl ProtocolResult {
    fn new(strategy: StrategySpec, seeds: Vec<u64>, runs: Vec<Vec<IncrementReport>>) -> Self {
        let len = runs.first().map_or(0, Vec::len);
        let (mut mean, mut std) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for i in 0..len {
            let accs: Vec<f64> = runs.iter().map(|r| r[i].accuracy).collect();
            let (m, s) = mean_std(&accs);
            mean.push(m);
            std.push(s);
        }
        Self {
            strategy,
            seeds,
            runs,
            mean,
            std,
        }
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(0.0)
    }

    /// Per-seed report after `increment` (1-based).
    pub fn at(&self, increment: usize) -> Vec<&IncrementReport> {
        self.runs.iter().map(|r| &r[increment - 1]).collect()
    }
}

/// Mean and population (divide by n) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Results of one training procedure evaluated under several rules.
#[derive(Clone, Debug)]
pub struct KindResult {
    pub kind: StrategyKind,
    pub results: Vec<ProtocolResult>,
    /// Increment logs per seed, for bias metrics.
    pub logs: Vec<(u64, Vec<IncrementLog>)>,
}

fn predict_with(state: &IncrementState, rule: Rule) -> Result<impl Fn(&[Tensor]) -> Result<Vec<usize>> + '_> {
    let model = state
        .classifier
        .as_ref()
        .ok_or_else(|| Error::invalid("state", "no classifier"))?;
    if rule == Rule::Moe && state.means.is_none() {
        return Err(Error::invalid("rule", "strategy provides no class means for moe"));
    }
    Ok(move |xs: &[Tensor]| match rule {
        Rule::Tc => model.predict(xs),
        Rule::Moe => ncm_classify(model, state.means.as_ref().expect("checked"), xs),
    })
}

/// Replays `stream` through `kind` once per seed and evaluates every rule in
/// `rules` after each increment from the same trained state.
pub fn run_protocol_rules(
    kind: StrategyKind,
    rules: &[Rule],
    stream: &IncrementStream,
    test: &LabeledDataset,
    seeds: &[u64],
    cfg: &IncrementConfig,
) -> Result<KindResult> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    let mut per_rule: Vec<Vec<Vec<IncrementReport>>> = vec![Vec::new(); rules.len()];
    let mut logs = Vec::new();
    for &seed in seeds {
        let mut cfg = cfg.clone();
        cfg.seed = seed;
        let mut state = IncrementState::new();
        let mut reports: Vec<Vec<IncrementReport>> = vec![Vec::new(); rules.len()];
        for (i, d) in stream.increments.iter().enumerate() {
            let wrap = |e: Error| Error::Protocol {
                seed,
                increment: i + 1,
                source: Box::new(e),
            };
            state = run_increment(kind, state, d, &cfg).map_err(wrap)?;
            let seen_test = test.restrict(&state.seen_classes);
            for (r, &rule) in rules.iter().enumerate() {
                let key = ReportKey {
                    strategy: kind.name().to_string(),
                    rule,
                    seed,
                    increment: i + 1,
                };
                let predict = predict_with(&state, rule).map_err(wrap)?;
                reports[r].push(evaluate(&predict, &seen_test, &state.seen_classes, key).map_err(wrap)?);
            }
        }
        for (r, rep) in reports.into_iter().enumerate() {
            per_rule[r].push(rep);
        }
        logs.push((seed, std::mem::take(&mut state.logs)));
    }
    let results = rules
        .iter()
        .zip(per_rule)
        .map(|(&rule, runs)| ProtocolResult::new(StrategySpec::new(kind, rule), seeds.to_vec(), runs))
        .collect();
    Ok(KindResult { kind, results, logs })
}

/// Single-rule form of [`run_protocol_rules`].
pub fn run_protocol(
    spec: StrategySpec,
    stream: &IncrementStream,
    test: &LabeledDataset,
    seeds: &[u64],
    cfg: &IncrementConfig,
) -> Result<ProtocolResult> {
    let mut r = run_protocol_rules(spec.kind, &[spec.rule], stream, test, seeds, cfg)?;
    Ok(r.results.remove(0))
}
