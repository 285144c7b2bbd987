//! Minibatch training of a [`ClassifierModel`] with plain or distillation losses.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, LrSchedule, Optimizer, OptimizerKind, Tensor};
use crate::error::{Error, Result};
use crate::models::classifier::ClassifierModel;
use crate::rng;

/// Where a training sample came from, relative to the increment sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Real data that arrived with the given (1-based) increment.
    Real { increment: usize },
    /// Produced by a generator during the given increment.
    Generated { increment: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainItem {
    pub input: Tensor,
    pub hard: Option<usize>,
    /// Soft target aligned with the classifier's head order.
    pub soft: Option<Vec<f32>>,
    pub origin: Origin,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSet {
    pub items: Vec<TrainItem>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AccessCounts {
    pub inputs: u64,
    pub hard_labels: u64,
    pub soft_labels: u64,
}

/// Counts of sample reads made by the training loop, keyed by origin.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AccessLog {
    pub by_origin: BTreeMap<Origin, AccessCounts>,
}

impl AccessLog {
    pub fn record(&mut self, origin: Origin, hard: bool, soft: bool) {
        let c = self.by_origin.entry(origin).or_default();
        c.inputs += 1;
        c.hard_labels += u64::from(hard);
        c.soft_labels += u64::from(soft);
    }

    /// Records `count` reads of inputs only.
    pub fn record_inputs(&mut self, origin: Origin, count: u64) {
        self.by_origin.entry(origin).or_default().inputs += count;
    }

    pub fn merge(&mut self, other: &AccessLog) {
        for (origin, c) in &other.by_origin {
            let e = self.by_origin.entry(*origin).or_default();
            e.inputs += c.inputs;
            e.hard_labels += c.hard_labels;
            e.soft_labels += c.soft_labels;
        }
    }

    pub fn total_hard_labels(&self) -> u64 {
        self.by_origin.values().map(|c| c.hard_labels).sum()
    }

    /// Real samples read that arrived before `increment`.
    pub fn real_reads_before(&self, increment: usize) -> u64 {
        self.by_origin
            .iter()
            .filter(|(o, _)| matches!(o, Origin::Real { increment: i } if *i < increment))
            .map(|(_, c)| c.inputs)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSelector {
    /// Sigmoid + binary cross entropy against one-hot hard labels.
    Plain,
    /// `alpha * BCE(hard) + (1 - alpha) * H(soft, softmax(z / T))`.
    ModelDistillation { alpha: f32, temperature: f32 },
    /// `H(soft, softmax(z / T))`; hard labels are never read.
    AcDistillation { temperature: f32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub schedule: LrSchedule,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

fn default_batch() -> usize {
    100
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        self.schedule.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSummary {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f32>,
    pub access: AccessLog,
}

fn check_items(model: &ClassifierModel, data: &TrainingSet, loss: &LossSelector) -> Result<()> {
    let head = model.head_classes();
    for item in &data.items {
        let needs_hard = !matches!(loss, LossSelector::AcDistillation { .. });
        let needs_soft = !matches!(loss, LossSelector::Plain);
        if needs_hard {
            let label = item
                .hard
                .ok_or_else(|| Error::invalid("dataset", "sample without a hard label"))?;
            if !head.contains(&label) {
                return Err(Error::LabelOutOfHead {
                    label,
                    head: head.to_vec(),
                });
            }
        }
        if needs_soft {
            let soft = item
                .soft
                .as_ref()
                .ok_or_else(|| Error::invalid("dataset", "sample without a soft label"))?;
            if soft.len() != head.len() {
                return Err(Error::LengthMismatch {
                    left: soft.len(),
                    right: head.len(),
                });
            }
        }
    }
    match *loss {
        LossSelector::ModelDistillation { alpha, temperature } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::invalid("alpha", format!("{alpha} outside [0, 1]")));
            }
            check_temperature(temperature)
        }
        LossSelector::AcDistillation { temperature } => check_temperature(temperature),
        LossSelector::Plain => Ok(()),
    }
}

fn check_temperature(t: f32) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("temperature", format!("{t} must be > 0")))
    }
}

/// Runs `cfg.epochs` passes of shuffled minibatch descent. Deterministic for
/// a given `seed`.
pub fn train_classifier(
    model: &mut ClassifierModel,
    data: &TrainingSet,
    loss: &LossSelector,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_items(model, data, loss)?;

    let mut rng = rng::rng(seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.schedule.clone());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut summary = TrainSummary::default();
    let k = model.head_classes().len();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for batch_idx in order.chunks(cfg.batch_size) {
            let items: Vec<&TrainItem> = batch_idx.iter().map(|&i| &data.items[i]).collect();
            let batch = Tensor::stack(&items.iter().map(|it| &it.input).collect::<Vec<_>>())?;
            let one_hot = || -> Vec<f32> {
                let mut t = vec![0.0f32; items.len() * k];
                for (r, it) in items.iter().enumerate() {
                    let col = model.head_index(it.hard.expect("checked")).expect("checked");
                    t[r * k + col] = 1.0;
                }
                t
            };
            let soft = || -> Vec<f32> {
                items
                    .iter()
                    .flat_map(|it| it.soft.as_ref().expect("checked").iter().copied())
                    .collect()
            };

            let mut g = Graph::new();
            let x = g.input(batch);
            let (logits, _) = model.forward(&mut g, x)?;
            let (loss_var, used_hard, used_soft) = match *loss {
                LossSelector::Plain => (g.bce_with_logits(logits, one_hot())?, true, false),
                LossSelector::ModelDistillation { alpha, temperature } => {
                    let hard = g.bce_with_logits(logits, one_hot())?;
                    let hard = g.scale(hard, alpha);
                    let distill = g.softmax_cross_entropy(logits, soft(), temperature)?;
                    let distill = g.scale(distill, 1.0 - alpha);
                    (g.add(hard, distill)?, true, true)
                }
                LossSelector::AcDistillation { temperature } => {
                    (g.softmax_cross_entropy(logits, soft(), temperature)?, false, true)
                }
            };
            for it in &items {
                summary.access.record(it.origin, used_hard, used_soft);
            }
            let value = g.value(loss_var).data()[0];
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: value });
            }
            total += f64::from(value) * items.len() as f64;
            g.backward(loss_var, model.params_mut())?;
            optimizer.step(model.params_mut(), epoch)?;
        }
        summary.epoch_losses.push((total / data.len() as f64) as f32);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::classifier::ClassifierArch;
    use crate::rng::rng;

    fn tiny_set() -> TrainingSet {
        let items = (0..20)
            .map(|i| {
                let c = i % 2;
                let x = if c == 0 { -1.0 } else { 1.0 };
                TrainItem {
                    input: Tensor::new(vec![2], vec![x + 0.05 * i as f32, 0.3]).unwrap(),
                    hard: Some(c),
                    soft: Some(if c == 0 { vec![0.9, 0.1] } else { vec![0.2, 0.8] }),
                    origin: Origin::Real { increment: 1 },
                }
            })
            .collect();
        TrainingSet { items }
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            schedule: LrSchedule::constant(0.1),
            optimizer: OptimizerKind::default(),
        }
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let mut m = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[4]), &[0, 1], &mut rng(0)).unwrap();
        let before = m.clone();
        train_classifier(&mut m, &tiny_set(), &LossSelector::Plain, &cfg(0), 1).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn label_outside_head_is_rejected() {
        let mut m = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[4]), &[0], &mut rng(0)).unwrap();
        let err = train_classifier(&mut m, &tiny_set(), &LossSelector::Plain, &cfg(1), 1).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfHead { label: 1, .. }));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut m = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[4]), &[0], &mut rng(0)).unwrap();
        let err = train_classifier(&mut m, &TrainingSet::default(), &LossSelector::Plain, &cfg(1), 1).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn ac_loss_never_reads_hard_labels() {
        let mut m = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[4]), &[0, 1], &mut rng(0)).unwrap();
        let mut data = tiny_set();
        for it in &mut data.items {
            it.hard = None;
        }
        let s = train_classifier(&mut m, &data, &LossSelector::AcDistillation { temperature: 2.0 }, &cfg(2), 1).unwrap();
        assert_eq!(s.access.total_hard_labels(), 0);
        assert_eq!(s.access.by_origin[&Origin::Real { increment: 1 }].soft_labels, 40);
    }

    #[test]
    fn bad_alpha_rejected() {
        let mut m = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[4]), &[0, 1], &mut rng(0)).unwrap();
        let loss = LossSelector::ModelDistillation {
            alpha: 1.5,
            temperature: 2.0,
        };
        assert!(train_classifier(&mut m, &tiny_set(), &loss, &cfg(1), 1).is_err());
    }
}
