use serde::Serialize;

use crate::distill::DistillSource;
use crate::incremental::{IncrementLog, SoftRecord};

/// Share of one soft label's mass on `old` and on `new` classes, each
/// divided by the label's total mass.
pub fn soft_mass_shares(record: &SoftRecord, item: usize, old: &[usize], new: &[usize]) -> (f64, f64) {
    let (mut o, mut n, mut total) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, c) in record.labels[item].iter().zip(&record.class_support) {
        let p = f64::from(p);
        total += p;
        if old.contains(c) {
            o += p;
        }
        if new.contains(c) {
            n += p;
        }
    }
    if total > 0.0 {
        (o / total, n / total)
    } else {
        (0.0, 0.0)
    }
}

/// The three distillation biases of one increment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasEntry {
    pub increment: usize,
    pub source: Option<DistillSource>,
    /// `k * m / |D_real|`.
    pub imbalance_ratio: f64,
    /// Mean soft mass on old classes for inputs of new classes.
    pub new_inputs_mass_on_old: Option<f64>,
    /// Mean soft mass on new classes for inputs of old classes.
    pub old_inputs_mass_on_new: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BiasReport {
    pub increments: Vec<BiasEntry>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Computes the bias metrics from the logs of one run. Increments without
/// soft targets only carry the imbalance ratio.
pub fn bias_report(logs: &[IncrementLog]) -> BiasReport {
    let increments = logs
        .iter()
        .map(|log| {
            let (mut on_old, mut on_new) = (None, None);
            if let Some(rec) = &log.soft {
                let shares: Vec<(usize, (f64, f64))> = (0..rec.labels.len())
                    .map(|i| (rec.item_classes[i], soft_mass_shares(rec, i, &log.old_classes, &log.new_classes)))
                    .collect();
                on_old = mean(shares.iter().filter(|(c, _)| log.new_classes.contains(c)).map(|(_, s)| s.0));
                on_new = mean(shares.iter().filter(|(c, _)| log.old_classes.contains(c)).map(|(_, s)| s.1));
            }
            BiasEntry {
                increment: log.increment,
                source: log.soft.as_ref().map(|r| r.source),
                imbalance_ratio: log.generated_count as f64 / log.real_count.max(1) as f64,
                new_inputs_mass_on_old: on_old,
                old_inputs_mass_on_new: on_new,
            }
        })
        .collect();
    BiasReport { increments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::AccessLog;

    #[test]
    fn old_head_support_gives_extreme_metrics() {
        let rec = SoftRecord {
            source: DistillSource::OldClassifier,
            temperature: 2.0,
            class_support: vec![0, 1],
            item_classes: vec![2, 0],
            labels: vec![vec![0.3, 0.7], vec![0.9, 0.1]],
        };
        let log = IncrementLog {
            increment: 2,
            old_classes: vec![0, 1],
            new_classes: vec![2, 3],
            real_count: 10,
            generated_count: 20,
            k: 10,
            access: AccessLog::default(),
            soft: Some(rec),
            gan_init_checksum: None,
            gan_checksum: None,
            epoch_losses: Vec::new(),
        };
        let r = bias_report(&[log]);
        let e = &r.increments[0];
        assert_eq!(e.imbalance_ratio, 2.0);
        assert_eq!(e.new_inputs_mass_on_old, Some(1.0));
        assert_eq!(e.old_inputs_mass_on_new, Some(0.0));
    }
}
