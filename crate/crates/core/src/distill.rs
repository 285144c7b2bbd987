//! Temperature softmax, cross entropy and the two increment losses.
//!
//! All functions here are pure. Internally they evaluate in `f64` and round
//! the result to `f32`.

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Probabilities passed to a logarithm are clamped to `[CE_EPSILON, 1]`.
pub const CE_EPSILON: f64 = 1e-7;

pub const DEFAULT_TEMPERATURE: f32 = 2.0;
pub const DEFAULT_ALPHA: f32 = 0.5;

fn check_temperature(t: f32) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("temperature", format!("{t} must be a finite value > 0")))
    }
}

/// `softmax(logits / t)` with max subtraction.
pub fn soften(logits: &[f32], t: f32) -> Result<Vec<f32>> {
    check_temperature(t)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    if logits.is_empty() {
        return Ok(Vec::new());
    }
    let t = f64::from(t);
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v) / t));
    let exps: Vec<f64> = logits.iter().map(|&v| (f64::from(v) / t - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / denom) as f32).collect())
}

/// `-sum_i target_i * ln(clamp(predicted_i, eps, 1))`.
pub fn cross_entropy(target: &[f32], predicted: &[f32]) -> Result<f32> {
    if target.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: target.len(),
            right: predicted.len(),
        });
    }
    let h: f64 = target
        .iter()
        .zip(predicted)
        .map(|(&t, &p)| -f64::from(t) * f64::from(p).clamp(CE_EPSILON, 1.0).ln())
        .sum();
    Ok(h as f32)
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f32]) -> f64 {
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -f64::from(v) * f64::from(v).ln())
        .sum()
}

/// Places a label defined over `support` into the order of `classes`,
/// filling absent classes with zero.
pub fn extend_soft(label: &[f32], support: &[usize], classes: &[usize]) -> Result<Vec<f32>> {
    if label.len() != support.len() {
        return Err(Error::LengthMismatch {
            left: label.len(),
            right: support.len(),
        });
    }
    let mut out = vec![0.0f32; classes.len()];
    for (&p, c) in label.iter().zip(support) {
        let idx = classes.iter().position(|x| x == c).ok_or(Error::UnknownClass(*c))?;
        out[idx] = p;
    }
    Ok(out)
}

/// `alpha * H(y, predicted) + (1 - alpha) * H(extend(y_soft), predicted)`.
///
/// `y` and `predicted` span all current classes in the same order; `y_soft`
/// spans the first `y_soft.len()` of them (the old classes) and is
/// zero-extended over the rest.
pub fn model_distillation_loss(y: &[f32], y_soft: &[f32], predicted: &[f32], alpha: f32) -> Result<f32> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} outside [0, 1]")));
    }
    if y_soft.len() > y.len() {
        return Err(Error::LengthMismatch {
            left: y_soft.len(),
            right: y.len(),
        });
    }
    let mut extended = y_soft.to_vec();
    extended.resize(y.len(), 0.0);
    let hard = f64::from(cross_entropy(y, predicted)?);
    let soft = f64::from(cross_entropy(&extended, predicted)?);
    let a = f64::from(alpha);
    Ok((a * hard + (1.0 - a) * soft) as f32)
}

/// `H(y_soft, predicted)`; no hard-label term and no weighting.
pub fn ac_distillation_loss(y_soft: &[f32], predicted: &[f32]) -> Result<f32> {
    cross_entropy(y_soft, predicted)
}

/// Which model produced the soft labels of a [`SoftDataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillSource {
    OldClassifier,
    AuxiliaryClassifier,
}

/// Anything that maps inputs to class logits over a fixed class list.
pub trait LogitScorer {
    fn scorer_classes(&self) -> &[usize];
    fn score(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>>;
    fn source(&self) -> DistillSource;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftItem {
    pub input: Tensor,
    pub label: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftDataset {
    pub items: Vec<SoftItem>,
    pub source: DistillSource,
    pub temperature: f32,
    /// Classes the soft labels are defined over, in label order.
    pub class_support: Vec<usize>,
}

impl SoftDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total probability that item `i` assigns to any class in `classes`.
    pub fn mass_on(&self, i: usize, classes: &[usize]) -> f32 {
        self.items[i]
            .label
            .iter()
            .zip(&self.class_support)
            .filter(|(_, c)| classes.contains(c))
            .map(|(p, _)| f64::from(*p))
            .sum::<f64>() as f32
    }
}

/// Labels every input with `soften(scorer(x), t)`.
pub fn make_soft_dataset(
    scorer: &dyn LogitScorer,
    inputs: &[Tensor],
    t: f32,
    class_support: &[usize],
) -> Result<SoftDataset> {
    check_temperature(t)?;
    let head = scorer.scorer_classes();
    if head.len() != class_support.len() {
        return Err(Error::HeadSupportMismatch {
            head: head.len(),
            support: class_support.len(),
        });
    }
    if head != class_support {
        return Err(Error::invalid(
            "class_support",
            format!("{class_support:?} does not match scorer classes {head:?}"),
        ));
    }
    let mut items = Vec::with_capacity(inputs.len());
    if !inputs.is_empty() {
        let logits = scorer.score(inputs)?;
        for (x, z) in inputs.iter().zip(logits) {
            items.push(SoftItem {
                input: x.clone(),
                label: soften(&z, t)?,
            });
        }
    }
    Ok(SoftDataset {
        items,
        source: scorer.source(),
        temperature: t,
        class_support: class_support.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f32, b: f64, tol: f64) -> bool {
        (f64::from(a) - b).abs() <= tol
    }

    #[test]
    fn soften_at_unit_temperature_is_softmax() {
        let z = [0.3f32, -1.2, 2.0, 0.0];
        let p = soften(&z, 1.0).unwrap();
        let denom: f64 = z.iter().map(|&v| f64::from(v).exp()).sum();
        for (pi, &zi) in p.iter().zip(&z) {
            assert!(close(*pi, f64::from(zi).exp() / denom, 1e-7));
        }
    }

    #[test]
    fn soften_equal_logits_is_uniform() {
        for t in [0.1, 1.0, 7.5] {
            for p in soften(&[5.0, 5.0, 5.0], t).unwrap() {
                assert!(close(p, 1.0 / 3.0, 1e-7));
            }
        }
    }

    #[test]
    fn soften_rejects_bad_inputs() {
        assert!(soften(&[1.0], 0.0).is_err());
        assert!(soften(&[1.0], -2.0).is_err());
        assert!(matches!(soften(&[f32::NAN, 1.0], 1.0), Err(Error::NonFinite(_))));
        assert!(soften(&[f32::INFINITY], 1.0).is_err());
    }

    #[test]
    fn cross_entropy_one_hot_hit_is_zero() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_length_mismatch() {
        assert!(matches!(
            cross_entropy(&[1.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn cross_entropy_clamps_zero_prediction() {
        let h = cross_entropy(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(close(h, -(1e-7f64).ln(), 1e-3));
    }

    #[test]
    fn extend_places_by_class() {
        let e = extend_soft(&[0.6, 0.4], &[7, 8], &[7, 8, 5, 9]).unwrap();
        assert_eq!(e, vec![0.6, 0.4, 0.0, 0.0]);
        assert!(extend_soft(&[1.0], &[3], &[7, 8]).is_err());
    }

    #[test]
    fn model_loss_alpha_out_of_range() {
        assert!(model_distillation_loss(&[1.0, 0.0], &[1.0], &[0.5, 0.5], 1.01).is_err());
        assert!(model_distillation_loss(&[1.0, 0.0], &[1.0], &[0.5, 0.5], -0.1).is_err());
    }
}
