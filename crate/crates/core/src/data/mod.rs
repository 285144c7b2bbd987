//! Dataset sources: IDX ingestion, synthetic Gaussian classes and the
//! class-incremental splitter.

pub mod cifar;
pub mod idx;
pub mod split;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub use cifar::parse_cifar10_binary;
pub use idx::{encode_idx, load_mnist, parse_idx, parse_idx_images, parse_idx_labels, IdxImages, MnistSplit};
pub use split::{split_incremental, split_with_order, IncrementStream};
pub use synth::{synth_gaussians, MeansLayout};

/// Affine map applied to raw values: `stored = raw * scale + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f32,
    pub offset: f32,
    /// Free-form note on further transforms (e.g. pooling).
    pub note: String,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
            note: String::new(),
        }
    }

    /// Bytes in `[0, 255]` mapped onto `[-1, 1]`.
    pub fn pixels_to_unit_range() -> Self {
        Self {
            scale: 1.0 / 127.5,
            offset: -1.0,
            note: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
    class_set: Vec<usize>,
    normalization: Normalization,
}

impl LabeledDataset {
    /// Builds a dataset. `declared` extends the class set beyond the labels
    /// present, which lets an empty dataset still name its classes.
    pub fn new(
        inputs: Vec<Tensor>,
        labels: Vec<usize>,
        declared: &[usize],
        normalization: Normalization,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: labels.len(),
            });
        }
        if let Some(first) = inputs.first() {
            if let Some(bad) = inputs.iter().find(|t| t.shape() != first.shape()) {
                return Err(Error::ShapeMismatch {
                    layer: "dataset".into(),
                    expected: first.shape().to_vec(),
                    got: bad.shape().to_vec(),
                });
            }
        }
        let mut class_set: Vec<usize> = declared.iter().chain(&labels).copied().collect();
        class_set.sort_unstable();
        class_set.dedup();
        Ok(Self {
            inputs,
            labels,
            class_set,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sorted distinct classes.
    pub fn class_set(&self) -> &[usize] {
        &self.class_set
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn input_shape(&self) -> Option<&[usize]> {
        self.inputs.first().map(Tensor::shape)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, usize)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    /// Samples whose label is in `classes`, in original order.
    pub fn restrict(&self, classes: &[usize]) -> LabeledDataset {
        let (inputs, labels) = self
            .iter()
            .filter(|(_, y)| classes.contains(y))
            .map(|(x, y)| (x.clone(), y))
            .unzip();
        let declared: Vec<usize> = self.class_set.iter().copied().filter(|c| classes.contains(c)).collect();
        LabeledDataset {
            inputs,
            labels,
            class_set: declared,
            normalization: self.normalization.clone(),
        }
    }

    /// Inputs grouped by class, in class order.
    pub fn by_class(&self) -> BTreeMap<usize, Vec<&Tensor>> {
        let mut out: BTreeMap<usize, Vec<&Tensor>> = self.class_set.iter().map(|&c| (c, Vec::new())).collect();
        for (x, y) in self.iter() {
            out.entry(y).or_default().push(x);
        }
        out
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut out: BTreeMap<usize, usize> = self.class_set.iter().map(|&c| (c, 0)).collect();
        for &y in &self.labels {
            *out.entry(y).or_default() += 1;
        }
        out
    }

    /// Keeps the first `n` samples of every class.
    pub fn cap_per_class(&self, n: usize) -> LabeledDataset {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let (inputs, labels) = self
            .iter()
            .filter(|(_, y)| {
                let c = seen.entry(*y).or_default();
                *c += 1;
                *c <= n
            })
            .map(|(x, y)| (x.clone(), y))
            .unzip();
        LabeledDataset {
            inputs,
            labels,
            class_set: self.class_set.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// 2x2 average pooling of `[c, h, w]` inputs.
    pub fn downsample2x(&self) -> Result<LabeledDataset> {
        let inputs = self
            .inputs
            .iter()
            .map(|t| avg_pool2(t))
            .collect::<Result<Vec<_>>>()?;
        let mut normalization = self.normalization.clone();
        if !normalization.note.is_empty() {
            normalization.note.push_str(", ");
        }
        normalization.note.push_str("2x2 average pool");
        Ok(LabeledDataset {
            inputs,
            labels: self.labels.clone(),
            class_set: self.class_set.clone(),
            normalization,
        })
    }

    /// Appends the samples of `other`. Input shapes must agree.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let declared: Vec<usize> = self.class_set.iter().chain(&other.class_set).copied().collect();
        LabeledDataset::new(inputs, labels, &declared, self.normalization.clone())
    }
}

fn avg_pool2(t: &Tensor) -> Result<Tensor> {
    let s = t.shape();
    if s.len() != 3 || s[1] < 2 || s[2] < 2 {
        return Err(Error::ShapeMismatch {
            layer: "downsample2x".into(),
            expected: vec![1, 2, 2],
            got: s.to_vec(),
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = (h / 2, w / 2);
    let src = t.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let at = |dy: usize, dx: usize| src[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * 0.25);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}
