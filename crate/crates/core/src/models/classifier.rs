use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::diffcore::init::glorot_uniform;
use crate::distill::{DistillSource, LogitScorer};
use crate::diffcore::{load_checkpoint, save_checkpoint, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::arch::{LayerSpec, Stack};
use crate::rng::Rng;

/// Scale applied to the initializer for head rows added by [`ClassifierModel::grow_head`].
pub const NEW_HEAD_GAIN: f32 = 0.01;

const HEAD_WEIGHT: &str = "head.weight";
const HEAD_BIAS: &str = "head.bias";
const EVAL_CHUNK: usize = 500;

/// Body layers ending in the embedding; the class head is appended on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierArch {
    pub input_shape: Vec<usize>,
    pub body: Vec<LayerSpec>,
}

impl ClassifierArch {
    /// `input -> (dense(h) -> relu)* -> head`. The last hidden width is the
    /// embedding size.
    pub fn mlp(input_shape: Vec<usize>, hidden: &[usize]) -> Self {
        let body = hidden
            .iter()
            .flat_map(|&units| [LayerSpec::Dense { units }, LayerSpec::Relu])
            .collect();
        Self { input_shape, body }
    }

    /// conv(16)-relu-conv(32)-relu-maxpool-dense(64)-relu.
    pub fn small_cnn(input_shape: Vec<usize>) -> Self {
        Self {
            input_shape,
            body: vec![
                LayerSpec::Conv2d {
                    channels: 16,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Conv2d {
                    channels: 32,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { size: 2 },
                LayerSpec::Dense { units: 64 },
                LayerSpec::Relu,
            ],
        }
    }

    fn stack(&self) -> Stack {
        Stack::new("body", self.input_shape.clone(), self.body.clone())
    }

    pub fn embed_dim(&self) -> Result<usize> {
        let out = self.stack().output_shape()?;
        if out.len() != 1 {
            return Err(Error::ShapeMismatch {
                layer: "body.output".into(),
                expected: vec![out.iter().product()],
                got: out,
            });
        }
        Ok(out[0])
    }
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    arch: ClassifierArch,
    head_classes: Vec<usize>,
}

/// Feed-forward classifier with a growable sigmoid head and an accessible
/// penultimate embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    arch: ClassifierArch,
    params: ParamStore,
    head_classes: Vec<usize>,
    embed_dim: usize,
}

impl ClassifierModel {
    pub fn new(arch: ClassifierArch, head_classes: &[usize], rng: &mut Rng) -> Result<Self> {
        let embed_dim = arch.embed_dim()?;
        let mut params = ParamStore::new();
        arch.stack().init(&mut params, rng)?;
        let mut model = Self {
            arch,
            params,
            head_classes: Vec::new(),
            embed_dim,
        };
        model.params.insert(HEAD_WEIGHT, Tensor::zeros(&[embed_dim, 1]))?;
        model.params.insert(HEAD_BIAS, Tensor::zeros(&[1]))?;
        // placeholders, replaced by rebuild_head
        model.rebuild_head(head_classes, rng, 1.0)?;
        Ok(model)
    }

    fn rebuild_head(&mut self, classes: &[usize], rng: &mut Rng, gain: f32) -> Result<()> {
        check_distinct(classes)?;
        let n = classes.len();
        let w = glorot_uniform(&[self.embed_dim, n.max(1)], self.embed_dim, n.max(1), gain, rng);
        self.params.replace(HEAD_WEIGHT, w)?;
        self.params.replace(HEAD_BIAS, Tensor::zeros(&[n.max(1)]))?;
        self.head_classes = classes.to_vec();
        Ok(())
    }

    pub fn arch(&self) -> &ClassifierArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn head_classes(&self) -> &[usize] {
        &self.head_classes
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn head_index(&self, class: usize) -> Option<usize> {
        self.head_classes.iter().position(|&c| c == class)
    }

    /// Appends `new_classes` to the head. Existing parameters are untouched;
    /// new head columns use the seeded initializer scaled by [`NEW_HEAD_GAIN`].
    pub fn grow_head(&mut self, new_classes: &[usize], rng: &mut Rng) -> Result<()> {
        if new_classes.is_empty() {
            return Ok(());
        }
        for &c in new_classes {
            if self.head_classes.contains(&c) {
                return Err(Error::DuplicateClass(c));
            }
        }
        check_distinct(new_classes)?;
        if self.head_classes.is_empty() {
            return self.rebuild_head(new_classes, rng, NEW_HEAD_GAIN);
        }
        let old_n = self.head_classes.len();
        let new_n = old_n + new_classes.len();
        let fresh = glorot_uniform(&[self.embed_dim, new_classes.len()], self.embed_dim, new_n, NEW_HEAD_GAIN, rng);
        let old_w = self.params.value(HEAD_WEIGHT)?.clone();
        let old_b = self.params.value(HEAD_BIAS)?.clone();
        let mut w = Vec::with_capacity(self.embed_dim * new_n);
        for i in 0..self.embed_dim {
            w.extend_from_slice(&old_w.data()[i * old_n..(i + 1) * old_n]);
            w.extend_from_slice(fresh.row(i));
        }
        let mut b = old_b.into_data();
        b.resize(new_n, 0.0);
        self.params.replace(HEAD_WEIGHT, Tensor::new(vec![self.embed_dim, new_n], w)?)?;
        self.params.replace(HEAD_BIAS, Tensor::new(vec![new_n], b)?)?;
        self.head_classes.extend_from_slice(new_classes);
        Ok(())
    }

    /// Records the forward pass on `g`, returning `(logits, embeddings)` where
    /// the embeddings are the raw penultimate activations.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        if self.head_classes.is_empty() {
            return Err(Error::invalid("head_classes", "classifier head is empty"));
        }
        let emb = self.arch.stack().forward(g, &self.params, x)?;
        let w = g.param(&self.params, HEAD_WEIGHT)?;
        let b = g.param(&self.params, HEAD_BIAS)?;
        let logits = g.linear(emb, w, b, "head")?;
        Ok((logits, emb))
    }

    /// Logits and raw embeddings for a stacked batch `[n, ..input_shape]`.
    pub fn forward_batch(&self, batch: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let x = g.input(batch.clone());
        let (logits, emb) = self.forward(&mut g, x)?;
        Ok((g.value(logits).clone(), g.value(emb).clone()))
    }

    /// Logit rows for a list of samples, in head order.
    pub fn logits(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_CHUNK) {
            let batch = Tensor::stack(&chunk.iter().collect::<Vec<_>>())?;
            let (logits, _) = self.forward_batch(&batch)?;
            out.extend((0..chunk.len()).map(|i| logits.row(i).to_vec()));
        }
        Ok(out)
    }

    /// L2-normalized penultimate activations for a list of samples.
    pub fn embed_all(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_CHUNK) {
            let batch = Tensor::stack(&chunk.iter().collect::<Vec<_>>())?;
            let (_, emb) = self.forward_batch(&batch)?;
            out.extend((0..chunk.len()).map(|i| {
                let mut v = emb.row(i).to_vec();
                l2_normalize(&mut v);
                v
            }));
        }
        Ok(out)
    }

    pub fn embed(&self, x: &Tensor) -> Result<Vec<f32>> {
        Ok(self.embed_all(std::slice::from_ref(x))?.remove(0))
    }

    /// Highest-logit class for each sample (the sigmoid is monotone, so this
    /// is also the most probable class).
    pub fn predict(&self, inputs: &[Tensor]) -> Result<Vec<usize>> {
        Ok(self
            .logits(inputs)?
            .iter()
            .map(|row| self.head_classes[argmax(row)])
            .collect())
    }

    pub fn save(&self, w: impl Write) -> Result<()> {
        let desc = serde_json::to_string(&Descriptor {
            arch: self.arch.clone(),
            head_classes: self.head_classes.clone(),
        })?;
        save_checkpoint(w, &desc, &self.params)
    }

    pub fn load(r: impl Read) -> Result<Self> {
        let ck = load_checkpoint(r)?;
        let desc: Descriptor = serde_json::from_str(&ck.descriptor)?;
        let embed_dim = desc.arch.embed_dim()?;
        let head = ck.params.value(HEAD_WEIGHT)?;
        if head.shape() != [embed_dim, desc.head_classes.len()] {
            return Err(Error::Checkpoint(format!(
                "head shape {:?} does not match {} classes",
                head.shape(),
                desc.head_classes.len()
            )));
        }
        Ok(Self {
            arch: desc.arch,
            params: ck.params,
            head_classes: desc.head_classes,
            embed_dim,
        })
    }
}

impl LogitScorer for ClassifierModel {
    fn scorer_classes(&self) -> &[usize] {
        &self.head_classes
    }

    fn score(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        self.logits(inputs)
    }

    fn source(&self) -> DistillSource {
        DistillSource::OldClassifier
    }
}

fn check_distinct(classes: &[usize]) -> Result<()> {
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::DuplicateClass(*c));
        }
    }
    Ok(())
}

/// First index of the maximum.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Scales `v` to unit length; an all-zero vector is left unchanged.
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
}
