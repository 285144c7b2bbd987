//! Embedding-space classification: nearest class mean, mean of exemplars
//! and herding selection.
//!
//! Functions come in two layers: the `*_embeddings` variants work on
//! precomputed vectors, the others take an [`Embedder`] and raw inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::models::{l2_normalize, ClassifierModel};

/// Maps a list of inputs to one embedding vector each.
pub trait Embedder {
    fn embed_batch(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>>;
}

impl Embedder for ClassifierModel {
    fn embed_batch(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        self.embed_all(inputs)
    }
}

impl<F> Embedder for F
where
    F: Fn(&[Tensor]) -> Result<Vec<Vec<f32>>>,
{
    fn embed_batch(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        self(inputs)
    }
}

/// Where the samples behind a set of class means came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanProvenance {
    TrueMean,
    ExemplarMean,
    GeneratedMean,
}

/// Unit-normalized mean embedding per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMeans {
    pub means: BTreeMap<usize, Vec<f32>>,
    pub provenance: MeanProvenance,
}

impl ClassMeans {
    pub fn classes(&self) -> Vec<usize> {
        self.means.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Arithmetic mean of each group, then L2-normalized.
pub fn class_means_from_embeddings(
    groups: &BTreeMap<usize, Vec<Vec<f32>>>,
    provenance: MeanProvenance,
) -> Result<ClassMeans> {
    let mut means = BTreeMap::new();
    for (&c, embs) in groups {
        let first = embs.first().ok_or(Error::EmptyClass(c))?;
        let mut acc = vec![0.0f64; first.len()];
        for e in embs {
            if e.len() != acc.len() {
                return Err(Error::LengthMismatch {
                    left: e.len(),
                    right: acc.len(),
                });
            }
            for (a, &v) in acc.iter_mut().zip(e) {
                *a += f64::from(v);
            }
        }
        let n = embs.len() as f64;
        let mut mean: Vec<f32> = acc.iter().map(|a| (a / n) as f32).collect();
        l2_normalize(&mut mean);
        means.insert(c, mean);
    }
    Ok(ClassMeans { means, provenance })
}

pub fn compute_class_means(
    embedder: &dyn Embedder,
    samples: &BTreeMap<usize, Vec<Tensor>>,
    provenance: MeanProvenance,
) -> Result<ClassMeans> {
    let mut groups = BTreeMap::new();
    for (&c, xs) in samples {
        if xs.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        groups.insert(c, embedder.embed_batch(xs)?);
    }
    class_means_from_embeddings(&groups, provenance)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Class whose mean is nearest in Euclidean distance; ties go to the lowest
/// class index.
pub fn ncm_classify_embedding(means: &ClassMeans, embedding: &[f32]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&c, mu) in &means.means {
        if mu.len() != embedding.len() {
            return Err(Error::ShapeMismatch {
                layer: "ncm".into(),
                expected: vec![mu.len()],
                got: vec![embedding.len()],
            });
        }
        let d = sq_dist(embedding, mu);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::EmptyDataset)
}

pub fn ncm_classify(embedder: &dyn Embedder, means: &ClassMeans, inputs: &[Tensor]) -> Result<Vec<usize>> {
    if means.is_empty() {
        return Err(Error::invalid("means", "no class means"));
    }
    embedder
        .embed_batch(inputs)?
        .iter()
        .map(|e| ncm_classify_embedding(means, e))
        .collect()
}

/// Greedy herding over precomputed embeddings. Returns `m` distinct sample
/// indices in selection order.
pub fn herd_select_embeddings(embeddings: &[Vec<f32>], m: usize) -> Result<Vec<usize>> {
    let n = embeddings.len();
    if m > n {
        return Err(Error::NotEnoughSamples {
            requested: m,
            available: n,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = embeddings[0].len();
    let mut mu = vec![0.0f64; d];
    for e in embeddings {
        for (a, &v) in mu.iter_mut().zip(e) {
            *a += f64::from(v);
        }
    }
    mu.iter_mut().for_each(|a| *a /= n as f64);

    let mut taken = vec![false; n];
    let mut running = vec![0.0f64; d];
    let mut order = Vec::with_capacity(m);
    for k in 1..=m {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in embeddings.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let dist: f64 = (0..d)
                .map(|j| {
                    let diff = mu[j] - (running[j] + f64::from(e[j])) / k as f64;
                    diff * diff
                })
                .sum();
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((i, dist));
            }
        }
        let (i, _) = best.expect("m <= n leaves a candidate");
        taken[i] = true;
        for (r, &v) in running.iter_mut().zip(&embeddings[i]) {
            *r += f64::from(v);
        }
        order.push(i);
    }
    Ok(order)
}

/// Herds `m` exemplars from the samples of one class.
pub fn herd_select(embedder: &dyn Embedder, samples: &[Tensor], m: usize) -> Result<Vec<Tensor>> {
    if m > samples.len() {
        return Err(Error::NotEnoughSamples {
            requested: m,
            available: samples.len(),
        });
    }
    let embs = embedder.embed_batch(samples)?;
    Ok(herd_select_embeddings(&embs, m)?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

/// Stored real exemplars, kept in herding order per class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExemplarSet {
    pub per_class: BTreeMap<usize, Vec<Tensor>>,
    pub capacity: usize,
}

impl ExemplarSet {
    pub fn new(capacity: usize) -> Self {
        Self {
            per_class: BTreeMap::new(),
            capacity,
        }
    }

    pub fn classes(&self) -> Vec<usize> {
        self.per_class.keys().copied().collect()
    }

    pub fn total(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    /// Stores a herded list, truncated to the current capacity.
    pub fn insert(&mut self, class: usize, mut herded: Vec<Tensor>) {
        herded.truncate(self.capacity);
        self.per_class.insert(class, herded);
    }

    /// Lowers the per-class capacity, keeping the herding prefix.
    pub fn reduce(&mut self, capacity: usize) {
        self.capacity = capacity;
        for v in self.per_class.values_mut() {
            v.truncate(capacity);
        }
    }

    pub fn means(&self, embedder: &dyn Embedder) -> Result<ClassMeans> {
        compute_class_means(embedder, &self.per_class, MeanProvenance::ExemplarMean)
    }
}
