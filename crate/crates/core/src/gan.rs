//! Auxiliary-classifier GAN: class-conditional generator plus a
//! discriminator with a real/fake source head and a class head.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::diffcore::init::glorot_uniform;
use crate::diffcore::tensor::Fnv;
use crate::diffcore::{Graph, LrSchedule, Optimizer, OptimizerKind, ParamStore, Tensor, Var};
use crate::distill::{DistillSource, LogitScorer};
use crate::error::{Error, Result};
use crate::models::{LayerSpec, Stack};
use crate::rng::{self, Rng};

const EMBED: &str = "gen.embed";
const SOURCE_W: &str = "disc.source.weight";
const SOURCE_B: &str = "disc.source.bias";
const AUX_W: &str = "disc.aux.weight";
const AUX_B: &str = "disc.aux.bias";
const EVAL_CHUNK: usize = 500;

/// Generator and discriminator layer stacks.
///
/// The generator maps `[z ; embed(c)]` (width `latent_dim + cond_dim`) to the
/// data shape; its output is reshaped to `input_shape` when needed. The
/// discriminator body maps a sample to a feature vector that feeds both heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanArch {
    pub input_shape: Vec<usize>,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub generator: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

impl GanArch {
    /// MLP pair. `tanh_output` bounds generated values to `[-1, 1]` (images);
    /// otherwise the generator output is linear (unbounded 2-D data).
    pub fn mlp(input_shape: Vec<usize>, latent_dim: usize, cond_dim: usize, hidden: &[usize], tanh_output: bool) -> Self {
        let out: usize = input_shape.iter().product();
        let mut generator: Vec<LayerSpec> = hidden
            .iter()
            .flat_map(|&units| [LayerSpec::Dense { units }, LayerSpec::LeakyRelu { slope: 0.2 }])
            .collect();
        generator.push(LayerSpec::Dense { units: out });
        if tanh_output {
            generator.push(LayerSpec::Tanh);
        }
        let discriminator = hidden
            .iter()
            .rev()
            .flat_map(|&units| [LayerSpec::Dense { units }, LayerSpec::LeakyRelu { slope: 0.2 }])
            .collect();
        Self {
            input_shape,
            latent_dim,
            cond_dim,
            generator,
            discriminator,
        }
    }

    /// Small DCGAN-style pair for `[c, h, w]` images with even `h` and `w`.
    /// Sides divisible by 4 get two upsampling stages, otherwise one.
    pub fn dcgan(input_shape: Vec<usize>, latent_dim: usize, cond_dim: usize) -> Self {
        let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
        let stages = if h % 4 == 0 && w % 4 == 0 { 2 } else { 1 };
        let f = 1 << stages;
        let mut generator = vec![
            LayerSpec::Dense {
                units: 32 * (h / f) * (w / f),
            },
            LayerSpec::Relu,
            LayerSpec::Reshape {
                shape: vec![32, h / f, w / f],
            },
        ];
        for s in 0..stages {
            let last = s + 1 == stages;
            generator.push(LayerSpec::Upsample2d { factor: 2 });
            generator.push(LayerSpec::Conv2d {
                channels: if last { 16 } else { 32 },
                kernel: 3,
                stride: 1,
                padding: 1,
            });
            generator.push(LayerSpec::Relu);
        }
        generator.push(LayerSpec::Conv2d {
            channels: c,
            kernel: 3,
            stride: 1,
            padding: 1,
        });
        generator.push(LayerSpec::Tanh);
        let discriminator = vec![
            LayerSpec::Conv2d {
                channels: 16,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Conv2d {
                channels: 32,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Flatten,
        ];
        Self {
            input_shape,
            latent_dim,
            cond_dim,
            generator,
            discriminator,
        }
    }

    fn gen_stack(&self) -> Result<Stack> {
        let mut layers = self.generator.clone();
        let s = Stack::new("gen", vec![self.latent_dim + self.cond_dim], layers.clone());
        let out = s.output_shape()?;
        if out != self.input_shape {
            if out.iter().product::<usize>() != self.input_shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch {
                    layer: "gen.output".into(),
                    expected: self.input_shape.clone(),
                    got: out,
                });
            }
            layers.push(LayerSpec::Reshape {
                shape: self.input_shape.clone(),
            });
        }
        Ok(Stack::new("gen", vec![self.latent_dim + self.cond_dim], layers))
    }

    fn disc_stack(&self) -> Stack {
        Stack::new("disc", self.input_shape.clone(), self.discriminator.clone())
    }

    fn feature_dim(&self) -> Result<usize> {
        let out = self.disc_stack().output_shape()?;
        Ok(out.iter().product())
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent_dim", "must be >= 1"));
        }
        if self.cond_dim == 0 {
            return Err(Error::invalid("cond_dim", "must be >= 1"));
        }
        self.gen_stack()?;
        self.feature_dim()?;
        Ok(())
    }
}

fn default_gan_optimizer() -> OptimizerKind {
    OptimizerKind::Adam {
        beta1: 0.5,
        beta2: 0.999,
    }
}

fn default_gan_batch() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanTrainConfig {
    pub arch: GanArch,
    pub epochs: usize,
    #[serde(default = "default_gan_batch")]
    pub batch_size: usize,
    pub schedule: LrSchedule,
    #[serde(default = "default_gan_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        self.schedule.validate()?;
        self.arch.validate()
    }
}

/// Generator and discriminator parameters with their class list.
#[derive(Clone, Debug, PartialEq)]
pub struct GanBundle {
    arch: GanArch,
    classes: Vec<usize>,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
}

impl GanBundle {
    /// Seeded initialization; class conditioning rows follow `classes`.
    pub fn init(arch: GanArch, classes: &[usize], seed: u64) -> Result<Self> {
        arch.validate()?;
        if classes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(Error::DuplicateClass(*c));
            }
        }
        let mut r = rng::derived_rng(seed, "gan-init", 0);
        let n = classes.len();
        let mut generator = ParamStore::new();
        generator.insert(EMBED, glorot_uniform(&[n, arch.cond_dim], n, arch.cond_dim, 1.0, &mut r))?;
        arch.gen_stack()?.init(&mut generator, &mut r)?;
        let mut discriminator = ParamStore::new();
        arch.disc_stack().init(&mut discriminator, &mut r)?;
        let f = arch.feature_dim()?;
        discriminator.insert(SOURCE_W, glorot_uniform(&[f, 1], f, 1, 1.0, &mut r))?;
        discriminator.insert(SOURCE_B, Tensor::zeros(&[1]))?;
        discriminator.insert(AUX_W, glorot_uniform(&[f, n], f, n, 1.0, &mut r))?;
        discriminator.insert(AUX_B, Tensor::zeros(&[n]))?;
        Ok(Self {
            arch,
            classes: classes.to_vec(),
            generator,
            discriminator,
        })
    }

    pub fn arch(&self) -> &GanArch {
        &self.arch
    }

    /// Classes of the conditioning table and the aux head, in row order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn class_index(&self, class: usize) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .ok_or(Error::UnknownClass(class))
    }

    /// Digest of both parameter stores.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv::default();
        h.write(&self.generator.checksum().to_le_bytes());
        h.write(&self.discriminator.checksum().to_le_bytes());
        h.0
    }

    fn generate(&self, g: &mut Graph, z: Tensor, cond: &[usize]) -> Result<Var> {
        let z = g.input(z);
        let table = g.param(&self.generator, EMBED)?;
        let e = g.gather(table, cond)?;
        let h = g.concat(z, e)?;
        self.arch.gen_stack()?.forward(g, &self.generator, h)
    }

    /// Returns `(source_logit [n, 1], aux_logits [n, classes])`.
    fn discriminate(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let mut h = self.arch.disc_stack().forward(g, &self.discriminator, x)?;
        let hs = g.shape(h).to_vec();
        if hs.len() != 2 {
            h = g.reshape(h, vec![hs[0], hs[1..].iter().product()])?;
        }
        let sw = g.param(&self.discriminator, SOURCE_W)?;
        let sb = g.param(&self.discriminator, SOURCE_B)?;
        let src = g.linear(h, sw, sb, "disc.source")?;
        let aw = g.param(&self.discriminator, AUX_W)?;
        let ab = g.param(&self.discriminator, AUX_B)?;
        let aux = g.linear(h, aw, ab, "disc.aux")?;
        Ok((src, aux))
    }

    fn latent(&self, n: usize, rng: &mut Rng) -> Tensor {
        let data = (0..n * self.arch.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::new(vec![n, self.arch.latent_dim], data).expect("n >= 1")
    }

    /// `n` samples of `class` from seeded latent noise.
    pub fn sample(&self, class: usize, n: usize, seed: u64) -> Result<Vec<Tensor>> {
        let idx = self.class_index(class)?;
        let mut r = rng::rng(seed);
        let mut out = Vec::with_capacity(n);
        let mut left = n;
        while left > 0 {
            let m = left.min(EVAL_CHUNK);
            let z = self.latent(m, &mut r);
            let mut g = Graph::new();
            let x = self.generate(&mut g, z, &vec![idx; m])?;
            out.extend(g.value(x).unstack());
            left -= m;
        }
        Ok(out)
    }

    /// Aux head logits for a list of samples, in [`GanBundle::classes`] order.
    pub fn aux_logits_batch(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_CHUNK) {
            let batch = Tensor::stack(&chunk.iter().collect::<Vec<_>>())?;
            let mut g = Graph::new();
            let x = g.input(batch);
            let (_, aux) = self.discriminate(&mut g, x)?;
            let v = g.value(aux);
            out.extend((0..chunk.len()).map(|i| v.row(i).to_vec()));
        }
        Ok(out)
    }

    pub fn aux_logits(&self, x: &Tensor) -> Result<Vec<f32>> {
        Ok(self.aux_logits_batch(std::slice::from_ref(x))?.remove(0))
    }

    /// Source-head logits (real > 0 > fake) for a list of samples.
    pub fn source_logits(&self, inputs: &[Tensor]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_CHUNK) {
            let batch = Tensor::stack(&chunk.iter().collect::<Vec<_>>())?;
            let mut g = Graph::new();
            let x = g.input(batch);
            let (src, _) = self.discriminate(&mut g, x)?;
            out.extend_from_slice(g.value(src).data());
        }
        Ok(out)
    }
}

impl LogitScorer for GanBundle {
    fn scorer_classes(&self) -> &[usize] {
        &self.classes
    }

    fn score(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f32>>> {
        self.aux_logits_batch(inputs)
    }

    fn source(&self) -> DistillSource {
        DistillSource::AuxiliaryClassifier
    }
}

/// Per-epoch mean losses of a GAN run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanHistory {
    pub d_losses: Vec<f32>,
    pub g_losses: Vec<f32>,
}

fn one_hot(idx: &[usize], k: usize) -> Vec<f32> {
    let mut t = vec![0.0f32; idx.len() * k];
    for (r, &i) in idx.iter().enumerate() {
        t[r * k + i] = 1.0;
    }
    t
}

/// Trains a freshly initialized bundle on `dataset`; the class rows follow
/// the sorted class set.
pub fn train_acgan(dataset: &LabeledDataset, config: &GanTrainConfig) -> Result<GanBundle> {
    let classes = dataset.class_set().to_vec();
    Ok(train_acgan_ordered(dataset, &classes, config)?.0)
}

/// As [`train_acgan`] with an explicit class row order, which must be a
/// permutation of the dataset's class set. Also returns the loss history.
pub fn train_acgan_ordered(
    dataset: &LabeledDataset,
    class_order: &[usize],
    config: &GanTrainConfig,
) -> Result<(GanBundle, GanHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted = class_order.to_vec();
    sorted.sort_unstable();
    if sorted != dataset.class_set() {
        return Err(Error::invalid(
            "class_order",
            format!("{class_order:?} is not a permutation of {:?}", dataset.class_set()),
        ));
    }
    if dataset.input_shape() != Some(&config.arch.input_shape[..]) {
        return Err(Error::ShapeMismatch {
            layer: "disc.input".into(),
            expected: config.arch.input_shape.clone(),
            got: dataset.input_shape().unwrap_or(&[]).to_vec(),
        });
    }
    let mut bundle = GanBundle::init(config.arch.clone(), class_order, config.seed)?;
    let k = class_order.len();
    let labels: Vec<usize> = dataset
        .labels()
        .iter()
        .map(|&y| bundle.class_index(y))
        .collect::<Result<_>>()?;

    let mut r = rng::derived_rng(config.seed, "gan-train", 0);
    let mut d_opt = Optimizer::new(config.optimizer, config.schedule.clone());
    let mut g_opt = Optimizer::new(config.optimizer, config.schedule.clone());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = GanHistory::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut r);
        let (mut d_total, mut g_total) = (0.0f64, 0.0f64);
        let mut batches = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let n = batch_idx.len();
            let real = Tensor::stack(&batch_idx.iter().map(|&i| &dataset.inputs()[i]).collect::<Vec<_>>())?;
            let real_y: Vec<usize> = batch_idx.iter().map(|&i| labels[i]).collect();

            // discriminator step on detached fakes
            let fake_y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            let z = bundle.latent(n, &mut r);
            let fake = {
                let mut g = Graph::new();
                let x = bundle.generate(&mut g, z, &fake_y)?;
                g.value(x).clone()
            };
            let mut g = Graph::new();
            let xr = g.input(real);
            let xf = g.input(fake);
            let (src_r, aux_r) = bundle.discriminate(&mut g, xr)?;
            let (src_f, aux_f) = bundle.discriminate(&mut g, xf)?;
            let l1 = g.bce_with_logits(src_r, vec![1.0; n])?;
            let l2 = g.bce_with_logits(src_f, vec![0.0; n])?;
            let l3 = g.softmax_cross_entropy(aux_r, one_hot(&real_y, k), 1.0)?;
            let l4 = g.softmax_cross_entropy(aux_f, one_hot(&fake_y, k), 1.0)?;
            let a = g.add(l1, l2)?;
            let b = g.add(l3, l4)?;
            let d_loss = g.add(a, b)?;
            let d_val = g.value(d_loss).data()[0];
            g.backward(d_loss, &mut bundle.discriminator)?;
            d_opt.step(&mut bundle.discriminator, epoch)?;

            // generator step, non-saturating
            let gen_y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            let z = bundle.latent(n, &mut r);
            let mut g = Graph::new();
            let xf = bundle.generate(&mut g, z, &gen_y)?;
            let (src_f, aux_f) = bundle.discriminate(&mut g, xf)?;
            let l1 = g.bce_with_logits(src_f, vec![1.0; n])?;
            let l2 = g.softmax_cross_entropy(aux_f, one_hot(&gen_y, k), 1.0)?;
            let g_loss = g.add(l1, l2)?;
            let g_val = g.value(g_loss).data()[0];
            if !d_val.is_finite() || !g_val.is_finite() {
                return Err(Error::GanDiverged {
                    epoch,
                    d_loss: d_val,
                    g_loss: g_val,
                });
            }
            g.backward(g_loss, &mut bundle.generator)?;
            g_opt.step(&mut bundle.generator, epoch)?;

            d_total += f64::from(d_val);
            g_total += f64::from(g_val);
            batches += 1;
        }
        history.d_losses.push((d_total / batches as f64) as f32);
        history.g_losses.push((g_total / batches as f64) as f32);
    }
    Ok((bundle, history))
}

/// Writes `[1, h, w]` or `[h, w]` samples in `[-1, 1]` as one binary PGM
/// image, `cols` samples per row.
pub fn write_sample_grid(path: &Path, samples: &[Tensor], cols: usize) -> Result<()> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let s = first.shape();
    let (h, w) = match s {
        [1, h, w] | [h, w] => (*h, *w),
        _ => {
            return Err(Error::ShapeMismatch {
                layer: "sample_grid".into(),
                expected: vec![1, 0, 0],
                got: s.to_vec(),
            })
        }
    };
    let cols = cols.clamp(1, samples.len());
    let rows = samples.len().div_ceil(cols);
    let (gw, gh) = (cols * w, rows * h);
    let mut pixels = vec![0u8; gw * gh];
    for (i, t) in samples.iter().enumerate() {
        let (oy, ox) = ((i / cols) * h, (i % cols) * w);
        for y in 0..h {
            for x in 0..w {
                let v = t.data()[y * w + x].clamp(-1.0, 1.0);
                pixels[(oy + y) * gw + ox + x] = ((v + 1.0) * 127.5).round() as u8;
            }
        }
    }
    let mut bytes = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    bytes.extend_from_slice(&pixels);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
