//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the library's numeric kernels.

#![allow(dead_code)]

use std::collections::BTreeMap;

use acdistill::diffcore::{Graph, ParamStore, Tensor};
use acdistill::models::{LayerSpec, Stack};
use rand::seq::IndexedRandom;
use rand::Rng;

pub type Outcome = Result<String, String>;

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// f64 forward pass of a layer stack, one sample at a time.

#[derive(Clone, Debug)]
struct Act {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn dense64(x: &Act, w: &[f64], b: &[f64], units: usize) -> Act {
    let n: usize = x.data.len();
    let mut out = b.to_vec();
    for i in 0..n {
        for j in 0..units {
            out[j] += x.data[i] * w[i * units + j];
        }
    }
    Act {
        shape: vec![units],
        data: out,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv64(x: &Act, w: &[f64], b: &[f64], out_c: usize, k: usize, stride: usize, pad: usize) -> Act {
    let (c, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = b[o];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            let xv = x.data[(ci * h + iy as usize) * wd + ix as usize];
                            s += xv * w[((o * c + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = s;
            }
        }
    }
    Act {
        shape: vec![out_c, oh, ow],
        data: out,
    }
}

fn pool64(x: &Act, size: usize) -> Act {
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..size {
                    for dx in 0..size {
                        m = m.max(x.data[(ci * h + oy * size + dy) * w + ox * size + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Act {
        shape: vec![c, oh, ow],
        data: out,
    }
}

fn upsample64(x: &Act, f: usize) -> Act {
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut out = Vec::with_capacity(c * h * w * f * f);
    for ci in 0..c {
        for y in 0..h * f {
            for xx in 0..w * f {
                out.push(x.data[(ci * h + y / f) * w + xx / f]);
            }
        }
    }
    Act {
        shape: vec![c, h * f, w * f],
        data: out,
    }
}

fn map64(x: Act, f: impl Fn(f64) -> f64) -> Act {
    Act {
        shape: x.shape,
        data: x.data.into_iter().map(f).collect(),
    }
}

/// Output of `stack` for one sample, evaluated in f64 from `params`.
pub fn forward64(stack: &Stack, params: &BTreeMap<String, Vec<f64>>, x: &[f64]) -> Vec<f64> {
    let mut a = Act {
        shape: stack.input_shape.clone(),
        data: x.to_vec(),
    };
    for (i, layer) in stack.layers.iter().enumerate() {
        let w = || &params[&stack.weight_path(i)];
        let b = || &params[&stack.bias_path(i)];
        a = match layer {
            LayerSpec::Dense { units } => dense64(&a, w(), b(), *units),
            LayerSpec::Conv2d {
                channels,
                kernel,
                stride,
                padding,
            } => conv64(&a, w(), b(), *channels, *kernel, *stride, *padding),
            LayerSpec::MaxPool2d { size } => pool64(&a, *size),
            LayerSpec::Upsample2d { factor } => upsample64(&a, *factor),
            LayerSpec::Relu => map64(a, |v| v.max(0.0)),
            LayerSpec::LeakyRelu { slope } => {
                let s = f64::from(*slope);
                map64(a, move |v| if v > 0.0 { v } else { s * v })
            }
            LayerSpec::Sigmoid => map64(a, |v| 1.0 / (1.0 + (-v).exp())),
            LayerSpec::Tanh => map64(a, f64::tanh),
            LayerSpec::Flatten => Act {
                shape: vec![a.data.len()],
                data: a.data,
            },
            LayerSpec::Reshape { shape } => Act {
                shape: shape.clone(),
                data: a.data,
            },
        };
    }
    a.data
}

/// `mean over batch of sum_j [log(1 + e^z) - t z]`.
pub fn bce64(logits: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (z, t) in logits.iter().zip(targets) {
        for (&zi, &ti) in z.iter().zip(t) {
            total += (1.0 + zi.exp()).ln() - ti * zi;
        }
    }
    total / logits.len() as f64
}

/// `mean over batch of -sum_j t_j log softmax(z / T)_j`.
pub fn softmax_ce64(logits: &[Vec<f64>], targets: &[Vec<f64>], temperature: f64) -> f64 {
    let mut total = 0.0;
    for (z, t) in logits.iter().zip(targets) {
        let s: Vec<f64> = z.iter().map(|v| v / temperature).collect();
        let lse = s.iter().map(|v| v.exp()).sum::<f64>().ln();
        for (si, ti) in s.iter().zip(t) {
            total -= ti * (si - lse);
        }
    }
    total / logits.len() as f64
}

// ---------------------------------------------------------------------------
// Random architectures for the gradient check.

fn activation(rng: &mut impl Rng) -> LayerSpec {
    [
        LayerSpec::Relu,
        LayerSpec::Sigmoid,
        LayerSpec::Tanh,
        LayerSpec::LeakyRelu { slope: 0.2 },
    ]
    .choose(rng)
    .expect("non-empty")
    .clone()
}

pub fn random_stack(rng: &mut impl Rng) -> Stack {
    let mut layers = Vec::new();
    let input_shape = if rng.random_bool(0.5) {
        vec![rng.random_range(2..6)]
    } else {
        let (c, h, w) = (rng.random_range(1..3), rng.random_range(4..7), rng.random_range(4..7));
        let mut shape = vec![c, h, w];
        for _ in 0..rng.random_range(1..3) {
            let kernel = rng.random_range(1..4usize).min(shape[1]).min(shape[2]);
            let stride = rng.random_range(1..3);
            let padding = rng.random_range(0..2);
            let channels = rng.random_range(1..4);
            layers.push(LayerSpec::Conv2d {
                channels,
                kernel,
                stride,
                padding,
            });
            shape = vec![
                channels,
                (shape[1] + 2 * padding - kernel) / stride + 1,
                (shape[2] + 2 * padding - kernel) / stride + 1,
            ];
            layers.push(activation(rng));
        }
        if shape[1] >= 2 && shape[2] >= 2 && rng.random_bool(0.4) {
            layers.push(LayerSpec::MaxPool2d { size: 2 });
        } else if rng.random_bool(0.3) {
            layers.push(LayerSpec::Upsample2d { factor: 2 });
        }
        if rng.random_bool(0.5) {
            layers.push(LayerSpec::Flatten);
        }
        vec![c, h, w]
    };
    for _ in 0..rng.random_range(0..3) {
        layers.push(LayerSpec::Dense {
            units: rng.random_range(2..7),
        });
        layers.push(activation(rng));
    }
    layers.push(LayerSpec::Dense {
        units: rng.random_range(2..5),
    });
    Stack::new("net", input_shape, layers)
}

fn to64(store: &ParamStore, stack: &Stack) -> BTreeMap<String, Vec<f64>> {
    let mut m = BTreeMap::new();
    for (i, l) in stack.layers.iter().enumerate() {
        if matches!(l, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. }) {
            for p in [stack.weight_path(i), stack.bias_path(i)] {
                let v = store.value(&p).expect("param").data().iter().map(|&x| f64::from(x)).collect();
                m.insert(p, v);
            }
        }
    }
    m
}

/// Reverse-mode gradients of random stacks against central differences of
/// the f64 reference. Returns the worst relative error.
pub fn gradient_check(archs: usize, coords: usize, seed: u64, tol: f64) -> Outcome {
    let mut rng = acdistill::rng::rng(seed);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for a in 0..archs {
        let stack = random_stack(&mut rng);
        let mut store = ParamStore::new();
        stack.init(&mut store, &mut rng).map_err(|e| format!("arch {a}: {e}"))?;
        let paths: Vec<String> = stack
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. }))
            .map(|(i, _)| stack.bias_path(i))
            .collect();
        for p in &paths {
            let n = store.value(p).expect("bias").len();
            let b: Vec<f32> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            store.replace(p, Tensor::new(vec![n], b).expect("shape")).expect("replace");
        }
        let batch = rng.random_range(1..4);
        let per: usize = stack.input_shape.iter().product();
        let xs: Vec<Vec<f32>> = (0..batch)
            .map(|_| (0..per).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let out_dim = stack.output_shape().map_err(|e| e.to_string())?.iter().product::<usize>();
        let softmax = rng.random_bool(0.5);
        let temperature = if softmax { rng.random_range(0.5..3.0) } else { 1.0 };
        let targets: Vec<Vec<f32>> = (0..batch)
            .map(|_| {
                let raw: Vec<f32> = (0..out_dim).map(|_| rng.random_range(0.0..1.0)).collect();
                if softmax {
                    let s: f32 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                } else {
                    raw.iter().map(|v| v.round()).collect()
                }
            })
            .collect();

        let mut shape = vec![batch];
        shape.extend_from_slice(&stack.input_shape);
        let mut g = Graph::new();
        let x = g.input(Tensor::new(shape, xs.concat()).expect("input"));
        let mut z = stack.forward(&mut g, &store, x).map_err(|e| e.to_string())?;
        if g.shape(z).len() != 2 {
            z = g.reshape(z, vec![batch, out_dim]).map_err(|e| e.to_string())?;
        }
        let flat_t = targets.concat();
        let loss = if softmax {
            g.softmax_cross_entropy(z, flat_t, temperature as f32)
        } else {
            g.bce_with_logits(z, flat_t)
        }
        .map_err(|e| e.to_string())?;
        g.backward(loss, &mut store).map_err(|e| e.to_string())?;

        let params64 = to64(&store, &stack);
        let xs64: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|&v| f64::from(v)).collect()).collect();
        let t64: Vec<Vec<f64>> = targets.iter().map(|t| t.iter().map(|&v| f64::from(v)).collect()).collect();
        let f = |p: &BTreeMap<String, Vec<f64>>| {
            let logits: Vec<Vec<f64>> = xs64.iter().map(|x| forward64(&stack, p, x)).collect();
            if softmax {
                softmax_ce64(&logits, &t64, f64::from(temperature as f32))
            } else {
                bce64(&logits, &t64)
            }
        };
        let l64 = f(&params64);
        let l32 = f64::from(g.value(loss).data()[0]);
        ensure((l64 - l32).abs() <= 1e-4 * (1.0 + l64.abs()), || {
            format!("arch {a}: forward {l32} vs reference {l64}")
        })?;

        let all: Vec<(String, usize)> = params64
            .iter()
            .flat_map(|(p, v)| (0..v.len()).map(move |i| (p.clone(), i)))
            .collect();
        for _ in 0..coords {
            let (p, i) = all.choose(&mut rng).expect("params").clone();
            let analytic = f64::from(store.get(&p).expect("param").grad().expect("grad").data()[i]);
            let h = 1e-6;
            let mut probe = params64.clone();
            probe.get_mut(&p).expect("p")[i] += h;
            let up = f(&probe);
            probe.get_mut(&p).expect("p")[i] -= 2.0 * h;
            let down = f(&probe);
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
            checked += 1;
            ensure(rel <= tol, || {
                format!("arch {a} ({:?}) {p}[{i}]: analytic {analytic} numeric {numeric} rel {rel:.2e}", stack.layers)
            })?;
        }
    }
    Ok(format!("{checked} coordinates over {archs} architectures, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// Nearest class mean and herding.

/// Brute-force nearest mean: smallest f64 squared distance, lowest class on
/// ties.
pub fn nearest_mean(means: &BTreeMap<usize, Vec<f32>>, q: &[f32]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for (&c, m) in means {
        let d: f64 = m.iter().zip(q).map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2)).sum();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Greedy herding in f64: at step k pick the unused sample minimising
/// `|mu - (sum of picked + e) / k|`, first index on ties.
pub fn herd_oracle(embs: &[Vec<f32>], m: usize) -> Vec<usize> {
    let d = embs[0].len();
    let n = embs.len() as f64;
    let mu: Vec<f64> = (0..d).map(|j| embs.iter().map(|e| f64::from(e[j])).sum::<f64>() / n).collect();
    let mut acc = vec![0.0f64; d];
    let mut picked: Vec<usize> = Vec::new();
    for k in 1..=m {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, e) in embs.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let dist: f64 = (0..d)
                .map(|j| (mu[j] - (acc[j] + f64::from(e[j])) / k as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist < best.0 {
                best = (dist, i);
            }
        }
        picked.push(best.1);
        for j in 0..d {
            acc[j] += f64::from(embs[best.1][j]);
        }
    }
    picked
}
