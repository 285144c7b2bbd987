//! Eager reverse-mode differentiation over a linear tape.
//!
//! Values are computed as ops are recorded; [`Graph::backward`] walks the
//! tape once in reverse and writes parameter gradients into a [`ParamStore`].

use crate::diffcore::kernels::{self, ConvGeom};
use crate::diffcore::params::ParamStore;
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(String),
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    Upsample2d { x: Var, factor: usize },
    Relu(Var),
    LeakyRelu(Var, f32),
    Sigmoid(Var),
    Tanh(Var),
    Reshape(Var),
    Concat { a: Var, b: Var },
    Gather { table: Var, index: Vec<usize> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    BceWithLogits { logits: Var, targets: Vec<f32> },
    SoftmaxCrossEntropy { logits: Var, targets: Vec<f32>, probs: Vec<f32>, temperature: f32 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(layer: &str, expected: &[usize], got: &[usize]) -> Error {
    Error::ShapeMismatch {
        layer: layer.to_string(),
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Records a parameter leaf by copying its current value from `store`.
    pub fn param(&mut self, store: &ParamStore, path: &str) -> Result<Var> {
        let value = store.value(path)?.clone();
        Ok(self.push(value, Op::Param(path.to_string())))
    }

    /// `x · w + b` for `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var, layer: &str) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err(layer, &[xs.first().copied().unwrap_or(0), ws[0]], &xs));
        }
        if self.shape(b) != [ws[1]] {
            return Err(shape_err(layer, &[ws[1]], self.shape(b)));
        }
        let out = kernels::linear_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            xs[0],
            ws[0],
            ws[1],
        );
        let t = Tensor::new(vec![xs[0], ws[1]], out)?;
        Ok(self.push(t, Op::Linear { x, w, b }))
    }

    /// Convolution over `x: [batch, c, h, w]` with `w: [out_c, c, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize, layer: &str) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] != ws[3] {
            return Err(shape_err(layer, &[0, ws.get(1).copied().unwrap_or(0), 0, 0], &xs));
        }
        let geom = ConvGeom {
            in_c: xs[1],
            in_h: xs[2],
            in_w: xs[3],
            out_c: ws[0],
            kernel: ws[2],
            stride,
            pad,
        };
        if xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[2] || stride == 0 {
            return Err(shape_err(layer, &[xs[0], xs[1], ws[2], ws[2]], &xs));
        }
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            xs[0],
            &geom,
        );
        let t = Tensor::new(vec![xs[0], ws[0], geom.out_h(), geom.out_w()], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }))
    }

    /// Non-overlapping max pooling; trailing rows/columns that do not fill a
    /// window are dropped.
    pub fn max_pool2d(&mut self, x: Var, size: usize, layer: &str) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || size == 0 || xs[2] < size || xs[3] < size {
            return Err(shape_err(layer, &[0, 0, size, size], &xs));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / size, w / size);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * size * w + ox * size;
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx = base + (oy * size + dy) * w + ox * size + dx;
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let t = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(t, Op::MaxPool2d { x, argmax }))
    }

    /// Nearest-neighbour upsampling of `[batch, c, h, w]`.
    pub fn upsample2d(&mut self, x: Var, factor: usize, layer: &str) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || factor == 0 {
            return Err(shape_err(layer, &[0, 0, 0, 0], &xs));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h * factor, w * factor);
        let src = self.value(x).data();
        let mut out = vec![0.0f32; n * c * oh * ow];
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    out[(plane * oh + oy) * ow + ox] = src[(plane * h + oy / factor) * w + ox / factor];
                }
            }
        }
        let t = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(t, Op::Upsample2d { x, factor }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f32::tanh, Op::Tanh(x))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Concatenates two `[batch, _]` matrices along the feature axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err("concat", &sa, &sb));
        }
        let (n, wa, wb) = (sa[0], sa[1], sb[1]);
        let mut data = Vec::with_capacity(n * (wa + wb));
        for i in 0..n {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let t = Tensor::new(vec![n, wa + wb], data)?;
        Ok(self.push(t, Op::Concat { a, b }))
    }

    /// Selects rows of a `[rows, d]` table.
    pub fn gather(&mut self, table: Var, index: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 || index.is_empty() || index.iter().any(|&i| i >= ts[0]) {
            return Err(shape_err("gather", &ts, &[index.len()]));
        }
        let mut data = Vec::with_capacity(index.len() * ts[1]);
        for &i in index {
            data.extend_from_slice(self.value(table).row(i));
        }
        let t = Tensor::new(vec![index.len(), ts[1]], data)?;
        Ok(self.push(
            t,
            Op::Gather {
                table,
                index: index.to_vec(),
            },
        ))
    }

    fn binary_shapes(&self, a: Var, b: Var, name: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f32 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Binary cross entropy on sigmoid outputs, summed over outputs and
    /// averaged over the batch. `targets` has the same layout as `logits`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f32>) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || targets.len() != self.value(logits).len() {
            return Err(shape_err("bce_with_logits", &ls, &[targets.len()]));
        }
        let z = self.value(logits).data();
        let mut total = 0.0f32;
        for (&zi, &ti) in z.iter().zip(&targets) {
            // log(1 + e^z) - t z, written to stay finite for large |z|
            total += zi.max(0.0) - zi * ti + (-zi.abs()).exp().ln_1p();
        }
        let loss = total / ls[0] as f32;
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { logits, targets }))
    }

    /// Cross entropy between target rows and `softmax(logits / temperature)`,
    /// averaged over the batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<f32>, temperature: f32) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || targets.len() != self.value(logits).len() {
            return Err(shape_err("softmax_cross_entropy", &ls, &[targets.len()]));
        }
        if !(temperature > 0.0) {
            return Err(Error::invalid("temperature", format!("{temperature} must be > 0")));
        }
        let (n, k) = (ls[0], ls[1]);
        let z = self.value(logits).data();
        let mut probs = vec![0.0f32; n * k];
        let mut total = 0.0f32;
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v / temperature));
            let mut denom = 0.0f32;
            for (j, &v) in row.iter().enumerate() {
                let e = (v / temperature - max).exp();
                probs[i * k + j] = e;
                denom += e;
            }
            let log_denom = denom.ln();
            for j in 0..k {
                probs[i * k + j] /= denom;
                let t = targets[i * k + j];
                if t != 0.0 {
                    total -= t * (row[j] / temperature - max - log_denom);
                }
            }
        }
        let loss = total / n as f32;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
                temperature,
            },
        ))
    }

    /// Back-propagates from the scalar `loss` and writes the gradient of every
    /// parameter leaf into `store`. Parameters of `store` that do not appear on
    /// the tape receive zero gradients. Leaves whose path is not in `store` are
    /// skipped, so one tape can span several stores.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        let mut written: Vec<(&str, Vec<f32>)> = Vec::new();
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let (Op::Param(path), Some(g)) = (&node.op, grad) {
                if !store.contains(path) {
                    continue;
                }
                match written.iter_mut().find(|(p, _)| *p == path.as_str()) {
                    Some((_, acc)) => kernels::axpy(1.0, &g, acc),
                    None => written.push((path.as_str(), g)),
                }
            }
        }
        store.clear_grads();
        for (path, g) in written {
            store.set_grad(path, &g)?;
        }
        store.fill_missing_grads();
        Ok(())
    }

    /// Gradient of `loss` with respect to an arbitrary node, e.g. an input.
    pub fn grad_wrt(&self, loss: Var, target: Var) -> Result<Tensor> {
        let grads = self.gradients(loss)?;
        let shape = self.shape(target).to_vec();
        let g = grads
            .into_iter()
            .nth(target.0)
            .flatten()
            .unwrap_or_else(|| vec![0.0; shape.iter().product()]);
        Tensor::new(shape, g)
    }

    fn gradients(&self, loss: Var) -> Result<Vec<Option<Vec<f32>>>> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f32>>], v: Var, g: &[f32]) {
            match &mut grads[v.0] {
                Some(existing) => kernels::axpy(1.0, g, existing),
                slot @ None => *slot = Some(g.to_vec()),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param(_) => {
                    grads[idx] = Some(dy);
                    continue;
                }
                Op::Linear { x, w, b } => {
                    let xs = self.shape(*x);
                    let ws = self.shape(*w);
                    let (dx, dw, db) = kernels::linear_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        &dy,
                        xs[0],
                        ws[0],
                        ws[1],
                    );
                    acc(&mut grads, *x, &dx);
                    acc(&mut grads, *w, &dw);
                    acc(&mut grads, *b, &db);
                }
                Op::Conv2d { x, w, b, geom } => {
                    let n = self.shape(*x)[0];
                    let (dx, dw, db) =
                        kernels::conv2d_backward(self.value(*x).data(), self.value(*w).data(), &dy, n, geom);
                    acc(&mut grads, *x, &dx);
                    acc(&mut grads, *w, &dw);
                    acc(&mut grads, *b, &db);
                }
                Op::MaxPool2d { x, argmax } => {
                    let mut dx = vec![0.0f32; self.value(*x).len()];
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += dy[o];
                    }
                    acc(&mut grads, *x, &dx);
                }
                Op::Upsample2d { x, factor } => {
                    let xs = self.shape(*x);
                    let (h, w) = (xs[2], xs[3]);
                    let (oh, ow) = (h * factor, w * factor);
                    let mut dx = vec![0.0f32; self.value(*x).len()];
                    for plane in 0..xs[0] * xs[1] {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                dx[(plane * h + oy / factor) * w + ox / factor] += dy[(plane * oh + oy) * ow + ox];
                            }
                        }
                    }
                    acc(&mut grads, *x, &dx);
                }
                Op::Relu(x) => {
                    let dx: Vec<f32> = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&dy)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::LeakyRelu(x, slope) => {
                    let dx: Vec<f32> = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&dy)
                        .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                        .collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<f32> = node.value.data().iter().zip(&dy).map(|(&s, &g)| g * s * (1.0 - s)).collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Tanh(x) => {
                    let dx: Vec<f32> = node.value.data().iter().zip(&dy).map(|(&t, &g)| g * (1.0 - t * t)).collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Scale(x, s) => {
                    let dx: Vec<f32> = dy.iter().map(|g| g * s).collect();
                    acc(&mut grads, *x, &dx);
                }
                Op::Reshape(x) => acc(&mut grads, *x, &dy),
                Op::Concat { a, b } => {
                    let wa = self.shape(*a)[1];
                    let wb = self.shape(*b)[1];
                    let n = self.shape(*a)[0];
                    let mut da = Vec::with_capacity(n * wa);
                    let mut db = Vec::with_capacity(n * wb);
                    for i in 0..n {
                        let row = &dy[i * (wa + wb)..(i + 1) * (wa + wb)];
                        da.extend_from_slice(&row[..wa]);
                        db.extend_from_slice(&row[wa..]);
                    }
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Gather { table, index } => {
                    let d = self.shape(*table)[1];
                    let mut dt = vec![0.0f32; self.value(*table).len()];
                    for (r, &i) in index.iter().enumerate() {
                        kernels::axpy(1.0, &dy[r * d..(r + 1) * d], &mut dt[i * d..(i + 1) * d]);
                    }
                    acc(&mut grads, *table, &dt);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &dy);
                    acc(&mut grads, *b, &dy);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f32> = self.value(*b).data().iter().zip(&dy).map(|(v, g)| v * g).collect();
                    let db: Vec<f32> = self.value(*a).data().iter().zip(&dy).map(|(v, g)| v * g).collect();
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Sum(x) => {
                    let dx = vec![dy[0]; self.value(*x).len()];
                    acc(&mut grads, *x, &dx);
                }
                Op::BceWithLogits { logits, targets } => {
                    let n = self.shape(*logits)[0] as f32;
                    let scale = dy[0] / n;
                    let dx: Vec<f32> = self
                        .value(*logits)
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&z, &t)| scale * (sigmoid(z) - t))
                        .collect();
                    acc(&mut grads, *logits, &dx);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                    temperature,
                } => {
                    let ls = self.shape(*logits);
                    let k = ls[1];
                    let scale = dy[0] / (ls[0] as f32 * temperature);
                    let mut dx = vec![0.0f32; probs.len()];
                    for i in 0..ls[0] {
                        let tsum: f32 = targets[i * k..(i + 1) * k].iter().sum();
                        for j in 0..k {
                            dx[i * k + j] = scale * (tsum * probs[i * k + j] - targets[i * k + j]);
                        }
                    }
                    acc(&mut grads, *logits, &dx);
                }
            }
        }
        Ok(grads)
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(3.0)).unwrap();
        let mut g = Graph::new();
        let c = g.input(Tensor::scalar(5.0));
        let loss = g.sum(c);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get("w").unwrap().grad().unwrap().data(), &[0.0]);
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(3.0)).unwrap();
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get("w").unwrap().grad().unwrap().data(), &[6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut store = ParamStore::new();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.backward(x, &mut store), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn linear_shape_error_names_layer() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[3, 2])).unwrap();
        store.insert("b", Tensor::zeros(&[2])).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[4, 5]));
        let w = g.param(&store, "w").unwrap();
        let b = g.param(&store, "b").unwrap();
        match g.linear(x, w, b, "body.0") {
            Err(Error::ShapeMismatch { layer, .. }) => assert_eq!(layer, "body.0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let mut g = Graph::new();
        let z = g.input(Tensor::new(vec![1, 2], vec![500.0, -500.0]).unwrap());
        let l = g.bce_with_logits(z, vec![1.0, 0.0]).unwrap();
        assert!(g.value(l).data()[0].abs() < 1e-6);
    }
}
