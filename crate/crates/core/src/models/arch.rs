//! Serializable layer-stack descriptors.

use serde::{Deserialize, Serialize};

use crate::diffcore::{init::glorot_uniform, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Fully connected layer; flattens its input first.
    Dense { units: usize },
    Conv2d {
        channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    MaxPool2d { size: usize },
    Upsample2d { factor: usize },
    Relu,
    LeakyRelu { slope: f32 },
    Sigmoid,
    Tanh,
    Flatten,
    Reshape { shape: Vec<usize> },
}

impl LayerSpec {
    fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "max_pool2d",
            LayerSpec::Upsample2d { .. } => "upsample2d",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }
}

/// A sequential stack of layers with parameters under `prefix`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub prefix: String,
    /// Per-sample input shape (no batch dimension).
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Stack {
    pub fn new(prefix: impl Into<String>, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self {
            prefix: prefix.into(),
            input_shape,
            layers,
        }
    }

    fn layer_name(&self, i: usize) -> String {
        format!("{}.{} ({})", self.prefix, i, self.layers[i].kind())
    }

    pub fn weight_path(&self, i: usize) -> String {
        format!("{}.{}.weight", self.prefix, i)
    }

    pub fn bias_path(&self, i: usize) -> String {
        format!("{}.{}.bias", self.prefix, i)
    }

    /// Per-sample shapes before each layer, plus the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        let mut cur = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |expected: Vec<usize>, got: &[usize]| Error::ShapeMismatch {
                layer: self.layer_name(i),
                expected,
                got: got.to_vec(),
            };
            cur = match layer {
                LayerSpec::Dense { units } => {
                    if *units == 0 {
                        return Err(bad(vec![1], &[0]));
                    }
                    vec![*units]
                }
                LayerSpec::Conv2d {
                    channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if cur.len() != 3 || *kernel == 0 || *stride == 0 || *channels == 0 {
                        return Err(bad(vec![0, 0, 0], &cur));
                    }
                    if cur[1] + 2 * padding < *kernel || cur[2] + 2 * padding < *kernel {
                        return Err(bad(vec![cur[0], *kernel, *kernel], &cur));
                    }
                    let oh = (cur[1] + 2 * padding - kernel) / stride + 1;
                    let ow = (cur[2] + 2 * padding - kernel) / stride + 1;
                    vec![*channels, oh, ow]
                }
                LayerSpec::MaxPool2d { size } => {
                    if cur.len() != 3 || *size == 0 || cur[1] < *size || cur[2] < *size {
                        return Err(bad(vec![0, *size, *size], &cur));
                    }
                    vec![cur[0], cur[1] / size, cur[2] / size]
                }
                LayerSpec::Upsample2d { factor } => {
                    if cur.len() != 3 || *factor == 0 {
                        return Err(bad(vec![0, 0, 0], &cur));
                    }
                    vec![cur[0], cur[1] * factor, cur[2] * factor]
                }
                LayerSpec::Relu | LayerSpec::LeakyRelu { .. } | LayerSpec::Sigmoid | LayerSpec::Tanh => cur,
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Reshape { shape } => {
                    if shape.iter().product::<usize>() != cur.iter().product::<usize>() {
                        return Err(bad(shape.clone(), &cur));
                    }
                    shape.clone()
                }
            };
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("at least the input shape"))
    }

    /// Adds freshly initialized parameters to `store`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        let shapes = self.shapes()?;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { units } => {
                    let fan_in: usize = shapes[i].iter().product();
                    store.insert(
                        self.weight_path(i),
                        glorot_uniform(&[fan_in, *units], fan_in, *units, 1.0, rng),
                    )?;
                    store.insert(self.bias_path(i), Tensor::zeros(&[*units]))?;
                }
                LayerSpec::Conv2d { channels, kernel, .. } => {
                    let in_c = shapes[i][0];
                    let area = kernel * kernel;
                    store.insert(
                        self.weight_path(i),
                        glorot_uniform(&[*channels, in_c, *kernel, *kernel], in_c * area, channels * area, 1.0, rng),
                    )?;
                    store.insert(self.bias_path(i), Tensor::zeros(&[*channels]))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Runs the stack on `x: [batch, ..input_shape]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let xs = g.shape(x).to_vec();
        if xs.len() != self.input_shape.len() + 1 || xs[1..] != self.input_shape[..] {
            return Err(Error::ShapeMismatch {
                layer: format!("{}.input", self.prefix),
                expected: self.input_shape.clone(),
                got: xs.get(1..).map(<[usize]>::to_vec).unwrap_or_default(),
            });
        }
        let batch = xs[0];
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let name = self.layer_name(i);
            h = match layer {
                LayerSpec::Dense { .. } => {
                    let hs = g.shape(h).to_vec();
                    if hs.len() != 2 {
                        h = g.reshape(h, vec![batch, hs[1..].iter().product()])?;
                    }
                    let w = g.param(store, &self.weight_path(i))?;
                    let b = g.param(store, &self.bias_path(i))?;
                    g.linear(h, w, b, &name)?
                }
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let w = g.param(store, &self.weight_path(i))?;
                    let b = g.param(store, &self.bias_path(i))?;
                    g.conv2d(h, w, b, *stride, *padding, &name)?
                }
                LayerSpec::MaxPool2d { size } => g.max_pool2d(h, *size, &name)?,
                LayerSpec::Upsample2d { factor } => g.upsample2d(h, *factor, &name)?,
                LayerSpec::Relu => g.relu(h),
                LayerSpec::LeakyRelu { slope } => g.leaky_relu(h, *slope),
                LayerSpec::Sigmoid => g.sigmoid(h),
                LayerSpec::Tanh => g.tanh(h),
                LayerSpec::Flatten => {
                    let n: usize = g.shape(h)[1..].iter().product();
                    g.reshape(h, vec![batch, n])?
                }
                LayerSpec::Reshape { shape } => {
                    let mut s = vec![batch];
                    s.extend_from_slice(shape);
                    g.reshape(h, s)?
                }
            };
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_cnn_shapes() {
        let s = Stack::new(
            "body",
            vec![1, 14, 14],
            vec![
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
        );
        assert_eq!(s.output_shape().unwrap(), vec![64]);
    }

    #[test]
    fn bad_reshape_names_layer() {
        let s = Stack::new("gen", vec![10], vec![LayerSpec::Reshape { shape: vec![3, 3] }]);
        match s.shapes() {
            Err(Error::ShapeMismatch { layer, .. }) => assert_eq!(layer, "gen.0 (reshape)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn descriptor_round_trips_through_json() {
        let layers = vec![LayerSpec::Dense { units: 4 }, LayerSpec::LeakyRelu { slope: 0.2 }];
        let json = serde_json::to_string(&layers).unwrap();
        assert_eq!(json, r#"[{"type":"dense","units":4},{"type":"leaky_relu","slope":0.2}]"#);
        let back: Vec<LayerSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, layers);
    }
}
