use crate::conv::{self, ConvDims};
use crate::error::{NnError, Result};
use crate::real::{axpy, dot, Real};
use crate::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_ELU_ALPHA: f64 = 1.0;

/// Where a [`LayerKind::Concat`] input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// The network input.
    Input,
    /// Output of an earlier layer.
    Layer(usize),
}

impl Source {
    /// Index into the forward node list (node 0 is the input).
    pub(crate) fn node(self) -> usize {
        match self {
            Source::Input => 0,
            Source::Layer(k) => k + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Fully connected: `(B, inputs)` to `(B, outputs)`; any input rank is
    /// flattened per sample.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Square odd kernel, "same" padding, stride 1.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Elu {
        alpha: f64,
    },
    /// Channel-wise concatenation of earlier outputs, in the listed order.
    Concat {
        sources: Vec<Source>,
    },
    /// Reinterpret each sample with a new per-sample shape.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "Dense",
            LayerKind::Conv2d { .. } => "Conv2D",
            LayerKind::Relu => "ReLU",
            LayerKind::LeakyRelu { .. } => "LeakyReLU",
            LayerKind::Elu { .. } => "ELU",
            LayerKind::Concat { .. } => "Concat",
            LayerKind::Reshape { .. } => "Reshape",
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, LayerKind::Relu | LayerKind::LeakyRelu { .. } | LayerKind::Elu { .. })
    }

    /// `(weight shape, fan_in, fan_out)` for layers with parameters.
    pub(crate) fn weight_layout(&self) -> Option<(Vec<usize>, usize, usize)> {
        match *self {
            LayerKind::Dense { inputs, outputs } => Some((vec![outputs, inputs], inputs, outputs)),
            LayerKind::Conv2d { in_channels, out_channels, kernel, .. } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                in_channels * kernel * kernel,
                out_channels * kernel * kernel,
            )),
            _ => None,
        }
    }

    pub(crate) fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d { out_channels, .. } => out_channels,
            _ => 0,
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.weight_layout().map(|(shape, _, _)| shape.iter().product::<usize>() + self.bias_len()).unwrap_or(0)
    }
}

/// Weights, biases and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

impl<T: Real> Params<T> {
    pub(crate) fn new(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Params {
            grad_weight: Tensor::zeros(weight.shape().to_vec()),
            grad_bias: Tensor::zeros(bias.shape().to_vec()),
            weight,
            bias,
        }
    }

    pub(crate) fn zero_grad(&mut self) {
        self.grad_weight.fill(T::zero());
        self.grad_bias.fill(T::zero());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub(crate) kind: LayerKind,
    pub(crate) params: Option<Params<T>>,
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn params(&self) -> Option<&Params<T>> {
        self.params.as_ref()
    }

    pub fn params_mut(&mut self) -> Option<&mut Params<T>> {
        self.params.as_mut()
    }

    fn err(&self, index: usize, msg: String) -> NnError {
        NnError::Layer { index, kind: self.kind.name(), msg }
    }

    fn conv_dims(&self, index: usize, x: &Tensor<T>) -> Result<ConvDims> {
        let LayerKind::Conv2d { in_channels, out_channels, kernel, dilation } = self.kind else {
            unreachable!("conv_dims on a non-convolution layer")
        };
        let s = x.shape();
        if s.len() != 4 || s[1] != in_channels {
            return Err(self.err(index, format!("expected input (B, {in_channels}, H, W), got {s:?}")));
        }
        Ok(ConvDims { batch: s[0], in_channels, out_channels, height: s[2], width: s[3], kernel, dilation })
    }

    /// Forward pass for every kind except `Concat`, which the network
    /// assembles from its node list.
    pub(crate) fn forward(&self, index: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.kind {
            LayerKind::Dense { inputs, outputs } => {
                if x.shape().is_empty() || x.sample_len() != *inputs {
                    return Err(
                        self.err(index, format!("expected {inputs} features per sample, got shape {:?}", x.shape()))
                    );
                }
                let p = self.params.as_ref().expect("dense layer has parameters");
                let batch = x.batch();
                let mut y = Tensor::zeros(vec![batch, *outputs]);
                let w = p.weight.data();
                let bias = p.bias.data();
                for b in 0..batch {
                    let xb = &x.data()[b * inputs..(b + 1) * inputs];
                    let yb = &mut y.data_mut()[b * outputs..(b + 1) * outputs];
                    for (o, yo) in yb.iter_mut().enumerate() {
                        *yo = dot(&w[o * inputs..(o + 1) * inputs], xb) + bias[o];
                    }
                }
                Ok(y)
            }
            LayerKind::Conv2d { out_channels, .. } => {
                let d = self.conv_dims(index, x)?;
                let p = self.params.as_ref().expect("conv layer has parameters");
                let mut y = Tensor::zeros(vec![d.batch, *out_channels, d.height, d.width]);
                conv::forward(&d, x.data(), p.weight.data(), p.bias.data(), y.data_mut());
                Ok(y)
            }
            LayerKind::Relu => Ok(map(x, |v| if v > T::zero() { v } else { T::zero() })),
            LayerKind::LeakyRelu { slope } => {
                let slope = T::lit(*slope);
                Ok(map(x, |v| if v > T::zero() { v } else { slope * v }))
            }
            LayerKind::Elu { alpha } => {
                let alpha = T::lit(*alpha);
                Ok(map(x, |v| if v > T::zero() { v } else { alpha * (v.exp() - T::one()) }))
            }
            LayerKind::Reshape { shape } => {
                let per_sample: usize = shape.iter().product();
                if x.shape().is_empty() || x.sample_len() != per_sample {
                    return Err(self.err(index, format!("cannot reshape {:?} into (B, {:?})", x.shape(), shape)));
                }
                let mut full = vec![x.batch()];
                full.extend_from_slice(shape);
                x.clone().reshaped(full)
            }
            LayerKind::Concat { .. } => unreachable!("concat is evaluated by the network"),
        }
    }

    /// Gradient with respect to the layer input; parameter gradients are
    /// accumulated into `params`.
    pub(crate) fn backward(&mut self, index: usize, x: &Tensor<T>, grad_y: &Tensor<T>) -> Result<Tensor<T>> {
        match self.kind.clone() {
            LayerKind::Dense { inputs, outputs } => {
                let batch = x.batch();
                let p = self.params.as_mut().expect("dense layer has parameters");
                let mut grad_x = Tensor::zeros(x.shape().to_vec());
                let w = p.weight.data();
                for b in 0..batch {
                    let gy = &grad_y.data()[b * outputs..(b + 1) * outputs];
                    let gx = &mut grad_x.data_mut()[b * inputs..(b + 1) * inputs];
                    for (o, &g) in gy.iter().enumerate() {
                        axpy(g, &w[o * inputs..(o + 1) * inputs], gx);
                    }
                }
                let gw = p.grad_weight.data_mut();
                for b in 0..batch {
                    let xb = &x.data()[b * inputs..(b + 1) * inputs];
                    let gy = &grad_y.data()[b * outputs..(b + 1) * outputs];
                    for (o, &g) in gy.iter().enumerate() {
                        axpy(g, xb, &mut gw[o * inputs..(o + 1) * inputs]);
                    }
                }
                let gb = p.grad_bias.data_mut();
                for b in 0..batch {
                    for (o, &g) in grad_y.data()[b * outputs..(b + 1) * outputs].iter().enumerate() {
                        gb[o] += g;
                    }
                }
                Ok(grad_x)
            }
            LayerKind::Conv2d { .. } => {
                let d = self.conv_dims(index, x)?;
                let p = self.params.as_mut().expect("conv layer has parameters");
                let mut grad_x = Tensor::zeros(x.shape().to_vec());
                conv::backward(
                    &d,
                    x.data(),
                    p.weight.data(),
                    grad_y.data(),
                    p.grad_weight.data_mut(),
                    p.grad_bias.data_mut(),
                    grad_x.data_mut(),
                );
                Ok(grad_x)
            }
            LayerKind::Relu => Ok(zip_map(x, grad_y, |v, g| if v > T::zero() { g } else { T::zero() })),
            LayerKind::LeakyRelu { slope } => {
                let slope = T::lit(slope);
                Ok(zip_map(x, grad_y, |v, g| if v > T::zero() { g } else { slope * g }))
            }
            LayerKind::Elu { alpha } => {
                let alpha = T::lit(alpha);
                Ok(zip_map(x, grad_y, |v, g| if v > T::zero() { g } else { alpha * v.exp() * g }))
            }
            LayerKind::Reshape { .. } => grad_y.clone().reshaped(x.shape().to_vec()),
            LayerKind::Concat { .. } => unreachable!("concat is differentiated by the network"),
        }
    }
}

fn map<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn zip_map<T: Real>(x: &Tensor<T>, g: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = x.data().iter().zip(g.data()).map(|(&v, &gv)| f(v, gv)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}
