use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerKind, Params, Source};
use crate::real::Real;
use crate::tensor::Tensor;

/// Ordered layer list. Layer `k` reads the output of layer `k - 1` (the
/// network input for `k = 0`) unless it is a `Concat`.
#[derive(Debug, Clone)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    /// Node 0 is the input, node `k + 1` the output of layer `k`.
    cache: Option<Vec<Tensor<T>>>,
}

fn validate(kinds: &[LayerKind]) -> Result<()> {
    if kinds.is_empty() {
        return Err(NnError::Architecture("network has no layers".into()));
    }
    for (k, kind) in kinds.iter().enumerate() {
        match kind {
            LayerKind::Concat { sources } => {
                if sources.is_empty() {
                    return Err(NnError::Architecture(format!("concat layer {k} has no sources")));
                }
                for s in sources {
                    if let Source::Layer(j) = *s {
                        if j >= k {
                            return Err(NnError::Architecture(format!(
                                "concat layer {k} refers to layer {j}, which is not earlier"
                            )));
                        }
                    }
                }
            }
            LayerKind::Conv2d { kernel, dilation, in_channels, out_channels } => {
                if kernel % 2 == 0 || *dilation == 0 || *in_channels == 0 || *out_channels == 0 {
                    return Err(NnError::Architecture(format!(
                        "conv layer {k} needs an odd kernel, dilation >= 1 and nonzero channels"
                    )));
                }
            }
            LayerKind::Dense { inputs, outputs } => {
                if *inputs == 0 || *outputs == 0 {
                    return Err(NnError::Architecture(format!("dense layer {k} has a zero extent")));
                }
            }
            LayerKind::Reshape { shape } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err(NnError::Architecture(format!("reshape layer {k} has an empty shape")));
                }
            }
            LayerKind::LeakyRelu { slope } if !slope.is_finite() => {
                return Err(NnError::Architecture(format!("leaky relu layer {k} slope is not finite")));
            }
            LayerKind::Elu { alpha } if !alpha.is_finite() => {
                return Err(NnError::Architecture(format!("elu layer {k} alpha is not finite")));
            }
            _ => {}
        }
    }
    Ok(())
}

fn concat<T: Real>(index: usize, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let err = |msg: String| NnError::Layer { index, kind: "Concat", msg };
    let first = parts[0].shape();
    if first.len() != 4 {
        return Err(err(format!("sources must be (B, C, H, W), got {first:?}")));
    }
    let (batch, h, w) = (first[0], first[2], first[3]);
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if s.len() != 4 || s[0] != batch || s[2] != h || s[3] != w {
            return Err(err(format!("source shape {s:?} does not match {first:?}")));
        }
        channels += s[1];
    }
    let mut data = Vec::with_capacity(batch * channels * h * w);
    for b in 0..batch {
        for p in parts {
            let n = p.sample_len();
            data.extend_from_slice(&p.data()[b * n..(b + 1) * n]);
        }
    }
    Tensor::new(vec![batch, channels, h, w], data)
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, grad: Tensor<T>) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(grad.data()) {
                *a += *b;
            }
        }
        None => *slot = Some(grad),
    }
}

impl<T: Real> Network<T> {
    /// Assemble a network from kinds and matching parameters (`None` for
    /// parameter-free layers).
    pub fn from_parts(kinds: Vec<LayerKind>, params: Vec<Option<(Tensor<T>, Tensor<T>)>>) -> Result<Self> {
        validate(&kinds)?;
        if kinds.len() != params.len() {
            return Err(NnError::Architecture("one parameter entry per layer required".into()));
        }
        let mut layers = Vec::with_capacity(kinds.len());
        for (k, (kind, p)) in kinds.into_iter().zip(params).enumerate() {
            let params = match (kind.weight_layout(), p) {
                (None, None) => None,
                (Some((shape, _, _)), Some((weight, bias))) => {
                    if weight.shape() != shape.as_slice() || bias.shape() != [kind.bias_len()] {
                        return Err(NnError::Architecture(format!(
                            "layer {k}: parameter shapes {:?}/{:?} do not fit {}",
                            weight.shape(),
                            bias.shape(),
                            kind.name()
                        )));
                    }
                    Some(Params::new(weight, bias))
                }
                _ => {
                    return Err(NnError::Architecture(format!("layer {k}: parameters given for the wrong layer kind")))
                }
            };
            layers.push(Layer { kind, params });
        }
        Ok(Network { layers, cache: None })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.kind.param_count()).sum()
    }

    /// Same architecture and values in another precision. Caches are dropped.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                kind: l.kind.clone(),
                params: l.params.as_ref().map(|p| Params {
                    weight: p.weight.cast(),
                    bias: p.bias.cast(),
                    grad_weight: p.grad_weight.cast(),
                    grad_bias: p.grad_bias.cast(),
                }),
            })
            .collect();
        Network { layers, cache: None }
    }

    fn run(&self, input: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut nodes: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len() + 1);
        let mut last = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let y = match &layer.kind {
                LayerKind::Concat { sources } => {
                    let mut parts = Vec::with_capacity(sources.len());
                    for s in sources {
                        let node = s.node();
                        parts.push(if node == k { &last } else { &nodes[node] });
                    }
                    concat(k, &parts)?
                }
                _ => layer.forward(k, &last)?,
            };
            if cfg!(debug_assertions) && !y.all_finite() {
                return Err(NnError::Layer { index: k, kind: layer.kind.name(), msg: "non-finite output".into() });
            }
            let needed = keep
                || self.layers[k + 1..].iter().any(|l| match &l.kind {
                    LayerKind::Concat { sources } => sources.iter().any(|s| s.node() == k),
                    _ => false,
                });
            let prev = std::mem::replace(&mut last, y);
            // keep every node when training; otherwise only those a concat reads
            nodes.push(if needed { prev } else { Tensor::zeros(vec![0]) });
        }
        Ok((last, nodes))
    }

    /// Forward pass that caches every intermediate for [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.cache = None;
        let (out, mut nodes) = self.run(input, true)?;
        nodes.push(out.clone());
        self.cache = Some(nodes);
        Ok(out)
    }

    /// Forward pass without caching.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(input, false)?.0)
    }

    /// Backpropagate `grad_output` through the cached forward pass. Parameter
    /// gradients are overwritten; the gradient with respect to the network
    /// input is returned. The cache is consumed.
    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let mut nodes = self.cache.take().ok_or(NnError::MissingCache)?;
        let n = self.layers.len();
        if grad_output.shape() != nodes[n].shape() {
            return Err(NnError::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_output.shape(),
                nodes[n].shape()
            )));
        }
        self.zero_grad();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n + 1];
        grads[n] = Some(grad_output.clone());
        for k in (0..n).rev() {
            let g = match grads[k + 1].take() {
                Some(g) => g,
                None => Tensor::zeros(nodes[k + 1].shape().to_vec()),
            };
            nodes.truncate(k + 1);
            let layer = &mut self.layers[k];
            match &layer.kind {
                LayerKind::Concat { sources } => {
                    let s = g.shape().to_vec();
                    let (batch, plane) = (s[0], s[2] * s[3]);
                    let mut offset = 0;
                    for src in sources.clone() {
                        let node = src.node();
                        let ch = nodes[node].shape()[1];
                        let mut part = Tensor::zeros(nodes[node].shape().to_vec());
                        for b in 0..batch {
                            let from = (b * s[1] + offset) * plane;
                            part.data_mut()[b * ch * plane..(b + 1) * ch * plane]
                                .copy_from_slice(&g.data()[from..from + ch * plane]);
                        }
                        offset += ch;
                        accumulate(&mut grads[node], part);
                    }
                }
                _ => {
                    let gx = layer.backward(k, &nodes[k], &g)?;
                    accumulate(&mut grads[k], gx);
                }
            }
        }
        Ok(grads[0].take().unwrap_or_else(|| Tensor::zeros(nodes[0].shape().to_vec())))
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            if let Some(p) = l.params.as_mut() {
                p.zero_grad();
            }
        }
    }

    /// `(parameter, gradient)` slices in a fixed order: weight then bias of
    /// every parameterised layer, front to back.
    pub fn param_slots(&mut self) -> Vec<(&mut [T], &[T])> {
        let mut slots = Vec::new();
        for l in &mut self.layers {
            if let Some(p) = l.params.as_mut() {
                let Params { weight, bias, grad_weight, grad_bias } = p;
                slots.push((weight.data_mut(), grad_weight.data()));
                slots.push((bias.data_mut(), grad_bias.data()));
            }
        }
        slots
    }
}

/// Collects layer kinds and initialises parameters from a seed.
#[derive(Debug, Clone, Default)]
pub struct NetworkBuilder {
    kinds: Vec<LayerKind>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn layer(mut self, kind: LayerKind) -> Self {
        self.kinds.push(kind);
        self
    }

    pub fn dense(self, inputs: usize, outputs: usize) -> Self {
        self.layer(LayerKind::Dense { inputs, outputs })
    }

    pub fn conv(self, in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        self.layer(LayerKind::Conv2d { in_channels, out_channels, kernel, dilation })
    }

    pub fn relu(self) -> Self {
        self.layer(LayerKind::Relu)
    }

    pub fn leaky_relu(self, slope: f64) -> Self {
        self.layer(LayerKind::LeakyRelu { slope })
    }

    pub fn elu(self, alpha: f64) -> Self {
        self.layer(LayerKind::Elu { alpha })
    }

    pub fn concat(self, sources: Vec<Source>) -> Self {
        self.layer(LayerKind::Concat { sources })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Self {
        self.layer(LayerKind::Reshape { shape })
    }

    /// Index the next added layer will get.
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[LayerKind] {
        &self.kinds
    }

    /// Uniform initialisation: He (`sqrt(6 / fan_in)`) when the next layer is
    /// a ReLU-family activation, Glorot (`sqrt(6 / (fan_in + fan_out))`)
    /// otherwise. Biases start at zero.
    pub fn build<T: Real>(self, seed: u64) -> Result<Network<T>> {
        validate(&self.kinds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.kinds.len());
        for (k, kind) in self.kinds.iter().enumerate() {
            params.push(kind.weight_layout().map(|(shape, fan_in, fan_out)| {
                let followed_by_relu = self.kinds.get(k + 1).is_some_and(LayerKind::is_activation);
                let limit = if followed_by_relu {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                let weight = Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-limit..limit)));
                (weight, Tensor::zeros(vec![kind.bias_len()]))
            }));
        }
        Network::from_parts(self.kinds, params)
    }
}
