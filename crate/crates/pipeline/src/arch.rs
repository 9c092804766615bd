//! The two network families: a mixed-scale dense denoiser that post-processes
//! FBP images, and an AUTOMAP-style network that maps sinograms to images.

use ctkit_nn::{Network, NetworkBuilder, Real, Result, Source};

/// Mixed-scale dense denoiser. Layer `i` (from 0) is a 3x3 convolution with
/// one output channel and dilation `(i mod dilation_cycle) + 1`, reading the
/// input together with every earlier feature map, followed by ReLU. A final
/// 1x1 convolution mixes the input and all feature maps into the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserArch {
    pub depth: usize,
    pub dilation_cycle: usize,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        DenoiserArch { depth: 32, dilation_cycle: 10 }
    }
}

impl DenoiserArch {
    pub fn dilation(&self, layer: usize) -> usize {
        layer % self.dilation_cycle + 1
    }

    pub fn builder(&self) -> NetworkBuilder {
        let mut b = NetworkBuilder::new();
        let mut features = Vec::with_capacity(self.depth);
        for i in 0..self.depth {
            if i > 0 {
                b = b.concat(std::iter::once(Source::Input).chain(features.iter().copied()).collect());
            }
            b = b.conv(i + 1, 1, 3, self.dilation(i));
            features.push(Source::Layer(b.len()));
            b = b.relu();
        }
        if self.depth > 0 {
            b = b.concat(std::iter::once(Source::Input).chain(features).collect());
        }
        b.conv(self.depth + 1, 1, 1, 1)
    }

    pub fn build<T: Real>(&self, seed: u64) -> Result<Network<T>> {
        self.builder().build(seed)
    }

    /// Weights and biases: `sum_i (9 i + 1)` for `i = 1..=depth`, plus
    /// `depth + 2` for the output layer.
    pub fn param_count(&self) -> u128 {
        let d = self.depth as u128;
        9 * d * (d + 1) / 2 + d + d + 2
    }
}

/// AUTOMAP-style end-to-end network: two fully connected layers take the
/// flattened sinogram to an `N x N` image, then two 3x3 convolutions and a
/// 1x1 output convolution refine it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AutomapArch {
    pub n_detectors: usize,
    pub n_angles: usize,
    pub image_size: usize,
    pub conv_channels: usize,
}

impl AutomapArch {
    pub fn new(n_detectors: usize, n_angles: usize, image_size: usize) -> Self {
        AutomapArch { n_detectors, n_angles, image_size, conv_channels: 64 }
    }

    /// Weights of the two dense layers: `n_a n_d N^2 + N^4`.
    pub fn dense_params(&self) -> u128 {
        let inputs = self.n_angles as u128 * self.n_detectors as u128;
        let pixels = self.image_size as u128 * self.image_size as u128;
        inputs * pixels + pixels * pixels
    }

    /// Every trainable scalar, biases and convolutional head included.
    pub fn total_params(&self) -> u128 {
        let pixels = self.image_size as u128 * self.image_size as u128;
        let c = self.conv_channels as u128;
        self.dense_params() + 2 * pixels + (9 * c + c) + (9 * c * c + c) + (c + 1)
    }

    pub fn builder(&self) -> NetworkBuilder {
        let inputs = self.n_angles * self.n_detectors;
        let n = self.image_size;
        let c = self.conv_channels;
        NetworkBuilder::new()
            .reshape(vec![inputs])
            .dense(inputs, n * n)
            .relu()
            .dense(n * n, n * n)
            .relu()
            .reshape(vec![1, n, n])
            .conv(1, c, 3, 1)
            .relu()
            .conv(c, c, 3, 1)
            .relu()
            .conv(c, 1, 1, 1)
    }

    pub fn build<T: Real>(&self, seed: u64) -> Result<Network<T>> {
        self.builder().build(seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Denoiser(DenoiserArch),
    Automap(AutomapArch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamEstimate {
    /// Headline count: dense weights for AUTOMAP, everything for the denoiser.
    pub params: u128,
    /// `params * bytes_per_param`.
    pub bytes: u128,
    /// Every trainable scalar.
    pub total_params: u128,
}

/// Exact integer parameter and memory arithmetic.
pub fn estimate_params(arch: &Arch, bytes_per_param: u128) -> ParamEstimate {
    let (params, total_params) = match arch {
        Arch::Denoiser(d) => (d.param_count(), d.param_count()),
        Arch::Automap(a) => (a.dense_params(), a.total_params()),
    };
    ParamEstimate { params, bytes: params * bytes_per_param, total_params }
}
