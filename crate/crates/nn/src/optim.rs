use crate::network::Network;
use crate::real::Real;

/// `theta <- theta - lr * g`
pub fn sgd_step<T: Real>(params: &mut [T], grads: &[T], lr: T) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

pub trait Optimizer<T: Real> {
    /// Apply one update using the gradients stored in `net`.
    fn step(&mut self, net: &mut Network<T>);
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

impl<T: Real> Optimizer<T> for Sgd {
    fn step(&mut self, net: &mut Network<T>) {
        let lr = T::lit(self.lr);
        for (p, g) in net.param_slots() {
            sgd_step(p, g, lr);
        }
    }
}

/// How the moment estimates are de-biased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasCorrection {
    /// `m / (1 - beta1^n)`, `v / (1 - beta2^n)`.
    #[default]
    Standard,
    /// `m / (1 - beta1)`, `v / (1 - beta2)` at every step.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bias_correction: BiasCorrection,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, bias_correction: BiasCorrection::Standard }
    }
}

/// ADAM with `theta <- theta - lr * m_hat / sqrt(v_hat + eps)`.
///
/// Moment buffers are created lazily, one per parameter slot, on the first
/// step.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, slot: usize) -> Option<&[T]> {
        self.m.get(slot).map(Vec::as_slice)
    }

    pub fn second_moment(&self, slot: usize) -> Option<&[T]> {
        self.v.get(slot).map(Vec::as_slice)
    }

    /// One update over explicit `(parameter, gradient)` slots. Slot order and
    /// sizes must not change between calls.
    pub fn update(&mut self, slots: Vec<(&mut [T], &[T])>) {
        self.step += 1;
        let c = self.config;
        let (c1, c2) = match c.bias_correction {
            BiasCorrection::Standard => (1.0 - c.beta1.powf(self.step as f64), 1.0 - c.beta2.powf(self.step as f64)),
            BiasCorrection::Constant => (1.0 - c.beta1, 1.0 - c.beta2),
        };
        // beta = 1 leaves nothing to de-bias; skip the division instead of
        // producing inf
        let inv1 = T::lit(if c1 > 0.0 { 1.0 / c1 } else { 1.0 });
        let inv2 = T::lit(if c2 > 0.0 { 1.0 / c2 } else { 1.0 });
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (a1, a2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        if self.m.len() < slots.len() {
            for (p, _) in &slots[self.m.len()..] {
                self.m.push(vec![T::zero(); p.len()]);
                self.v.push(vec![T::zero(); p.len()]);
            }
        }
        for (s, (params, grads)) in slots.into_iter().enumerate() {
            let (m, v) = (&mut self.m[s], &mut self.v[s]);
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = b1 * m[i] + a1 * g;
                v[i] = b2 * v[i] + a2 * g * g;
                let m_hat = m[i] * inv1;
                let v_hat = v[i] * inv2;
                params[i] -= lr * m_hat / (v_hat + eps).sqrt();
            }
        }
    }
}

impl<T: Real> Optimizer<T> for Adam<T> {
    fn step(&mut self, net: &mut Network<T>) {
        self.update(net.param_slots());
    }
}
