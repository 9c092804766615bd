//! Mini-batch ADAM training on the MSE loss, shared by both workflows.

use std::fmt::Write as _;
use std::path::Path;

use ctkit_nn::{mse_loss, save_network, Adam, AdamConfig, BiasCorrection, Network, Optimizer, Tensor};
use rand::seq::SliceRandom;

use crate::arch::{estimate_params, Arch, AutomapArch, DenoiserArch};
use crate::dataset::{Manifest, SampleRecord, Split};
use crate::error::{PipelineError, Result};
use crate::seeds::{stage_rng, stage_seed, Stage};

/// Default cap on AUTOMAP dense parameters.
pub const DEFAULT_DENSE_PARAM_LIMIT: u128 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub bias_correction: BiasCorrection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 0,
            bias_correction: BiasCorrection::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's batches; epoch 0 evaluates the untrained
    /// network.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Full-train-set loss before the first update.
    pub initial_train_loss: f64,
    /// Full-train-set loss of the final network.
    pub final_train_loss: f64,
    /// Epoch whose network was kept (lowest validation loss, or lowest train
    /// loss without a validation split).
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{}", e.epoch, e.train_loss, val);
        }
        out
    }
}

/// Inputs and targets, one `(channels, height, width)` tensor per sample.
pub struct Examples {
    pub inputs: Vec<Tensor<f32>>,
    pub targets: Vec<Tensor<f32>>,
}

impl Examples {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn batch_of(items: &[Tensor<f32>], order: &[usize]) -> Result<Tensor<f32>> {
    let refs: Vec<&Tensor<f32>> = order.iter().map(|&i| &items[i]).collect();
    Ok(Tensor::stack(&refs)?)
}

/// Mean per-element loss over a set, evaluated in batches.
pub fn mean_loss(net: &Network<f32>, data: &Examples, batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let y = net.predict(&batch_of(&data.inputs, chunk)?)?;
        let (loss, _) = mse_loss(&y, &batch_of(&data.targets, chunk)?)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Train `net` in place and return the best network with its log.
pub fn train_network(
    mut net: Network<f32>,
    train: &Examples,
    val: Option<&Examples>,
    config: &TrainConfig,
) -> Result<(Network<f32>, TrainLog)> {
    if train.is_empty() {
        return Err(PipelineError::Config("no training samples".into()));
    }
    if config.batch_size == 0 {
        return Err(PipelineError::Config("batch size must be positive".into()));
    }
    let val = val.filter(|v| !v.is_empty());
    let mut adam = Adam::new(AdamConfig {
        lr: config.learning_rate,
        bias_correction: config.bias_correction,
        ..AdamConfig::default()
    });
    let initial_train_loss = mean_loss(&net, train, config.batch_size)?;
    let initial_val = val.map(|v| mean_loss(&net, v, config.batch_size)).transpose()?;
    let mut epochs = vec![EpochRecord { epoch: 0, train_loss: initial_train_loss, val_loss: initial_val }];
    let score = |r: &EpochRecord| r.val_loss.unwrap_or(r.train_loss);
    let mut best = (score(&epochs[0]), 0, net.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut stage_rng(config.seed, Stage::Shuffle, epoch as u64));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let y = net.forward(&batch_of(&train.inputs, chunk)?)?;
            let (loss, grad) = mse_loss(&y, &batch_of(&train.targets, chunk)?)?;
            if !loss.is_finite() {
                return Err(PipelineError::Diverged { epoch, batch: b, loss });
            }
            net.backward(&grad)?;
            adam.step(&mut net);
            total += loss * chunk.len() as f64;
        }
        let val_loss = val.map(|v| mean_loss(&net, v, config.batch_size)).transpose()?;
        if val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(PipelineError::Diverged { epoch, batch: 0, loss: val_loss.unwrap() });
        }
        let record = EpochRecord { epoch, train_loss: total / train.len() as f64, val_loss };
        if score(&record) < best.0 {
            best = (score(&record), epoch, net.clone());
        }
        epochs.push(record);
    }
    let final_train_loss = mean_loss(&net, train, config.batch_size)?;
    let log = TrainLog { epochs, initial_train_loss, final_train_loss, best_epoch: best.1 };
    Ok((best.2, log))
}

fn image_tensor(values: &[f64], size: usize) -> Result<Tensor<f32>> {
    Ok(Tensor::from_f64(vec![1, size, size], values)?)
}

/// FBP images as inputs, phantoms as targets.
pub fn denoiser_examples(manifest: &Manifest, split: Split) -> Result<Examples> {
    let n = manifest.header.image_size;
    let samples: Vec<&SampleRecord> = manifest.split(split).collect();
    let mut inputs = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        inputs.push(image_tensor(manifest.read_fbp(s)?.data(), n)?);
        targets.push(image_tensor(manifest.read_phantom(s)?.data(), n)?);
    }
    Ok(Examples { inputs, targets })
}

/// Noisy sinograms as `(1, angles, detectors)` inputs, phantoms as targets.
pub fn end_to_end_examples(manifest: &Manifest, split: Split) -> Result<Examples> {
    let h = &manifest.header;
    let samples: Vec<&SampleRecord> = manifest.split(split).collect();
    let mut inputs = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let sino = manifest.read_noisy(s)?;
        inputs.push(Tensor::from_f64(vec![1, h.n_angles, h.n_detectors], sino.data())?);
        targets.push(image_tensor(manifest.read_phantom(s)?.data(), h.image_size)?);
    }
    Ok(Examples { inputs, targets })
}

fn finish(out_dir: Option<&Path>, stem: &str, net: &Network<f32>, log: &TrainLog) -> Result<()> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        save_network(net, &dir.join(format!("{stem}.ctn")))?;
        let csv = dir.join(format!("{stem}_log.csv"));
        std::fs::write(&csv, log.to_csv()).map_err(|e| PipelineError::io(&csv, e))?;
    }
    Ok(())
}

/// Train the denoiser on (FBP, phantom) pairs. With `out_dir`, the best
/// network is saved as `denoiser.ctn` and the log as `denoiser_log.csv`.
pub fn train_denoiser(
    manifest: &Manifest,
    arch: &DenoiserArch,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(Network<f32>, TrainLog)> {
    let train = denoiser_examples(manifest, Split::Train)?;
    let val = denoiser_examples(manifest, Split::Val)?;
    let net = arch.build(stage_seed(config.seed, Stage::Init, 0))?;
    let (net, log) = train_network(net, &train, Some(&val), config)?;
    finish(out_dir, "denoiser", &net, &log)?;
    Ok((net, log))
}

/// The end-to-end architecture matching a dataset's geometry.
pub fn automap_for(manifest: &Manifest) -> AutomapArch {
    let h = &manifest.header;
    AutomapArch::new(h.n_detectors, h.n_angles, h.image_size)
}

/// Train the end-to-end network on (noisy sinogram, phantom) pairs, refusing
/// architectures whose dense layers exceed `dense_limit` parameters.
pub fn train_end_to_end(
    manifest: &Manifest,
    arch: &AutomapArch,
    config: &TrainConfig,
    dense_limit: u128,
    out_dir: Option<&Path>,
) -> Result<(Network<f32>, TrainLog)> {
    let h = &manifest.header;
    if (arch.n_detectors, arch.n_angles, arch.image_size) != (h.n_detectors, h.n_angles, h.image_size) {
        return Err(PipelineError::Config(format!(
            "architecture expects {} angles x {} detectors -> {}^2 but the dataset has {} x {} -> {}^2",
            arch.n_angles, arch.n_detectors, arch.image_size, h.n_angles, h.n_detectors, h.image_size
        )));
    }
    let estimate = estimate_params(&Arch::Automap(*arch), 4);
    if estimate.params > dense_limit {
        return Err(PipelineError::MemoryGuard {
            dense_params: estimate.params,
            bytes: estimate.bytes,
            limit: dense_limit,
        });
    }
    let train = end_to_end_examples(manifest, Split::Train)?;
    let val = end_to_end_examples(manifest, Split::Val)?;
    let net = arch.build(stage_seed(config.seed, Stage::Init, 1))?;
    let (net, log) = train_network(net, &train, Some(&val), config)?;
    finish(out_dir, "end_to_end", &net, &log)?;
    Ok((net, log))
}
